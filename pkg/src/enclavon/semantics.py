"""Two-pass big-step evaluation over separate client and enclave memories.

Pass 1 (`eval_enclave`) loads the enclave memory; pass 2 (`eval_client`) runs
the client against that memory. Fresh-name counters restart between passes so
the names minted by both passes coincide, which is what lets a client-side
SecureClosure address the matching enclave binding.

All failures are Err values, never exceptions: compound clauses inspect value
shapes and fall through to the matching error, without short-circuiting.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .calculus import (
    EMPTY_ENV,
    App,
    ArgList,
    Closure,
    Dummy,
    EnclaveApp,
    Env,
    Err,
    ErrState,
    Exp,
    Fun,
    Gateway,
    InEnclave,
    IntVal,
    Let,
    Lit,
    Plus,
    SecureClosure,
    Value,
    Var,
    bind,
    lookup_var,
    wrap_i64,
)


@dataclass
class EvalState:
    var_counter: int = 0
    enclave_memory: Env = EMPTY_ENV
    generated: list[str] = field(default_factory=list)


def gen_enc_var(state: EvalState) -> str:
    name = f"EncVar{state.var_counter}"
    state.var_counter += 1
    state.generated.append(name)
    return name


def _eval_args(evaluator, args, env: Env, state: EvalState):
    vals = []
    for a in args:
        v, env = evaluator(a, env, state)
        vals.append(v)
    return tuple(vals), env


def eval_enclave(e: Exp, env: Env, state: EvalState) -> tuple[Value, Env]:
    match e:
        case Lit(n):
            return IntVal(n), env
        case Var(x):
            return lookup_var(x, env), env
        case Fun(params, body):
            return Closure(params, body, env), env
        case Let(name, bound, body):
            v1, env1 = eval_enclave(bound, env, state)
            return eval_enclave(body, bind(name, v1, env1), state)
        case App(fn, args):
            v1, env1 = eval_enclave(fn, env, state)
            vals, env2 = _eval_args(eval_enclave, args, env1, state)
            if isinstance(v1, Closure):
                # the resulting environment is the body's, not the caller's
                return eval_enclave(v1.body, tuple(zip(v1.params, vals)) + v1.captured, state)
            return Err(ErrState.ENotClosure), env2
        case Plus(left, right):
            v1, env1 = eval_enclave(left, env, state)
            v2, env2 = eval_enclave(right, env1, state)
            if isinstance(v1, IntVal) and isinstance(v2, IntVal):
                return IntVal(wrap_i64(v1.n + v2.n)), env2
            return Err(ErrState.ENotIntLit), env2
        case InEnclave(body):
            val, env1 = eval_enclave(body, env, state)
            name = gen_enc_var(state)
            return Dummy(), bind(name, val, env1)
        case Gateway(body):
            # no-op in the enclave pass
            return eval_enclave(body, env, state)
        case EnclaveApp(left, right):
            _, env1 = eval_enclave(left, env, state)
            _, env2 = eval_enclave(right, env1, state)
            return Dummy(), env2
    raise TypeError(f"not an expression: {e!r}")


def eval_client(e: Exp, env: Env, state: EvalState) -> tuple[Value, Env]:
    match e:
        case Lit(n):
            return IntVal(n), env
        case Var(x):
            return lookup_var(x, env), env
        case Fun(params, body):
            return Closure(params, body, env), env
        case Let(name, bound, body):
            v1, env1 = eval_client(bound, env, state)
            return eval_client(body, bind(name, v1, env1), state)
        case App(fn, args):
            v1, env1 = eval_client(fn, env, state)
            vals, env2 = _eval_args(eval_client, args, env1, state)
            if isinstance(v1, Closure):
                return eval_client(v1.body, tuple(zip(v1.params, vals)) + v1.captured, state)
            return Err(ErrState.ENotClosure), env2
        case Plus(left, right):
            v1, env1 = eval_client(left, env, state)
            v2, env2 = eval_client(right, env1, state)
            if isinstance(v1, IntVal) and isinstance(v2, IntVal):
                return IntVal(wrap_i64(v1.n + v2.n)), env2
            return Err(ErrState.ENotIntLit), env2
        case InEnclave(body):
            _, env1 = eval_client(body, env, state)
            name = gen_enc_var(state)
            return SecureClosure(name, ()), bind(name, Dummy(), env1)
        case Gateway(body):
            v, env1 = eval_client(body, env, state)
            if isinstance(v, SecureClosure):
                func = lookup_var(v.name, state.enclave_memory)
                if isinstance(func, Closure):
                    # run the enclave-resident body in the enclave memory;
                    # updates it makes there are dropped after the call
                    res, _ = eval_enclave(
                        func.body, tuple(zip(func.params, v.args)) + func.captured, state
                    )
                    return res, env1
                return Err(ErrState.ENotClosure), env1
            return Err(ErrState.ENotSecClos), env1
        case EnclaveApp(left, right):
            v1, env1 = eval_client(left, env, state)
            v2, env2 = eval_client(right, env1, state)
            if isinstance(v1, SecureClosure):
                if isinstance(v2, ArgList):
                    return SecureClosure(v1.name, v1.args + v2.items), env2
                return SecureClosure(v1.name, v1.args + (v2,)), env2
            return ArgList((v1, v2)), env2
    raise TypeError(f"not an expression: {e!r}")


@dataclass(frozen=True)
class TwoPassResult:
    value: Value
    client_env: Env
    enclave_env: Env
    pass1_names: tuple[str, ...]
    pass2_names: tuple[str, ...]


def eval_two_pass(e: Exp) -> TwoPassResult:
    """Evaluate a closed program: enclave pass first, then the client pass."""
    s1 = EvalState()
    _, enclave_env = eval_enclave(e, EMPTY_ENV, s1)
    s2 = EvalState(enclave_memory=enclave_env)
    value, client_env = eval_client(e, EMPTY_ENV, s2)
    return TwoPassResult(
        value, client_env, enclave_env, tuple(s1.generated), tuple(s2.generated)
    )


def eval_reference(e: Exp) -> Value:
    """Single-environment call-by-value evaluation; the equivalence oracle.

    Only defined on programs without the three enclave operators.
    """

    def go(e: Exp, env: Env) -> Value:
        match e:
            case Lit(n):
                return IntVal(n)
            case Var(x):
                return lookup_var(x, env)
            case Fun(params, body):
                return Closure(params, body, env)
            case Let(name, bound, body):
                return go(body, bind(name, go(bound, env), env))
            case App(fn, args):
                v1 = go(fn, env)
                vals = tuple(go(a, env) for a in args)
                if isinstance(v1, Closure):
                    return go(v1.body, tuple(zip(v1.params, vals)) + v1.captured)
                return Err(ErrState.ENotClosure)
            case Plus(left, right):
                v1 = go(left, env)
                v2 = go(right, env)
                if isinstance(v1, IntVal) and isinstance(v2, IntVal):
                    return IntVal(wrap_i64(v1.n + v2.n))
                return Err(ErrState.ENotIntLit)
        raise ValueError(f"enclave operator not supported by the reference evaluator: {e!r}")

    return go(e, EMPTY_ENV)


# ---------------------------------------------------------------------------
# Program generation
#
# The generator is deliberately disciplined so the properties it is used to
# check hold by construction on its output:
#   * every bound name is globally fresh (no shadowing),
#   * applied functions are written inline at the application site,
#   * enclave-resident functions close only over variables whose binding is
#     enclave-free (those have the same value in both passes),
#   * function arguments contain no enclave operators (App drops the
#     argument-evaluation environment, which would strand enclave bindings),
#   * programs evaluate to an integer.
# ---------------------------------------------------------------------------


class _Gen:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.counter = 0

    def fresh(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}{self.counter}"


@dataclass
class _Scope:
    # stable: bound by enclave-free expressions, identical in both passes
    stable: tuple[str, ...] = ()
    # client: gateway results; integer-valued in the client pass only
    client: tuple[str, ...] = ()

    def all_ints(self) -> tuple[str, ...]:
        return self.stable + self.client


def gen_random_program(seed: int, size_budget: int, allow_gateway: bool = False) -> Exp:
    """Generate a closed, well-scoped program; deterministic in the seed.

    With ``allow_gateway`` false the output contains none of the three
    enclave operators, making it directly comparable against
    ``eval_reference``.
    """
    if size_budget < 1:
        raise ValueError("size budget must be >= 1")
    gen = _Gen(random.Random(seed))
    return _gen_int_exp(gen, size_budget, _Scope(), allow_gateway)


def _gen_int_exp(gen: _Gen, budget: int, scope: _Scope, allow_gateway: bool) -> Exp:
    rng = gen.rng
    if budget <= 1:
        ints = scope.all_ints() if allow_gateway else scope.stable
        if ints and rng.random() < 0.5:
            return Var(rng.choice(ints))
        return Lit(rng.randrange(-20, 21))

    choices = ["plus", "let", "appfun"]
    if allow_gateway and budget >= 10:
        choices.append("enclave")
    kind = rng.choice(choices)

    if kind == "plus":
        lb = rng.randint(1, budget - 1)
        left = _gen_int_exp(gen, lb, scope, allow_gateway)
        right = _gen_int_exp(gen, budget - lb, scope, allow_gateway)
        return Plus(left, right)

    if kind == "let":
        name = gen.fresh("v")
        lb = rng.randint(1, max(1, budget // 2))
        gateway_bound = allow_gateway and rng.random() < 0.4
        bound = _gen_int_exp(gen, lb, scope, gateway_bound)
        # a binding is pass-stable only if nothing about it is gateway-derived
        client_only = contains_node(bound, (Gateway,)) or bool(
            free_vars(bound) & set(scope.client)
        )
        inner = (
            _Scope(scope.stable, scope.client + (name,))
            if client_only
            else _Scope(scope.stable + (name,), scope.client)
        )
        return Let(name, bound, _gen_int_exp(gen, budget - lb, inner, allow_gateway))

    if kind == "appfun":
        # immediate application of an inline, enclave-free function
        params = tuple(gen.fresh("p") for _ in range(rng.randint(1, 3)))
        per = max(1, (budget - 2) // (len(params) + 1))
        body_scope = _Scope(scope.stable + params, scope.client)
        body = _gen_int_exp(gen, per, body_scope, False)
        args = tuple(_gen_int_exp(gen, per, scope, False) for _ in params)
        return App(Fun(params, body), args)

    # enclave idiom: install a function, then invoke it through the gateway
    params = tuple(gen.fresh("p") for _ in range(rng.randint(1, 2)))
    fn_budget = max(1, budget // 3)
    fn_body = _gen_int_exp(gen, fn_budget, _Scope(scope.stable + params), False)
    name = gen.fresh("s")
    arg_budget = max(1, (budget - fn_budget - 3) // (len(params) + 1))
    args = [_gen_int_exp(gen, arg_budget, _Scope(scope.stable), False) for _ in params]
    call: Exp = Var(name)
    if len(args) == 2 and rng.random() < 0.5:
        call = EnclaveApp(call, EnclaveApp(args[0], args[1]))
    else:
        for a in args:  # left-nested: ((f <@> a1) <@> a2)
            call = EnclaveApp(call, a)
    return Let(name, InEnclave(Fun(params, fn_body)), Gateway(call))


def gen_assoc_pair(seed: int, size_budget: int = 20) -> tuple[Exp, Exp]:
    """Generate the same two-argument gateway program in left-nested and
    right-nested application order."""
    gen = _Gen(random.Random(seed))
    params = (gen.fresh("p"), gen.fresh("p"))
    fn_body = _gen_int_exp(gen, max(1, size_budget // 2), _Scope(params), False)
    a = _gen_int_exp(gen, max(1, size_budget // 4), _Scope(), False)
    b = _gen_int_exp(gen, max(1, size_budget // 4), _Scope(), False)
    name = gen.fresh("s")
    fn = InEnclave(Fun(params, fn_body))
    left = Let(name, fn, Gateway(EnclaveApp(EnclaveApp(Var(name), a), b)))
    right = Let(name, fn, Gateway(EnclaveApp(Var(name), EnclaveApp(a, b))))
    return left, right


def contains_node(e: Exp, kinds: tuple[type, ...]) -> bool:
    if isinstance(e, kinds):
        return True
    return any(contains_node(c, kinds) for c in _children(e))


def _children(e: Exp) -> tuple[Exp, ...]:
    match e:
        case Lit() | Var():
            return ()
        case Fun(_, body) | InEnclave(body) | Gateway(body):
            return (body,)
        case App(fn, args):
            return (fn,) + args
        case Let(_, bound, body):
            return (bound, body)
        case Plus(left, right) | EnclaveApp(left, right):
            return (left, right)
    raise TypeError(f"not an expression: {e!r}")


def free_vars(e: Exp, bound: frozenset = frozenset()) -> set[str]:
    match e:
        case Lit():
            return set()
        case Var(x):
            return set() if x in bound else {x}
        case Fun(params, body):
            return free_vars(body, bound | set(params))
        case App(fn, args):
            out = free_vars(fn, bound)
            for a in args:
                out |= free_vars(a, bound)
            return out
        case Let(name, b, body):
            return free_vars(b, bound) | free_vars(body, bound | {name})
        case Plus(left, right) | EnclaveApp(left, right):
            return free_vars(left, bound) | free_vars(right, bound)
        case InEnclave(body) | Gateway(body):
            return free_vars(body, bound)
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Non-interference checking
# ---------------------------------------------------------------------------

HOLE = "HOLE"


def _fill(e: Exp, filler: Exp) -> Exp:
    match e:
        case Var(name) if name == HOLE:
            return filler
        case Lit() | Var():
            return e
        case Fun(params, body):
            return Fun(params, _fill(body, filler))
        case App(fn, args):
            return App(_fill(fn, filler), tuple(_fill(a, filler) for a in args))
        case Let(name, bound, body):
            return Let(name, _fill(bound, filler), _fill(body, filler))
        case Plus(left, right):
            return Plus(_fill(left, filler), _fill(right, filler))
        case InEnclave(body):
            return InEnclave(_fill(body, filler))
        case Gateway(body):
            return Gateway(_fill(body, filler))
        case EnclaveApp(left, right):
            return EnclaveApp(_fill(left, filler), _fill(right, filler))
    raise TypeError(f"not an expression: {e!r}")


def _count_holes(e: Exp) -> int:
    if isinstance(e, Var):
        return 1 if e.name == HOLE else 0
    return sum(_count_holes(c) for c in _children(e))


def _hole_under_in_enclave(e: Exp, inside: bool = False) -> bool:
    if isinstance(e, Var) and e.name == HOLE:
        return inside
    nested = inside or isinstance(e, InEnclave)
    return all(
        _hole_under_in_enclave(c, nested) for c in _children(e) if _count_holes(c)
    )


@dataclass(frozen=True)
class NIVerdict:
    passed: bool
    value1: Value
    value2: Value
    client_env1: Env
    client_env2: Env

    def __str__(self) -> str:
        return "PASS" if self.passed else "FAIL"


def check_noninterference(context: Exp, e1: Exp, e2: Exp) -> NIVerdict:
    """Run a gateway-free context over two enclave computations and compare
    the client-observable outcome (final value plus final client memory)."""
    if contains_node(context, (Gateway,)):
        raise ValueError("context must not contain a gateway")
    if _count_holes(context) != 1:
        raise ValueError("context must contain exactly one hole")
    if not _hole_under_in_enclave(context):
        raise ValueError("hole must sit under an inEnclave")
    for e in (e1, e2):
        if free_vars(e):
            raise ValueError("hole fillers must be closed")

    r1 = eval_two_pass(_fill(context, e1))
    r2 = eval_two_pass(_fill(context, e2))
    passed = r1.value == r2.value and r1.client_env == r2.client_env
    return NIVerdict(passed, r1.value, r2.value, r1.client_env, r2.client_env)


def gen_ni_triple(seed: int, size_budget: int = 24) -> tuple[Exp, Exp, Exp]:
    """Generate a (context, e1, e2) triple satisfying the preconditions of
    check_noninterference."""
    rng = random.Random(seed)
    gen = _Gen(rng)

    h = gen.fresh("h")
    body = _gen_int_exp(gen, max(1, size_budget - 4), _Scope(), False)
    if rng.random() < 0.5:
        # let the context poke at the secure closure without a gateway
        junk = gen.fresh("j")
        arg = _gen_int_exp(gen, 3, _Scope(), False)
        body = Let(junk, EnclaveApp(Var(h), arg), body)
    context = Let(h, InEnclave(Var(HOLE)), body)

    def filler() -> Exp:
        kind = rng.choice(["fun", "lit", "plus"])
        if kind == "fun":
            params = tuple(gen.fresh("q") for _ in range(rng.randint(1, 2)))
            return Fun(params, _gen_int_exp(gen, 6, _Scope(params), False))
        if kind == "lit":
            return Lit(rng.randrange(-100, 101))
        return Plus(Lit(rng.randrange(0, 50)), Lit(rng.randrange(0, 50)))

    return context, filler(), filler()
