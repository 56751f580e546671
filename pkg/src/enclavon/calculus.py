"""Expression language and abstract-machine values for the dual-memory interpreter.

The language is a lambda calculus restricted to fully saturated application,
extended with three enclave operators (inEnclave, gateway, <@>). Programs are
loaded from an S-expression surface syntax; see ``parse_program``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

class Exp:
    """Base class for expression nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Lit(Exp):
    n: int


@dataclass(frozen=True)
class Var(Exp):
    name: str


@dataclass(frozen=True)
class Fun(Exp):
    params: tuple[str, ...]
    body: Exp

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        if len(set(self.params)) != len(self.params):
            raise ValueError(f"duplicate parameter names: {self.params}")


@dataclass(frozen=True)
class App(Exp):
    # fully saturated: all arguments travel with the node
    fn: Exp
    args: tuple[Exp, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class Let(Exp):
    name: str
    bound: Exp
    body: Exp


@dataclass(frozen=True)
class Plus(Exp):
    left: Exp
    right: Exp


@dataclass(frozen=True)
class InEnclave(Exp):
    body: Exp


@dataclass(frozen=True)
class Gateway(Exp):
    body: Exp


@dataclass(frozen=True)
class EnclaveApp(Exp):
    left: Exp
    right: Exp


# ---------------------------------------------------------------------------
# Values and environments
# ---------------------------------------------------------------------------

class ErrState(Enum):
    ENotClosure = "Closure not found"
    EVarNotFound = "Variable not in environment"
    ENotSecClos = "Secure Closure not found"
    ENotIntLit = "Not an integer literal"


class Value:
    """Base class for abstract-machine values."""

    __slots__ = ()


# Environments are immutable association lists; the front binding wins.
# Shadowing is by prepending, and closures capture snapshots.
Env = tuple  # tuple[tuple[str, Value], ...]

EMPTY_ENV: Env = ()


@dataclass(frozen=True)
class IntVal(Value):
    n: int


@dataclass(frozen=True)
class Closure(Value):
    params: tuple[str, ...]
    body: Exp
    captured: Env

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "captured", tuple(self.captured))


@dataclass(frozen=True)
class SecureClosure(Value):
    # names an enclave-resident function; never embeds its body
    name: str
    args: tuple[Value, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class ArgList(Value):
    items: tuple[Value, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True)
class Dummy(Value):
    pass


@dataclass(frozen=True)
class Err(Value):
    state: ErrState


def bind(name: str, value: Value, env: Env) -> Env:
    return ((name, value),) + env


def lookup_var(name: str, env: Env) -> Value:
    for key, value in env:
        if key == name:
            return value
    return Err(ErrState.EVarNotFound)


# Plus arithmetic is signed 64-bit with wraparound; the source semantics
# leaves overflow undefined, so nothing may rely on the wrapping.
_I64_MASK = (1 << 64) - 1
_I64_SIGN = 1 << 63


def wrap_i64(n: int) -> int:
    n &= _I64_MASK
    return n - (1 << 64) if n & _I64_SIGN else n


# ---------------------------------------------------------------------------
# Surface syntax
#
#   e ::= INT | SYM | (fun (SYM*) e) | (app e e*) | (let SYM e e)
#       | (+ e e) | (inEnclave e) | (gateway e) | (<@> e e)
# ---------------------------------------------------------------------------

_KEYWORDS = {"fun", "app", "let", "inEnclave", "gateway", "+", "<@>"}
_INT_RE = re.compile(r"-?[0-9]+$")
_SYM_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class _Token:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch.isspace():
            col += 1
            i += 1
        elif ch == ";":
            while i < len(text) and text[i] != "\n":
                i += 1
        elif ch in "()":
            tokens.append(_Token(ch, line, col))
            col += 1
            i += 1
        else:
            start = i
            start_col = col
            while i < len(text) and not text[i].isspace() and text[i] not in "();":
                i += 1
                col += 1
            tokens.append(_Token(text[start:i], line, start_col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self._tokens = tokens
        self._pos = 0

    def _peek(self) -> _Token | None:
        return self._tokens[self._pos] if self._pos < len(self._tokens) else None

    def _next(self) -> _Token:
        tok = self._peek()
        if tok is None:
            last = self._tokens[-1] if self._tokens else _Token("", 1, 1)
            raise ParseError("unexpected end of input", last.line, last.col)
        self._pos += 1
        return tok

    def _expect(self, text: str) -> _Token:
        tok = self._next()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def parse(self) -> Exp:
        exp = self._exp()
        tok = self._peek()
        if tok is not None:
            raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
        return exp

    def _exp(self) -> Exp:
        tok = self._next()
        if tok.text == "(":
            return self._form(tok)
        if tok.text == ")":
            raise ParseError("unexpected ')'", tok.line, tok.col)
        return self._atom(tok)

    def _atom(self, tok: _Token) -> Exp:
        if _INT_RE.match(tok.text):
            return Lit(int(tok.text))
        if tok.text in _KEYWORDS:
            raise ParseError(f"reserved word {tok.text!r} used as a variable", tok.line, tok.col)
        if _SYM_RE.match(tok.text):
            return Var(tok.text)
        raise ParseError(f"bad token {tok.text!r}", tok.line, tok.col)

    def _symbol(self) -> str:
        tok = self._next()
        if tok.text in _KEYWORDS or not _SYM_RE.match(tok.text):
            raise ParseError(f"expected a name, found {tok.text!r}", tok.line, tok.col)
        return tok.text

    def _form(self, open_tok: _Token) -> Exp:
        head = self._next()
        if head.text == "fun":
            self._expect("(")
            params = []
            while True:
                tok = self._peek()
                if tok is None:
                    raise ParseError("unexpected end of input", open_tok.line, open_tok.col)
                if tok.text == ")":
                    self._next()
                    break
                params.append(self._symbol())
            if len(set(params)) != len(params):
                raise ParseError("duplicate parameter", head.line, head.col)
            body = self._exp()
            self._expect(")")
            return Fun(tuple(params), body)
        if head.text == "app":
            fn = self._exp()
            args = []
            while self._peek() is not None and self._peek().text != ")":
                args.append(self._exp())
            self._expect(")")
            return App(fn, tuple(args))
        if head.text == "let":
            name = self._symbol()
            bound = self._exp()
            body = self._exp()
            self._expect(")")
            return Let(name, bound, body)
        if head.text == "+":
            left = self._exp()
            right = self._exp()
            self._expect(")")
            return Plus(left, right)
        if head.text == "inEnclave":
            body = self._exp()
            self._expect(")")
            return InEnclave(body)
        if head.text == "gateway":
            body = self._exp()
            self._expect(")")
            return Gateway(body)
        if head.text == "<@>":
            left = self._exp()
            right = self._exp()
            self._expect(")")
            return EnclaveApp(left, right)
        raise ParseError(f"unknown form {head.text!r}", head.line, head.col)


def parse_program(text: str) -> Exp:
    """Parse S-expression surface syntax into an expression tree."""
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty program", 1, 1)
    return _Parser(tokens).parse()


def print_program(e: Exp) -> str:
    """Render an expression back to surface syntax (inverse of parse_program)."""
    if isinstance(e, Lit):
        return str(e.n)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Fun):
        return f"(fun ({' '.join(e.params)}) {print_program(e.body)})"
    if isinstance(e, App):
        parts = " ".join(print_program(a) for a in e.args)
        return f"(app {print_program(e.fn)}{' ' + parts if parts else ''})"
    if isinstance(e, Let):
        return f"(let {e.name} {print_program(e.bound)} {print_program(e.body)})"
    if isinstance(e, Plus):
        return f"(+ {print_program(e.left)} {print_program(e.right)})"
    if isinstance(e, InEnclave):
        return f"(inEnclave {print_program(e.body)})"
    if isinstance(e, Gateway):
        return f"(gateway {print_program(e.body)})"
    if isinstance(e, EnclaveApp):
        return f"(<@> {print_program(e.left)} {print_program(e.right)})"
    raise TypeError(f"not an expression: {e!r}")


def print_value(v: Value) -> str:
    """Deterministic human-readable rendering of a value."""
    if isinstance(v, IntVal):
        return f"IntVal {v.n}"
    if isinstance(v, Closure):
        params = "[" + ", ".join(f'"{p}"' for p in v.params) + "]"
        return f"Closure {params} {print_program(v.body)} {_print_env(v.captured)}"
    if isinstance(v, SecureClosure):
        return f'SecureClosure "{v.name}" {_print_values(v.args)}'
    if isinstance(v, ArgList):
        return f"ArgList {_print_values(v.items)}"
    if isinstance(v, Dummy):
        return "Dummy"
    if isinstance(v, Err):
        return f"Err {v.state.name}"
    raise TypeError(f"not a value: {v!r}")


def _print_values(values) -> str:
    return "[" + ", ".join(print_value(v) for v in values) + "]"


def _print_env(env: Env) -> str:
    return "[" + ", ".join(f'("{k}", {print_value(v)})' for k, v in env) + "]"


def format_env(env: Env) -> str:
    """Multi-line rendering of an environment, oldest binding first."""
    lines = [f"  {name} -> {print_value(value)}" for name, value in reversed(env)]
    return "\n".join(lines)
