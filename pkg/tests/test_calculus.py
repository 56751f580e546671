import pytest

from enclavon.calculus import (
    App,
    Dummy,
    EnclaveApp,
    Err,
    ErrState,
    Fun,
    Gateway,
    InEnclave,
    IntVal,
    Let,
    Lit,
    ParseError,
    Plus,
    SecureClosure,
    Var,
    lookup_var,
    parse_program,
    print_program,
    print_value,
)
from enclavon.semantics import gen_random_program

LISTING3 = "(let m 3 (let f (fun (x) (+ x m)) (let y (inEnclave f) (gateway (<@> y 2)))))"

LISTING3_AST = Let(
    "m",
    Lit(3),
    Let(
        "f",
        Fun(("x",), Plus(Var("x"), Var("m"))),
        Let("y", InEnclave(Var("f")), Gateway(EnclaveApp(Var("y"), Lit(2)))),
    ),
)


def test_lookup_front_binding():
    assert lookup_var("m", (("m", IntVal(3)),)) == IntVal(3)


def test_lookup_missing_is_err_value():
    assert lookup_var("x", ()) == Err(ErrState.EVarNotFound)


def test_lookup_shadowing_front_wins():
    env = (("x", IntVal(1)), ("x", IntVal(2)))
    assert lookup_var("x", env) == IntVal(1)


def test_parse_plus():
    assert parse_program("(+ 1 2)") == Plus(Lit(1), Lit(2))


def test_parse_listing3():
    assert parse_program(LISTING3) == LISTING3_AST


def test_parse_duplicate_param_rejected():
    with pytest.raises(ParseError):
        parse_program("(fun (x x) x)")


def test_parse_reports_line_and_column():
    with pytest.raises(ParseError) as info:
        parse_program("(let m 3\n  (+ m )")
    assert info.value.line == 2


def test_parse_reserved_word_as_variable():
    with pytest.raises(ParseError):
        parse_program("(+ let 1)")


def test_parse_trailing_input():
    with pytest.raises(ParseError):
        parse_program("(+ 1 2) 3")


def test_parse_empty():
    with pytest.raises(ParseError):
        parse_program("   ; just a comment")


@pytest.mark.parametrize(
    "source, ast",
    [
        ("7", Lit(7)),
        ("-12", Lit(-12)),
        ("(app (fun (x y) (+ x y)) 1 2)", App(Fun(("x", "y"), Plus(Var("x"), Var("y"))), (Lit(1), Lit(2)))),
        ("(app (fun () 1))", App(Fun((), Lit(1)), ())),
        ("(gateway (inEnclave 1))", Gateway(InEnclave(Lit(1)))),
    ],
)
def test_parse_cases(source, ast):
    assert parse_program(source) == ast


def test_fun_node_rejects_duplicate_params():
    with pytest.raises(ValueError):
        Fun(("a", "a"), Lit(1))


@pytest.mark.parametrize(
    "value, rendered",
    [
        (IntVal(5), "IntVal 5"),
        (Dummy(), "Dummy"),
        (SecureClosure("EncVar0", ()), 'SecureClosure "EncVar0" []'),
        (SecureClosure("EncVar0", (IntVal(2),)), 'SecureClosure "EncVar0" [IntVal 2]'),
        (Err(ErrState.ENotClosure), "Err ENotClosure"),
    ],
)
def test_print_value(value, rendered):
    assert print_value(value) == rendered


def test_print_value_closure_shows_params_body_and_env():
    from enclavon.calculus import Closure

    clo = Closure(("x",), Plus(Var("x"), Var("m")), (("m", IntVal(3)),))
    assert print_value(clo) == 'Closure ["x"] (+ x m) [("m", IntVal 3)]'


def test_print_parse_roundtrip_on_generated_programs():
    for seed in range(300):
        ast = gen_random_program(seed, 1 + seed % 40, allow_gateway=bool(seed % 2))
        assert parse_program(print_program(ast)) == ast
