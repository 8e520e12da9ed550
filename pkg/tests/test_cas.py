import random
from fractions import Fraction

import pytest

from odecert import symexpr as sx
from odecert.flows import (CASUnavailable, ParseError, UnknownOperator, certify_flow,
                           field_request, from_ir, parse_cas, parse_cas_solution, run_wolfram,
                           to_fullform, to_input_form, to_ir)
from odecert.flows import cas
from odecert.syntax import parse_expr, parse_pred, parse_subst

from conftest import random_expr


def test_ir_examples():
    e = parse_expr("t + $x", ["x"], flow=True)
    assert to_ir(e) == cas.BOp("plus", cas.IVar(), cas.SVar("x"))
    assert to_ir(sx.Num(Fraction(3, 2))) == cas.NReal(Fraction(3, 2))
    assert to_ir(sx.NamedConst("pi")) == cas.NConst("pi")
    assert to_ir(sx.Num(-2)) == cas.NInt(-2)
    with pytest.raises(UnknownOperator):
        from_ir(cas.UOp("arcsinh", cas.IVar()))


def test_request_text():
    text, mapping = field_request(parse_subst("[x ~> 1]", ["x"]))
    assert text == "DSolve[{a'[t] == 1, a[0] == a0}, {a}, t]"
    assert mapping == {"x": "a"}
    _, mapping = field_request(parse_subst("[y ~> x, x ~> y]", ["x", "y"]))
    assert mapping == {"x": "a", "y": "b"}


def test_request_with_parameters():
    text, mapping = field_request(parse_subst("[y ~> a*y + b]", ["y"], ["a", "b"]))
    # parameters that collide with wire names are renamed
    assert mapping["y"] == "a" and mapping["a"] != "a"
    assert text.startswith("DSolve[{a'[t] == ")


def test_parse_solution_function_form():
    c = parse_cas_solution("{{a -> Function[{t}, t + a0]}}", {"x": "a"}, ["x"])
    assert c.render() == "[x ~> t + $x]"
    assert certify_flow(c, parse_subst("[x ~> 1]", ["x"])).status == "certified"


def test_parse_solution_applied_form():
    mapping = {"y": "a", "p": "p", "q": "q"}
    reply = "{{a[t] -> -(q/p) + E^(p*t)*a0 + (q*E^(p*t))/p}}"
    c = parse_cas_solution(reply, mapping, ["y"])
    fld = parse_subst("[y ~> p*y + q]", ["y"], ["p", "q"])
    rep = certify_flow(c, fld, [parse_pred("p != 0", [], ["p"])])
    assert rep.status == "certified", rep.render()


def test_parse_solution_errors():
    with pytest.raises(ParseError):
        parse_cas_solution("{}", {"x": "a"}, ["x"])
    with pytest.raises(ParseError):
        parse_cas_solution("{{a -> }}", {"x": "a"}, ["x"])
    with pytest.raises(UnknownOperator):
        parse_cas_solution("{{a -> Function[{t}, BesselJ[0, t]]}}", {"x": "a"}, ["x"])


def test_curried_forms():
    c = parse_cas("Derivative[1][a][t]")
    assert isinstance(c, cas.CurryFun) and len(c.argss) == 3
    assert to_input_form(c) == "a'[t]"
    assert to_fullform(c) == "Derivative[1][a][t]"


def test_wolfram_unavailable(monkeypatch):
    monkeypatch.setenv("ODECERT_WOLFRAMSCRIPT", "/nonexistent/wolframscript")
    with pytest.raises(CASUnavailable):
        run_wolfram("1")


# -------------------------------------------------------------- round-trip fuzz

def _random_cas(rng, depth):
    if depth == 0 or rng.random() < 0.3:
        r = rng.random()
        if r < 0.3:
            return cas.Int(rng.randint(-50, 50))
        if r < 0.45:
            return cas.Real(rng.choice([0.5, 1.25, 3.0, 1e-3, 2.5e10]))
        return cas.Id(rng.choice(["a", "b", "t", "a0", "Pi", "E", "x1"]))
    if rng.random() < 0.8:
        name = rng.choice(["Plus", "Times", "Power", "Sin", "List", "Rule", "f", "Function"])
        return cas.Fun(name, tuple(_random_cas(rng, depth - 1) for _ in range(rng.randint(0, 3))))
    return cas.CurryFun(rng.choice(["Derivative", "g"]),
                        tuple(tuple(_random_cas(rng, depth - 1) for _ in range(rng.randint(1, 2)))
                              for _ in range(rng.randint(2, 3))))


def test_property_fullform_roundtrip():
    rng = random.Random(404)
    for _ in range(500):
        c = _random_cas(rng, 4)
        assert parse_cas(to_fullform(c)) == c, to_fullform(c)


def test_property_ir_and_wire_roundtrip():
    rng = random.Random(505)
    names = ["x", "y"]
    mapping = {"x": "a", "y": "b"}
    env = {"a0": sx.StateVar("x"), "b0": sx.StateVar("y"), "t": sx.TIME}
    for _ in range(500):
        e = random_expr(rng, names, 4, funcs=("sin", "cos", "exp"), time=True)
        ir = to_ir(e)
        assert from_ir(ir) == e
        wire = cas.ir_to_cas(ir, {"x": "a0", "y": "b0"}, applied=False)
        text = to_input_form(wire)
        back = cas._cas_to_expr(parse_cas(text), env)
        # infix printing flattens associative chains; compare polynomial normal forms
        assert sx.poly_normalize(sx.Sub(back, e)).is_zero(), (sx.render(e), text)
        assert parse_cas(to_fullform(wire)) == wire
