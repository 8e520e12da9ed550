import math
import random

import numpy as np
import pytest

from odecert import hybridprog as hp
from odecert import symexpr as sx
from odecert.flows import (Certified, FlowCandidate, NonMatchingFrames, NotC1,
                           c1_lipschitz_check, certify_flow, certify_solution,
                           decompose_independent, recast_higher_order, rk4_integrate, solve_sode)
from odecert.syntax import parse_expr, parse_pred, parse_subst

from conftest import sympy_zero, to_sympy


def S(text, states, params=()):
    return parse_subst(text, states, params)


def cand(text, states, params=()):
    body = S(text, states, params)
    return FlowCandidate(tuple(body.keys()), body)


def flow_at(c: FlowCandidate, t: float, s: dict) -> dict:
    env = {**s, sx.TIME: t}
    return {x: sx.eval_numeric(c.body.lookup(x), env) for x in c.frame}


SODE = S("[x ~> t, y ~> x, z ~> 1]", ["x", "y", "z"])
ROT = S("[x1 ~> d1, x2 ~> d2, d1 ~> -w*d2, d2 ~> w*d1]", ["x1", "x2", "d1", "d2"], ["w"])


# -------------------------------------------------------------- certification

def test_sode_certified():
    c = cand("[x ~> t^2/2 + $x, y ~> t^3/6 + $x*t + $y, z ~> $z + t]", ["x", "y", "z"])
    rep = certify_solution(c, SODE)
    assert rep.status == "certified"
    y = next(r for r in rep.components if r.var == "y")
    assert sx.render(y.computed_derivative, flow=True) == "t^2/2 + $x"


def test_wrong_candidate_fails_on_y():
    c = cand("[x ~> t^2/2 + $x, y ~> t^3/5 + $x*t + $y, z ~> $z + t]", ["x", "y", "z"])
    rep = certify_solution(c, SODE)
    assert rep.status == "failed"
    bad = [r.var for r in rep.components if not isinstance(r.identity_status, sx.Equal)]
    assert bad == ["y"]


@pytest.mark.parametrize("flow, field, states", [
    ("[x ~> $x]", "[x ~> 0]", ["x"]),
    ("[g ~> $g*exp(-t)]", "[g ~> -g]", ["g"]),
    ("[x ~> $z*t^2/2 + $y*t + $x, y ~> $z*t + $y]", "[x ~> y, y ~> z]", ["x", "y", "z"]),
    ("[x ~> 1 - exp(-t) + $x*exp(-t)]", "[x ~> -x + 1]", ["x"]),
])
def test_certified_flows(flow, field, states):
    rep = certify_flow(cand(flow, states), S(field, states))
    assert rep.status == "certified", rep.render()
    assert not any(p for c in rep.components for p in c.provisos if not p.trivial)


def test_shifted_candidate_fails_initial_condition():
    rep = certify_flow(cand("[x ~> $x + 1 + t]", ["x"]), S("[x ~> 1]", ["x"]))
    assert rep.identities_ok and not rep.initial_ok
    assert rep.status == "failed"


def test_frame_mismatch():
    with pytest.raises(NonMatchingFrames):
        certify_solution(cand("[x ~> $x]", ["x", "y"]), S("[x ~> 0, y ~> 0]", ["x", "y"]))


def test_open_proviso_reported():
    # x' = 1/(2*x) is solved by sqrt(t + x0^2) for x0 > 0, which needs t + x0^2 > 0
    c = cand("[x ~> sqrt(t + $x^2)]", ["x"])
    rep = certify_solution(c, S("[x ~> 1/(2*x)]", ["x"]), as_flow=False)
    assert rep.identities_ok
    assert rep.status == "certified-with-open-provisos"
    assert any(p.origin == "SqrtPositive" for p in rep.open_provisos)


def test_guard_context_closes_proviso():
    c = cand("[x ~> sqrt(t + $x^2)]", ["x"])
    ctx = [parse_pred("x > 0", ["x"])]
    rep = certify_solution(c, S("[x ~> 1/(2*x)]", ["x"]), ctx, as_flow=False)
    assert rep.status == "certified", rep.render()


@pytest.mark.parametrize("field, states, frame", [
    ("[x ~> 1 - x]", ["x"], ["x"]),
    ("[x ~> -y*x]", ["x", "y"], ["x"]),
    ("[x ~> y, y ~> z]", ["x", "y", "z"], ["x", "y"]),
    ("[x ~> sin(x)*exp(y), y ~> 0]", ["x", "y"], ["x", "y"]),
])
def test_lipschitz_certified(field, states, frame):
    assert isinstance(c1_lipschitz_check(S(field, states), frame), Certified)


def test_lipschitz_needs_side_conditions():
    f = S("[x ~> 1/y]", ["x", "y"])
    assert isinstance(c1_lipschitz_check(f, ["x"]), NotC1)
    res = c1_lipschitz_check(f, ["x"], [parse_pred("y > 0", ["x", "y"])])
    assert isinstance(res, Certified) and len(res.side_conditions) == 1
    assert isinstance(c1_lipschitz_check(S("[x ~> sqrt(x)]", ["x"]), ["x"]), NotC1)


def test_jacobian_matches_sympy():
    import sympy
    f = S("[x ~> x*y^2 - sin(x), y ~> exp(x)*y]", ["x", "y"])
    jac = c1_lipschitz_check(f, ["x", "y"]).jacobian
    for i, a in enumerate(["x", "y"]):
        for j, b in enumerate(["x", "y"]):
            ref = sympy.diff(to_sympy(f.lookup(a)), sympy.Symbol(b))
            assert sympy_zero(to_sympy(jac[i][j]) - ref)


# -------------------------------------------------------------- solver

def test_solver_integrator():
    c, _ = solve_sode(S("[x ~> 1]", ["x"]))
    assert c.render() == "[x ~> t + $x]"


def test_solver_affine():
    c, _ = solve_sode(S("[y ~> a*y + b]", ["y"], ["a", "b"]))
    expected = parse_expr("b/a*exp(a*t) + $y*exp(a*t) - b/a", ["y"], ["a", "b"], flow=True)
    assert isinstance(sx.equal_poly(c.body.lookup("y"), expected,
                                    assumptions=list(c.side_conditions)), sx.Equal)
    assert [hp.render_pred(p) for p in c.side_conditions] == ["a != 0"]


def test_solver_sode_chain():
    c, _ = solve_sode(SODE)
    assert certify_flow(c, SODE).status == "certified"
    ref = parse_expr("t^3/6 + $x*t + $y", ["x", "y", "z"], flow=True)
    assert isinstance(sx.equal_poly(c.body.lookup("y"), ref), sx.Equal)


def test_solver_rotation_matches_reference_flow():
    c, trace = solve_sode(ROT)
    assert [e["class"] for e in trace.to_json()][:1] == ["rotation"]
    d1 = parse_expr("$d1*cos(t*w) + -1*$d2*sin(t*w)", ["d1", "d2"], ["w"], flow=True)
    assert isinstance(sx.equal_poly(c.body.lookup("d1"), d1), sx.Equal)
    assert certify_flow(c, ROT, [parse_pred("w != 0", [], ["w"])]).status == "certified"


def test_solver_rocket():
    f = S("[m ~> -k, v ~> m, y ~> v]", ["m", "v", "y"], ["k"])
    c, _ = solve_sode(f)
    assert certify_flow(c, f).status == "certified"
    ref = parse_expr("-k*t^3/6 + $m*t^2/2 + $v*t + $y", ["m", "v", "y"], ["k"], flow=True)
    assert isinstance(sx.equal_poly(c.body.lookup("y"), ref), sx.Equal)


def test_solver_no_solution_trace():
    c, trace = solve_sode(S("[x ~> x^2]", ["x"]))
    assert c is None
    classes = [e["class"] for e in trace.to_json()]
    assert "integrate" in classes and "affine" in classes
    assert "failed" in trace.render()


def test_decomposition_order():
    comps = [frame for frame, _ in decompose_independent(SODE, ["x", "y", "z"])]
    assert comps == [("z",), ("x",), ("y",)]
    rot = S("[u ~> -w*v, v ~> w*u]", ["u", "v"], ["w"])
    assert [f for f, _ in decompose_independent(rot, ["u", "v"])] == [("u", "v")]
    ind = S("[x ~> x, s ~> 1]", ["x", "s"])
    assert len(decompose_independent(ind, ["x", "s"])) == 2


@pytest.mark.parametrize("field, states, params, expected", [
    ("[x ~> 2*x + y, y ~> x]", ["x", "y"], (), {"x'' = x + 2*x'", "y'' = y + 2*y'"}),
    ("[x ~> v, v ~> a, a ~> 0]", ["x", "v", "a"], (), {"x''' = 0"}),
    ("[u ~> -w*v, v ~> w*u]", ["u", "v"], ["w"], {"u'' = -(u*w^2)", "v'' = -(v*w^2)"}),
])
def test_recast_higher_order(field, states, params, expected):
    assert {r.render() for r in recast_higher_order(S(field, states, params))} == expected


# -------------------------------------------------------------- RK4

def test_rk4_examples():
    traj = rk4_integrate(S("[g ~> -g]", ["g"]), ["g"], {"g": 1.0}, 1.0, 1000)
    assert traj[-1][1]["g"] == pytest.approx(math.exp(-1), abs=1e-9)
    traj = rk4_integrate(S("[x ~> 1]", ["x"]), ["x"], {"x": 0.0}, 5.0, 10)
    assert traj[-1][1]["x"] == pytest.approx(5.0, abs=1e-12)
    rot = S("[u ~> -w*v, v ~> w*u]", ["u", "v"], ["w"])
    end = rk4_integrate(rot, ["u", "v"], {"u": 1.0, "v": 0.0, "w": 1.0}, math.pi / 2, 1000)[-1][1]
    assert end["u"] == pytest.approx(0, abs=1e-6) and end["v"] == pytest.approx(1, abs=1e-6)


def _flow_cases():
    # (field, states, params, initial-state sampler)
    return [
        (SODE, ["x", "y", "z"], []),
        (ROT, ["x1", "x2", "d1", "d2"], ["w"]),
        (S("[y ~> a*y + b]", ["y"], ["a", "b"]), ["y"], ["a", "b"]),
        (S("[g ~> -g]", ["g"]), ["g"], []),
    ]


def _rel_close(a, b, rel):
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


def test_property_flow_tracks_rk4():
    rng = random.Random(31)
    times = [0.1 * k for k in range(1, 21)]
    for case in range(50):
        fld, states, params = _flow_cases()[case % 4]
        c, _ = solve_sode(fld)
        s = {n: rng.uniform(-2, 2) for n in states}
        s.update({p: rng.choice([-1, 1]) * rng.uniform(0.3, 1.5) for p in params})
        traj = rk4_integrate(fld, states, s, 2.0, 4000)
        by_t = {round(t, 6): env for t, env in traj}
        for t in times:
            ref = by_t[round(t, 6)]
            got = flow_at(c, t, s)
            for x in states:
                assert _rel_close(got[x], ref[x], 1e-6), (case, t, x, got[x], ref[x])


def test_property_flow_monoid_law():
    rng = random.Random(77)
    autonomous = _flow_cases()[1:]  # the law needs a time-independent field
    for case in range(100):
        fld, states, params = autonomous[case % 3]
        c, _ = solve_sode(fld)
        s = {n: rng.uniform(-2, 2) for n in states}
        s.update({p: rng.choice([-1, 1]) * rng.uniform(0.3, 1.5) for p in params})
        t1, t2 = rng.uniform(0, 2), rng.uniform(0, 2)
        at0 = flow_at(c, 0.0, s)
        assert all(_rel_close(at0[x], s[x], 1e-12) for x in states)
        direct = flow_at(c, t1 + t2, s)
        mid = {**s, **flow_at(c, t2, s)}
        composed = flow_at(c, t1, mid)
        for x in states:
            assert _rel_close(direct[x], composed[x], 1e-9), (case, x)
