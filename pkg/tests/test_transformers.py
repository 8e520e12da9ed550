import math
import random

import pytest

from odecert import hybridprog as hp
from odecert import symexpr as sx
from odecert.discharge import Proved, SamplerConfig, discharge_all, discharge_vc
from odecert.syntax import parse_expr, parse_pred, parse_problem, parse_prog, parse_subst
from odecert.transformers import (FlowTable, LoopReached, MissingFlow, MissingLoopInvariant,
                                  fdia, frame_rule_apply, hoare_vcs, wlp)

ST = ["x", "y", "g"]
PAR = ["g_m", "g_M", "k"]
Q = lambda s: parse_pred(s, ST, PAR)
PROG = lambda s: parse_prog(s, ST, PAR)
R = hp.render_pred


# -------------------------------------------------------------- laws

def test_wlp_basic_laws():
    post = Q("x > 0")
    assert wlp(hp.Skip(), post) == post
    assert wlp(hp.Abort(), post) == hp.TRUE
    assert R(wlp(PROG("?y > 1"), post)) == "y > 1 ==> x > 0"
    assert R(wlp(PROG("x := x + y"), post)) == "x + y > 0"
    assert R(wlp(PROG("x := 1 |_| x := y"), post)) == "1 > 0 && y > 0"


def test_fdia_basic_laws():
    post = Q("x > 0")
    assert fdia(hp.Skip(), post) == post
    assert fdia(hp.Abort(), post) == hp.FALSE
    assert R(fdia(PROG("?y > 1"), post)) == "y > 1 && x > 0"
    assert R(fdia(PROG("x := x + y"), post)) == "x + y > 0"
    assert R(fdia(PROG("x := 1 |_| x := y"), post)) == "1 > 0 || y > 0"


def test_wlp_seq_is_composition():
    a, b = PROG("x := x + 1"), PROG("?x > y; y := 2*x")
    post = Q("y >= x")
    assert wlp(hp.Seq(a, b), post) == wlp(a, wlp(b, post))
    assert fdia(hp.Seq(a, b), post) == fdia(a, fdia(b, post))


def test_wlp_conditional():
    ctrl = PROG("if (g <= g_m) { g := g_M } else { skip }")
    r = Q("g >= 0")
    assert R(wlp(ctrl, r)) == "(g <= g_m ==> g_M >= 0) && (!(g <= g_m) ==> g >= 0)"


def test_evolution_with_flow():
    dyn = PROG("{g' = -g}")
    flows = FlowTable({dyn.cmd: parse_subst("[g ~> g*exp(-t)]", ["g"])})
    assert R(wlp(dyn, Q("g >= 0"), flows)) == "(forall t >= 0. g*exp(-t) >= 0)"
    assert R(fdia(dyn, Q("g >= 0"), flows)) == "(exists t >= 0. g*exp(-t) >= 0)"


def test_evolution_guard_shapes():
    evo = PROG("evol [x ~> x + t] | x <= 3")
    assert R(wlp(evo, Q("x >= 0"))) == \
        "(forall t >= 0. (forall tau in [0, t]. x + tau <= 3) ==> x + t >= 0)"
    assert R(fdia(evo, Q("x >= 0"))) == \
        "(exists t >= 0. (forall tau in [0, t]. x + tau <= 3) && x + t >= 0)"


def test_binder_names_avoid_declared():
    evo = PROG("evol [x ~> x + t]")
    post = parse_pred("x >= t", ["x"], ["t"])
    out = wlp(evo, post)
    assert isinstance(out, hp.Forall) and out.var != "t"


def test_errors():
    with pytest.raises(LoopReached):
        wlp(PROG("loop(x := x + 1)"), Q("x > 0"))
    with pytest.raises(MissingFlow):
        wlp(PROG("{x' = 1}"), Q("x > 0"))


# -------------------------------------------------------------- duality

GRID = [0.0, 0.05, 0.3, 0.7, 1.0, 1.6, 2.5, 4.0]


def _ev(p, env):
    """Reference evaluator; quantifiers range over GRID within their bounds."""
    if isinstance(p, hp.TrueP):
        return True
    if isinstance(p, hp.FalseP):
        return False
    if isinstance(p, hp.Cmp):
        a, b = sx.eval_numeric(p.lhs, env), sx.eval_numeric(p.rhs, env)
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b, "=": a == b,
                "!=": a != b}[p.op]
    if isinstance(p, hp.Not):
        return not _ev(p.arg, env)
    if isinstance(p, hp.And):
        return _ev(p.left, env) and _ev(p.right, env)
    if isinstance(p, hp.Or):
        return _ev(p.left, env) or _ev(p.right, env)
    if isinstance(p, hp.Implies):
        return (not _ev(p.left, env)) or _ev(p.right, env)
    lo = -math.inf if p.lo is None else sx.eval_numeric(p.lo, env)
    hi = math.inf if p.hi is None else sx.eval_numeric(p.hi, env)
    pts = [v for v in GRID if lo <= v <= hi] + ([hi] if math.isfinite(hi) else [])
    vals = (_ev(p.body, {**env, p.var: v}) for v in pts)
    return all(vals) if isinstance(p, hp.Forall) else any(vals)


def _random_pred(rng):
    e = lambda: rng.choice(["x", "y", "x + y", "2*x - y", "x*y", "1"])
    p = Q(f"{e()} {rng.choice(['<', '<=', '>', '>='])} {rng.randint(-2, 2)}")
    if rng.random() < 0.3:
        p = hp.And(p, Q(f"{e()} > {rng.randint(-2, 2)}"))
    return p


def _random_prog(rng, depth):
    k = rng.random()
    if depth == 0 or k < 0.3:
        r = rng.random()
        if r < 0.4:
            return PROG(rng.choice(["x := x + 1", "y := x*y", "x, y := y, x", "x := 2*y - 1"]))
        if r < 0.6:
            return hp.Test(_random_pred(rng))
        if r < 0.9:
            flow = rng.choice(["[x ~> x + t]", "[x ~> x*exp(-t), y ~> y + 2*t]"])
            return hp.EvolFlow(parse_subst(flow, ["x", "y"]),
                               rng.choice([hp.TRUE, Q("x <= 3"), Q("y >= -1")]))
        return rng.choice([hp.Skip(), hp.Abort()])
    sub = lambda: _random_prog(rng, depth - 1)
    if k < 0.6:
        return hp.Seq(sub(), sub())
    if k < 0.8:
        return hp.Choice(sub(), sub())
    return hp.If(_random_pred(rng), sub(), sub())


def test_property_duality():
    """fdia(p, Q) agrees with !wlp(p, !Q) on 200 random states."""
    rng = random.Random(8)
    for _ in range(200):
        p = _random_prog(rng, 3)
        post = _random_pred(rng)
        a = fdia(p, post)
        b = hp.Not(wlp(p, hp.Not(post)))
        env = {"x": rng.uniform(-3, 3), "y": rng.uniform(-3, 3)}
        assert _ev(a, env) == _ev(b, env), (hp.render_prog(p), R(post), env)


# -------------------------------------------------------------- VC generation

def test_blood_sugar_vcs(problem):
    pr = problem("blood_sugar")
    goal = pr.goal("safe_flow")
    vcs = hoare_vcs(goal, pr)
    assert [v.label for v in vcs] == ["init", "loop-post", "loop-body"]
    body = vcs[2]
    assert [b.name for b in body.binders] == ["t", "t1"]
    assert "g_M*exp(-t) >= 0" in R(body.goal)
    assert all(isinstance(r, Proved) for r in discharge_all(vcs, SamplerConfig()))


def test_diffinduct_vcs(problem):
    pr = problem("diffinduct")
    vcs = hoare_vcs(pr.goals[0], pr)
    goals = [R(v.goal) for v in vcs]
    assert "0 <= 1" in goals and "1 <= 2" in goals


def test_rocket_witness(problem):
    pr = problem("rocket")
    (vc,) = hoare_vcs(pr.goal("reach"), pr)
    assert vc.binders == ()
    assert "2*m0/k >= 0" in R(vc.goal)
    assert any("witness" in n for n in vc.notes)
    assert isinstance(discharge_vc(vc), Proved)


def test_missing_loop_invariant():
    pr = parse_problem("""problem p { variables { x; }
      goal g: hoare {x >= 0} loop(x := x + 1) {x >= 0}; }""")
    with pytest.raises(MissingLoopInvariant):
        hoare_vcs(pr.goals[0], pr)


def test_blocked_cases():
    pr = parse_problem("""problem p { variables { x; }
      goal w: diamond {x >= 0} while x < 3 inv(x >= 0) { x := x + 1 } {x >= 3};
      goal f: hoare {x >= 0} {x' = x^2} {x >= 0} using solve;
      goal d: diamond {x >= 0} {x' = 1} {x >= 1} using dinduct; }""")
    for goal in pr.goals:
        vcs = hoare_vcs(goal, pr)
        blocked = [v for v in vcs if v.blocked]
        assert blocked, goal.name
        assert not isinstance(discharge_vc(blocked[0]), Proved)


def test_conjunction_invariant_splits():
    text = """problem p {{ constants {{ c: real; }} variables {{ x; y; }}
      goal g: hoare {{{inv}}} {{x' = 1, y' = 2}} {{{inv}}} using dinduct; }}"""
    both = parse_problem(text.format(inv="x > c && y >= x"))
    i = parse_problem(text.format(inv="x > c"))
    j = parse_problem(text.format(inv="y >= x"))
    goals = lambda pr: {R(v.goal) for v in hoare_vcs(pr.goals[0], pr) if v.label.startswith("dinv")}
    assert goals(both) == goals(i) | goals(j)


def test_frame_rule():
    dyn = PROG("{g' = -g}")
    assert frame_rule_apply(dyn, Q("k > 1"), (Q("g >= 0"), Q("g >= 0"))) is not None
    boat = parse_prog("{x' = v, v' = -rs}", ["x", "v", "rs"])
    strengthened = frame_rule_apply(boat, parse_pred("rs > 0", ["x", "v", "rs"]),
                                    (hp.TRUE, hp.TRUE))
    assert strengthened is not None and "rs > 0" in R(strengthened[0])
    assert frame_rule_apply(PROG("g := g_M"), Q("g >= 0"), (hp.TRUE, hp.TRUE)) is None


def test_flows_certified_once():
    pr = parse_problem("""problem p { variables { x; }
      def d = {x' = 1};
      goal g: hoare {x >= 0} d; d {x >= 0}; }""")
    table = FlowTable()
    hoare_vcs(pr.goals[0], pr, flows=table)
    assert len(table) == 1
    assert next(iter(table.values())).render(flow=True, ascii=True) == "[x ~> t + $x]"
