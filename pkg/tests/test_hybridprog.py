from odecert import hybridprog as hp
from odecert import symexpr as sx
from odecert.syntax import parse_pred, parse_prog

X, Y = sx.StateVar("x"), sx.StateVar("y")


def test_subst_lookup_and_compose():
    s = hp.Subst({"x": sx.Add(X, sx.ONE)})
    assert s.lookup("y") == Y
    t = hp.Subst({"y": sx.Mul(sx.Num(2), X)})
    comp = s.compose(t)
    assert comp.lookup("x") == sx.Add(X, sx.ONE)
    assert comp.lookup("y") == sx.Mul(sx.Num(2), X)
    assert s.render(flow=True, ascii=True) == "[x ~> $x + 1]"


def test_nnf_pushes_negation_to_literals():
    p = parse_pred("!(x > 0 && (y <= 1 ==> x = 2))", ["x", "y"])
    assert hp.render_pred(hp.nnf(p)) == "x <= 0 || y <= 1 && x != 2"


def test_simplify_pred_folds_constants():
    p = parse_pred("1 < 2 && (x > 0 || 0 > 1)", ["x"])
    assert hp.simplify_pred(p) == parse_pred("x > 0", ["x"])
    assert isinstance(hp.simplify_pred(parse_pred("x >= 0 ==> true", ["x"])), hp.TrueP)


def test_quantifier_bounds_and_free_vars():
    q = hp.Forall("s", sx.ZERO, sx.Param("t"), hp.Cmp(">=", sx.Param("s"), sx.ZERO))
    assert hp.pred_free_vars(q).params == {"t"}
    assert [hp.render_pred(b) for b in hp.binder_bounds("s", sx.ZERO, sx.Param("t"))] == \
        ["s >= 0", "s <= t"]


def test_frames_and_nmods():
    p = parse_prog("x := 1; {y' = x}; ?x > 0", ["x", "y", "z"])
    assert hp.mutated_frame(p) == {"x", "y"}
    assert hp.nmods_check(p, ["z"])
    assert not hp.nmods_check(p, ["y"])
    assert hp.unrestricted(["z"], parse_pred("x > y", ["x", "y"]))
    assert len(hp.evolutions(p)) == 1


def test_render_negated_comparison_is_unambiguous():
    p = hp.Not(parse_pred("x <= 1", ["x"]))
    assert hp.render_pred(p) == "!(x <= 1)"
    assert parse_pred(hp.render_pred(p), ["x"]) == p
