"""Symbolic derivatives: d/dt of solution candidates, framed Lie derivatives
along a vector field, differential induction, ghosts and Darboux rules."""
from __future__ import annotations

from dataclasses import dataclass

from . import hybridprog as hp
from . import symexpr as sx
from .hybridprog import Cmp, EvolutionCmd, Pred, Subst
from .symexpr import (Add, Cos, Div, Exp, Expr, Ln, Mul, Neg, Num, Param, Pow, Sin,
                      Sqrt, StateVar, Sub, Tan, TimeVar)
from .vcs import make_vc


class UnsupportedNode(TypeError):
    pass


class UnsupportedLiteral(ValueError):
    pass


class FreshnessViolation(ValueError):
    pass


ORIGINS = ("SqrtPositive", "NonzeroDenominator", "LnPositive", "TanDefined")


@dataclass(frozen=True)
class Proviso:
    condition: Pred
    origin: str
    location: tuple  # child-index path from the root of the differentiated term

    @property
    def trivial(self) -> bool:
        """Decided true by constant folding (e.g. 6 != 0)."""
        return isinstance(hp.simplify_pred(self.condition), hp.TrueP)

    def __str__(self):
        return f"{hp.render_pred(self.condition)} [{self.origin}]"


def open_provisos(provisos) -> list:
    seen, out = set(), []
    for p in provisos:
        if not p.trivial and p.condition not in seen:
            seen.add(p.condition)
            out.append(p)
    return out


def _derive(e: Expr, leaf, path: tuple, prov: list) -> Expr:
    """Unsimplified derivative; `leaf` maps variables to their derivative."""
    d = lambda k, i: _derive(k, leaf, path + (i,), prov)
    if isinstance(e, (Num, sx.NamedConst)):
        return sx.ZERO
    if isinstance(e, (Param, StateVar, TimeVar)):
        return leaf(e)
    if isinstance(e, Add):
        return Add(d(e.left, 0), d(e.right, 1))
    if isinstance(e, Sub):
        return Sub(d(e.left, 0), d(e.right, 1))
    if isinstance(e, Neg):
        return Neg(d(e.arg, 0))
    if isinstance(e, Mul):
        return Add(Mul(e.left, d(e.right, 1)), Mul(d(e.left, 0), e.right))
    if isinstance(e, Div):
        f, g = e.left, e.right
        prov.append(Proviso(Cmp("!=", g, sx.ZERO), "NonzeroDenominator", path))
        inv = Div(sx.ONE, g)
        return Add(Mul(Neg(f), Mul(Mul(inv, d(g, 1)), inv)), Div(d(f, 0), g))
    if isinstance(e, Pow):
        if e.exp == 0:
            return sx.ZERO
        return Mul(Mul(Num(e.exp), d(e.base, 0)), Pow(e.base, e.exp - 1))
    if isinstance(e, Sin):
        return Mul(d(e.arg, 0), Cos(e.arg))
    if isinstance(e, Cos):
        return Neg(Mul(d(e.arg, 0), Sin(e.arg)))
    if isinstance(e, Exp):
        return Mul(d(e.arg, 0), Exp(e.arg))
    if isinstance(e, Sqrt):
        prov.append(Proviso(Cmp(">", e.arg, sx.ZERO), "SqrtPositive", path))
        return Mul(d(e.arg, 0), Div(sx.ONE, Mul(Num(2), Sqrt(e.arg))))
    if isinstance(e, Ln):
        prov.append(Proviso(Cmp(">", e.arg, sx.ZERO), "LnPositive", path))
        return Div(d(e.arg, 0), e.arg)
    if isinstance(e, Tan):
        prov.append(Proviso(Cmp("!=", Cos(e.arg), sx.ZERO), "TanDefined", path))
        return Div(d(e.arg, 0), Pow(Cos(e.arg), 2))
    raise UnsupportedNode(f"cannot differentiate {e!r}")


def _time_leaf(v):
    if isinstance(v, TimeVar):
        return sx.ONE
    if isinstance(v, StateVar):
        raise UnsupportedNode(f"state variable {v.name} in a time function")
    return sx.ZERO


def time_derivative_raw(e: Expr) -> tuple:
    prov = []
    return _derive(e, _time_leaf, (), prov), prov


def time_derivative(e: Expr) -> tuple:
    """(d e/dt simplified, provisos) for e over time and parameters."""
    raw, prov = time_derivative_raw(e)
    return sx.simplify(raw), prov


def lie_derivative_raw(f: Subst, e: Expr, frame) -> tuple:
    frame = set(frame)

    def leaf(v):
        if isinstance(v, StateVar):
            return f.lookup(v.name) if (v.name in frame and v.name in f) else sx.ZERO
        if isinstance(v, TimeVar):
            raise UnsupportedNode("time variable in a framed expression")
        return sx.ZERO

    prov = []
    return _derive(e, leaf, (), prov), prov


def lie_derivative(f: Subst, e: Expr, frame) -> Expr:
    """Derivative of e along f; variables outside `frame` are constant."""
    return sx.simplify(lie_derivative_raw(f, e, frame)[0])


def nnf_positive(p: Pred) -> Pred:
    """NNF over =, <=, < literals; != becomes a disjunction of strict ones."""
    q = hp.nnf(p)

    def expand(r: Pred) -> Pred:
        if isinstance(r, Cmp) and r.op == "!=":
            return hp.Or(Cmp("<", r.rhs, r.lhs), Cmp("<", r.lhs, r.rhs))
        if isinstance(r, (hp.And, hp.Or)):
            return type(r)(expand(r.left), expand(r.right))
        return r

    return expand(q)


def _touches_frame(p: Pred, frame) -> bool:
    return bool(hp.pred_free_vars(p).state & set(frame))


def diff_induct(inv: Pred, evo: EvolutionCmd, context=(), label: str = "dinv") -> list:
    """Differential-invariant VCs for `inv` along `evo`.

    Conjuncts that mention no evolving variable are invariant for free; they
    become hypotheses of their siblings' obligations instead of VCs.
    """
    form = nnf_positive(inv)
    out = []
    _dinv(form, evo, list(context), [], label, out)
    return out


def _dinv(p: Pred, evo: EvolutionCmd, context, facts, label, out):
    if isinstance(p, hp.TrueP):
        return
    if isinstance(p, hp.And):
        parts = hp.conjuncts(p)
        frozen = [q for q in parts if not _touches_frame(q, evo.frame)]
        for q in parts:
            if _touches_frame(q, evo.frame):
                _dinv(q, evo, context, facts + frozen, label, out)
        return
    if isinstance(p, hp.Or):
        for q in hp.disjuncts(p):
            _dinv(q, evo, context, facts, label, out)
        return
    if not isinstance(p, Cmp):
        raise UnsupportedLiteral(f"not a comparison: {hp.render_pred(p)}")
    if not _touches_frame(p, evo.frame):
        return
    la, pa = lie_derivative_raw(evo.field, p.lhs, evo.frame)
    lb, pb = lie_derivative_raw(evo.field, p.rhs, evo.frame)
    rel = "=" if p.op == "=" else "<="
    prov = [q.condition for q in open_provisos(pa + pb)]
    goal = hp.Implies(hp.conj(*facts, evo.guard), Cmp(rel, sx.simplify(la), sx.simplify(lb)))
    k = len(out)
    out.append(make_vc(f"{label}[{k}]: {hp.render_pred(p)}", tuple(context) + tuple(prov), goal))


@dataclass(frozen=True)
class GhostSpec:
    """y' = a*y + b for a fresh y."""
    fresh: str
    a: Expr
    b: Expr


def _names_in(*objs) -> set:
    out = set()
    for o in objs:
        if isinstance(o, Pred):
            fv = hp.pred_free_vars(o)
        else:
            fv = sx.free_vars(o)
        out |= fv.state | fv.params
    return out


def ghost_augment(evo: EvolutionCmd, spec: GhostSpec, P: Pred, Q: Pred, declared=()):
    """Add y' = a*y + b; the pre/postconditions do not mention y.

    The ghost's initial value is chosen by the caller (an existential at the
    precondition), which is sound because the linear equation always has a
    global solution.
    """
    used = set(declared) | set(evo.frame) | _names_in(evo.guard, P, Q)
    for _, e in evo.field.items():
        used |= _names_in(e)
    if spec.fresh in used:
        raise FreshnessViolation(f"ghost variable {spec.fresh!r} is not fresh")
    if spec.fresh in _names_in(spec.a, spec.b):
        raise FreshnessViolation(f"ghost equation for {spec.fresh!r} is not linear")
    y = StateVar(spec.fresh)
    rhs = Mul(spec.a, y) if spec.b == sx.ZERO else Add(Mul(spec.a, y), spec.b)
    field = evo.field.update(spec.fresh, rhs)
    new = EvolutionCmd(tuple(evo.frame) + (spec.fresh,), field, evo.guard, evo.t0, evo.domain)
    return new, P, Q


def darboux_invariant(e: Expr, rel: str) -> Pred:
    op = {"eq": "=", "ge": ">=", "gt": ">"}.get(rel)
    if op is None:
        raise UnsupportedLiteral(f"unknown Darboux relation {rel!r}")
    return Cmp(op, e, sx.ZERO)


def darboux_vcs(e: Expr, cofactor: Expr, rel: str, evo: EvolutionCmd, fresh=("y", "z"),
                context=()) -> list:
    """Premise of the Darboux rule, computed on the ghost-augmented field.

    `fresh` are two reserved names; the first is the ghost y' = -c*y, the
    second stands for the extra variable the soundness argument uses.
    """
    darboux_invariant(e, rel)
    y = fresh[0]
    aug = evo.field.update(y, Mul(Neg(cofactor), StateVar(y)))
    frame = set(evo.frame) | {y}
    lhs = sx.simplify(lie_derivative_raw(aug, e, frame)[0])
    rhs = sx.simplify(Mul(cofactor, e))
    op = "=" if rel == "eq" else ">="
    goal = hp.Implies(evo.guard, Cmp(op, lhs, rhs))
    notes = (f"ghost {fresh[0]}' = -({sx.render(cofactor)})*{fresh[0]}",
             f"reserved {fresh[1]} for the second ghost")
    return [make_vc(f"darboux: {sx.render(e)} {op} 0", context, goal, notes=notes)]
