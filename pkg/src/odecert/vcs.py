"""Verification conditions: a goal under context, with prenex binders."""
from __future__ import annotations

from dataclasses import dataclass, field

from . import hybridprog as hp
from . import symexpr as sx
from .hybridprog import Pred


@dataclass(frozen=True)
class Binder:
    name: str
    quantifier: str  # "forall" | "exists"
    lo: sx.Expr | None = None
    hi: sx.Expr | None = None

    @property
    def kind(self) -> str:
        if self.lo is not None and self.hi is not None:
            return "interval"
        if self.lo == sx.ZERO and self.hi is None:
            return "nonneg"
        return "real"

    def bounds(self) -> list:
        return hp.binder_bounds(self.name, self.lo, self.hi)

    def to_json(self) -> dict:
        return {"name": self.name, "kind": self.kind,
                "lo": None if self.lo is None else sx.render(self.lo),
                "hi": None if self.hi is None else sx.render(self.hi),
                "quantifier": self.quantifier}


@dataclass(frozen=True)
class VC:
    """`context |- Q1 b1. ... Qn bn. goal`.

    exact: a refutation of this VC refutes the enclosing goal (no invariant
    or witness was guessed on the way).  blocked: the generator could not
    produce a sound obligation; the VC is never Proved.
    """
    label: str
    context: tuple
    binders: tuple
    goal: Pred
    exact: bool = False
    notes: tuple = ()
    blocked: str | None = None

    def formula(self) -> Pred:
        """Goal with the binders re-attached (context not included)."""
        out = self.goal
        for b in reversed(self.binders):
            q = hp.Forall if b.quantifier == "forall" else hp.Exists
            out = q(b.name, b.lo, b.hi, out)
        return out

    def to_json(self) -> dict:
        return {"label": self.label,
                "context": [hp.render_pred(c) for c in self.context],
                "binders": [b.to_json() for b in self.binders],
                "goal": hp.render_pred(self.goal)}

    def __str__(self):
        head = "".join(
            f"{b.quantifier} {b.name}{_bound_text(b)}. " for b in self.binders)
        ctx = " && ".join(hp.render_pred(c) for c in self.context)
        return f"{ctx + ' |- ' if ctx else ''}{head}{hp.render_pred(self.goal)}"


def _bound_text(b: Binder) -> str:
    if b.lo is not None and b.hi is not None:
        return f" in [{sx.render(b.lo)}, {sx.render(b.hi)}]"
    if b.lo is not None:
        return f" >= {sx.render(b.lo)}"
    if b.hi is not None:
        return f" <= {sx.render(b.hi)}"
    return ""


def prenex(p: Pred) -> tuple:
    """Pull quantifiers out of the positive spine (And, Or, Implies-right).

    Binder names are fresh w.r.t. declared names; a name reused in sibling
    scopes (the same postcondition substituted twice) is renamed.  Ranges
    are non-empty (t >= 0 or [0, t] under t >= 0), so the implication and
    disjunction cases are equivalences.  Antecedents keep their quantifiers.
    """
    binders = []
    used = set(_all_names(p))

    def pull(q: Pred) -> Pred:
        if isinstance(q, hp.QUANTIFIERS):
            var, body = q.var, q.body
            if any(b.name == var for b in binders):
                k = 1
                while f"{q.var}{k}" in used:
                    k += 1
                var = f"{q.var}{k}"
                body = hp.pred_substitute_params(body, {q.var: sx.Param(var)})
            used.add(var)
            binders.append(Binder(var, "forall" if isinstance(q, hp.Forall) else "exists",
                                  q.lo, q.hi))
            return pull(body)
        if isinstance(q, hp.Implies):
            return hp.Implies(q.left, pull(q.right))
        if isinstance(q, (hp.And, hp.Or)):
            return type(q)(pull(q.left), pull(q.right))
        return q

    body = pull(p)
    return tuple(binders), body


def _all_names(p: Pred):
    fv = hp.pred_free_vars(p)
    yield from fv.state
    yield from fv.params
    if isinstance(p, hp.QUANTIFIERS):
        yield p.var
        yield from _all_names(p.body)
    elif isinstance(p, (hp.And, hp.Or, hp.Implies)):
        yield from _all_names(p.left)
        yield from _all_names(p.right)
    elif isinstance(p, hp.Not):
        yield from _all_names(p.arg)


def make_vc(label: str, context, pred: Pred, exact: bool = False, notes=(),
            blocked: str | None = None) -> VC:
    simp = hp.simplify_pred(pred, fold=False)
    # keep a trivially valid goal readable instead of collapsing it to true
    pred = simp if not isinstance(simp, hp.TrueP) else hp.map_pred_exprs(pred, sx.simplify)
    binders, body = prenex(pred)
    return VC(label, tuple(context), binders, body, exact, tuple(notes), blocked)


def is_trivial(vc: VC) -> bool:
    """The goal simplifies to true by propositional absorption alone."""
    return isinstance(hp.simplify_pred(vc.formula(), exprs=False, fold=False), hp.TrueP)
