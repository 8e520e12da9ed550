"""Hybrid programs: substitutions, predicates, commands, problems and frames."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import symexpr as sx
from .symexpr import Expr, Num, Param, StateVar, render


# ---------------------------------------------------------------- substitutions

class Subst:
    """Finite map from state variable names to expressions, kept sorted.

    Lookup of an unmapped name returns the variable itself.
    """
    __slots__ = ("_items",)

    def __init__(self, mapping: Mapping[str, Expr] | Iterable = ()):
        items = mapping.items() if isinstance(mapping, Mapping) else mapping
        self._items = tuple(sorted(((str(k), v) for k, v in items), key=lambda kv: kv[0]))
        names = [k for k, _ in self._items]
        if len(set(names)) != len(names):
            raise ValueError("duplicate key in substitution")

    def lookup(self, name: str) -> Expr:
        for k, v in self._items:
            if k == name:
                return v
        return StateVar(name)

    def __contains__(self, name):
        return any(k == name for k, _ in self._items)

    def update(self, name: str, e: Expr) -> "Subst":
        d = dict(self._items)
        d[name] = e
        return Subst(d)

    def keys(self) -> tuple:
        return tuple(k for k, _ in self._items)

    def items(self) -> tuple:
        return self._items

    def as_dict(self) -> dict:
        return dict(self._items)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self.keys())

    def __eq__(self, other):
        return isinstance(other, Subst) and self._items == other._items

    def __hash__(self):
        return hash(self._items)

    def compose(self, sigma: "Subst") -> "Subst":
        """(self o sigma)(x) = self(x) with sigma applied to its state variables."""
        names = set(self.keys()) | set(sigma.keys())
        s = sigma.as_dict()
        return Subst({x: sx.substitute(self.lookup(x), s) for x in names})

    def map_values(self, fn) -> "Subst":
        return Subst({k: fn(v) for k, v in self._items})

    def render(self, flow: bool = False, ascii: bool = False) -> str:
        arrow = "~>" if ascii else "↝"
        body = ", ".join(f"{k} {arrow} {render(v, flow)}" for k, v in self._items)
        return f"[{body}]"

    def __repr__(self):
        return f"Subst({self.render()})"

    __str__ = render


# ---------------------------------------------------------------- predicates

class Pred:
    __slots__ = ()

    def __str__(self):
        return render_pred(self)


CMP_OPS = ("=", "<=", "<", ">=", ">", "!=")


@dataclass(frozen=True)
class Cmp(Pred):
    op: str
    lhs: Expr
    rhs: Expr

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"bad comparison {self.op!r}")


@dataclass(frozen=True)
class TrueP(Pred):
    pass


@dataclass(frozen=True)
class FalseP(Pred):
    pass


@dataclass(frozen=True)
class Not(Pred):
    arg: Pred


@dataclass(frozen=True)
class And(Pred):
    left: Pred
    right: Pred


@dataclass(frozen=True)
class Or(Pred):
    left: Pred
    right: Pred


@dataclass(frozen=True)
class Implies(Pred):
    left: Pred
    right: Pred


@dataclass(frozen=True)
class Forall(Pred):
    """Bounded universal over a binder named `var` (a Param in `body`).

    lo/hi are None for an open side: lo=0, hi=None is t >= 0.
    """
    var: str
    lo: Expr | None
    hi: Expr | None
    body: Pred


@dataclass(frozen=True)
class Exists(Pred):
    var: str
    lo: Expr | None
    hi: Expr | None
    body: Pred


TRUE, FALSE = TrueP(), FalseP()
QUANTIFIERS = (Forall, Exists)


def conj(*ps: Pred) -> Pred:
    ps = [p for p in ps if p != TRUE]
    if not ps:
        return TRUE
    out = ps[0]
    for p in ps[1:]:
        out = And(out, p)
    return out


def disj(*ps: Pred) -> Pred:
    ps = [p for p in ps if p != FALSE]
    if not ps:
        return FALSE
    out = ps[0]
    for p in ps[1:]:
        out = Or(out, p)
    return out


def conjuncts(p: Pred) -> list:
    if isinstance(p, And):
        return conjuncts(p.left) + conjuncts(p.right)
    if p == TRUE:
        return []
    return [p]


def disjuncts(p: Pred) -> list:
    if isinstance(p, Or):
        return disjuncts(p.left) + disjuncts(p.right)
    if p == FALSE:
        return []
    return [p]


def map_pred_exprs(p: Pred, fn) -> Pred:
    if isinstance(p, Cmp):
        return Cmp(p.op, fn(p.lhs), fn(p.rhs))
    if isinstance(p, (TrueP, FalseP)):
        return p
    if isinstance(p, Not):
        return Not(map_pred_exprs(p.arg, fn))
    if isinstance(p, (And, Or, Implies)):
        return type(p)(map_pred_exprs(p.left, fn), map_pred_exprs(p.right, fn))
    if isinstance(p, QUANTIFIERS):
        lo = None if p.lo is None else fn(p.lo)
        hi = None if p.hi is None else fn(p.hi)
        return type(p)(p.var, lo, hi, map_pred_exprs(p.body, fn))
    raise TypeError(f"not a predicate: {p!r}")


def pred_substitute(p: Pred, sigma: Mapping[str, Expr]) -> Pred:
    if not sigma:
        return p
    return map_pred_exprs(p, lambda e: sx.substitute(e, sigma))


def pred_substitute_params(p: Pred, sigma: Mapping[str, Expr]) -> Pred:
    """Replace free parameter names; binders shadow their own name."""
    if not sigma:
        return p
    if isinstance(p, QUANTIFIERS):
        inner = {k: v for k, v in sigma.items() if k != p.var}
        lo = None if p.lo is None else sx.substitute_params(p.lo, sigma)
        hi = None if p.hi is None else sx.substitute_params(p.hi, sigma)
        return type(p)(p.var, lo, hi, pred_substitute_params(p.body, inner))
    if isinstance(p, Cmp):
        return Cmp(p.op, sx.substitute_params(p.lhs, sigma), sx.substitute_params(p.rhs, sigma))
    if isinstance(p, Not):
        return Not(pred_substitute_params(p.arg, sigma))
    if isinstance(p, (And, Or, Implies)):
        return type(p)(pred_substitute_params(p.left, sigma), pred_substitute_params(p.right, sigma))
    return p


def pred_free_vars(p: Pred) -> sx.VarSet:
    if isinstance(p, Cmp):
        return sx.free_vars(p.lhs) | sx.free_vars(p.rhs)
    if isinstance(p, (TrueP, FalseP)):
        return sx.EMPTY_VARS
    if isinstance(p, Not):
        return pred_free_vars(p.arg)
    if isinstance(p, (And, Or, Implies)):
        return pred_free_vars(p.left) | pred_free_vars(p.right)
    if isinstance(p, QUANTIFIERS):
        inner = pred_free_vars(p.body)
        inner = sx.VarSet(inner.state, inner.params - {p.var}, inner.uses_time)
        for b in (p.lo, p.hi):
            if b is not None:
                inner = inner | sx.free_vars(b)
        return inner
    raise TypeError(f"not a predicate: {p!r}")


def pred_exprs(p: Pred):
    if isinstance(p, Cmp):
        yield p.lhs
        yield p.rhs
    elif isinstance(p, Not):
        yield from pred_exprs(p.arg)
    elif isinstance(p, (And, Or, Implies)):
        yield from pred_exprs(p.left)
        yield from pred_exprs(p.right)
    elif isinstance(p, QUANTIFIERS):
        for b in (p.lo, p.hi):
            if b is not None:
                yield b
        yield from pred_exprs(p.body)


_NEGATED = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "=": "!=", "!=": "="}


def negate_literal(c: Cmp) -> Cmp:
    return Cmp(_NEGATED[c.op], c.lhs, c.rhs)


def nnf(p: Pred, positive: bool = True) -> Pred:
    """Negation normal form over =, <=, < literals (plus != kept as-is)."""
    if isinstance(p, Cmp):
        c = p if positive else negate_literal(p)
        if c.op == ">=":
            return Cmp("<=", c.rhs, c.lhs)
        if c.op == ">":
            return Cmp("<", c.rhs, c.lhs)
        return c
    if isinstance(p, TrueP):
        return TRUE if positive else FALSE
    if isinstance(p, FalseP):
        return FALSE if positive else TRUE
    if isinstance(p, Not):
        return nnf(p.arg, not positive)
    if isinstance(p, And):
        op = And if positive else Or
        return op(nnf(p.left, positive), nnf(p.right, positive))
    if isinstance(p, Or):
        op = Or if positive else And
        return op(nnf(p.left, positive), nnf(p.right, positive))
    if isinstance(p, Implies):
        if positive:
            return Or(nnf(p.left, False), nnf(p.right, True))
        return And(nnf(p.left, True), nnf(p.right, False))
    if isinstance(p, QUANTIFIERS):
        flip = {Forall: Exists, Exists: Forall}
        q = type(p) if positive else flip[type(p)]
        return q(p.var, p.lo, p.hi, nnf(p.body, positive))
    raise TypeError(f"not a predicate: {p!r}")


def _cmp_const(op: str, a, b) -> bool:
    return {"=": a == b, "<=": a <= b, "<": a < b, ">=": a >= b,
            ">": a > b, "!=": a != b}[op]


def simplify_pred(p: Pred, exprs: bool = True, fold: bool = True) -> Pred:
    """Boolean absorption; optionally simplifies sides (exprs) and decides
    literals that are constant or compare identical sides (fold)."""
    if isinstance(p, Cmp):
        lhs, rhs = (sx.simplify(p.lhs), sx.simplify(p.rhs)) if exprs else (p.lhs, p.rhs)
        if not fold:
            return Cmp(p.op, lhs, rhs)
        if isinstance(lhs, Num) and isinstance(rhs, Num):
            return TRUE if _cmp_const(p.op, lhs.value, rhs.value) else FALSE
        if lhs == rhs and p.op in ("=", "<=", ">="):
            return TRUE
        if lhs == rhs and p.op in ("<", ">", "!="):
            return FALSE
        return Cmp(p.op, lhs, rhs)
    if isinstance(p, (TrueP, FalseP)):
        return p
    if isinstance(p, Not):
        a = simplify_pred(p.arg, exprs, fold)
        if a == TRUE:
            return FALSE
        if a == FALSE:
            return TRUE
        if isinstance(a, Not):
            return a.arg
        return Not(a)
    if isinstance(p, And):
        parts = []
        for q in conjuncts(p):
            q = simplify_pred(q, exprs, fold)
            if q == FALSE:
                return FALSE
            for r in conjuncts(q):
                if r not in parts:
                    parts.append(r)
        return conj(*parts)
    if isinstance(p, Or):
        parts = []
        for q in disjuncts(p):
            q = simplify_pred(q, exprs, fold)
            if q == TRUE:
                return TRUE
            for r in disjuncts(q):
                if r not in parts:
                    parts.append(r)
        return disj(*parts)
    if isinstance(p, Implies):
        a = simplify_pred(p.left, exprs, fold)
        b = simplify_pred(p.right, exprs, fold)
        if a == FALSE or b == TRUE:
            return TRUE
        if a == TRUE:
            return b
        hyps = conjuncts(a)
        if all(c in hyps for c in conjuncts(b)):
            return TRUE
        if b == FALSE:
            return simplify_pred(Not(a), exprs, fold)
        return Implies(a, b)
    if isinstance(p, QUANTIFIERS):
        body = simplify_pred(p.body, exprs, fold)
        if body in (TRUE, FALSE):
            return body
        lo = None if p.lo is None else (sx.simplify(p.lo) if exprs else p.lo)
        hi = None if p.hi is None else (sx.simplify(p.hi) if exprs else p.hi)
        if p.var not in pred_free_vars(body).params:
            return body
        return type(p)(p.var, lo, hi, body)
    raise TypeError(f"not a predicate: {p!r}")


def binder_bounds(var: str, lo, hi) -> list:
    out = []
    if lo is not None:
        out.append(Cmp(">=", Param(var), lo))
    if hi is not None:
        out.append(Cmp("<=", Param(var), hi))
    return out


_PRED_PREC = {Implies: 1, Or: 2, And: 3, Not: 4}
_OPS = {And: " && ", Or: " || ", Implies: " ==> "}


def render_pred(p: Pred, flow: bool = False) -> str:
    if isinstance(p, Cmp):
        return f"{render(p.lhs, flow)} {p.op} {render(p.rhs, flow)}"
    if isinstance(p, TrueP):
        return "true"
    if isinstance(p, FalseP):
        return "false"
    if isinstance(p, QUANTIFIERS):
        kw = "forall" if isinstance(p, Forall) else "exists"
        if p.lo is not None and p.hi is not None:
            dom = f" in [{render(p.lo, flow)}, {render(p.hi, flow)}]"
        elif p.lo is not None:
            dom = f" >= {render(p.lo, flow)}"
        elif p.hi is not None:
            dom = f" <= {render(p.hi, flow)}"
        else:
            dom = ""
        return f"({kw} {p.var}{dom}. {render_pred(p.body, flow)})"
    prec = _PRED_PREC[type(p)]

    def sub(q: Pred, need_strict: bool) -> str:
        s = render_pred(q, flow)
        qp = _PRED_PREC.get(type(q), 9)
        if qp < prec or (need_strict and qp == prec):
            return f"({s})"
        return s

    if isinstance(p, Not):
        if isinstance(p.arg, Cmp):
            return f"!({render_pred(p.arg, flow)})"
        return "!" + sub(p.arg, False)
    if isinstance(p, Implies):
        return sub(p.left, True) + _OPS[Implies] + sub(p.right, False)
    return sub(p.left, False) + _OPS[type(p)] + sub(p.right, True)


# ---------------------------------------------------------------- commands

@dataclass(frozen=True)
class NonnegReals:
    pass


@dataclass(frozen=True)
class AllReals:
    pass


@dataclass(frozen=True)
class Interval:
    lo: Expr
    hi: Expr


@dataclass(frozen=True)
class EvolutionCmd:
    frame: tuple
    field: Subst
    guard: Pred = TRUE
    t0: Expr = sx.ZERO
    domain: object = NonnegReals()

    def __post_init__(self):
        object.__setattr__(self, "frame", tuple(sorted(self.frame)))


class HProg:
    __slots__ = ()

    def __str__(self):
        return render_prog(self)


@dataclass(frozen=True)
class Skip(HProg):
    pass


@dataclass(frozen=True)
class Abort(HProg):
    pass


@dataclass(frozen=True)
class Test(HProg):
    pred: Pred


@dataclass(frozen=True)
class Assign(HProg):
    subst: Subst


@dataclass(frozen=True)
class Seq(HProg):
    first: HProg
    second: HProg


@dataclass(frozen=True)
class Choice(HProg):
    left: HProg
    right: HProg


@dataclass(frozen=True)
class Star(HProg):
    body: HProg
    inv: Pred | None = None


@dataclass(frozen=True)
class If(HProg):
    cond: Pred
    then: HProg
    orelse: HProg


@dataclass(frozen=True)
class While(HProg):
    cond: Pred
    body: HProg
    inv: Pred | None = None


@dataclass(frozen=True)
class Evolve(HProg):
    cmd: EvolutionCmd
    hint: object = None
    inv: Pred | None = None


@dataclass(frozen=True)
class EvolFlow(HProg):
    """Evolution along an explicit flow; bodies use TimeVar and $x initial values."""
    flow: Subst
    guard: Pred = TRUE


# ---------------------------------------------------------------- hints, goals

@dataclass(frozen=True)
class AutoHint:
    pass


@dataclass(frozen=True)
class FlowHint:
    flow: Subst


@dataclass(frozen=True)
class SolveHint:
    pass


@dataclass(frozen=True)
class DInductHint:
    pass


@dataclass(frozen=True)
class DarbouxHint:
    e: Expr
    cofactor: Expr
    rel: str  # "eq" | "ge" | "gt"


@dataclass(frozen=True)
class GhostHint:
    fresh: str
    a: Expr
    b: Expr
    inner: object


@dataclass(frozen=True)
class Goal:
    name: str
    kind: str  # "hoare" | "diamond"
    pre: Pred
    prog: HProg
    post: Pred
    witness: Expr | None = None
    hint: object = AutoHint()


@dataclass
class Problem:
    name: str
    constants: tuple = ()
    assumptions: tuple = ()
    state_vars: tuple = ()
    defs: dict = field(default_factory=dict)
    goals: tuple = ()

    def goal(self, name: str) -> Goal:
        for g in self.goals:
            if g.name == name:
                return g
        raise KeyError(f"no goal named {name!r}")

    def declared(self) -> set:
        return set(self.constants) | set(self.state_vars)


# ---------------------------------------------------------------- frames

def mutated_frame(p: HProg) -> frozenset:
    """State variables that `p` may write."""
    if isinstance(p, (Skip, Abort, Test)):
        return frozenset()
    if isinstance(p, Assign):
        return frozenset(p.subst.keys())
    if isinstance(p, Evolve):
        return frozenset(p.cmd.frame)
    if isinstance(p, EvolFlow):
        return frozenset(p.flow.keys())
    if isinstance(p, (Seq,)):
        return mutated_frame(p.first) | mutated_frame(p.second)
    if isinstance(p, Choice):
        return mutated_frame(p.left) | mutated_frame(p.right)
    if isinstance(p, (Star, While)):
        return mutated_frame(p.body)
    if isinstance(p, If):
        return mutated_frame(p.then) | mutated_frame(p.orelse)
    raise TypeError(f"not a program: {p!r}")


def nmods_check(p: HProg, names: Iterable[str]) -> bool:
    """True when `p` writes none of `names`."""
    return not (mutated_frame(p) & set(names))


def unrestricted(names: Iterable[str], obj) -> bool:
    """True when none of `names` is a free state variable of obj (Expr or Pred)."""
    fv = pred_free_vars(obj) if isinstance(obj, Pred) else sx.free_vars(obj)
    return not (set(names) & fv.state)


def evolutions(p: HProg) -> list:
    if isinstance(p, (Evolve, EvolFlow)):
        return [p]
    kids = []
    if isinstance(p, Seq):
        kids = [p.first, p.second]
    elif isinstance(p, Choice):
        kids = [p.left, p.right]
    elif isinstance(p, (Star, While)):
        kids = [p.body]
    elif isinstance(p, If):
        kids = [p.then, p.orelse]
    return [q for k in kids for q in evolutions(k)]


# ---------------------------------------------------------------- printing

def render_prog(p: HProg, level: int = 0) -> str:
    """DSL text.  level 0: choice allowed, 1: inside seq, 2: atom."""
    if isinstance(p, Skip):
        return "skip"
    if isinstance(p, Abort):
        return "abort"
    if isinstance(p, Test):
        return "?" + _atomic_pred(p.pred)
    if isinstance(p, Assign):
        keys = p.subst.keys()
        vals = [render(v) for _, v in p.subst.items()]
        return f"{', '.join(keys)} := {', '.join(vals)}"
    if isinstance(p, Seq):
        s = f"{render_prog(p.first, 1)}; {render_prog(p.second, 2)}"
        return f"({s})" if level > 1 else s
    if isinstance(p, Choice):
        s = f"{render_prog(p.left, 0)} |_| {render_prog(p.right, 1)}"
        if isinstance(p.right, Choice):
            s = f"{render_prog(p.left, 0)} |_| ({render_prog(p.right, 0)})"
        return f"({s})" if level > 0 else s
    if isinstance(p, Star):
        inv = f" inv({render_pred(p.inv)})" if p.inv is not None else ""
        return f"loop({render_prog(p.body)}){inv}"
    if isinstance(p, If):
        return (f"if ({render_pred(p.cond)}) {{ {render_prog(p.then)} }} "
                f"else {{ {render_prog(p.orelse)} }}")
    if isinstance(p, While):
        inv = f" inv({render_pred(p.inv)})" if p.inv is not None else ""
        return f"while ({render_pred(p.cond)}){inv} {{ {render_prog(p.body)} }}"
    if isinstance(p, Evolve):
        c = p.cmd
        items = ", ".join(f"{k}' = {render(v)}" for k, v in c.field.items())
        guard = f" | {render_pred(c.guard)}" if c.guard != TRUE else ""
        inv = f" inv({render_pred(p.inv)})" if p.inv is not None else ""
        return f"{{{items}{guard}}}{inv}"
    if isinstance(p, EvolFlow):
        guard = f" | {_atomic_pred(p.guard)}" if p.guard != TRUE else ""
        return f"evol {p.flow.render(flow=True, ascii=True)}{guard}"
    raise TypeError(f"not a program: {p!r}")


def _atomic_pred(p: Pred) -> str:
    s = render_pred(p)
    return s if isinstance(p, (Cmp, TrueP, FalseP)) else f"({s})"


def render_hint(h) -> str:
    if h is None or isinstance(h, AutoHint):
        return ""
    if isinstance(h, FlowHint):
        return f"using flow {h.flow.render(flow=True, ascii=True)}"
    if isinstance(h, SolveHint):
        return "using solve"
    if isinstance(h, DInductHint):
        return "using dinduct"
    if isinstance(h, DarbouxHint):
        return f"using darboux({render(h.e)}, {render(h.cofactor)}, {h.rel})"
    if isinstance(h, GhostHint):
        inner = render_hint(h.inner)
        return f"using ghost({h.fresh}, {render(h.a)}, {render(h.b)}) {inner}".rstrip()
    raise TypeError(f"not a hint: {h!r}")


def render_goal(g: Goal) -> str:
    s = f"goal {g.name}: {g.kind} {{{render_pred(g.pre)}}} {render_prog(g.prog)} {{{render_pred(g.post)}}}"
    if g.witness is not None:
        s += f" witness({render(g.witness)})"
    h = render_hint(g.hint)
    return s + (" " + h if h else "") + ";"


def render_problem(pr: Problem) -> str:
    lines = [f"problem {pr.name} {{"]
    if pr.constants:
        lines.append("  constants { " + " ".join(f"{c}: real;" for c in pr.constants) + " }")
    if pr.assumptions:
        lines.append("  assumes { " + " ".join(f"{render_pred(a)};" for a in pr.assumptions) + " }")
    if pr.state_vars:
        lines.append("  variables { " + " ".join(f"{v};" for v in pr.state_vars) + " }")
    for name, d in pr.defs.items():
        if isinstance(d, Pred):
            lines.append(f"  pred {name} = {render_pred(d)};")
            continue
        body = d.render(flow=True, ascii=True) if isinstance(d, Subst) else render_prog(d)
        lines.append(f"  def {name} = {body};")
    for g in pr.goals:
        lines.append("  " + render_goal(g))
    lines.append("}")
    return "\n".join(lines) + "\n"
