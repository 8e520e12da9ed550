"""Closed-form solver for three small ODE classes, plus decomposition.

Classes: (a) right-hand side polynomial in t and already-solved variables,
possibly with sin/cos/exp of k*t, integrated from 0; (b) scalar affine
x' = a*x + b; (c) the 2x2 rotation block u' = -w*v, v' = w*u.
Every candidate is certified before it is returned.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .. import hybridprog as hp
from .. import symexpr as sx
from ..hybridprog import Cmp, Subst
from ..symexpr import (TIME, Add, Cos, Div, Exp, FnAtom, Mul, Neg, Num, PolyNF, Sin,
                       StateVar, Sub, TimeVar)
from .certify import FlowCandidate, certify_flow


@dataclass
class SolveTrace:
    steps: list = field(default_factory=list)  # (component, class, outcome)

    def add(self, comp, cls: str, outcome: str):
        self.steps.append((tuple(comp), cls, outcome))

    def to_json(self) -> list:
        return [{"component": list(c), "class": k, "outcome": o} for c, k, o in self.steps]

    def render(self) -> str:
        return "\n".join(f"{{{', '.join(c)}}} {k}: {o}" for c, k, o in self.steps)


def dependency_graph(fld: Subst, frame) -> dict:
    frame = set(frame)
    return {x: sorted(sx.free_vars(fld.lookup(x)).state & frame) for x in sorted(frame)}


def decompose_independent(fld: Subst, frame) -> list:
    """Strongly connected components, dependencies before dependents."""
    deps = dependency_graph(fld, frame)
    users = {x: [] for x in deps}
    for x, ds in deps.items():
        for d in ds:
            users[d].append(x)
    index, low, stack, on, comps = {}, {}, [], set(), []
    counter = [0]

    def visit(v):
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on.add(v)
        for w in sorted(users[v]):
            if w not in index:
                visit(w)
                low[v] = min(low[v], low[w])
            elif w in on:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on.discard(w)
                comp.append(w)
                if w == v:
                    break
            comps.append(tuple(sorted(comp)))

    for v in sorted(deps):
        if v not in index:
            visit(v)
    comps.reverse()
    return [(c, Subst({x: fld.lookup(x) for x in c})) for c in comps]


class _NoSolution(Exception):
    pass


def _norm(e):
    return sx.poly_normalize(e)


def _t_free(p: PolyNF) -> bool:
    return all(not isinstance(a, TimeVar) and not (isinstance(a, FnAtom) and _mentions_t(a))
               for a in p.atoms())


def _mentions_t(a) -> bool:
    if isinstance(a, TimeVar):
        return True
    if isinstance(a, FnAtom):
        return any(_mentions_t(b) for b in a.arg.atoms())
    if isinstance(a, sx.InvAtom):
        return any(_mentions_t(b) for b in a.poly.atoms())
    return False


def _linear_in_t(arg: PolyNF):
    """k with arg = k*t, k free of t; else None."""
    k = {}
    for m, c in arg.terms.items():
        d = dict(m)
        if d.get(TIME) != 1:
            return None
        rest = tuple((a, e) for a, e in m if a != TIME)
        k[rest] = c
    kp = PolyNF(k)
    return kp if _t_free(kp) and not kp.is_zero() else None


def _integrate(p: PolyNF, side: list) -> sx.Expr:
    """Integral from 0 to t of p (a polynomial in t with exp/sin/cos(k*t))."""
    acc = sx.ZERO
    for m, c in p.terms.items():
        n, fn, rest = 0, None, []
        for a, e in m:
            if isinstance(a, TimeVar):
                if e < 0:
                    raise _NoSolution("negative power of t")
                n = e
            elif isinstance(a, FnAtom) and _mentions_t(a):
                if fn is not None or e != 1 or a.fname not in ("sin", "cos", "exp"):
                    raise _NoSolution(f"cannot integrate {a.fname}")
                fn = a
            elif isinstance(a, sx.InvAtom) and _mentions_t(a):
                raise _NoSolution("rational function of t")
            else:
                rest.append((a, e))
        coef = PolyNF({tuple(rest): c}).to_expr()
        if fn is None:
            term = Div(sx.Pow(TIME, n + 1), Num(n + 1))
        else:
            if n:
                raise _NoSolution("t^n times a transcendental")
            kp = _linear_in_t(fn.arg)
            if kp is None:
                raise _NoSolution("argument not linear in t")
            k = kp.to_expr()
            if not kp.is_constant():
                side.append(Cmp("!=", k, sx.ZERO))
            kt = fn.arg.to_expr()
            if fn.fname == "sin":
                term = Div(Sub(sx.ONE, Cos(kt)), k)
            elif fn.fname == "cos":
                term = Div(Sin(kt), k)
            else:
                term = Div(Sub(Exp(kt), sx.ONE), k)
        acc = Add(acc, Mul(coef, term))
    return sx.simplify(acc)


def _class_integrate(x, rhs, solved, side):
    p = _norm(sx.substitute(rhs, solved))
    if x in {a.name for a in p.atoms() if isinstance(a, StateVar)} or \
            any(isinstance(a, FnAtom) and StateVar(x) in _deep(a) for a in p.atoms()):
        raise _NoSolution("right-hand side depends on the variable itself")
    if p.side:
        raise _NoSolution("division in the right-hand side")
    return Add(_integrate(p, side), StateVar(x))


def _deep(a) -> set:
    out = set()
    for b in a.arg.atoms():
        out.add(b)
        if isinstance(b, FnAtom):
            out |= _deep(b)
    return out


def _class_affine(x, rhs, solved, side):
    p = _norm(sx.substitute(rhs, solved))
    xv = StateVar(x)
    a_terms, b_terms = {}, {}
    for m, c in p.terms.items():
        d = dict(m)
        k = d.pop(xv, 0)
        if k == 1:
            a_terms[tuple(sorted(d.items(), key=lambda kv: sx.atom_key(kv[0])))] = c
        elif k == 0:
            b_terms[m] = c
        else:
            raise _NoSolution("not affine in the variable")
    a, b = PolyNF(a_terms), PolyNF(b_terms)
    for q in (a, b):
        if not _t_free(q) or xv in q.atoms() or p.side:
            raise _NoSolution("coefficients depend on t or the variable")
    if a.is_zero():
        raise _NoSolution("no linear term")
    ae, be = a.to_expr(), b.to_expr()
    if not a.is_constant():
        side.append(Cmp("!=", ae, sx.ZERO))
    growth = Exp(sx.simplify(Mul(ae, TIME)))
    if b.is_zero():
        return sx.simplify(Mul(xv, growth))
    ratio = sx.simplify(Div(be, ae))
    return sx.simplify(Sub(Add(Mul(ratio, growth), Mul(xv, growth)), ratio))


def _rotation_rate(fu, fv, u, v):
    """w with fu = -w*v and fv = w*u (w free of t and the pair), else None."""
    pv = _norm(fv)
    w = {}
    for m, c in pv.terms.items():
        d = dict(m)
        if d.pop(StateVar(u), 0) != 1:
            return None
        w[tuple(sorted(d.items(), key=lambda kv: sx.atom_key(kv[0])))] = c
    wp = PolyNF(w)
    if wp.is_zero() or not _t_free(wp) or {StateVar(u), StateVar(v)} & wp.atoms():
        return None
    if not (_norm(fu) + wp * PolyNF.atom(StateVar(v))).is_zero():
        return None
    return wp.to_expr()


def _class_rotation(comp, sub, solved):
    if len(comp) != 2:
        raise _NoSolution("not a pair")
    for u, v in (comp, comp[::-1]):
        fu = sx.substitute(sub.lookup(u), solved)
        fv = sx.substitute(sub.lookup(v), solved)
        w = _rotation_rate(fu, fv, u, v)
        if w is None:
            continue
        wt = sx.simplify(Mul(w, TIME))
        U, V = StateVar(u), StateVar(v)
        return {u: sx.simplify(Sub(Mul(U, Cos(wt)), Mul(V, Sin(wt)))),
                v: sx.simplify(Add(Mul(V, Cos(wt)), Mul(U, Sin(wt))))}
    raise _NoSolution("not a rotation block")


def solve_sode(fld: Subst, frame=None, context=()):
    """(certified FlowCandidate or None, SolveTrace)."""
    frame = tuple(sorted(frame if frame is not None else fld.keys()))
    trace = SolveTrace()
    solved: dict = {}
    side: list = []
    for comp, sub in decompose_independent(fld, frame):
        got = None
        if len(comp) == 1:
            x = comp[0]
            for name, fn in (("integrate", _class_integrate), ("affine", _class_affine)):
                local = []
                try:
                    got = {x: fn(x, sub.lookup(x), solved, local)}
                except _NoSolution as exc:
                    trace.add(comp, name, f"failed: {exc}")
                    continue
                trace.add(comp, name, "ok")
                side += local
                break
        else:
            try:
                got = _class_rotation(comp, sub, solved)
                trace.add(comp, "rotation", "ok")
            except _NoSolution as exc:
                trace.add(comp, "rotation", f"failed: {exc}")
        if got is None:
            return None, trace
        for x, e in got.items():
            solved[x] = e
    cand = FlowCandidate(frame, Subst({x: solved[x] for x in frame}), side_conditions=tuple(
        dict.fromkeys(side)))
    report = certify_flow(cand, fld, context)
    if report.status == "failed":
        trace.add(frame, "certify", "failed")
        return None, trace
    trace.add(frame, "certify", report.status)
    return cand, trace


# ---------------------------------------------------------------- higher order

@dataclass(frozen=True)
class Recast:
    var: str
    order: int
    rhs: sx.Expr  # over StateVar(var), StateVar(var + "'"), ...

    def render(self) -> str:
        return f"{self.var}{chr(39) * self.order} = {sx.render(self.rhs)}"


def _dname(x: str, k: int) -> str:
    return x + "'" * k


def recast_higher_order(fld: Subst, frame=None) -> list:
    """Single higher-order equations equivalent to the (linear chain) system.

    For each variable x, derivatives of x are eliminated against the other
    variables one at a time; one Recast per variable for which this works.
    """
    from ..lie import lie_derivative
    frame = tuple(sorted(frame if frame is not None else fld.keys()))
    out = []
    for x in frame:
        r = _recast_one(fld, frame, x, lie_derivative)
        if r is not None:
            out.append(r)
    return out


def _recast_one(fld, frame, x, lie_derivative):
    others = [y for y in frame if y != x]
    elim = {}          # var -> expression over derivatives of x and earlier vars
    d = StateVar(x)
    n = len(frame)
    for k in range(1, n + 1):
        try:
            d = lie_derivative(fld, d, frame)
        except Exception:
            return None
        if k == n:
            break
        p = _norm(sx.substitute(d, elim))
        pick = None
        for y in others:
            if y in elim:
                continue
            yv = StateVar(y)
            coef, rest = {}, {}
            ok = True
            for m, c in p.terms.items():
                dd = dict(m)
                e = dd.pop(yv, 0)
                if e == 1:
                    coef[tuple(sorted(dd.items(), key=lambda kv: sx.atom_key(kv[0])))] = c
                elif e == 0:
                    rest[m] = c
                else:
                    ok = False
            cp = PolyNF(coef)
            if not ok or cp.is_zero() or any(isinstance(a, StateVar) for a in cp.atoms()):
                continue
            pick = (y, cp.to_expr(), PolyNF(rest).to_expr())
            break
        if pick is None:
            return None
        y, c, rest = pick
        elim[y] = sx.simplify(Div(Sub(StateVar(_dname(x, k)), rest), c))
    rhs = sx.simplify(sx.substitute(d, elim))
    if sx.free_vars(rhs).state & set(others) or sx.free_vars(rhs).uses_time:
        return None
    return Recast(x, n, rhs)
