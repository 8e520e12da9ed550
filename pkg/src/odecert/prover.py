"""A small sound prover for arithmetic VCs.

Goals are split into sequents (hypotheses |- literal).  Equalities of the form
v = e are eliminated by substitution; the remaining literal p >= 0 (or > 0)
is proved by finding a non-negative combination of hypotheses whose
difference from p is evidently non-negative (monomials whose atoms have a
known sign).  Candidate multipliers come from an LP and are re-checked with
exact rationals, so numerical trouble can only lose proofs, never make them.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np
from scipy.optimize import linprog

from . import hybridprog as hp
from . import symexpr as sx
from .hybridprog import Cmp, Pred
from .symexpr import Expr, FnAtom, Param, PolyNF, StateVar

REWRITES = ("exp_add", "pythagoras")
MAX_CASES = 64
MAX_PRODUCT_FACTS = 8


@dataclass(frozen=True)
class Fact:
    """diff rel 0 with rel in >=, >, =, !=."""
    diff: Expr
    rel: str


def literal_fact(c: Cmp) -> Fact:
    d = sx.Sub(c.lhs, c.rhs)
    if c.op in ("<=", "<"):
        d = sx.Sub(c.rhs, c.lhs)
    rel = {"=": "=", "!=": "!=", ">=": ">=", "<=": ">=", ">": ">", "<": ">"}[c.op]
    return Fact(d, rel)


def _norm(e: Expr) -> PolyNF:
    return sx.poly_normalize(e, REWRITES)


class _Closed(Exception):
    """Raised when hypotheses are contradictory by construction (False)."""


def expand_hyps(hyps, limit: int = MAX_CASES) -> list:
    """Case split hypotheses into lists of literal facts (None = closed case)."""
    cases = [[]]
    for h in hyps:
        new = []
        for alt in _alternatives(hp.nnf(h)):
            for c in cases:
                new.append(None if alt is None or c is None else c + alt)
        cases = new[:limit] if len(new) > limit else new
    return cases


def _alternatives(p: Pred) -> list:
    """Each alternative is a list of facts, or None for a contradiction."""
    if isinstance(p, Cmp):
        return [[literal_fact(p)]]
    if isinstance(p, hp.TrueP):
        return [[]]
    if isinstance(p, hp.FalseP):
        return [None]
    if isinstance(p, hp.And):
        out = []
        for a, b in product(_alternatives(p.left), _alternatives(p.right)):
            out.append(None if a is None or b is None else a + b)
        return out[:MAX_CASES]
    if isinstance(p, hp.Or):
        return (_alternatives(p.left) + _alternatives(p.right))[:MAX_CASES]
    if isinstance(p, hp.Exists):
        bounds = [literal_fact(b) for b in hp.binder_bounds(p.var, p.lo, p.hi)]
        return [None if a is None else bounds + a for a in _alternatives(p.body)]
    return [[]]  # universals and the like are dropped (weakening)


# ---------------------------------------------------------------- LP core

def _monomial_sign(m: tuple, atom_sign) -> int:
    """+2 evidently > 0, +1 >= 0, -1 <= 0, -2 < 0, 0 unknown.

    atom_sign uses the same scale plus 3 for "nonzero, sign unknown".
    """
    sign, strict = 1, True
    for a, k in m:
        if isinstance(a, FnAtom) and a.fname == "exp":
            continue
        if k % 2 == 0:
            if atom_sign(a) == 0:
                strict = False
            continue
        if isinstance(a, FnAtom) and a.fname == "sqrt":
            strict = False
            continue
        s = atom_sign(a)
        if s in (0, 3):
            return 0
        if abs(s) == 1:
            strict = False
        if s < 0:
            sign = -sign
    return sign * (2 if strict else 1)


def _solve_combination(p: PolyNF, facts: list, strict: bool, atom_sign):
    """Find multipliers making p - sum(mult * fact) evidently >= 0.

    Returns (multipliers, used_any) or None.
    """
    ineq = [(i, f) for i, f in enumerate(facts) if f[1] in (">=", ">")]
    eqs = [(i, f) for i, f in enumerate(facts) if f[1] == "="]
    cols = ineq + eqs
    monos = set(p.terms)
    for _, f in cols:
        monos |= set(f[0].terms)
    monos = sorted(monos, key=sx._mono_key)
    signs = {m: (_monomial_sign(m, atom_sign) if m else 2) for m in monos}
    n = len(cols)

    def residual_row(m):
        return [float(f[0].terms.get(m, 0)) for _, f in cols]

    a_eq, b_eq, a_ub, b_ub = [], [], [], []
    for m in monos:
        row = residual_row(m)
        pm = float(p.terms.get(m, 0))
        s = signs[m]
        # residual r_m = pm - row . x
        if s > 0:      # r_m >= 0  ->  row . x <= pm
            a_ub.append(row)
            b_ub.append(pm)
        elif s < 0:    # r_m <= 0  -> -row . x <= -pm
            a_ub.append([-v for v in row])
            b_ub.append(-pm)
        else:
            a_eq.append(row)
            b_eq.append(pm)
    bounds = [(0, 1e4)] * len(ineq) + [(-1e4, 1e4)] * len(eqs)
    c = np.zeros(n)
    if strict:
        # maximise the constant residual plus strict multipliers
        const_row = residual_row(())
        for j in range(n):
            c[j] += const_row[j]
        for j, (_, f) in enumerate(cols):
            if f[1] == ">":
                c[j] -= 1.0
        for m in monos:
            if m and abs(signs[m]) == 2:
                row = residual_row(m)
                for j in range(n):
                    c[j] += row[j] if signs[m] > 0 else -row[j]
    if n == 0:
        x = np.zeros(0)
    else:
        try:
            res = linprog(c, A_ub=a_ub or None, b_ub=b_ub or None, A_eq=a_eq or None,
                          b_eq=b_eq or None, bounds=bounds, method="highs")
        except ValueError:
            return None
        if res.status != 0:
            return None
        x = res.x
    for limit in (1, 10**3, 10**6, None):
        mult = [_rationalize(v, limit) for v in x]
        mult = [max(v, Fraction(0)) if j < len(ineq) else v for j, v in enumerate(mult)]
        if _check(p, cols, mult, signs, strict):
            return mult, any(v != 0 for v in mult)
    return None


def _rationalize(v: float, limit):
    f = Fraction(v)
    if limit is None:
        return f
    if limit == 1:
        return Fraction(round(v))
    return f.limit_denominator(limit)


def _check(p, cols, mult, signs, strict) -> bool:
    r = dict(p.terms)
    for (_, f), lam in zip(cols, mult):
        if lam == 0:
            continue
        for m, c in f[0].terms.items():
            r[m] = r.get(m, 0) - lam * c
    strict_ok = any(lam > 0 and f[1] == ">" for (_, f), lam in zip(cols, mult))
    for m, v in r.items():
        if v == 0:
            continue
        s = signs.get(m, 2 if not m else 0)
        if not m:
            if v < 0:
                return False
            strict_ok = True
            continue
        if s == 0 or (s > 0 and v < 0) or (s < 0 and v > 0):
            return False
        if abs(s) == 2:
            strict_ok = True
    return strict_ok or not strict


# ---------------------------------------------------------------- sequents

class _Case:
    def __init__(self, facts: list):
        self.facts = facts
        self.polys = []
        self.nonzero = []
        self.closed = False
        self._signs: dict = {}
        self.used_facts = False
        self._products = None
        for f in facts:
            p = _norm(f.diff)
            if p.is_constant():
                v = p.constant_value()
                ok = {">=": v >= 0, ">": v > 0, "=": v == 0, "!=": v != 0}[f.rel]
                if not ok:
                    self.closed = True
                continue
            if f.rel == "!=":
                self.nonzero.append(p)
            else:
                self.polys.append((p, f.rel))

    def products(self) -> list:
        """Pairwise products of inequality facts (degree-two certificates)."""
        if self._products is None:
            ineq = [(p, r) for p, r in self.polys if r in (">=", ">")][:MAX_PRODUCT_FACTS]
            self._products = [(a * b, ">" if ra == rb == ">" else ">=")
                              for i, (a, ra) in enumerate(ineq) for b, rb in ineq[i:]]
        return self._products

    def atom_sign(self, a) -> int:
        if a in self._signs:
            return self._signs[a]
        self._signs[a] = 0  # guards recursion
        pa = PolyNF.atom(a)
        s = 0
        no_sign = (lambda _a: 0)
        if _solve_combination(pa, self.polys, True, no_sign):
            s = 2
        elif _solve_combination(pa, self.polys, False, no_sign):
            s = 1
        elif _solve_combination(-pa, self.polys, True, no_sign):
            s = -2
        elif _solve_combination(-pa, self.polys, False, no_sign):
            s = -1
        if s in (0, 1, -1) and any(sx._proportional(n, pa) for n in self.nonzero):
            s = 3 if s == 0 else 2 * s
        if s:
            self.used_facts = True
        self._signs[a] = s
        return s

    def prove_nonneg(self, p: PolyNF, strict: bool):
        if p.is_constant():
            v = p.constant_value()
            return "literal-arith" if (v > 0 or (v == 0 and not strict)) else None
        before = self.used_facts
        self.used_facts = False
        got = _solve_combination(p, self.polys, strict, self.atom_sign)
        if got is None and self.polys:
            got = _solve_combination(p, self.polys + self.products(), strict, self.atom_sign)
        used = self.used_facts
        self.used_facts = before or used
        if got is None:
            return None
        _, used_mult = got
        return "interval-fact" if (used_mult or used) else "literal-arith"

    def contradictory(self) -> bool:
        if self.closed:
            return True
        if any(p.is_zero() for p in self.nonzero):
            return True
        return bool(self.polys) and _solve_combination(PolyNF(), self.polys, True, self.atom_sign) is not None

    def prove_nonzero(self, q: PolyNF):
        if q.is_constant():
            return "literal-arith" if q.constant_value() != 0 else None
        for n in self.nonzero:
            if sx._proportional(n, q):
                return "interval-fact"
        return self.prove_nonneg(q, True) or self.prove_nonneg(-q, True)

    def prove_fact(self, goal: Fact):
        p = _norm(goal.diff)
        for q in p.side:
            if self.prove_nonzero(PolyNF(q.terms)) is None:
                return None
        p = PolyNF(p.terms)
        if goal.rel == "=":
            if p.is_zero():
                return "poly-identity"
            a = self.prove_nonneg(p, False)
            b = a and self.prove_nonneg(-p, False)
            return "interval-fact" if b else None
        if goal.rel == "!=":
            return self.prove_nonzero(p)
        return self.prove_nonneg(p, goal.rel == ">")


def _eliminate_equalities(facts: list, goal: Fact):
    facts = list(facts)
    for _ in range(32):
        hit = None
        for i, f in enumerate(facts):
            if f.rel != "=":
                continue
            sol = _solve_for_var(_norm(f.diff))
            if sol is not None:
                hit = (i, sol)
                break
        if hit is None:
            break
        i, (var, val) = hit
        del facts[i]
        facts = [Fact(_subst_var(f.diff, var, val), f.rel) for f in facts]
        goal = Fact(_subst_var(goal.diff, var, val), goal.rel)
    return facts, goal


def _subst_var(e: Expr, var, val: Expr) -> Expr:
    if isinstance(var, StateVar):
        return sx.substitute(e, {var.name: val})
    return sx.substitute_params(e, {var.name: val})


def _solve_for_var(p: PolyNF):
    """Find v with p = c*v + rest, v absent from rest; return (v, -rest/c)."""
    if p.side:
        return None
    candidates = []
    for m, c in p.terms.items():
        if len(m) == 1 and m[0][1] == 1 and isinstance(m[0][0], (StateVar, Param)):
            v = m[0][0]
            rest = PolyNF({mm: cc for mm, cc in p.terms.items() if mm != m})
            if v not in _deep_atoms(rest):
                candidates.append((0 if isinstance(v, StateVar) else 1, sx.order_key(v), v, c, rest))
    if not candidates:
        return None
    _, _, v, c, rest = min(candidates, key=lambda t: (t[0], t[1]))
    return v, rest.scale(-1 / c).to_expr()


def _deep_atoms(p: PolyNF) -> set:
    out = set()
    for a in p.atoms():
        out.add(a)
        if isinstance(a, FnAtom):
            out |= _deep_atoms(a.arg)
        elif isinstance(a, sx.InvAtom):
            out |= _deep_atoms(a.poly)
    return out


_RANK = {"poly-identity": 0, "literal-arith": 1, "interval-fact": 2}


def _worse(a: str, b: str) -> str:
    return a if _RANK[a] >= _RANK[b] else b


class Prover:
    def __init__(self, max_depth: int = 6):
        self.max_depth = max_depth

    def prove(self, hyps, goal: Pred, depth: int = 0):
        """Return a method name if hyps |- goal is established, else None."""
        goal = hp.simplify_pred(goal, exprs=False)
        if isinstance(goal, hp.TrueP):
            return "literal-arith"
        if isinstance(goal, hp.And):
            a = self.prove(hyps, goal.left, depth)
            b = a and self.prove(hyps, goal.right, depth)
            return _worse(a, b) if b else None
        if isinstance(goal, hp.Implies):
            return self.prove(list(hyps) + [goal.left], goal.right, depth)
        if isinstance(goal, hp.Not):
            inner = hp.nnf(goal)
            return None if isinstance(inner, hp.Not) else self.prove(hyps, inner, depth)
        if isinstance(goal, hp.Forall):
            bounds = hp.binder_bounds(goal.var, goal.lo, goal.hi)
            return self.prove(list(hyps) + bounds, goal.body, depth)
        if isinstance(goal, hp.Exists):
            for w in self._witnesses(goal):
                inst = hp.pred_substitute_params(goal.body, {goal.var: w})
                bounds = [b for b in _instantiate_bounds(goal, w)]
                got = self.prove(hyps, hp.conj(*bounds, inst), depth + 1)
                if got:
                    return _worse(got, "interval-fact")
            return self._by_contradiction(hyps)
        if isinstance(goal, hp.Or):
            for part in hp.disjuncts(goal):
                got = self.prove(hyps, part, depth + 1) if depth < self.max_depth else None
                if got:
                    return got
            if depth >= self.max_depth:
                return None
            first, rest = hp.disjuncts(goal)[0], hp.disj(*hp.disjuncts(goal)[1:])
            return self.prove(list(hyps) + [hp.Not(first)], rest, depth + 1)
        if isinstance(goal, hp.FalseP):
            return self._by_contradiction(hyps)
        if isinstance(goal, Cmp):
            return self._literal(hyps, literal_fact(goal))
        return None

    @staticmethod
    def _witnesses(q: hp.Exists) -> list:
        out = []
        for w in (q.lo, q.hi, sx.ZERO, sx.ONE):
            if w is not None and w not in out:
                out.append(w)
        return out

    def _by_contradiction(self, hyps):
        for facts in expand_hyps(hyps):
            if facts is None:
                continue
            if not _Case(facts).contradictory():
                return None
        return "interval-fact"

    def _literal(self, hyps, goal: Fact):
        method = "poly-identity"
        for facts in expand_hyps(hyps):
            if facts is None:
                continue
            fs, g = _eliminate_equalities(facts, goal)
            case = _Case(fs)
            got = case.prove_fact(g)
            if got is None:
                if case.contradictory():
                    got = "interval-fact"
                else:
                    return None
            if fs != facts or g != goal:
                got = _worse(got, "interval-fact") if got != "poly-identity" else got
            method = _worse(method, got)
        return method


def _instantiate_bounds(q, w: Expr) -> list:
    out = []
    if q.lo is not None:
        out.append(Cmp(">=", w, q.lo))
    if q.hi is not None:
        out.append(Cmp("<=", w, q.hi))
    return out


def prove(hyps, goal: Pred):
    return Prover().prove(list(hyps), goal)


def entails(hyps, goal: Pred) -> bool:
    return prove(hyps, goal) is not None


def nonzero_entailed(hyps, e: Expr) -> bool:
    return entails(hyps, Cmp("!=", e, sx.ZERO))
