"""Independent post-hoc checker for proved VCs.

Expressions are compiled through sympy (not the package's evaluator), equality
hypotheses are solved with sympy, and nested quantifiers are checked on their
own grids.  Goal comparisons get a relative tolerance scaled by the magnitude
of the summed terms; hypotheses are evaluated exactly.
"""
import numpy as np
import sympy

from odecert import hybridprog as hp
from odecert import symexpr as sx

from conftest import to_sympy

TOL = 1e-9
UNBOUNDED = (0.0, 1e-3, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0)
INNER = 9


def _mag(e):
    """sympy expression bounding the float magnitude of e's terms."""
    if isinstance(e, sx.Num):
        return abs(to_sympy(e))
    if isinstance(e, (sx.StateVar, sx.Param, sx.TimeVar, sx.NamedConst)):
        return sympy.Abs(to_sympy(e))
    if isinstance(e, sx.Neg):
        return _mag(e.arg)
    if isinstance(e, (sx.Add, sx.Sub)):
        return _mag(e.left) + _mag(e.right)
    if isinstance(e, sx.Mul):
        return _mag(e.left) * _mag(e.right)
    if isinstance(e, sx.Pow):
        return _mag(e.base) ** e.exp
    return sympy.Abs(to_sympy(e))


class _Compiled:
    def __init__(self, exprs, subs):
        exprs = [sympy.sympify(x).xreplace(subs) for x in exprs]
        self.syms = sorted(set().union(*(x.free_symbols for x in exprs)), key=str)
        self.fn = sympy.lambdify(self.syms, exprs, "numpy", dummify=True)

    def __call__(self, env, n):
        args = [env[s.name] for s in self.syms]
        with np.errstate(all="ignore"):
            return [np.broadcast_to(np.asarray(v, float), (n,)) for v in self.fn(*args)]


class Checker:
    def __init__(self, subs):
        self.subs = subs
        self.cache = {}

    def compiled(self, key, exprs):
        if key not in self.cache:
            self.cache[key] = _Compiled(exprs, self.subs)
        return self.cache[key]

    def pred(self, p, env, n, pos):
        if isinstance(p, hp.TrueP):
            return np.ones(n, bool)
        if isinstance(p, hp.FalseP):
            return np.zeros(n, bool)
        if isinstance(p, hp.Not):
            return ~self.pred(p.arg, env, n, not pos)
        if isinstance(p, hp.And):
            return self.pred(p.left, env, n, pos) & self.pred(p.right, env, n, pos)
        if isinstance(p, hp.Or):
            return self.pred(p.left, env, n, pos) | self.pred(p.right, env, n, pos)
        if isinstance(p, hp.Implies):
            return ~self.pred(p.left, env, n, not pos) | self.pred(p.right, env, n, pos)
        if isinstance(p, hp.Cmp):
            return self.cmp(p, env, n, pos)
        return self.quant(p, env, n, pos)

    def cmp(self, c, env, n, pos):
        d, m = self.compiled(("cmp", c), [to_sympy(c.lhs) - to_sympy(c.rhs),
                                          1 + _mag(c.lhs) + _mag(c.rhs)])(env, n)
        slack = TOL * m if pos else 0.0
        with np.errstate(invalid="ignore"):
            out = {">=": d >= -slack, ">": d > -slack if pos else d > 0,
                   "<=": d <= slack, "<": d < slack if pos else d < 0,
                   "=": np.abs(d) <= slack, "!=": np.abs(d) > 0}[c.op]
        undefined = ~np.isfinite(d)
        return np.where(undefined, pos, out)  # no verdict where the value is undefined

    def _bounds(self, q, env, n):
        lo = hi = None
        if q.lo is not None:
            lo = self.compiled(("e", q.lo), [to_sympy(q.lo)])(env, n)[0]
        if q.hi is not None:
            hi = self.compiled(("e", q.hi), [to_sympy(q.hi)])(env, n)[0]
        return lo, hi

    def _grid(self, lo, hi, n):
        if lo is not None and hi is not None:
            return [lo + (hi - lo) * u for u in np.linspace(0, 1, INNER)]
        if lo is not None:
            return [lo + v for v in UNBOUNDED]
        if hi is not None:
            return [hi - v for v in UNBOUNDED]
        return [np.full(n, v) for v in (-100, -10, -1, -0.1, 0, 0.1, 1, 10, 100)]

    def quant(self, q, env, n, pos):
        lo, hi = self._bounds(q, env, n)
        vals = [self.pred(q.body, {**env, q.var: g}, n, pos) for g in self._grid(lo, hi, n)]
        op = np.logical_and if isinstance(q, hp.Forall) else np.logical_or
        return op.reduce(vals)


def _spine(goal, bound):
    hyps = []
    while isinstance(goal, hp.Implies):
        fv = hp.pred_free_vars(goal.left)
        if (fv.params | fv.state) & bound:
            break
        hyps += hp.conjuncts(goal.left)
        goal = goal.right
    return hyps, goal


def _solve_linear(eq, subs) -> bool:
    for s in sorted(eq.free_symbols, key=str):
        if s.name.startswith("sign_") or not eq.is_polynomial(s) or sympy.degree(eq, s) != 1:
            continue
        sol = sympy.solve(eq, s)
        if len(sol) == 1 and s not in sol[0].free_symbols:
            subs.update({k: v.xreplace({s: sol[0]}) for k, v in subs.items()})
            subs[s] = sol[0]
            return True
    return False


def _solve_equalities(hyps):
    """Substitute equality hypotheses away: linear ones first, then squares."""
    subs = {}
    eqs = [h for h in hyps if isinstance(h, hp.Cmp) and h.op == "="]
    rest = [h for h in hyps if h not in eqs]
    for solver in (_solve_linear, _solve_square, _solve_linear):
        left = []
        for h in eqs:
            eq = (to_sympy(h.lhs) - to_sympy(h.rhs)).xreplace(subs)
            if not solver(eq, subs):
                left.append(h)
        eqs = left
    return subs, rest + eqs


def _solve_square(eq, subs) -> bool:
    """s^2 = r with s otherwise absent: s = sign * sqrt(r), sign sampled."""
    for s in sorted(eq.free_symbols, key=str):
        if s.name.startswith("sign_") or not eq.is_polynomial(s):
            continue
        poly = sympy.Poly(eq, s)
        if poly.degree() != 2 or poly.coeff_monomial(s) != 0:
            continue
        a, c = poly.coeff_monomial(s ** 2), poly.coeff_monomial(1)
        sign = sympy.Symbol(f"sign_{s.name}")
        sol = sign * sympy.sqrt(-c / a)
        subs.update({k: v.xreplace({s: sol}) for k, v in subs.items()})
        subs[s] = sol
        return True
    return False


def _sample_forall(b, env, n, rng, chk):
    lo, hi = chk._bounds(b, env, n)
    if lo is not None and hi is not None:
        return lo + (hi - lo) * rng.random(n)
    base = np.where(rng.random(n) < 0.1, 0.0, rng.exponential(3.0, n))
    if lo is not None:
        return lo + base
    if hi is not None:
        return hi - base
    return rng.uniform(-10, 10, n)


def _binders(binders, concl, env, n, rng, chk):
    if not binders:
        return chk.pred(concl, env, n, True)
    b, rest = binders[0], binders[1:]
    if b.quantifier == "forall":
        env = {**env, b.name: _sample_forall(b, env, n, rng, chk)}
        return _binders(rest, concl, env, n, rng, chk)
    lo, hi = chk._bounds(b, env, n)
    vals = [_binders(rest, concl, {**env, b.name: g}, n, rng, chk)
            for g in chk._grid(lo, hi, n)]
    return np.logical_or.reduce(vals)


def posthoc(vc, samples=10_000, seed=0, budget=50):
    """(violations, accepted) for `samples` context-satisfying draws."""
    bound = {b.name for b in vc.binders}
    spine, concl = _spine(vc.goal, bound)
    subs, hyps = _solve_equalities(list(vc.context) + spine)
    chk = Checker(subs)
    names = set()
    for p in hyps + [concl] + [hp.TRUE]:
        fv = hp.pred_free_vars(p)
        names |= fv.params | fv.state
    for b in vc.binders:
        for e in (b.lo, b.hi):
            if e is not None:
                fv = sx.free_vars(e)
                names |= fv.params | fv.state
    for v in subs.values():
        names |= {s.name for s in v.free_symbols}
    names -= bound
    names -= {s.name for s in subs}
    signs = {x for x in names if x.startswith("sign_")}
    names -= signs
    rng = np.random.default_rng(seed)
    accepted, bad, draws = 0, [], 0
    batch = 4096
    while accepted < samples and draws < budget * samples:
        q = rng.integers(1, 17, size=(batch, len(names)))
        p = rng.integers(-10 * q, 10 * q + 1)
        vals = p / q
        env = {x: vals[:, i] for i, x in enumerate(sorted(names))}
        for x in signs:
            env[x] = rng.choice([-1.0, 1.0], batch)
        for s, e in subs.items():
            env[s.name] = _Compiled([e], {})(env, batch)[0]
        draws += batch
        ok = np.ones(batch, bool)
        for h in hyps:
            ok &= chk.pred(h, env, batch, False)
        idx = np.nonzero(ok)[0][: samples - accepted]
        if len(idx) == 0:
            continue
        sub = {k: v[idx] for k, v in env.items()}
        held = _binders(vc.binders, concl, sub, len(idx), rng, chk)
        for j in np.nonzero(~held)[0][:5]:
            bad.append({k: float(v[j]) for k, v in sub.items()})
        accepted += len(idx)
    return bad, accepted
