"""Prove, refute or export verification conditions, and run programs.

Proving is delegated to the exact prover.  Refutation is by sampling: the
whole VC is evaluated on batches of rational states with numpy, in a
three-valued logic where float slack always favours the VC (a VC is only
declared violated when it fails beyond the comparison margin).
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import hybridprog as hp
from . import prover
from . import symexpr as sx
from .flows.rk4 import rk4_integrate
from .hybridprog import Cmp, Pred
from .symexpr import Expr, Param, StateVar
from .vcs import VC

DEFAULT_TIME_GRID = (0.0,) + tuple(float(x) for x in np.geomspace(1e-3, 100.0, 63))


@dataclass(frozen=True)
class SamplerConfig:
    samples: int = 1000
    lo: int = -10
    hi: int = 10
    max_denominator: int = 16
    time_grid: tuple = DEFAULT_TIME_GRID
    seed: int = 0
    rejection_factor: int = 50
    margin: float = 1e-12
    eq_tol: float = 1e-9
    inner_points: int = 17  # grid for quantifiers nested inside a VC
    chunk: int = 512
    iterations: int = 8  # loop unrolling cap in simulate
    max_steps: int = 20000  # RK4 steps per evolution in simulate


# ---------------------------------------------------------------- results

@dataclass(frozen=True)
class Proved:
    method: str
    status = "proved"

    def to_json(self, label: str) -> dict:
        return {"label": label, "status": self.status, "method": self.method}


@dataclass(frozen=True)
class Refuted:
    counterexample: dict
    status = "refuted"

    def to_json(self, label: str) -> dict:
        return {"label": label, "status": self.status,
                "counterexample": {k: self.counterexample[k] for k in sorted(self.counterexample)}}


@dataclass(frozen=True)
class Unknown:
    reason: str
    status = "unknown"

    def to_json(self, label: str) -> dict:
        return {"label": label, "status": self.status, "reason": self.reason}


DischargeResult = Proved | Refuted | Unknown


class SamplingExhausted(RuntimeError):
    """No sampled state satisfied the assumptions within the rejection budget."""


class UnsupportedAtom(ValueError):
    pass


def vc_seed(seed: int, label: str) -> int:
    h = hashlib.sha256(f"{seed}\x00{label}".encode()).digest()
    return int.from_bytes(h[:8], "little")


# ---------------------------------------------------------------- numeric evaluation

_NP_NS = {"_sin": np.sin, "_cos": np.cos, "_tan": np.tan, "_exp": np.exp,
          "_sqrt": np.sqrt, "_ln": np.log, "_div": np.divide, "_T": sx.TIME,
          "_pi": math.pi, "_e": math.e}


@lru_cache(maxsize=8192)
def _compile_np(e: Expr):
    return eval("lambda env: " + sx._py_source(e), dict(_NP_NS))


def eval_array(e: Expr, env: dict, n: int) -> np.ndarray:
    """Evaluate e over n rows; invalid points (domain, overflow) become nan."""
    try:
        with np.errstate(all="ignore"):
            out = _compile_np(e)(env)
    except KeyError as exc:
        raise sx.UnboundVariable(exc.args[0]) from None
    out = np.broadcast_to(np.asarray(out, dtype=float), (n,))
    return np.where(np.isfinite(out), out, np.nan)


def _mag_source(e: Expr) -> str:
    """Source of a bound on the magnitudes of e's intermediate terms."""
    if isinstance(e, sx.Num):
        return repr(abs(float(e.value)))
    if isinstance(e, (StateVar, Param)):
        return f"_abs(env[{e.name!r}])"
    if isinstance(e, sx.TimeVar):
        return "_abs(env[_T])"
    if isinstance(e, sx.NamedConst):
        return repr(sx.NAMED_CONSTANTS.get(e.name, 1.0))
    if isinstance(e, sx.Neg):
        return _mag_source(e.arg)
    if isinstance(e, sx.Pow):
        return f"({_mag_source(e.base)}**{e.exp})" if e.exp >= 0 else \
            f"_abs({sx._py_source(e)})"
    if isinstance(e, sx.Apply):
        return f"_abs({sx._py_source(e)})"
    a = _mag_source(e.left)
    if isinstance(e, (sx.Add, sx.Sub)):
        return f"({a}+{_mag_source(e.right)})"
    if isinstance(e, sx.Mul):
        return f"({a}*{_mag_source(e.right)})"
    return f"_div({a},_abs({sx._py_source(e.right)}))"


@lru_cache(maxsize=8192)
def _compile_mag(e: Expr):
    return eval("lambda env: " + _mag_source(e), dict(_NP_NS, _abs=np.abs))


def magnitude_array(e: Expr, env: dict, n: int) -> np.ndarray:
    """Sum of absolute values of e's terms; float error in e is relative to this."""
    with np.errstate(all="ignore"):
        out = _compile_mag(e)(env)
    out = np.broadcast_to(np.asarray(out, dtype=float), (n,))
    return np.where(np.isfinite(out), out, np.nan)


def _cmp_truth(c: Cmp, env, n, pos: bool, cfg: SamplerConfig):
    a = eval_array(c.lhs, env, n)
    b = eval_array(c.rhs, env, n)
    with np.errstate(all="ignore"):
        d = a - b
        s = 1.0 + magnitude_array(c.lhs, env, n) + magnitude_array(c.rhs, env, n)
        ok = np.isfinite(d) & np.isfinite(s)
        slack = cfg.margin * s
        op = c.op
        if op in ("=", "!="):
            v = np.abs(d) <= cfg.eq_tol * s
            if op == "!=":
                v = ~v
        else:
            if op in ("<", "<="):
                d = -d
            # d is now the amount by which the strict/non-strict ">" holds
            if pos:
                # an exactly zero difference is a genuine boundary violation
                v = (d > 0) | ((d < 0) & (d > -slack)) if op in (">", "<") else d >= -slack
            else:
                v = d > slack if op in (">", "<") else d >= 0
    return ok & v, ok & ~v


def _grid_values(lo, hi, env, n, k_time, k_unit, cfg):
    """(n, k) binder values for a quantifier range."""
    if lo is not None and hi is not None:
        a, b = eval_array(lo, env, n), eval_array(hi, env, n)
        u = np.linspace(0.0, 1.0, k_unit)
        return a[:, None] + (b - a)[:, None] * u[None, :]
    g = np.asarray(cfg.time_grid, dtype=float)
    if k_time < len(g):
        g = g[np.unique(np.linspace(0, len(g) - 1, k_time).round().astype(int))]
    if lo is not None:
        return eval_array(lo, env, n)[:, None] + g[None, :]
    if hi is not None:
        return eval_array(hi, env, n)[:, None] - g[None, :]
    both = np.concatenate([-g[:0:-1], g])
    return np.broadcast_to(both, (n, len(both)))


def truth(p: Pred, env: dict, n: int, pos: bool, cfg: SamplerConfig):
    """(surely true, surely false) masks.  pos: the formula occurs positively.

    Quantifiers inside the formula are checked on grids: finite universal
    checks are trusted, existentials over unbounded ranges never fail.
    """
    if isinstance(p, hp.TrueP):
        return np.ones(n, bool), np.zeros(n, bool)
    if isinstance(p, hp.FalseP):
        return np.zeros(n, bool), np.ones(n, bool)
    if isinstance(p, Cmp):
        return _cmp_truth(p, env, n, pos, cfg)
    if isinstance(p, hp.Not):
        t, f = truth(p.arg, env, n, not pos, cfg)
        return f, t
    if isinstance(p, hp.And):
        t1, f1 = truth(p.left, env, n, pos, cfg)
        t2, f2 = truth(p.right, env, n, pos, cfg)
        return t1 & t2, f1 | f2
    if isinstance(p, hp.Or):
        t1, f1 = truth(p.left, env, n, pos, cfg)
        t2, f2 = truth(p.right, env, n, pos, cfg)
        return t1 | t2, f1 & f2
    if isinstance(p, hp.Implies):
        t1, f1 = truth(p.left, env, n, not pos, cfg)
        t2, f2 = truth(p.right, env, n, pos, cfg)
        return f1 | t2, t1 & f2
    if isinstance(p, hp.QUANTIFIERS):
        vals = _grid_values(p.lo, p.hi, env, n, cfg.inner_points, cfg.inner_points, cfg)
        k = vals.shape[1]
        sub = {key: np.repeat(v, k) for key, v in env.items()}
        sub[p.var] = vals.reshape(-1)
        t, f = truth(p.body, sub, n * k, pos, cfg)
        t, f = t.reshape(n, k), f.reshape(n, k)
        if isinstance(p, hp.Forall):
            return t.all(axis=1), f.any(axis=1)
        bounded = p.lo is not None and p.hi is not None
        return t.any(axis=1), (f.all(axis=1) if bounded else np.zeros(n, bool))
    raise TypeError(f"not a predicate: {p!r}")


# ---------------------------------------------------------------- sampling

def _names(*preds) -> list:
    out = set()
    for p in preds:
        fv = hp.pred_free_vars(p)
        if fv.uses_time:
            raise sx.UnboundVariable("t")
        out |= fv.state | fv.params
    return sorted(out)


def _split_spine(goal: Pred, bound: set):
    """Antecedents of goal's implication spine not mentioning binders."""
    hyps = []
    while isinstance(goal, hp.Implies) and not (set(_names(goal.left)) & bound):
        hyps += hp.conjuncts(goal.left)
        goal = goal.right
    return hyps, goal


def _eliminate(hyps: list, concl: Pred, bound: set):
    """Solve equality hypotheses for single variables and substitute them out.

    Returns (hyps, concl, solved) where solved lists (var, expr) in the order
    they must be evaluated.
    """
    solved = []
    for _ in range(64):
        hit = None
        for i, h in enumerate(hyps):
            if isinstance(h, Cmp) and h.op == "=" and not (set(_names(h)) & bound):
                sol = prover._solve_for_var(prover._norm(sx.Sub(h.lhs, h.rhs)))
                if sol is not None:
                    hit = (i, sol)
                    break
        if hit is None:
            break
        i, (var, val) = hit
        del hyps[i]
        sub = _substituter(var, val)
        hyps = [sub(h) for h in hyps]
        concl = sub(concl)
        solved = [(v, _expr_subst(e, var, val)) for v, e in solved] + [(var, val)]
    return hyps, concl, solved


def _expr_subst(e: Expr, var, val: Expr) -> Expr:
    if isinstance(var, StateVar):
        return sx.substitute(e, {var.name: val})
    return sx.substitute_params(e, {var.name: val})


def _substituter(var, val):
    if isinstance(var, StateVar):
        return lambda p: hp.pred_substitute(p, {var.name: val})
    return lambda p: hp.pred_substitute_params(p, {var.name: val})


def _rationals(rng, n: int, k: int, cfg: SamplerConfig) -> np.ndarray:
    q = rng.integers(1, cfg.max_denominator + 1, size=(n, k))
    p = rng.integers(cfg.lo * q, cfg.hi * q + 1)
    return p / q


def sample_states(assumptions: list, names: list, cfg: SamplerConfig, rng, want: int,
                  probes: bool = True) -> dict:
    """Up to `want` rows over `names` satisfying all assumptions surely.

    The all-zero and all-one states are tried first.  Raises SamplingExhausted
    when nothing is accepted within the rejection budget.
    """
    budget = max(want, 1) * cfg.rejection_factor
    hyp = hp.conj(*assumptions)
    got, tried = [], 0
    while tried < budget and sum(len(g) for g in got) < want:
        n = min(max(want, 64), budget - tried)
        block = _rationals(rng, n, len(names), cfg)
        if probes and tried == 0:
            block[0, :] = 0.0
            if n > 1:
                block[1, :] = 1.0
        tried += n
        env = {x: block[:, j] for j, x in enumerate(names)}
        t, _ = truth(hyp, env, n, False, cfg)
        got.append(block[t])
    rows = np.concatenate(got) if got else np.zeros((0, len(names)))
    if len(rows) == 0:
        raise SamplingExhausted(f"no state satisfies the assumptions in {tried} draws")
    rows = rows[:want]
    return {x: rows[:, j] for j, x in enumerate(names)}


def _binder_expand(binders, env: dict, n: int, cfg: SamplerConfig, rng):
    """Repeat each row over K binder tuples; the first tuple is all-lower-bound."""
    g = len(cfg.time_grid)
    k = g
    out = {key: np.repeat(v, k) for key, v in env.items()}
    m = n * k
    for i, b in enumerate(binders):
        if len(binders) == 1:
            idx = np.tile(np.arange(k), n)
        else:
            idx = rng.integers(0, g, size=(n, k))
            idx[:, 0] = 0
            idx = idx.reshape(-1)
        vals = _grid_values(b.lo, b.hi, out, m, g, g, cfg)
        out[b.name] = vals[np.arange(m), idx]
    return out, k


def falsify(vc: VC, cfg: SamplerConfig, rng=None):
    """First sampled assignment (parameters, state, binders) violating the VC.

    Returns None when no violation is found.  Existential binders are never
    refuted by search; a witness, if any, was substituted when the VC was made.
    """
    if rng is None:
        rng = np.random.default_rng(vc_seed(cfg.seed, vc.label))
    if any(b.quantifier == "exists" for b in vc.binders):
        return None
    bound = {b.name for b in vc.binders}
    spine, concl = _split_spine(vc.goal, bound)
    hyps, concl, solved = _eliminate(list(vc.context) + spine, concl, bound)
    names = [x for x in _names(hp.conj(*hyps), concl, *_bound_preds(vc.binders))
             if x not in bound]
    env = sample_states(hyps, names, cfg, rng, cfg.samples)
    total = len(next(iter(env.values()))) if env else 1
    for start in range(0, total, cfg.chunk):
        n = min(cfg.chunk, total - start)
        part = {x: v[start:start + n] for x, v in env.items()}
        full, k = _binder_expand(vc.binders, part, n, cfg, rng)
        _, f = truth(concl, full, n * k, True, cfg)
        hits = np.flatnonzero(f)
        if len(hits):
            r = int(hits[0])
            cex = {x: float(full[x][r]) for x in full}
            one = {x: np.asarray([v]) for x, v in cex.items()}
            for var, e in solved:
                cex[var.name] = float(eval_array(e, one, 1)[0])
            return cex
    return None


def _bound_preds(binders) -> list:
    out = []
    for b in binders:
        out += b.bounds()
    return out


def evaluate_vc(vc: VC, env: dict, cfg: SamplerConfig = SamplerConfig()):
    """True/False/None for the VC at one assignment (binders taken from env)."""
    goal = vc.goal if all(b.name in env for b in vc.binders) else vc.formula()
    p = hp.Implies(hp.conj(*vc.context), goal)
    arr = {x: np.asarray([float(v)]) for x, v in env.items()}
    t, f = truth(p, arr, 1, True, cfg)
    return True if t[0] else (False if f[0] else None)


# ---------------------------------------------------------------- discharge

def discharge_vc(vc: VC, cfg: SamplerConfig = SamplerConfig()) -> DischargeResult:
    if vc.blocked is not None:
        return Unknown(f"blocked: {vc.blocked}")
    method = prover.prove(vc.context, vc.formula())
    if method is not None:
        return Proved(method)
    try:
        cex = falsify(vc, cfg)
    except SamplingExhausted as exc:
        return Unknown(str(exc))
    except sx.EvalError as exc:
        return Unknown(f"cannot sample: {exc}")
    if cex is not None:
        return Refuted(cex)
    return Unknown(f"not proved; no counterexample in {cfg.samples} samples")


def _discharge_job(args):
    vc, cfg = args
    return discharge_vc(vc, cfg)


def discharge_all(vcs, cfg: SamplerConfig = SamplerConfig(), workers: int = 1) -> list:
    """Results in input order; each VC is seeded by (cfg.seed, label)."""
    vcs = list(vcs)
    if workers <= 1 or len(vcs) <= 1:
        return [discharge_vc(vc, cfg) for vc in vcs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_discharge_job, [(vc, cfg) for vc in vcs]))


def goal_status(vcs, results) -> str:
    """refuted: an exact VC is refuted; proved: every VC is; else unknown."""
    results = list(results)
    if any(isinstance(r, Refuted) and vc.exact for vc, r in zip(vcs, results)):
        return "refuted"
    if all(isinstance(r, Proved) for r in results):
        return "proved"
    return "unknown"


# ---------------------------------------------------------------- SMT-LIB

_SIMPLE = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_$.?!~@%^&*+-=<>/")
_RESERVED = {"and", "or", "not", "ite", "let", "forall", "exists", "true", "false",
             "assert", "abs", "div", "mod", "to_real", "to_int", "is_int", "distinct", "par",
             "as", "match", "exit"}


def smt_symbol(name: str) -> str:
    if name and set(name) <= _SIMPLE and not name[0].isdigit() and name not in _RESERVED:
        return name
    return "|" + name.replace("|", "_").replace("\\", "_") + "|"


def _smt_num(v) -> str:
    v = Fraction(v)
    body = str(abs(v.numerator)) + ".0" if v.denominator == 1 else \
        f"(/ {abs(v.numerator)}.0 {v.denominator}.0)"
    return f"(- {body})" if v < 0 else body


class _SmtWriter:
    def __init__(self, abstract: bool):
        self.abstract = abstract
        self.functions: set = set()

    def expr(self, e: Expr) -> str:
        if isinstance(e, sx.Num):
            return _smt_num(e.value)
        if isinstance(e, (StateVar, Param)):
            return smt_symbol(e.name)
        if isinstance(e, sx.TimeVar):
            raise UnsupportedAtom("time variable in a VC")
        if isinstance(e, sx.NamedConst):
            return self._abstract(e.name, None)
        if isinstance(e, sx.Neg):
            return f"(- {self.expr(e.arg)})"
        if isinstance(e, sx.Pow):
            if e.exp == 0:
                return "1.0"
            base = self.expr(e.base)
            prod = base if abs(e.exp) == 1 else f"(* {' '.join([base] * abs(e.exp))})"
            return prod if e.exp > 0 else f"(/ 1.0 {prod})"
        if isinstance(e, sx.Apply):
            return self._abstract(e.fname, self.expr(e.arg))
        op = {sx.Add: "+", sx.Sub: "-", sx.Mul: "*", sx.Div: "/"}[type(e)]
        return f"({op} {self.expr(e.left)} {self.expr(e.right)})"

    def _abstract(self, fname: str, arg):
        if not self.abstract:
            raise UnsupportedAtom(f"transcendental atom {fname}")
        self.functions.add((fname, arg is not None))
        sym = smt_symbol(fname)
        return sym if arg is None else f"({sym} {arg})"

    def pred(self, p: Pred) -> str:
        if isinstance(p, hp.TrueP):
            return "true"
        if isinstance(p, hp.FalseP):
            return "false"
        if isinstance(p, Cmp):
            a, b = self.expr(p.lhs), self.expr(p.rhs)
            if p.op == "!=":
                return f"(not (= {a} {b}))"
            return f"({p.op} {a} {b})"
        if isinstance(p, hp.Not):
            return f"(not {self.pred(p.arg)})"
        if isinstance(p, (hp.And, hp.Or, hp.Implies)):
            op = {hp.And: "and", hp.Or: "or", hp.Implies: "=>"}[type(p)]
            return f"({op} {self.pred(p.left)} {self.pred(p.right)})"
        if isinstance(p, hp.QUANTIFIERS):
            q = "forall" if isinstance(p, hp.Forall) else "exists"
            bounds = hp.binder_bounds(p.var, p.lo, p.hi)
            body = self.pred(p.body)
            if bounds:
                b = self.pred(hp.conj(*bounds))
                body = f"(=> {b} {body})" if q == "forall" else f"(and {b} {body})"
            return f"({q} (({smt_symbol(p.var)} Real)) {body})"
        raise TypeError(f"not a predicate: {p!r}")


def transcendental_atoms(vc: VC) -> list:
    """Function names of transcendental atoms occurring in the VC."""
    out = set()
    for p in list(vc.context) + [vc.formula()]:
        for e in hp.pred_exprs(p):
            for s in sx.subterms(e):
                if isinstance(s, sx.Apply):
                    out.add(s.fname)
                elif isinstance(s, sx.NamedConst):
                    out.add(s.name)
    return sorted(out)


def export_smtlib(vc: VC, abstract: bool = False) -> str:
    """SMT-LIB 2 script whose unsatisfiability proves the VC.

    Leading universal binders are skolemised into constants.  With
    abstract=True transcendental functions become uninterpreted and the
    script is flagged; without it they raise UnsupportedAtom.
    """
    w = _SmtWriter(abstract)
    lead = []
    for b in vc.binders:
        if b.quantifier != "forall":
            break
        lead.append(b)
    rest = VC(vc.label, (), vc.binders[len(lead):], vc.goal).formula()
    ctx = [w.pred(c) for c in vc.context]
    bounds = [w.pred(c) for c in _bound_preds(lead)]
    goal = w.pred(rest)
    names = _names(*vc.context, rest, *_bound_preds(lead))
    lines = [f"; {vc.label}"]
    trans = transcendental_atoms(vc)
    if w.functions:
        lines.append("; transcendental atoms abstracted as uninterpreted functions: "
                     + ", ".join(trans))
        lines.append("(set-info :status unknown)")
        lines.append("(set-logic ALL)")
    else:
        lines.append("(set-logic NRA)")
    for fname, unary in sorted(w.functions):
        sig = "(Real)" if unary else "()"
        lines.append(f"(declare-fun {smt_symbol(fname)} {sig} Real)")
    for x in names:
        lines.append(f"(declare-fun {smt_symbol(x)} () Real)")
    for c in ctx + bounds:
        lines.append(f"(assert {c})")
    lines.append(f"(assert (not {goal}))")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- simulation

def _holds(p: Pred, env: dict, cfg: SamplerConfig) -> bool:
    arr = {x: np.asarray([float(v)]) for x, v in env.items()}
    t, _ = truth(p, arr, 1, True, cfg)
    return bool(t[0])


def _value(e: Expr, env: dict) -> float:
    v = sx.eval_numeric(e, env)
    if not math.isfinite(v):
        raise sx.DomainError(f"non-finite value of {sx.render(e)}")
    return v


def _flow_state(flow, env: dict, t: float) -> dict:
    at = dict(env)
    at[sx.TIME] = t
    out = dict(env)
    for x, e in flow.items():
        out[x] = _value(e, at)
    return out


def _rk4_steps(cmd, env: dict, stop: float, cfg: SamplerConfig) -> int:
    """Step count keeping h times the local rate scale small."""
    scale = 1.0 + max(abs(v) for v in env.values()) if env else 1.0
    for _, e in cmd.field.items():
        scale = max(scale, abs(_value(e, env)) / (1.0 + max(abs(v) for v in env.values())))
    return int(min(cfg.max_steps, max(16, math.ceil(stop * scale * 20))))


def _evolve(flow, cmd, guard: Pred, env: dict, rng, cfg: SamplerConfig):
    grid = cfg.time_grid
    stop = float(grid[int(rng.integers(0, len(grid)))])
    checks = [t for t in grid if t <= stop]
    if flow is not None:
        for tau in checks:
            if not _holds(guard, _flow_state(flow, env, tau), cfg):
                return None
        return _flow_state(flow, env, stop)
    path = rk4_integrate(cmd.field, cmd.frame, env, stop, _rk4_steps(cmd, env, stop, cfg))
    for _, s in path:
        if not _holds(guard, s, cfg):
            return None
    return path[-1][1]


def _run(p: hp.HProg, env: dict, flows, rng, cfg: SamplerConfig):
    if env is None:
        return None
    if isinstance(p, hp.Skip):
        return env
    if isinstance(p, hp.Abort):
        return None
    if isinstance(p, hp.Test):
        return env if _holds(p.pred, env, cfg) else None
    if isinstance(p, hp.Assign):
        out = dict(env)
        for x, e in p.subst.items():
            out[x] = _value(e, env)
        return out
    if isinstance(p, hp.Seq):
        return _run(p.second, _run(p.first, env, flows, rng, cfg), flows, rng, cfg)
    if isinstance(p, hp.Choice):
        side = p.left if rng.random() < 0.5 else p.right
        return _run(side, env, flows, rng, cfg)
    if isinstance(p, hp.If):
        side = p.then if _holds(p.cond, env, cfg) else p.orelse
        return _run(side, env, flows, rng, cfg)
    if isinstance(p, hp.Star):
        for _ in range(int(rng.integers(0, cfg.iterations + 1))):
            env = _run(p.body, env, flows, rng, cfg)
            if env is None:
                return None
        return env
    if isinstance(p, hp.While):
        for _ in range(cfg.iterations):
            if not _holds(p.cond, env, cfg):
                return env
            env = _run(p.body, env, flows, rng, cfg)
            if env is None:
                return None
        return None  # no final state within the iteration cap
    if isinstance(p, hp.EvolFlow):
        return _evolve(p.flow, None, p.guard, env, rng, cfg)
    if isinstance(p, hp.Evolve):
        flow = (flows or {}).get(p.cmd)
        return _evolve(flow, p.cmd, p.cmd.guard, env, rng, cfg)
    raise TypeError(f"not a program: {p!r}")


def simulate(p: hp.HProg, s: dict, flows=None, cfg: SamplerConfig = SamplerConfig(),
             runs: int = 1, rng=None) -> list:
    """Distinct final states of `runs` seeded executions of p from s.

    Evolutions use the certified flow from `flows` when present and RK4
    otherwise.  A run that fails a test, aborts or violates a guard has no
    final state.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    out = []
    for _ in range(runs):
        try:
            fin = _run(p, dict(s), flows, rng, cfg)
        except (sx.EvalError, OverflowError):
            fin = None
        if fin is not None and fin not in out:
            out.append(fin)
    return out


def cross_check_goal(goal: hp.Goal, problem: hp.Problem | None, flows=None,
                     cfg: SamplerConfig = SamplerConfig(), runs: int = 1000,
                     tol: float = 1e-6):
    """Run a box goal from sampled precondition states; return violating finals.

    Postconditions are checked with relative tolerance `tol`, since numerical
    integration cannot meet the sampler's equality tolerance.
    """
    post_cfg = SamplerConfig(margin=tol, eq_tol=tol)
    rng = np.random.default_rng(vc_seed(cfg.seed, "cross:" + goal.name))
    hyps = list(problem.assumptions if problem else ()) + hp.conjuncts(goal.pre)
    hyps, _, solved = _eliminate(hyps, hp.TRUE, set())
    declared = sorted(problem.declared()) if problem else []
    names = sorted(set(_names(hp.conj(*hyps), goal.post)) | set(declared))
    names = [x for x in names if x not in {v.name for v, _ in solved}]
    env = sample_states(hyps, names, cfg, rng, runs)
    bad = []
    count = len(next(iter(env.values()))) if env else 1
    for i in range(count):
        s = {x: float(v[i]) for x, v in env.items()}
        for var, e in solved:
            s[var.name] = _value(e, s)
        for fin in simulate(goal.prog, s, flows, cfg, runs=1, rng=rng):
            if not _holds(goal.post, fin, post_cfg):
                bad.append((s, fin))
    return bad
