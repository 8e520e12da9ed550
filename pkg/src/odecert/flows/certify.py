"""Certification of candidate solutions and flows.

A candidate maps each frame variable to an expression over time, parameters
and the initial values (written as the state variable itself, shown `$x`).
It solves the ODE when, after replacing initial values by fresh parameters,
the time derivative of every component equals the field evaluated along the
candidate, as a polynomial identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .. import hybridprog as hp
from .. import lie
from .. import prover
from .. import symexpr as sx
from ..hybridprog import Cmp, NonnegReals, Pred, Subst
from ..lie import Proviso
from ..symexpr import Equal, Expr, NotEqual, Param, StateVar, Unknown


class NonMatchingFrames(ValueError):
    pass


@dataclass(frozen=True)
class FlowCandidate:
    frame: tuple
    body: Subst
    domain: object = NonnegReals()
    side_conditions: tuple = ()  # Preds the solver needed (e.g. k != 0)

    def __post_init__(self):
        object.__setattr__(self, "frame", tuple(sorted(self.frame)))

    def render(self, ascii: bool = True) -> str:
        return self.body.render(flow=True, ascii=ascii)


@dataclass
class ComponentReport:
    var: str
    derivative_goal: Expr        # field component along the candidate
    computed_derivative: Expr    # d/dt of the candidate component
    identity_status: object      # Equal | NotEqual | Unknown
    provisos: list = field(default_factory=list)


@dataclass(frozen=True)
class Certified:
    side_conditions: tuple = ()
    jacobian: tuple = ()


@dataclass(frozen=True)
class NotC1:
    reason: str


@dataclass
class CertReport:
    components: list
    initial_condition_status: dict | None = None   # var -> Equal/NotEqual/Unknown
    lipschitz: object = None
    open_provisos: list = field(default_factory=list)

    @property
    def identities_ok(self) -> bool:
        return all(isinstance(c.identity_status, Equal) for c in self.components)

    @property
    def initial_ok(self) -> bool:
        return self.initial_condition_status is None or all(
            isinstance(s, Equal) for s in self.initial_condition_status.values())

    @property
    def lipschitz_ok(self) -> bool:
        return self.lipschitz is None or isinstance(self.lipschitz, Certified)

    @property
    def certified(self) -> bool:
        """Every obligation closed, including provisos."""
        return self.identities_ok and self.initial_ok and self.lipschitz_ok \
            and not self.open_provisos

    @property
    def status(self) -> str:
        if not (self.identities_ok and self.initial_ok and self.lipschitz_ok):
            return "failed"
        return "certified-with-open-provisos" if self.open_provisos else "certified"

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "components": [{
                "var": c.var,
                "derivative_goal": sx.render(c.derivative_goal, flow=True),
                "computed_derivative": sx.render(c.computed_derivative, flow=True),
                "identity": _status_name(c.identity_status),
                "provisos": [str(p) for p in c.provisos],
            } for c in self.components],
            "initial_condition": None if self.initial_condition_status is None else
            {k: _status_name(v) for k, v in self.initial_condition_status.items()},
            "lipschitz": None if self.lipschitz is None else (
                {"certified": [hp.render_pred(p) for p in self.lipschitz.side_conditions]}
                if isinstance(self.lipschitz, Certified) else {"not_c1": self.lipschitz.reason}),
            "open_provisos": [hp.render_pred(p.condition) for p in self.open_provisos],
        }

    def render(self) -> str:
        lines = []
        for c in self.components:
            lines.append(f"{c.var}: d/dt = {sx.render(c.computed_derivative, flow=True)}"
                         f"  vs  {sx.render(c.derivative_goal, flow=True)}"
                         f"  -> {_status_name(c.identity_status)}")
            for text in dict.fromkeys(str(p) for p in c.provisos if not p.trivial):
                lines.append(f"    proviso {text}")
        if self.initial_condition_status is not None:
            bad = [k for k, v in self.initial_condition_status.items() if not isinstance(v, Equal)]
            lines.append("initial condition: " + ("ok" if not bad else "fails for " + ", ".join(bad)))
        if self.lipschitz is not None:
            lines.append("lipschitz: " + ("certified" if isinstance(self.lipschitz, Certified)
                                          else "not C1 (" + self.lipschitz.reason + ")"))
        for p in self.open_provisos:
            lines.append(f"open proviso: {p}")
        lines.append("status: " + self.status)
        return "\n".join(lines)


def _status_name(s) -> str:
    if isinstance(s, Equal):
        return "equal"
    if isinstance(s, NotEqual):
        return "not-equal"
    return "unknown" + (f" ({s.reason})" if s.reason else "")


def initial_name(x: str) -> str:
    return "$" + x


def as_time_function(e: Expr) -> Expr:
    """Candidate body with initial values as `$x` parameters."""
    return sx.rename_state_to_params(e)


_TNAME = "t"


def _time_binder(names) -> str:
    n, k = _TNAME, 0
    while n in names:
        k += 1
        n = f"{_TNAME}{k}"
    return n


def proviso_goal(cond: Pred, context) -> Pred:
    """cond for all t >= 0 (time becomes a bound parameter)."""
    used = set()
    for c in list(context) + [cond]:
        fv = hp.pred_free_vars(c)
        used |= fv.params | fv.state
    if not hp.pred_free_vars(cond).uses_time:
        return cond
    tn = _time_binder(used)
    body = hp.map_pred_exprs(cond, lambda e: sx.substitute_time(e, Param(tn)))
    return hp.Forall(tn, sx.ZERO, None, body)


def _strengthen(cond: Pred) -> Pred:
    """A sufficient condition the arithmetic prover can read."""
    if isinstance(cond, Cmp) and cond.op == "!=" and cond.rhs == sx.ZERO:
        if isinstance(cond.lhs, sx.Sqrt):
            return Cmp(">", cond.lhs.arg, sx.ZERO)
        if isinstance(cond.lhs, sx.Exp):
            return hp.TRUE
    return cond


def _entailed(cond: Pred, context) -> bool:
    cond = _strengthen(cond)
    if isinstance(hp.simplify_pred(cond), hp.TrueP):
        return True
    return prover.entails(list(context), proviso_goal(cond, context))


def certify_solution(candidate: FlowCandidate, fld: Subst, guard_context=(),
                     as_flow: bool = True) -> CertReport:
    frame = set(candidate.frame)
    if frame != set(fld.keys()) or frame != set(candidate.body.keys()):
        raise NonMatchingFrames(
            f"candidate frame {sorted(candidate.body.keys())} vs field {sorted(fld.keys())}")
    context = list(guard_context) + list(candidate.side_conditions)
    context = [hp.map_pred_exprs(c, sx.rename_state_to_params) for c in context]
    xs = {x: as_time_function(candidate.body.lookup(x)) for x in candidate.frame}
    # state variables outside the frame are frozen at their initial value
    along = {**{x: e for x, e in xs.items()}}
    comps, provisos = [], []
    for x in candidate.frame:
        fx = sx.rename_state_to_params(sx.substitute(fld.lookup(x), along))
        # the field mentions frame vars as StateVars; substitute first, then freeze the rest
        deriv, prov = lie.time_derivative(xs[x])
        status = sx.equal_poly(deriv, fx, assumptions=context,
                               entails=lambda c: _entailed(Cmp("!=", c, sx.ZERO), context))
        extra = []
        if isinstance(status, Unknown) and status.side_conditions:
            diff_zero = sx.equal_poly(deriv, fx, entails=lambda c: True)
            if isinstance(diff_zero, Equal):
                extra = [Proviso(Cmp("!=", c, sx.ZERO), "NonzeroDenominator", ())
                         for c in status.side_conditions]
                status = Equal()
        comps.append(ComponentReport(x, fx, deriv, status, prov + extra))
        provisos += prov + extra
    open_p = [p for p in lie.open_provisos(provisos) if not _entailed(p.condition, context)]
    report = CertReport(comps, open_provisos=open_p)
    if as_flow:
        init = {}
        for x in candidate.frame:
            at0 = sx.substitute_time(xs[x], sx.ZERO)
            init[x] = sx.equal_poly(at0, Param(initial_name(x)), assumptions=context)
        report.initial_condition_status = init
    return report


_SIDE = {"Div": "NonzeroDenominator", "Sqrt": "SqrtPositive", "Ln": "LnPositive",
         "Tan": "TanDefined"}


def c1_lipschitz_check(fld: Subst, frame, context=()):
    """Global C1 (hence locally Lipschitz) check of the field on the frame."""
    frame = sorted(frame)
    conds = []
    for x in frame:
        for s in sx.subterms(fld.lookup(x)):
            if isinstance(s, sx.Div):
                c = Cmp("!=", s.right, sx.ZERO)
            elif isinstance(s, (sx.Sqrt, sx.Ln)):
                c = Cmp(">", s.arg, sx.ZERO)
            elif isinstance(s, sx.Tan):
                c = Cmp("!=", sx.Cos(s.arg), sx.ZERO)
            else:
                continue
            if isinstance(hp.simplify_pred(c), hp.TrueP):
                continue
            if not prover.entails(list(context), c):
                return NotC1(f"{sx.render(s)} needs {hp.render_pred(c)}")
            conds.append(c)
    try:
        jac = tuple(tuple(lie.lie_derivative(Subst({y: sx.ONE}), fld.lookup(x), {y})
                          for y in frame) for x in frame)
    except lie.UnsupportedNode:
        jac = ()
    return Certified(tuple(dict.fromkeys(conds)), jac)


def certify_flow(candidate: FlowCandidate, fld: Subst, guard_context=()) -> CertReport:
    report = certify_solution(candidate, fld, guard_context, as_flow=True)
    ctx = list(guard_context) + list(candidate.side_conditions)
    report.lipschitz = c1_lipschitz_check(fld, candidate.frame, ctx)
    return report
