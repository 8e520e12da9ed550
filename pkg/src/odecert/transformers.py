"""Predicate transformers (wlp, forward diamond) and Hoare-triple VC
generation with invariant rules and strategy dispatch for ODEs."""
from __future__ import annotations

from dataclasses import dataclass, field

from . import hybridprog as hp
from . import lie
from . import symexpr as sx
from .flows import FlowCandidate, certify_flow, solve_sode
from .hybridprog import (AutoHint, Cmp, DarbouxHint, DInductHint, EvolutionCmd, FlowHint,
                         GhostHint, Goal, HProg, Pred, Problem, SolveHint, Subst)
from .symexpr import Param
from .vcs import VC, Binder, is_trivial, make_vc, prenex

__all__ = ["VC", "Binder", "wlp", "fdia", "hoare_vcs", "frame_rule_apply", "FlowTable",
           "NameSupply", "LoopReached", "MissingFlow", "MissingLoopInvariant", "prenex"]


class LoopReached(ValueError):
    pass


class MissingFlow(KeyError):
    pass


class MissingLoopInvariant(ValueError):
    pass


class FlowTable(dict):
    """EvolutionCmd (hashed on frame, field, guard) -> flow Subst."""


class NameSupply:
    """Fresh binder names avoiding declared ones (t, t1, t2, ...)."""

    def __init__(self, taken=()):
        self.taken = set(taken)

    def fresh(self, base: str = "t") -> str:
        name, k = base, 0
        while name in self.taken:
            k += 1
            name = f"{base}{k}"
        self.taken.add(name)
        return name


def _names_of_pred(p: Pred) -> set:
    fv = hp.pred_free_vars(p)
    return set(fv.state) | set(fv.params)


def _along(flow: Subst, at: sx.Expr) -> dict:
    return {x: sx.substitute_time(e, at) for x, e in flow.items()}


def _evolution_formula(flow: Subst, guard: Pred, Q: Pred, names: NameSupply,
                       diamond: bool) -> Pred:
    t = names.fresh("t")
    post = hp.pred_substitute(Q, _along(flow, Param(t)))
    if isinstance(guard, hp.TrueP):
        body = post
    else:
        tau = names.fresh("tau")
        g = hp.Forall(tau, sx.ZERO, Param(t), hp.pred_substitute(guard, _along(flow, Param(tau))))
        body = hp.And(g, post) if diamond else hp.Implies(g, post)
    return (hp.Exists if diamond else hp.Forall)(t, sx.ZERO, None, body)


class _Transformer:
    def __init__(self, flows, names: NameSupply, diamond: bool):
        self.flows = flows if flows is not None else {}
        self.names = names
        self.diamond = diamond

    def __call__(self, p: HProg, Q: Pred) -> Pred:
        dia = self.diamond
        if isinstance(p, hp.Skip):
            return Q
        if isinstance(p, hp.Abort):
            return hp.FALSE if dia else hp.TRUE
        if isinstance(p, hp.Test):
            return hp.And(p.pred, Q) if dia else hp.Implies(p.pred, Q)
        if isinstance(p, hp.Assign):
            return hp.pred_substitute(Q, p.subst.as_dict())
        if isinstance(p, hp.Seq):
            return self(p.first, self(p.second, Q))
        if isinstance(p, hp.Choice):
            op = hp.Or if dia else hp.And
            return op(self(p.left, Q), self(p.right, Q))
        if isinstance(p, hp.If):
            a, b = self(p.then, Q), self(p.orelse, Q)
            if dia:
                return hp.Or(hp.And(p.cond, a), hp.And(hp.Not(p.cond), b))
            return hp.And(hp.Implies(p.cond, a), hp.Implies(hp.Not(p.cond), b))
        if isinstance(p, hp.EvolFlow):
            return _evolution_formula(p.flow, p.guard, Q, self.names, dia)
        if isinstance(p, hp.Evolve):
            flow = self.flows.get(p.cmd)
            if flow is None:
                raise MissingFlow(f"no certified flow for {hp.render_prog(p)}")
            return _evolution_formula(flow, p.cmd.guard, Q, self.names, dia)
        if isinstance(p, (hp.Star, hp.While)):
            raise LoopReached(f"loop reached: {hp.render_prog(p, 2)}")
        raise TypeError(f"not a program: {p!r}")


def _supply(p: HProg, Q: Pred, names) -> NameSupply:
    if names is not None:
        return names
    taken = _names_of_pred(Q)
    for q in _preds_of(p):
        taken |= _names_of_pred(q)
    for x in hp.mutated_frame(p):
        taken.add(x)
    return NameSupply(taken)


def _preds_of(p: HProg):
    if isinstance(p, hp.Test):
        yield p.pred
    elif isinstance(p, hp.Assign):
        for x, e in p.subst.items():
            yield Cmp("=", sx.StateVar(x), e)
    elif isinstance(p, (hp.Seq,)):
        yield from _preds_of(p.first)
        yield from _preds_of(p.second)
    elif isinstance(p, hp.Choice):
        yield from _preds_of(p.left)
        yield from _preds_of(p.right)
    elif isinstance(p, hp.If):
        yield p.cond
        yield from _preds_of(p.then)
        yield from _preds_of(p.orelse)
    elif isinstance(p, (hp.Star, hp.While)):
        if getattr(p, "cond", None) is not None:
            yield p.cond
        if p.inv is not None:
            yield p.inv
        yield from _preds_of(p.body)
    elif isinstance(p, hp.Evolve):
        yield p.cmd.guard
        if p.inv is not None:
            yield p.inv
        for x, e in p.cmd.field.items():
            yield Cmp("=", sx.StateVar(x), e)
    elif isinstance(p, hp.EvolFlow):
        yield p.guard
        for x, e in p.flow.items():
            yield Cmp("=", sx.StateVar(x), e)


def wlp(p: HProg, Q: Pred, flows=None, names: NameSupply | None = None) -> Pred:
    """Weakest liberal precondition of a loop-free program."""
    return _Transformer(flows, _supply(p, Q, names), False)(p, Q)


def fdia(p: HProg, Q: Pred, flows=None, names: NameSupply | None = None) -> Pred:
    """Forward diamond: some run of p reaches a Q-state."""
    return _Transformer(flows, _supply(p, Q, names), True)(p, Q)


def frame_rule_apply(p: HProg, inv: Pred, triple: tuple):
    """(P && I, Q && I) when p modifies no state variable of I, else None."""
    if not hp.nmods_check(p, hp.pred_free_vars(inv).state):
        return None
    P, Q = triple
    return hp.And(P, inv), hp.And(Q, inv)


# ---------------------------------------------------------------- VC generation

_STRATEGY = {"auto": AutoHint(), "solve": SolveHint(), "dinduct": DInductHint()}


@dataclass
class _FlowResult:
    flow: Subst | None
    provisos: list = field(default_factory=list)
    reason: str = ""


class _VCGen:
    def __init__(self, goal: Goal, problem: Problem, override=None, flows=None):
        self.goal = goal
        self.problem = problem
        self.context = tuple(problem.assumptions) if problem is not None else ()
        self.override = override
        self.flows = flows if flows is not None else FlowTable()
        self._flow_cache: dict = {}
        taken = set(problem.declared()) if problem is not None else set()
        for q in (goal.pre, goal.post):
            taken |= _names_of_pred(q)
        for q in _preds_of(goal.prog):
            taken |= _names_of_pred(q)
        for c in self.context:
            taken |= _names_of_pred(c)
        self.names = NameSupply(taken)
        self.side: list = []
        self.exact = True
        self.diamond = goal.kind == "diamond"

    # -- strategy

    def _hint_for(self, evo: hp.Evolve):
        if self.override is not None:
            return self.override
        if evo.hint is not None:
            return evo.hint
        return self.goal.hint if self.goal.hint is not None else AutoHint()

    def _flow_for(self, cmd: EvolutionCmd, hint) -> _FlowResult:
        key = (cmd, hint)
        if key in self._flow_cache:
            return self._flow_cache[key]
        if isinstance(hint, FlowHint):
            cand = FlowCandidate(tuple(hint.flow.keys()), hint.flow)
            if set(cand.frame) != set(cmd.frame):
                res = _FlowResult(None, reason="flow frame does not match the ODE")
            else:
                rep = certify_flow(cand, cmd.field, self.context)
                if rep.status == "failed":
                    res = _FlowResult(None, reason="flow certification failed")
                else:
                    res = _FlowResult(hint.flow, [p.condition for p in rep.open_provisos])
        else:
            cand, trace = solve_sode(cmd.field, cmd.frame, self.context)
            if cand is None:
                res = _FlowResult(None, reason="no closed-form flow found")
            else:
                rep = certify_flow(cand, cmd.field, self.context)
                res = _FlowResult(cand.body, [p.condition for p in rep.open_provisos]
                                  + list(cand.side_conditions))
        if res.flow is not None:
            self.flows[cmd] = res.flow
        self._flow_cache[key] = res
        return res

    # -- helpers

    def add(self, label: str, pred: Pred, prune: bool = False, exact=False, notes=(),
            blocked=None, context=None):
        vc = make_vc(label, self.context if context is None else context, pred, exact, notes,
                     blocked)
        if prune and blocked is None and is_trivial(vc):
            return
        self.side.append(vc)

    def blocked(self, label: str, reason: str) -> Pred:
        self.exact = False
        self.add(label, hp.FALSE, blocked=reason)
        return hp.FALSE

    # -- precondition with invariant rules

    def pre(self, p: HProg, Q: Pred) -> Pred:
        dia = self.diamond
        if isinstance(p, (hp.Skip, hp.Abort, hp.Test, hp.Assign, hp.EvolFlow)):
            return _Transformer(self.flows, self.names, dia)(p, Q)
        if isinstance(p, hp.Seq):
            return self.pre(p.first, self.pre(p.second, Q))
        if isinstance(p, hp.Choice):
            op = hp.Or if dia else hp.And
            return op(self.pre(p.left, Q), self.pre(p.right, Q))
        if isinstance(p, hp.If):
            a, b = self.pre(p.then, Q), self.pre(p.orelse, Q)
            if dia:
                return hp.Or(hp.And(p.cond, a), hp.And(hp.Not(p.cond), b))
            return hp.And(hp.Implies(p.cond, a), hp.Implies(hp.Not(p.cond), b))
        if isinstance(p, hp.Star):
            if p.inv is None:
                raise MissingLoopInvariant(f"loop needs an invariant: {hp.render_prog(p, 2)}")
            self.exact = False
            inv = p.inv
            self.add("loop-post", hp.Implies(inv, Q))
            self.add("loop-body", hp.Implies(inv, self.pre(p.body, inv)))
            return inv
        if isinstance(p, hp.While):
            if dia:
                return self.blocked("while", "no diamond rule for while loops")
            if p.inv is None:
                raise MissingLoopInvariant(f"while loop needs an invariant")
            self.exact = False
            inv = p.inv
            self.add("while-exit", hp.Implies(hp.And(inv, hp.Not(p.cond)), Q))
            self.add("while-body", hp.Implies(hp.And(inv, p.cond), self.pre(p.body, inv)))
            return inv
        if isinstance(p, hp.Evolve):
            return self.evolve(p, Q)
        raise TypeError(f"not a program: {p!r}")

    def evolve(self, p: hp.Evolve, Q: Pred, pre: Pred | None = None) -> Pred:
        hint = self._hint_for(p)
        cmd = p.cmd
        if isinstance(hint, (FlowHint, SolveHint, AutoHint)):
            res = self._flow_for(cmd, hint)
            if res.flow is not None:
                for k, cond in enumerate(dict.fromkeys(res.provisos)):
                    self.exact = False
                    self.add(f"flow-proviso[{k}]", cond)
                return _evolution_formula(res.flow, cmd.guard, Q, self.names, self.diamond)
            if not (isinstance(hint, AutoHint) and p.inv is not None):
                return self.blocked("flow", res.reason)
            hint = DInductHint()
        if self.diamond:
            return self.blocked("evolution", "invariant rules give no reachability")
        self.exact = False
        if isinstance(hint, DarbouxHint):
            inv = p.inv if p.inv is not None else lie.darboux_invariant(hint.e, hint.rel)
            fresh = (self.names.fresh("y"), self.names.fresh("z"))
            try:
                vcs = lie.darboux_vcs(hint.e, hint.cofactor, hint.rel, cmd, fresh, self.context)
            except lie.UnsupportedNode as exc:
                return self.blocked("darboux", str(exc))
            self.side += vcs
            # the Darboux invariant e ~ 0 must imply the annotated one (if any)
            if p.inv is not None:
                self.add("darboux-inv", hp.Implies(lie.darboux_invariant(hint.e, hint.rel),
                                                   p.inv), prune=True)
                inv = lie.darboux_invariant(hint.e, hint.rel)
        elif isinstance(hint, GhostHint):
            inv = p.inv if p.inv is not None else Q
            spec = lie.GhostSpec(hint.fresh, hint.a, hint.b)
            try:
                aug, _, _ = lie.ghost_augment(cmd, spec, self.goal.pre, Q,
                                              self.problem.declared() if self.problem else ())
            except lie.FreshnessViolation as exc:
                return self.blocked("ghost", str(exc))
            inner = hint.inner if hint.inner is not None else DInductHint()
            sub = hp.Evolve(aug, inner, inv)
            saved = self.override
            self.override = None
            got = self.evolve(sub, Q, pre)
            self.override = saved
            if hint.fresh in hp.pred_free_vars(got).state:
                y = self.names.fresh(hint.fresh)
                got = hp.Exists(y, None, None,
                                hp.pred_substitute(got, {hint.fresh: Param(y)}))
            return got
        elif isinstance(hint, DInductHint):
            inv = p.inv if p.inv is not None else (pre if pre is not None else Q)
            try:
                self.side += lie.diff_induct(inv, cmd, self.context)
            except (lie.UnsupportedNode, lie.UnsupportedLiteral) as exc:
                return self.blocked("dinduct", str(exc))
        else:
            return self.blocked("evolution", f"unknown strategy {hint!r}")
        self.add("evol-post", hp.Implies(hp.And(inv, cmd.guard), Q), prune=True)
        return inv

    def run(self) -> list:
        g = self.goal
        top_evolve = isinstance(g.prog, hp.Evolve)
        if top_evolve and not self.diamond:
            pre = self.evolve(g.prog, g.post, pre=g.pre)
            main_label, prune = "evol-init", True
        else:
            pre = self.pre(g.prog, g.post)
            main_label, prune = "init", False
        main = make_vc(main_label, self.context, hp.Implies(g.pre, pre), self.exact)
        if g.witness is not None:
            main = _instantiate_witness(main, g.witness)
        out = [] if (prune and is_trivial(main)) else [main]
        return out + self.side


def _instantiate_witness(vc: VC, w: sx.Expr) -> VC:
    """Replace the first existential binder by `w` (bounds become conjuncts)."""
    for i, b in enumerate(vc.binders):
        if b.quantifier != "exists":
            continue
        sub = {b.name: w}
        rest = []
        for c in vc.binders[i + 1:]:
            rest.append(Binder(c.name, c.quantifier,
                               None if c.lo is None else sx.substitute_params(c.lo, sub),
                               None if c.hi is None else sx.substitute_params(c.hi, sub)))
        bounds = [Cmp(">=", w, b.lo)] if b.lo is not None else []
        if b.hi is not None:
            bounds.append(Cmp("<=", w, b.hi))
        goal = _put_under_antecedents(vc.goal, sub, bounds)
        return VC(vc.label, vc.context, vc.binders[:i] + tuple(rest), goal, False,
                  vc.notes + (f"witness {b.name} := {sx.render(w)}",), vc.blocked)
    return vc


def _put_under_antecedents(goal: Pred, sub: dict, bounds: list) -> Pred:
    if isinstance(goal, hp.Implies):
        return hp.Implies(hp.pred_substitute_params(goal.left, sub),
                          _put_under_antecedents(goal.right, sub, bounds))
    return hp.conj(*bounds, hp.pred_substitute_params(goal, sub))


def hoare_vcs(goal: Goal, problem: Problem | None = None, strategy: str | None = None,
              flows: FlowTable | None = None) -> list:
    """VCs whose validity establishes the goal (box or diamond)."""
    override = _STRATEGY[strategy] if strategy is not None and strategy != "auto" else None
    return _VCGen(goal, problem, override, flows).run()
