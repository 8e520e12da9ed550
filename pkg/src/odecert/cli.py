"""Command-line front end: verify problem files, search for and certify
flows, and export arithmetic obligations to SMT-LIB."""
from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path

from . import discharge as dc
from . import hybridprog as hp
from .flows import (CASUnavailable, FlowCandidate, NonMatchingFrames, ParseError, certify_flow,
                    field_request, parse_cas_solution, run_wolfram, solve_sode)
from .syntax import ProblemError, load_problem, parse_subst
from .transformers import FlowTable, LoopReached, MissingLoopInvariant, hoare_vcs

EXIT_PROVED, EXIT_REFUTED, EXIT_UNKNOWN, EXIT_ERROR = 0, 1, 2, 3
_SEVERITY = {"proved": EXIT_PROVED, "refuted": EXIT_REFUTED, "unknown": EXIT_UNKNOWN}


class UsageError(Exception):
    pass


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_ERROR


def _aggregate(statuses) -> int:
    """Worst goal status: refuted beats unknown beats proved."""
    codes = [_SEVERITY[s] for s in statuses]
    if EXIT_REFUTED in codes:
        return EXIT_REFUTED
    return max(codes, default=EXIT_PROVED)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("ODECERT_SEED", "0"))


def _evolution(problem: hp.Problem, name: str) -> hp.Evolve:
    if name not in problem.defs:
        raise UsageError(f"no definition named {name!r}")
    d = problem.defs[name]
    if not isinstance(d, hp.Evolve):
        raise UsageError(f"definition {name!r} is not an evolution command")
    return d


# ---------------------------------------------------------------- verify

def verify_problem(problem: hp.Problem, cfg: dc.SamplerConfig, strategy=None,
                   workers: int = 1) -> list:
    """[(goal, vcs, results, status)] for every goal of the problem."""
    out = []
    for goal in problem.goals:
        vcs = hoare_vcs(goal, problem, strategy, FlowTable())
        results = dc.discharge_all(vcs, cfg, workers)
        out.append((goal, vcs, results, dc.goal_status(vcs, results)))
    return out


def _report_json(problem, rows) -> dict:
    goals = []
    for goal, vcs, results, status in rows:
        goals.append({"name": goal.name, "kind": goal.kind, "status": status,
                      "vcs": [{"vc": vc.to_json(), "result": r.to_json(vc.label)}
                              for vc, r in zip(vcs, results)]})
    return {"problem": problem.name, "goals": goals}


def _report_text(problem, rows) -> str:
    lines = [f"problem {problem.name}"]
    for goal, vcs, results, status in rows:
        lines.append(f"goal {goal.name} ({goal.kind}): {status}")
        if not vcs:
            lines.append("  (no verification conditions)")
        for vc, r in zip(vcs, results):
            detail = getattr(r, "method", None) or getattr(r, "reason", "")
            if isinstance(r, dc.Refuted):
                detail = ", ".join(f"{k}={v:g}" for k, v in sorted(r.counterexample.items()))
            lines.append(f"  [{r.status:>7}] {vc.label}: {vc}")
            if detail:
                lines.append(f"            {detail}")
    return "\n".join(lines)


def cmd_verify(args) -> int:
    problem = load_problem(args.file)
    cfg = dc.SamplerConfig(samples=args.samples, seed=_seed(args))
    strategy = args.strategy_override
    rows = verify_problem(problem, cfg, strategy, args.parallel)
    if args.json:
        print(json.dumps(_report_json(problem, rows), indent=2, sort_keys=True))
    else:
        print(_report_text(problem, rows))
    return _aggregate(status for *_, status in rows)


# ---------------------------------------------------------------- find-flow

def cmd_find_flow(args) -> int:
    problem = load_problem(args.file)
    cmd = _evolution(problem, args.def_name).cmd
    if args.backend == "print-request":
        text, mapping = field_request(cmd.field, cmd.frame)
        print(text)
        return EXIT_PROVED
    if args.backend == "wolfram":
        text, mapping = field_request(cmd.field, cmd.frame)
        try:
            reply = run_wolfram(text)
        except CASUnavailable as exc:
            return _fail(f"CAS unavailable: {exc}")
        try:
            cand = parse_cas_solution(reply, mapping, cmd.frame)
        except ParseError as exc:
            print(f"NoSolutionFound: {exc}")
            return EXIT_UNKNOWN
        report = certify_flow(cand, cmd.field, problem.assumptions)
        if report.status == "failed":
            print(report.render())
            print("NoSolutionFound: the CAS reply did not certify")
            return EXIT_UNKNOWN
        print(f"using flow {cand.render()}")
        return EXIT_PROVED
    cand, trace = solve_sode(cmd.field, cmd.frame, problem.assumptions)
    if cand is None:
        print("NoSolutionFound")
        print(trace.render())
        return EXIT_UNKNOWN
    print(f"using flow {cand.render()}")
    for c in cand.side_conditions:
        print(f"  provided {hp.render_pred(c)}")
    return EXIT_PROVED


# ---------------------------------------------------------------- certify

def cmd_certify(args) -> int:
    problem = load_problem(args.file)
    cmd = _evolution(problem, args.def_name).cmd
    body = parse_subst(args.flow, problem.state_vars, problem.constants)
    cand = FlowCandidate(tuple(body.keys()), body)
    try:
        report = certify_flow(cand, cmd.field, problem.assumptions)
    except NonMatchingFrames as exc:
        return _fail(str(exc))
    print(report.render())
    return {"certified": EXIT_PROVED, "certified-with-open-provisos": EXIT_UNKNOWN,
            "failed": EXIT_REFUTED}[report.status]


# ---------------------------------------------------------------- export-smt

def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_")[:40] or "vc"


def cmd_export_smt(args) -> int:
    problem = load_problem(args.file)
    goals = [problem.goal(args.goal)] if args.goal else list(problem.goals)
    if not goals:
        print("warning: no goals to export", file=sys.stderr)
        return EXIT_PROVED
    out = Path(args.out)
    written = 0
    try:
        out.mkdir(parents=True, exist_ok=True)
        for goal in goals:
            for i, vc in enumerate(hoare_vcs(goal, problem, args.strategy_override)):
                if vc.blocked is not None:
                    print(f"skipped {goal.name}/{vc.label}: blocked ({vc.blocked})")
                    continue
                trans = dc.transcendental_atoms(vc)
                if trans and not args.abstract_transcendentals:
                    print(f"skipped {goal.name}/{vc.label}: transcendental atoms "
                          + ", ".join(trans))
                    continue
                path = out / f"{_slug(goal.name)}_{i:02d}_{_slug(vc.label)}.smt2"
                path.write_text(dc.export_smtlib(vc, abstract=bool(trans)), encoding="utf-8")
                flag = " (transcendentals abstracted)" if trans else ""
                print(f"wrote {path}{flag}")
                written += 1
    except OSError as exc:
        return _fail(str(exc))
    if written == 0:
        print("warning: no SMT-LIB scripts written", file=sys.stderr)
    return EXIT_PROVED


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="odecert", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="generate and discharge VCs for every goal")
    v.add_argument("file")
    v.add_argument("--json", action="store_true")
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--samples", type=int, default=1000)
    v.add_argument("--strategy-override", choices=("auto", "solve", "dinduct"), default=None)
    v.add_argument("--parallel", type=int, default=1)
    v.set_defaults(run=cmd_verify)

    f = sub.add_parser("find-flow", help="suggest a flow for an ODE definition")
    f.add_argument("file")
    f.add_argument("--def", dest="def_name", required=True)
    f.add_argument("--backend", choices=("builtin", "wolfram", "print-request"),
                   default="builtin")
    f.set_defaults(run=cmd_find_flow)

    c = sub.add_parser("certify", help="certify a candidate flow for an ODE definition")
    c.add_argument("file")
    c.add_argument("--def", dest="def_name", required=True)
    c.add_argument("--flow", required=True)
    c.set_defaults(run=cmd_certify)

    e = sub.add_parser("export-smt", help="write SMT-LIB scripts for polynomial VCs")
    e.add_argument("file")
    e.add_argument("--goal", default=None)
    e.add_argument("--out", required=True)
    e.add_argument("--strategy-override", choices=("auto", "solve", "dinduct"), default=None)
    e.add_argument("--abstract-transcendentals", action="store_true",
                   help="write transcendental VCs with uninterpreted functions")
    e.set_defaults(run=cmd_export_smt)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_PROVED
    try:
        return args.run(args)
    except KeyError as exc:
        return _fail(str(exc.args[0]) if exc.args else "missing key")
    except (ProblemError, UsageError, MissingLoopInvariant, LoopReached) as exc:
        return _fail(str(exc))
    except OSError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
