"""Verification of hybrid programs: predicate transformers, differential
induction, certified ODE flows and arithmetic discharge."""
from pathlib import Path

__version__ = "0.1.0"

PROBLEMS_DIR = Path(__file__).with_name("problems")


def problem_path(name: str) -> Path:
    """Path of a bundled problem file, e.g. problem_path("rocket")."""
    return PROBLEMS_DIR / f"{name}.hprog"
