import random
from fractions import Fraction

import pytest
import sympy

from odecert import problem_path
from odecert import symexpr as sx
from odecert.syntax import load_problem

SYM_T = sympy.Symbol("t_time")


def to_sympy(e):
    """Independent oracle: translate an expression tree into sympy."""
    if isinstance(e, sx.Num):
        return sympy.Rational(e.value.numerator, e.value.denominator)
    if isinstance(e, (sx.StateVar, sx.Param)):
        return sympy.Symbol(e.name)
    if isinstance(e, sx.TimeVar):
        return SYM_T
    if isinstance(e, sx.NamedConst):
        return {"pi": sympy.pi, "e": sympy.E}[e.name]
    if isinstance(e, sx.Neg):
        return -to_sympy(e.arg)
    if isinstance(e, sx.Pow):
        return to_sympy(e.base) ** e.exp
    if isinstance(e, sx.Apply):
        fn = {"sin": sympy.sin, "cos": sympy.cos, "tan": sympy.tan, "exp": sympy.exp,
              "sqrt": sympy.sqrt, "ln": sympy.log}[e.fname]
        return fn(to_sympy(e.arg))
    a, b = to_sympy(e.left), to_sympy(e.right)
    if isinstance(e, sx.Add):
        return a + b
    if isinstance(e, sx.Sub):
        return a - b
    if isinstance(e, sx.Mul):
        return a * b
    return a / b


def sympy_zero(expr) -> bool:
    return sympy.simplify(sympy.expand(expr)) == 0


def random_expr(rng: random.Random, names, depth: int, funcs=("sin", "cos", "exp"),
                division: bool = True, time: bool = False):
    """Seeded random expression tree over `names` (state variables)."""
    if depth <= 0 or rng.random() < 0.25:
        r = rng.random()
        if r < 0.35:
            return sx.Num(Fraction(rng.randint(-5, 5), rng.choice([1, 1, 2, 3])))
        if time and r < 0.5:
            return sx.TIME
        return sx.StateVar(rng.choice(names))
    kinds = ["add", "sub", "mul", "neg", "pow"] + (["div"] if division else [])
    kinds += ["fn"] * (1 if funcs else 0)
    k = rng.choice(kinds)
    sub = lambda: random_expr(rng, names, depth - 1, funcs, division, time)
    if k == "add":
        return sx.Add(sub(), sub())
    if k == "sub":
        return sx.Sub(sub(), sub())
    if k == "mul":
        return sx.Mul(sub(), sub())
    if k == "neg":
        return sx.Neg(sub())
    if k == "pow":
        return sx.Pow(sub(), rng.randint(0, 3))
    if k == "div":
        return sx.Div(sub(), sub())
    return sx.apply_fn(rng.choice(funcs), sub())


@pytest.fixture
def problem():
    return lambda name: load_problem(problem_path(name))


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
