import random

import pytest

from odecert import prover
from odecert.discharge import SamplerConfig, SamplingExhausted, falsify
from odecert.vcs import make_vc
from odecert.syntax import parse_pred

Q = lambda s: parse_pred(s, None, ["a", "b", "c", "k", "w"])


@pytest.mark.parametrize("hyps, goal", [
    ([], "0 <= 1"),
    ([], "x^2 >= 0"),
    ([], "x^2 + y^2 >= 2*x*y - 2*x*y"),
    (["x > 0"], "x >= 0"),
    (["x >= 1"], "2*x >= 1"),
    (["x > 0", "y > 0"], "x*y > 0"),
    (["x = y + 1"], "x > y"),
    (["a > 0", "x >= 0"], "a*x >= 0"),
    (["x >= 0"], "exp(x)*x >= 0"),
    ([], "sin(x)^2 + cos(x)^2 = 1"),
    ([], "exp(x)*exp(y) = exp(x + y)"),
    (["x > 1 || x < -1"], "x^2 > 1"),
    (["k > 1", "m > 0"], "k*m > m"),
])
def test_proves(hyps, goal):
    assert prover.prove([Q(h) for h in hyps], Q(goal)) is not None


@pytest.mark.parametrize("hyps, goal", [
    ([], "x >= 0"),
    (["x > 0"], "x > 1"),
    ([], "x*y >= 0"),
    (["x >= 0"], "x > 0"),
    ([], "sin(x) <= 1/2"),
])
def test_does_not_prove_false_or_hard_goals(hyps, goal):
    assert prover.prove([Q(h) for h in hyps], Q(goal)) is None


def test_soundness_against_sampling():
    """Everything the prover accepts on random linear goals survives falsification."""
    rng = random.Random(3)
    proved = 0
    for _ in range(600):
        coef = lambda: rng.randint(-3, 3)
        hyp = f"{coef()}*x + {coef()}*y >= {coef()}"
        goal = f"{coef()}*x + {coef()}*y {rng.choice(['>=', '>'])} {coef()}"
        if prover.prove([Q(hyp)], Q(goal)) is None:
            continue
        proved += 1
        vc = make_vc("lin", (Q(hyp),), Q(goal))
        try:
            cex = falsify(vc, SamplerConfig(samples=2000))
        except SamplingExhausted:
            continue  # unsatisfiable hypothesis, proved vacuously
        assert cex is None, (hyp, goal)
    assert proved > 10


def test_entails_and_nonzero():
    assert prover.entails([Q("w != 0")], Q("w != 0"))
    assert prover.nonzero_entailed([Q("a > 1")], parse_pred("a - 1 > 0", None, ["a"]).lhs)
