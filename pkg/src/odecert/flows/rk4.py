"""Fixed-step classical Runge-Kutta integration (a numeric oracle)."""
from __future__ import annotations

from .. import symexpr as sx
from ..symexpr import TIME, EvalError


class IntegrationError(EvalError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


def rk4_integrate(fld, frame, init: dict, t_end: float, steps: int, t0: float = 0.0) -> list:
    """[(t, env)] for steps+1 sample points; env holds every name in `init`.

    Names not in the frame stay constant.  `TIME` in the field is the
    absolute time t0 + elapsed.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    frame = sorted(frame)
    fns = [sx.compile_float(fld.lookup(x)) for x in frame]
    h = (t_end - t0) / steps
    env = dict(init)
    t = t0
    out = [(t, dict(env))]

    def rates(state, tt):
        e = dict(env)
        e.update(zip(frame, state))
        e[TIME] = tt
        return [f(e) for f in fns]

    y = [float(env[x]) for x in frame]
    for i in range(steps):
        try:
            k1 = rates(y, t)
            k2 = rates([a + h / 2 * b for a, b in zip(y, k1)], t + h / 2)
            k3 = rates([a + h / 2 * b for a, b in zip(y, k2)], t + h / 2)
            k4 = rates([a + h * b for a, b in zip(y, k3)], t + h)
        except EvalError as exc:
            raise IntegrationError(i, exc) from exc
        y = [a + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
             for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
        t = t0 + (i + 1) * h
        env.update(zip(frame, y))
        out.append((t, dict(env)))
    return out
