"""Adaptive explicit integration and damped Newton iteration.

Shared plumbing for the covariance solvers: a Dormand-Prince embedded
Runge-Kutta 5(4) stepper with step rejection on invariant violation, a
variance cap that flags above-threshold blow-up, and steady-state
detection relative to a characteristic rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import Diverged, NoConvergence, NotConverged

__all__ = ["IntegrationReport", "integrate_to_steady_state", "newton_solve"]

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


@dataclass
class IntegrationReport:
    converged: bool
    t_end: float
    n_steps: int
    n_rejected: int
    #: minimum of the monitor callback over accepted states (NaN if unused)
    min_monitor: float
    #: |rhs| at the returned state
    residual: float


def integrate_to_steady_state(
    rhs: Callable[[np.ndarray], np.ndarray],
    init: np.ndarray,
    *,
    rate_scale: float,
    rel_tol: float = 1e-10,
    t_max: float | None = None,
    step_rtol: float | None = None,
    cap: float = 1e12,
    invariant: Callable[[np.ndarray], bool] | None = None,
    monitor: Callable[[np.ndarray], float] | None = None,
) -> tuple[np.ndarray, IntegrationReport]:
    """Integrate an autonomous ODE until the flow stalls.

    Steady state is declared when ``||dy/dt|| < rel_tol * ||y|| * rate_scale``,
    with the flow measured both instantaneously and as the secant over a
    window of one ``1/rate_scale`` (the secant is immune to the round-off
    jitter of individual accepted steps).  Any state component exceeding
    ``cap`` raises :class:`Diverged`; hitting ``t_max`` first raises
    :class:`NotConverged`.  A step whose proposed state fails ``invariant``
    is rejected and retried at half the step.
    """
    y = np.asarray(init, dtype=float).copy()
    if t_max is None:
        t_max = 50.0 / rate_scale
    if step_rtol is None:
        step_rtol = max(rel_tol / 50.0, 5e-14)
    step_atol = step_rtol * 1e-3
    t = 0.0
    h = 1e-3 / rate_scale
    n_steps = n_rejected = 0
    min_monitor = np.inf if monitor is not None else np.nan
    if monitor is not None:
        min_monitor = min(min_monitor, monitor(y))

    window = 1.0 / rate_scale
    t_mark, y_mark = t, y.copy()

    k = [None] * 7
    k[0] = rhs(y)
    max_steps = 5_000_000

    def threshold() -> float:
        return rel_tol * max(np.linalg.norm(y), 1e-300) * rate_scale

    while True:
        fnorm = np.linalg.norm(k[0])
        if fnorm <= threshold():
            return y, IntegrationReport(True, t, n_steps, n_rejected, min_monitor, fnorm)
        if t - t_mark >= window:
            secant = np.linalg.norm(y - y_mark) / (t - t_mark)
            if secant <= threshold():
                return y, IntegrationReport(
                    True, t, n_steps, n_rejected, min_monitor, secant
                )
            t_mark, y_mark = t, y.copy()
        if t >= t_max:
            raise NotConverged(
                f"no steady state before t_max={t_max:g} (|rhs|={fnorm:.3e})"
            )
        if n_steps + n_rejected > max_steps:
            raise NotConverged("step budget exhausted")
        h = min(h, t_max - t + 1e-16)

        with np.errstate(over="ignore", invalid="ignore"):
            # trial stages may overflow transiently; the error control rejects them
            for i in range(1, 7):
                yi = y + h * sum(a * k[j] for j, a in enumerate(_A[i]))
                k[i] = rhs(yi)
            y5 = y + h * sum(b * k[j] for j, b in enumerate(_B5) if b != 0.0)
            y4 = y + h * sum(b * k[j] for j, b in enumerate(_B4) if b != 0.0)

            scale = step_atol + step_rtol * np.maximum(np.abs(y), np.abs(y5))
            err = np.sqrt(np.mean(((y5 - y4) / scale) ** 2))
        accurate = err <= 1.0 and np.all(np.isfinite(y5))
        if accurate and (invariant is None or invariant(y5)):
            t += h
            y = y5
            k[0] = k[6]  # FSAL
            n_steps += 1
            if monitor is not None:
                min_monitor = min(min_monitor, monitor(y))
            if np.max(np.abs(y)) > cap:
                raise Diverged(f"state exceeded cap {cap:g} at t={t:g}")
            if np.isfinite(err) and err > 0:
                h *= min(5.0, max(0.2, 0.9 * err**-0.2))
            else:
                h *= 5.0
        else:
            n_rejected += 1
            k[0] = rhs(y)  # FSAL slot was clobbered
            if not accurate:
                if np.isfinite(err) and err > 0:
                    h *= min(0.9, max(0.1, 0.9 * err**-0.2))
                else:
                    h *= 0.1
            else:  # invariant rejection with acceptable error: just back off
                h *= 0.5


def newton_solve(
    f: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    *,
    tol: float,
    scale: float = 1.0,
    floor: float = 0.0,
    max_iter: int = 100,
) -> np.ndarray:
    """Damped Newton iteration with Armijo backtracking.

    Converges when ``||f(x)|| < max(floor, tol * max(1, scale * ||x||))``;
    ``floor`` absorbs the round-off level of equations with large
    cancelling terms.
    """
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(max_iter):
        fx = f(x)
        r = np.linalg.norm(fx)
        if r < max(floor, tol * max(1.0, scale * np.linalg.norm(x))):
            return x
        try:
            step = np.linalg.solve(jac(x), -fx)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("singular Jacobian") from exc
        lam = 1.0
        for _ in range(60):
            xn = x + lam * step
            if np.linalg.norm(f(xn)) < (1.0 - 1e-4 * lam) * r:
                x = xn
                break
            lam *= 0.5
        else:
            raise NoConvergence("line search stalled")
    raise NoConvergence(f"no root after {max_iter} iterations")
