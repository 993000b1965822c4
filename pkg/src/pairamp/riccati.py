"""Conditional covariance dynamics and steady-state solvers.

Continuous weak measurement of both oscillator positions conditions the
collective quadratures at the same rate, so the conditional second moments
of each decoupled pair close on three coupled scalar equations

    dVx/dt = -2 g Vx - 2 (d - s) C + 2 g V0 - 4 eta mu (Vx^2 + C^2)
    dVy/dt = -2 g Vy + 2 (d + s) C + 2 g V0 - 4 eta mu (Vy^2 + C^2)
    dC/dt  = -2 g C + d (Vx - Vy) + s (Vx + Vy) - 4 eta mu C (Vx + Vy)

with ``s`` the pair's signed parametric rate, ``d`` its detuning, and
``V0 = N + 1/2 + mu / 2g`` the unconditional variance scale.  These are
exactly the covariance flow of the canonical pair drift block with
isotropic diffusion ``2 g V0`` and conditioning ``-4 eta mu V^2``; the
matrix form below generalises them to a full (possibly pair-coupled) 4x4
covariance.

Three independent routes to the steady state are provided and are expected
to agree: adaptive time integration, damped Newton root-finding on the
pair equations, and (for ``mu = 0``) the Lyapunov solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_are, solve_continuous_lyapunov

from .errors import BasisMismatch, Diverged, NoConvergence, NotHurwitz
from .integrators import IntegrationReport, integrate_to_steady_state, newton_solve
from .model import (
    PAIR_INDICES,
    Basis,
    DriftMatrix4,
    OscillatorPairParams,
    PairSubsystem,
    v0,
)

__all__ = [
    "PairCovariance",
    "CovarianceMatrix4",
    "HEISENBERG_SLACK",
    "rotated_variance",
    "pair_riccati_rhs",
    "full_riccati_rhs",
    "integrate_to_steady",
    "pair_steady_ode",
    "full_steady_ode",
    "steady_algebraic",
    "pair_lyapunov",
    "lyapunov_unconditional",
]

#: numerical slack on the conditional-state bound Vx*Vy - C^2 >= 1/4
HEISENBERG_SLACK = 1e-9


@dataclass(frozen=True)
class PairCovariance:
    """Second moments of one quadrature pair, zero-point units (1/2 = ZPF)."""

    vx: float
    vy: float
    c: float

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.vx, self.c], [self.c, self.vy]])

    @property
    def heisenberg_product(self) -> float:
        return self.vx * self.vy - self.c * self.c

    def is_physical(self, slack: float = HEISENBERG_SLACK) -> bool:
        return (
            self.vx > 0
            and self.vy > 0
            and self.heisenberg_product >= 0.25 - slack
            and np.isfinite(self.vx + self.vy + self.c)
        )

    @classmethod
    def from_array(cls, y) -> "PairCovariance":
        return cls(float(y[0]), float(y[1]), float(y[2]))

    def to_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.c])


@dataclass(frozen=True)
class CovarianceMatrix4:
    matrix: np.ndarray
    basis: Basis

    def __post_init__(self):
        m = 0.5 * (np.asarray(self.matrix, dtype=float) + np.asarray(self.matrix).T)
        object.__setattr__(self, "matrix", m)

    def pair_blocks(self) -> tuple[np.ndarray, np.ndarray]:
        (i1, j1), (i2, j2) = PAIR_INDICES[self.basis]
        m = self.matrix
        return (
            m[np.ix_((i1, j1), (i1, j1))].copy(),
            m[np.ix_((i2, j2), (i2, j2))].copy(),
        )


def rotated_variance(cov: PairCovariance, theta: float) -> float:
    """Variance of the quadrature rotated by ``theta`` within the pair plane."""
    ct, st = np.cos(theta), np.sin(theta)
    return ct * ct * cov.vx + st * st * cov.vy + np.sin(2.0 * theta) * cov.c


def _pair_coeffs(pair: PairSubsystem, params: OscillatorPairParams):
    g = pair.gamma_mean
    return (
        pair.signed_chi,
        pair.delta_eff,
        g,
        params.bath_occupation + 0.5 + params.measurement_rate / (2.0 * g),
        params.efficiency * params.measurement_rate,
    )


def _pair_rhs_array(y: np.ndarray, s, d, g, vv0, em) -> np.ndarray:
    vx, vy, c = y
    return np.array(
        [
            -2 * g * vx - 2 * (d - s) * c + 2 * g * vv0 - 4 * em * (vx * vx + c * c),
            -2 * g * vy + 2 * (d + s) * c + 2 * g * vv0 - 4 * em * (vy * vy + c * c),
            -2 * g * c + d * (vx - vy) + s * (vx + vy) - 4 * em * c * (vx + vy),
        ]
    )


def _pair_jac_array(y: np.ndarray, s, d, g, em) -> np.ndarray:
    vx, vy, c = y
    return np.array(
        [
            [-2 * g - 8 * em * vx, 0.0, -2 * (d - s) - 8 * em * c],
            [0.0, -2 * g - 8 * em * vy, 2 * (d + s) - 8 * em * c],
            [d + s - 4 * em * c, -d + s - 4 * em * c, -2 * g - 4 * em * (vx + vy)],
        ]
    )


def pair_riccati_rhs(
    cov: PairCovariance, pair: PairSubsystem, params: OscillatorPairParams
) -> PairCovariance:
    """Time derivatives (dVx, dVy, dC) of one pair's conditional moments."""
    s, d, g, vv0, em = _pair_coeffs(pair, params)
    dy = _pair_rhs_array(cov.to_array(), s, d, g, vv0, em)
    return PairCovariance.from_array(dy)


def full_riccati_rhs(
    cov: CovarianceMatrix4, drift: DriftMatrix4, params: OscillatorPairParams
) -> np.ndarray:
    """Matrix Riccati flow A V + V A^T + 2 g V0 I - 4 eta mu V^2.

    Reduces exactly to :func:`pair_riccati_rhs` on each block when the
    covariance is pair-block-diagonal.
    """
    if cov.basis is not drift.basis:
        raise BasisMismatch(f"covariance basis {cov.basis} != drift basis {drift.basis}")
    v = cov.matrix
    a = drift.matrix
    em = params.efficiency * params.measurement_rate
    diff = 2.0 * params.gamma_mean * v0(params)
    out = a @ v + v @ a.T - 4.0 * em * (v @ v)
    out[np.diag_indices(4)] += diff
    return 0.5 * (out + out.T)


def integrate_to_steady(
    rhs,
    init: np.ndarray,
    *,
    rate_scale: float,
    rel_tol: float = 1e-10,
    t_max: float | None = None,
    cap: float = 1e12,
    invariant=None,
    monitor=None,
) -> tuple[np.ndarray, IntegrationReport]:
    """Adaptive integration of a flat-vector ODE until the flow stalls.

    Thin wrapper over the shared stepper; see
    :func:`pairamp.integrators.integrate_to_steady_state` for semantics.
    """
    return integrate_to_steady_state(
        rhs,
        init,
        rate_scale=rate_scale,
        rel_tol=rel_tol,
        t_max=t_max,
        cap=cap,
        invariant=invariant,
        monitor=monitor,
    )


def _default_t_max(pair: PairSubsystem) -> float:
    # critical slowing near threshold: stretch the budget by 1/|1 - chi/chi_th|
    chi_th = np.hypot(pair.gamma_mean, pair.delta_eff)
    margin = abs(1.0 - abs(pair.chi_eff) / chi_th)
    factor = min(max(1.0 / max(margin, 1e-12), 1.0), 1e4)
    return 50.0 / pair.gamma_mean * factor


def pair_steady_ode(
    pair: PairSubsystem,
    params: OscillatorPairParams,
    init: PairCovariance | None = None,
    *,
    rel_tol: float = 1e-10,
    t_max: float | None = None,
    cap: float = 1e12,
) -> tuple[PairCovariance, IntegrationReport]:
    """Integrate one pair's moment equations to steady state.

    Accepted steps are required to keep ``Vx Vy - C^2 >= 1/4`` (up to
    slack); the minimum value seen is recorded in the report.
    """
    s, d, g, vv0, em = _pair_coeffs(pair, params)
    y0 = (init or PairCovariance(vv0, vv0, 0.0)).to_array()
    if t_max is None:
        t_max = _default_t_max(pair)

    def heis(y):
        return y[0] * y[1] - y[2] * y[2]

    y, report = integrate_to_steady(
        lambda y: _pair_rhs_array(y, s, d, g, vv0, em),
        y0,
        rate_scale=g,
        rel_tol=rel_tol,
        t_max=t_max,
        cap=cap,
        invariant=lambda y: heis(y) >= 0.25 - HEISENBERG_SLACK and y[0] > 0 and y[1] > 0,
        monitor=heis,
    )
    return PairCovariance.from_array(y), report


def full_steady_ode(
    drift: DriftMatrix4,
    params: OscillatorPairParams,
    init: CovarianceMatrix4 | None = None,
    *,
    rel_tol: float = 1e-10,
    t_max: float | None = None,
    cap: float = 1e12,
    polish: bool = True,
) -> tuple[CovarianceMatrix4, IntegrationReport]:
    """Integrate the full 4x4 conditional covariance to steady state.

    With ``polish`` the integrated state is refined by a few Newton steps
    on the matrix equation, bringing the residual to round-off.
    """
    if init is None:
        init = CovarianceMatrix4(v0(params) * np.eye(4), drift.basis)
    elif init.basis is not drift.basis:
        raise BasisMismatch("init covariance basis does not match drift")
    a = drift.matrix
    em = params.efficiency * params.measurement_rate
    diff = 2.0 * params.gamma_mean * v0(params)
    gbar = params.gamma_mean

    def rhs_flat(y):
        vm = y.reshape(4, 4)
        out = a @ vm + vm @ a.T - 4.0 * em * (vm @ vm)
        out[np.diag_indices(4)] += diff
        return (0.5 * (out + out.T)).ravel()

    def monitor(y):
        vm = y.reshape(4, 4)
        worst = np.inf
        if drift.basis in PAIR_INDICES:
            for (i, j) in PAIR_INDICES[drift.basis]:
                worst = min(worst, vm[i, i] * vm[j, j] - vm[i, j] ** 2)
        return worst

    if t_max is None:
        t_max = 50.0 / gbar * 1e3

    y, report = integrate_to_steady(
        rhs_flat,
        init.matrix.ravel(),
        rate_scale=gbar,
        rel_tol=rel_tol,
        t_max=t_max,
        cap=cap,
        invariant=(lambda y: monitor(y) >= 0.25 - HEISENBERG_SLACK)
        if drift.basis in PAIR_INDICES
        else None,
        monitor=monitor if drift.basis in PAIR_INDICES else None,
    )
    if polish:
        ident = np.eye(4)

        def jac_flat(yv):
            vm = yv.reshape(4, 4)
            return (
                np.kron(ident, a)
                + np.kron(a, ident)
                - 4.0 * em * (np.kron(ident, vm) + np.kron(vm, ident))
            )

        y = newton_solve(
            rhs_flat, jac_flat, y, tol=1e-13, scale=gbar, floor=1e-13 * max(1.0, diff)
        )
    return CovarianceMatrix4(y.reshape(4, 4), drift.basis), report


def pair_lyapunov(
    pair: PairSubsystem, params: OscillatorPairParams
) -> PairCovariance:
    """Closed-form unconditional steady covariance of one pair.

    Solves ``A V + V A^T + 2 g V0 I = 0`` for the canonical block; requires
    the pair to be below threshold.
    """
    s, d, g, vv0, _ = _pair_coeffs(pair, params)
    den = g * g + d * d - s * s
    if den <= 0:
        raise NotHurwitz("pair at or above threshold has no unconditional steady state")
    c = s * g * vv0 / den
    return PairCovariance(vv0 + (s - d) * c / g, vv0 + (s + d) * c / g, c)


def lyapunov_unconditional(
    drift: DriftMatrix4, params: OscillatorPairParams
) -> CovarianceMatrix4:
    """Unconditional (no-conditioning) steady covariance of the 4x4 system."""
    a = drift.matrix
    if np.max(np.linalg.eigvals(a).real) >= 0:
        raise NotHurwitz("drift matrix is not Hurwitz")
    q = 2.0 * params.gamma_mean * v0(params) * np.eye(4)
    v = solve_continuous_lyapunov(a, -q)
    v = 0.5 * (v + v.T)
    resid = np.max(np.abs(a @ v + v @ a.T + q))
    if resid > 1e-10 * max(1.0, np.max(np.abs(v)) * params.gamma_mean):
        raise NoConvergence(f"Lyapunov residual {resid:.2e} too large")
    return CovarianceMatrix4(v, drift.basis)


def _pair_care(pair: PairSubsystem, params: OscillatorPairParams) -> np.ndarray | None:
    """Stabilising Riccati solution via the Hamiltonian-matrix route.

    Used only as a robust Newton starting point; returns None when the
    conditioning rate vanishes or the solver fails.
    """
    s, d, g, vv0, em = _pair_coeffs(pair, params)
    if em <= 0:
        return None
    a = np.array([[-g, s - d], [s + d, -g]])
    try:
        v = solve_continuous_are(
            a.T, np.eye(2), 2.0 * g * vv0 * np.eye(2), np.eye(2) / (4.0 * em)
        )
    except np.linalg.LinAlgError:
        return None
    return np.array([v[0, 0], v[1, 1], v[0, 1]])


def steady_algebraic(
    pair: PairSubsystem,
    params: OscillatorPairParams,
    initial_guess: PairCovariance | None = None,
) -> PairCovariance:
    """Newton root of the pair moment equations.

    Starting points are tried in order: the caller's guess, the
    unconditional Lyapunov solution (when it exists), the thermal state
    ``V0 I``, and the stabilising algebraic-Riccati solution.  A root is
    accepted only if it is a physical conditional state.
    """
    s, d, g, vv0, em = _pair_coeffs(pair, params)
    if em <= 0 and g * g + d * d - s * s <= 0:
        raise Diverged("no conditioning and the pair is at or above threshold")

    starts: list[np.ndarray] = []
    if initial_guess is not None:
        starts.append(initial_guess.to_array())
    try:
        starts.append(pair_lyapunov(pair, params).to_array())
    except NotHurwitz:
        pass
    starts.append(np.array([vv0, vv0, 0.0]))
    care = _pair_care(pair, params)
    if care is not None:
        starts.append(care)

    def f(y):
        return _pair_rhs_array(y, s, d, g, vv0, em)

    def jac(y):
        return _pair_jac_array(y, s, d, g, em)

    # the diffusion term sets the round-off level of the residual
    floor = 1e-12 * max(1.0, 2.0 * g * vv0)
    last_exc: Exception | None = None
    for y0 in starts:
        try:
            y = newton_solve(f, jac, y0, tol=1e-12, scale=g, floor=floor)
        except NoConvergence as exc:
            last_exc = exc
            continue
        cov = PairCovariance.from_array(y)
        if cov.is_physical():
            return cov
        last_exc = NoConvergence("Newton converged to an unphysical root")
    raise NoConvergence(
        f"all starting points failed for pair {pair.label}: {last_exc}"
    )
