"""Analytic steady-state squeezing angle, separability, and scans.

The conditional moment equations of a single pair admit a closed-form
steady state.  With the signal-to-noise ratio

    SNR = 2 eta mu V0 / gamma

the optimal squeezing angle satisfies

    cos 2a = (d / chi_th) * sqrt((chi_th^2 + chi^2 + 4 g^2 SNR - R) / (2 chi^2))
    R = sqrt((chi_th^2 - chi^2)^2 + 8 (chi_th^2 + chi^2) g^2 SNR + 16 g^4 SNR^2)

and the separability of two symmetric pairs is

    S = (sqrt((g + chi sin 2a)^2 + 4 g^2 SNR) - g - chi sin 2a) / (2 eta mu).

``S`` is evaluated here in the algebraically equivalent form

    S = 4 g V0 / (sqrt((g + x)^2 + 4 g^2 SNR) + g + x),   x = chi |sin 2a|,

which is immune to cancellation at small ``mu`` and reduces smoothly to the
no-measurement limit ``2 g V0 / (g + x)``.

``S = 2 sqrt(V_a+ V_a-)`` pairs the variance at angle ``a`` in the first
pair plane with the variance at ``a + pi/2`` in the second; ``S < 1`` is a
sufficient condition for entanglement and maps to the log-negativity
``E_N = -ln S``.  For unequal effective parametric rates (constant coupling
with damping asymmetry) the two pair covariances differ and the product is
minimised over the common angle numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import NonFinite, NumericalError
from .model import DriveModel, OscillatorPairParams, PairSubsystem, reduce_to_pairs, v0
from .riccati import PairCovariance, rotated_variance, steady_algebraic

__all__ = [
    "EntanglementResult",
    "SqueezeAngle",
    "MuScanResult",
    "snr",
    "squeeze_angle",
    "separability",
    "separability_for_drive",
    "entanglement_from_pair_covariances",
    "min_separability_over_mu",
]


@dataclass(frozen=True)
class EntanglementResult:
    separability: float
    log_negativity: float | None
    alpha: float
    v_alpha_plus: float
    v_alpha_minus: float

    @property
    def entangled(self) -> bool:
        return self.separability < 1.0


@dataclass(frozen=True)
class SqueezeAngle:
    alpha: float
    #: True when chi_eff vanishes and every angle is optimal
    degenerate: bool


@dataclass(frozen=True)
class MuScanResult:
    mu_values: np.ndarray
    s_values: np.ndarray          # NaN where the point failed to converge
    results: list                 # EntanglementResult | None per point
    mu_opt: float
    s_min: float


def snr(params: OscillatorPairParams) -> float:
    """Signal-to-noise ratio 2 eta mu V0 / gamma of the weak measurement."""
    return (
        2.0
        * params.efficiency
        * params.measurement_rate
        * v0(params)
        / params.gamma_mean
    )


def _cos_2alpha(chi: float, delta: float, gamma: float, snr_value: float) -> float:
    """cos(2a) of the optimal quadrature for a pair with rate chi > 0."""
    chi_th = math.hypot(gamma, delta)
    g2s = gamma * gamma * snr_value
    inner = (
        (chi_th**2 - chi**2) ** 2
        + 8.0 * (chi_th**2 + chi**2) * g2s
        + 16.0 * g2s * g2s
    )
    bracket = (chi_th**2 + chi**2 + 4.0 * g2s - math.sqrt(inner)) / (2.0 * chi * chi)
    bracket = max(bracket, 0.0)
    return float(np.clip(delta / chi_th * math.sqrt(bracket), -1.0, 1.0))


def _single_pair_s(chi: float, delta: float, gamma: float, snr_value: float, vv0: float) -> float:
    """Closed-form separability contribution 2 V_min of one pair."""
    if chi == 0.0:
        x = 0.0
    else:
        c2a = _cos_2alpha(chi, delta, gamma, snr_value)
        x = chi * math.sqrt(max(1.0 - c2a * c2a, 0.0))
    g2s = gamma * gamma * snr_value
    return 4.0 * gamma * vv0 / (math.sqrt((gamma + x) ** 2 + 4.0 * g2s) + gamma + x)


def squeeze_angle(pair: PairSubsystem, params: OscillatorPairParams) -> SqueezeAngle:
    """Optimal squeezing angle of one pair, in its own plane.

    The closed form pins only ``cos 2a``; the branch is resolved by
    evaluating the rotated variance of the algebraic steady covariance at
    the four candidate angles.
    """
    chi = abs(pair.chi_eff)
    if chi == 0.0:
        return SqueezeAngle(alpha=0.0, degenerate=True)
    c2a = _cos_2alpha(chi, pair.delta_eff, pair.gamma_mean, snr(params))
    a1 = 0.5 * math.acos(c2a)
    cov = steady_algebraic(pair, params)
    candidates = (a1, -a1, 0.5 * math.pi - a1, a1 - 0.5 * math.pi)
    alpha = min(candidates, key=lambda th: rotated_variance(cov, th))
    return SqueezeAngle(alpha=float(alpha), degenerate=False)


def _locked_minimum(cov_a: PairCovariance, cov_b: PairCovariance) -> tuple[float, float, float]:
    """Minimise V_a(theta) * V_b(theta + pi/2) over the common angle.

    Returns (theta*, V_a(theta*), V_b(theta* + pi/2)).
    """

    def product(th: float) -> float:
        return rotated_variance(cov_a, th) * rotated_variance(cov_b, th + 0.5 * math.pi)

    grid = np.linspace(-0.5 * math.pi, 0.5 * math.pi, 721)
    values = [product(t) for t in grid]
    i = int(np.argmin(values))
    span = grid[1] - grid[0]
    res = minimize_scalar(
        product,
        bounds=(grid[i] - span, grid[i] + span),
        method="bounded",
        options={"xatol": 1e-13},
    )
    th = float(res.x)
    return th, rotated_variance(cov_a, th), rotated_variance(cov_b, th + 0.5 * math.pi)


def entanglement_from_pair_covariances(
    cov_a: PairCovariance, cov_b: PairCovariance
) -> EntanglementResult:
    """Separability of two steady pair covariances, however obtained.

    Pairs the variance at angle ``a`` in the first plane with the variance
    at ``a + pi/2`` in the second and minimises the product over ``a``.
    """
    theta, va, vb = _locked_minimum(cov_a, cov_b)
    s = 2.0 * math.sqrt(va * vb)
    if not (math.isfinite(s) and s > 0):
        raise NonFinite(f"separability is not finite: {s!r}")
    return EntanglementResult(
        separability=s,
        log_negativity=-math.log(s) if s < 1.0 else None,
        alpha=theta,
        v_alpha_plus=va,
        v_alpha_minus=vb,
    )


def separability(
    pair_a: PairSubsystem,
    pair_b: PairSubsystem,
    params: OscillatorPairParams,
) -> EntanglementResult:
    """Steady-state separability S = 2 sqrt(V_a+ V_a-) of two pairs.

    Symmetric pairs (equal rate magnitudes) use the closed form directly.
    Otherwise each pair's algebraic steady covariance is computed and the
    variance product is minimised over the common angle: angle ``a`` in the
    first pair plane, ``a + pi/2`` in the second.
    """
    sym = (
        abs(pair_a.chi_eff) == abs(pair_b.chi_eff)
        and pair_a.delta_eff == pair_b.delta_eff
        and pair_a.gamma_mean == pair_b.gamma_mean
    )
    em = params.efficiency * params.measurement_rate
    if sym:
        chi = abs(pair_a.chi_eff)
        gamma = pair_a.gamma_mean
        chi_th = math.hypot(gamma, pair_a.delta_eff)
        if em <= 0.0 and chi >= chi_th:
            raise NonFinite("no conditioning and the pairs are at or above threshold")
        s = _single_pair_s(chi, pair_a.delta_eff, gamma, snr(params), v0(params))
        if not (math.isfinite(s) and s > 0):
            raise NonFinite(f"closed-form separability is not finite: {s!r}")
        if chi == 0.0:
            alpha = 0.0
        else:
            alpha = squeeze_angle(pair_a, params).alpha
        half = 0.5 * s
        return EntanglementResult(
            separability=s,
            log_negativity=-math.log(s) if s < 1.0 else None,
            alpha=alpha,
            v_alpha_plus=half,
            v_alpha_minus=half,
        )

    try:
        cov_a = steady_algebraic(pair_a, params)
        cov_b = steady_algebraic(pair_b, params)
    except NumericalError as exc:
        raise NonFinite(f"no convergent steady state: {exc}") from exc
    return entanglement_from_pair_covariances(cov_a, cov_b)


def separability_for_drive(
    drive: DriveModel, params: OscillatorPairParams
) -> EntanglementResult:
    pair_a, pair_b = reduce_to_pairs(drive, params)
    return separability(pair_a, pair_b, params)


def min_separability_over_mu(
    drive: DriveModel,
    params: OscillatorPairParams,
    mu_grid,
) -> MuScanResult:
    """Scan the measurement rate and locate the separability minimum.

    Non-convergent points are recorded as NaN gaps; the minimiser is taken
    over the finite points.
    """
    mu = np.asarray(mu_grid, dtype=float)
    if mu.size == 0:
        raise NonFinite("empty measurement-rate grid")
    if np.any(mu <= 0) or np.any(np.diff(mu) < 0):
        raise NonFinite("measurement-rate grid must be positive and sorted")
    s_values = np.full(mu.shape, np.nan)
    results: list[EntanglementResult | None] = []
    for i, m in enumerate(mu):
        try:
            res = separability_for_drive(drive, replace(params, measurement_rate=float(m)))
        except NonFinite:
            results.append(None)
            continue
        results.append(res)
        s_values[i] = res.separability
    if not np.any(np.isfinite(s_values)):
        raise NonFinite("no grid point converged")
    i_min = int(np.nanargmin(s_values))
    return MuScanResult(
        mu_values=mu,
        s_values=s_values,
        results=results,
        mu_opt=float(mu[i_min]),
        s_min=float(s_values[i_min]),
    )
