"""Monte Carlo trajectories, filtering consistency, and lab-frame checks.

Conditional means of the measured system evolve as

    d<x> = A <x> dt + 2 sqrt(eta mu) V dW

with four independent unit Wiener innovations and ``V`` the conditional
covariance.  The truth-plus-filter simulation generates the underlying
state with diffusion ``2 gamma V0`` per quadrature, synthesises the four
measurement records

    dy_i = 2 sqrt(eta mu) x_i dt + dxi_i

with unit-variance record noise, and runs the stationary filter on them;
the innovation ``dW_i = dy_i - 2 sqrt(eta mu) <x_i> dt`` recovers the
conditional-mean equation above.  The record normalisation is fixed by
requiring the filter's covariance equation to reproduce the conditioning
rate ``4 eta mu`` of :mod:`pairamp.riccati`.

Randomness is reproducible under any chunking or parallel split:
trajectory ``k`` draws from ``default_rng(SeedSequence(seed).spawn(n)[k])``
and consumes its normals in time order (process noise first, then record
noise, per step).  Repeating a run with identical batching reproduces it
bit for bit; changing the batch shape keeps the noise streams identical
but lets results drift at the level of floating-point associativity.

The lab-frame check integrates the time-dependent covariance of the full
oscillating system over one modulation period (state transition plus
accumulated noise), composes period maps across the run, and compares the
demodulated time-averaged covariance against the rotating-frame Lyapunov
solution.  Its error is the size of the counter-rotating terms, so it
shrinks as the mechanical frequency grows.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    AsymmetryUnsupported,
    ConfigError,
    Diverged,
    FrequencyTooLow,
    StepTooLarge,
)
from .model import (
    Basis,
    DriftMatrix4,
    DriveModel,
    ModelOne,
    OscillatorPairParams,
    TransformDirection,
    drift_matrix,
    transform_matrix,
    v0,
)
from .riccati import CovarianceMatrix4, full_steady_ode, lyapunov_unconditional

__all__ = [
    "Scheme",
    "TrajectoryConfig",
    "EnsembleStats",
    "ConditionalMeansResult",
    "TruthFilterResult",
    "RwaCheckReport",
    "spectral_radius",
    "default_dt",
    "simulate_conditional_means",
    "simulate_truth_and_filter",
    "labframe_rwa_check",
    "covariance_standard_errors",
]

_PATH_BUDGET_FLOATS = 200_000_000 // 8  # refuse to allocate more than ~200 MB of paths


class Scheme(enum.Enum):
    EULER_MARUYAMA = "euler_maruyama"


@dataclass(frozen=True)
class TrajectoryConfig:
    dt: float
    duration: float
    n_traj: int
    seed: int
    scheme: Scheme = Scheme.EULER_MARUYAMA

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.duration < self.dt:
            raise ConfigError("duration must be at least one step")
        if self.n_traj < 1:
            raise ConfigError("need at least one trajectory")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass(frozen=True)
class EnsembleStats:
    mean: np.ndarray
    covariance: np.ndarray
    mean_stderr: np.ndarray
    cov_stderr: np.ndarray
    n_traj: int


@dataclass(frozen=True)
class ConditionalMeansResult:
    times: np.ndarray | None
    paths: np.ndarray | None      # (n_traj, n_records, 4) when kept
    final: np.ndarray             # (n_traj, 4)
    stats: EnsembleStats
    basis: Basis


@dataclass(frozen=True)
class TruthFilterResult:
    times: np.ndarray | None
    true_paths: np.ndarray | None
    filtered_paths: np.ndarray | None
    final_true: np.ndarray
    final_mean: np.ndarray
    #: per-quadrature time-averaged squared estimation error, post burn-in
    error_sq: np.ndarray
    #: standard error of error_sq across trajectories
    error_sq_stderr: np.ndarray
    #: sample variance of innovation increments per channel / dt
    innovation_var_ratio: np.ndarray
    n_innovations: int
    basis: Basis


@dataclass(frozen=True)
class RwaCheckReport:
    lab_covariance: CovarianceMatrix4
    rotating_covariance: CovarianceMatrix4
    deviation: float
    omega_m: float


def spectral_radius(a: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def default_dt(
    drift: DriftMatrix4,
    params: OscillatorPairParams,
    cov: np.ndarray | None = None,
) -> float:
    """Step of 1e-3 over the fastest rate in the simulated dynamics."""
    rate = spectral_radius(drift.matrix)
    em = params.efficiency * params.measurement_rate
    if cov is not None and em > 0:
        rate = max(rate, 4.0 * em * float(np.max(np.linalg.eigvalsh(cov))))
    return 1e-3 / max(rate, params.gamma_mean)


def covariance_standard_errors(cov: np.ndarray, n: int) -> np.ndarray:
    """Asymptotic standard errors of sample-covariance entries (Gaussian)."""
    d = np.diag(cov)
    return np.sqrt((np.outer(d, d) + cov**2) / max(n - 1, 1))


def _ensemble_stats(final: np.ndarray) -> EnsembleStats:
    n = final.shape[0]
    mean = final.mean(axis=0)
    if n > 1:
        cov = np.cov(final.T, ddof=1)
        cov = np.atleast_2d(cov)
        mean_se = np.sqrt(np.diag(cov) / n)
        cov_se = covariance_standard_errors(cov, n)
    else:
        cov = np.zeros((4, 4))
        mean_se = np.full(4, np.nan)
        cov_se = np.full((4, 4), np.nan)
    return EnsembleStats(mean, cov, mean_se, cov_se, n)


def _check_step(dt: float, a: np.ndarray):
    rho = spectral_radius(a)
    if dt * rho > 0.1:
        raise StepTooLarge(
            f"dt * spectral_radius(A) = {dt * rho:.3g} exceeds 0.1; reduce dt"
        )


def _traj_seeds(seed: int, n_traj: int):
    return np.random.SeedSequence(seed).spawn(n_traj)


def _plan_records(n_steps: int, n_traj: int, keep_paths: bool, record_stride: int):
    if not keep_paths:
        return None
    stride = max(int(record_stride), 1)
    n_rec = n_steps // stride + 1
    if n_traj * n_rec * 4 > _PATH_BUDGET_FLOATS:
        raise ConfigError(
            "path storage too large; pass keep_paths=False or a larger record_stride"
        )
    return stride


def simulate_conditional_means(
    drift: DriftMatrix4,
    cov: CovarianceMatrix4,
    params: OscillatorPairParams,
    cfg: TrajectoryConfig,
    x0: np.ndarray | None = None,
    *,
    keep_paths: bool = True,
    record_stride: int = 1,
    traj_range: tuple[int, int] | None = None,
    chunk_size: int = 512,
    block_steps: int = 4096,
) -> ConditionalMeansResult:
    """Sample conditional-mean trajectories driven by innovation noise.

    ``traj_range`` restricts the run to trajectories [lo, hi) of the full
    ensemble while preserving their individual noise streams, so a run
    split across processes reproduces the unsplit run exactly.
    """
    if cov.basis is not drift.basis:
        raise ConfigError("covariance basis does not match drift basis")
    a = drift.matrix
    _check_step(cfg.dt, a)
    gain = 2.0 * math.sqrt(params.efficiency * params.measurement_rate) * cov.matrix
    lo, hi = traj_range if traj_range is not None else (0, cfg.n_traj)
    n_local = hi - lo
    n_steps = cfg.n_steps
    stride = _plan_records(n_steps, n_local, keep_paths, record_stride)

    seeds = _traj_seeds(cfg.seed, cfg.n_traj)[lo:hi]
    x_init = np.zeros(4) if x0 is None else np.asarray(x0, dtype=float)
    prop = np.eye(4) + cfg.dt * a          # Euler-Maruyama drift step
    noise_map = gain.T * math.sqrt(cfg.dt)

    final = np.empty((n_local, 4))
    paths = (
        np.empty((n_local, n_steps // stride + 1, 4)) if stride is not None else None
    )
    for c0 in range(0, n_local, chunk_size):
        c1 = min(c0 + chunk_size, n_local)
        gens = [np.random.default_rng(s) for s in seeds[c0:c1]]
        x = np.tile(x_init, (c1 - c0, 1))
        if paths is not None:
            paths[c0:c1, 0] = x
        step = 0
        while step < n_steps:
            nb = min(block_steps, n_steps - step)
            noise = np.stack([g.standard_normal((nb, 4)) for g in gens], axis=1)
            kicks = noise @ noise_map  # map innovations through the gain per block
            for k in range(nb):
                x = x @ prop.T + kicks[k]
                step += 1
                if paths is not None and step % stride == 0:
                    paths[c0:c1, step // stride] = x
        final[c0:c1] = x
    times = (
        np.arange(0, n_steps + 1, stride) * cfg.dt if stride is not None else None
    )
    return ConditionalMeansResult(
        times=times,
        paths=paths,
        final=final,
        stats=_ensemble_stats(final),
        basis=drift.basis,
    )


def simulate_truth_and_filter(
    drift: DriftMatrix4,
    params: OscillatorPairParams,
    cfg: TrajectoryConfig,
    cov: CovarianceMatrix4 | None = None,
    *,
    keep_paths: bool = False,
    record_stride: int = 1,
    burn_in: float = 0.5,
    chunk_size: int = 512,
    block_steps: int = 2048,
) -> TruthFilterResult:
    """Co-simulate the true state and the stationary filter on its records.

    The truth starts from the unconditional steady ensemble, the filter
    mean from zero; statistics are collected after ``burn_in`` (fraction of
    the run).  Requires the unconditional dynamics to be stable.
    """
    a = drift.matrix
    _check_step(cfg.dt, a)
    v_unc = lyapunov_unconditional(drift, params)  # raises NotHurwitz above threshold
    if cov is None:
        cov, _ = full_steady_ode(drift, params)
    em = params.efficiency * params.measurement_rate
    sq = 2.0 * math.sqrt(em)
    gain = sq * cov.matrix
    diff = math.sqrt(2.0 * params.gamma_mean * v0(params) * cfg.dt)
    n_steps = cfg.n_steps
    stride = _plan_records(n_steps, cfg.n_traj, keep_paths, record_stride)
    burn_steps = int(burn_in * n_steps)

    chol_unc = np.linalg.cholesky(v_unc.matrix)
    prop = np.eye(4) + cfg.dt * a
    seeds = _traj_seeds(cfg.seed, cfg.n_traj)
    sdt = math.sqrt(cfg.dt)

    final_true = np.empty((cfg.n_traj, 4))
    final_mean = np.empty((cfg.n_traj, 4))
    err_acc = np.zeros((cfg.n_traj, 4))
    innov_sq = np.zeros(4)
    innov_n = 0
    n_rec = n_steps // stride + 1 if stride is not None else 0
    true_paths = np.empty((cfg.n_traj, n_rec, 4)) if stride is not None else None
    filt_paths = np.empty((cfg.n_traj, n_rec, 4)) if stride is not None else None

    for c0 in range(0, cfg.n_traj, chunk_size):
        c1 = min(c0 + chunk_size, cfg.n_traj)
        gens = [np.random.default_rng(s) for s in seeds[c0:c1]]
        # initial truth draw: one (4,) standard normal per trajectory
        z0 = np.stack([g.standard_normal(4) for g in gens])
        x = z0 @ chol_unc.T
        m = np.zeros_like(x)
        if true_paths is not None:
            true_paths[c0:c1, 0] = x
            filt_paths[c0:c1, 0] = m
        step = 0
        while step < n_steps:
            nb = min(block_steps, n_steps - step)
            noise = np.stack([g.standard_normal((nb, 8)) for g in gens], axis=1)
            proc_kicks = diff * noise[:, :, :4]
            rec_noise = sdt * noise[:, :, 4:]
            for k in range(nb):
                dy = sq * cfg.dt * x + rec_noise[k]
                x = x @ prop.T + proc_kicks[k]
                dw = dy - sq * cfg.dt * m
                m = m @ prop.T + dw @ gain.T
                step += 1
                if step > burn_steps:
                    err_acc[c0:c1] += (x - m) ** 2
                    innov_sq += (dw**2).sum(axis=0)
                    innov_n += c1 - c0
                if true_paths is not None and step % stride == 0:
                    true_paths[c0:c1, step // stride] = x
                    filt_paths[c0:c1, step // stride] = m
        final_true[c0:c1] = x
        final_mean[c0:c1] = m

    tail = n_steps - burn_steps
    per_traj = err_acc / tail
    err = per_traj.mean(axis=0)
    err_se = per_traj.std(axis=0, ddof=1) / math.sqrt(cfg.n_traj) if cfg.n_traj > 1 else np.full(4, np.nan)
    times = np.arange(0, n_steps + 1, stride) * cfg.dt if stride is not None else None
    return TruthFilterResult(
        times=times,
        true_paths=true_paths,
        filtered_paths=filt_paths,
        final_true=final_true,
        final_mean=final_mean,
        error_sq=err,
        error_sq_stderr=err_se,
        innovation_var_ratio=innov_sq / innov_n / cfg.dt,
        n_innovations=innov_n,
        basis=drift.basis,
    )


# --- lab-frame rotating-wave validation -----------------------------------


def _lab_drift_fn(drive: DriveModel, params: OscillatorPairParams, omega_m: float):
    """Time-dependent lab drift in (q1, p1, q2, p2), amplitude chosen so the
    co-rotating part reproduces the requested rotating-frame rates."""
    g = params.gamma_mean
    if isinstance(drive, ModelOne):
        omega_d = omega_m - drive.detuning
        chi4 = 4.0 * drive.chi

        def a_of_t(t: float) -> np.ndarray:
            c = chi4 * np.cos(2.0 * omega_d * t)
            return np.array(
                [
                    [-g, omega_m, 0.0, 0.0],
                    [-omega_m, -g, -c, 0.0],
                    [0.0, 0.0, -g, omega_m],
                    [-c, 0.0, -omega_m, -g],
                ]
            )

        return a_of_t, omega_d, math.pi / omega_d
    chi4 = 4.0 * drive.chi
    two_g = 2.0 * drive.coupling

    def a_of_t(t: float) -> np.ndarray:
        par = chi4 * np.sin(2.0 * omega_m * t)
        return np.array(
            [
                [-g, omega_m, 0.0, 0.0],
                [-omega_m - par, -g, -two_g, 0.0],
                [0.0, 0.0, -g, omega_m],
                [-two_g, 0.0, -omega_m - par, -g],
            ]
        )

    return a_of_t, omega_m, math.pi / omega_m


def _period_propagators(a_of_t, period: float, diffusion: np.ndarray, n_nodes: int, rtol: float):
    """State-transition Phi(s) and injected covariance Q(s) at nodes of one period."""

    def rhs(t, y):
        phi = y[:16].reshape(4, 4)
        q = y[16:].reshape(4, 4)
        a = a_of_t(t)
        return np.concatenate(
            ((a @ phi).ravel(), (a @ q + q @ a.T + diffusion).ravel())
        )

    y0 = np.concatenate((np.eye(4).ravel(), np.zeros(16)))
    nodes = np.linspace(0.0, period, n_nodes)
    sol = solve_ivp(rhs, (0.0, period), y0, t_eval=nodes, rtol=rtol, atol=1e-13, method="DOP853")
    if not sol.success:
        raise Diverged(f"period propagator integration failed: {sol.message}")
    phis = sol.y[:16].T.reshape(-1, 4, 4)
    qs = sol.y[16:].T.reshape(-1, 4, 4)
    return nodes, phis, qs


def _demod_blocks(t: float, omega_r: float, flip_y: bool) -> np.ndarray:
    c, s = np.cos(omega_r * t), np.sin(omega_r * t)
    r = np.array([[c, -s], [s, c]])
    if flip_y:
        r = np.diag([1.0, -1.0]) @ r
    out = np.zeros((4, 4))
    out[:2, :2] = r
    out[2:, 2:] = r
    return out


def labframe_rwa_check(
    drive: DriveModel,
    params: OscillatorPairParams,
    *,
    t_run: float | None = None,
    n_nodes: int = 65,
    rtol: float = 1e-11,
    cap: float = 1e12,
) -> RwaCheckReport:
    """Compare lab-frame and rotating-frame unconditional covariances.

    Integrates the time-dependent covariance over one modulation period,
    composes the period map over the run, time-averages the steady stretch
    (final half), demodulates at the drive frequency, and reports the
    maximum deviation from the rotating-frame Lyapunov solution relative
    to its largest entry.
    """
    if params.measurement_rate != 0:
        raise ConfigError("rotating-wave validation is defined for mu = 0 only")
    if params.mech_frequency is None:
        raise ConfigError("mech_frequency must be set for the lab-frame check")
    if not params.is_symmetric:
        raise AsymmetryUnsupported("lab-frame check assumes equal damping rates")
    omega_m = params.mech_frequency
    if isinstance(drive, ModelOne):
        detune = abs(drive.detuning)
    else:
        detune = drive.coupling
    floor = max(100.0 * params.gamma_mean, 20.0 * max(drive.chi, detune))
    if omega_m < floor:
        raise FrequencyTooLow(
            f"mech_frequency {omega_m:g} below the rotating-wave floor {floor:g}"
        )

    drift = drift_matrix(drive, params)
    v_rot = lyapunov_unconditional(drift, params)

    a_of_t, omega_r, period = _lab_drift_fn(drive, params, omega_m)
    diffusion = 2.0 * params.gamma_mean * (params.bath_occupation + 0.5) * np.eye(4)
    nodes, phis, qs = _period_propagators(a_of_t, period, diffusion, n_nodes, rtol)
    phi_t, q_t = phis[-1], qs[-1]

    if t_run is None:
        t_run = 20.0 / params.gamma_mean
    n_periods = max(int(math.ceil(t_run / period)), 2)
    half = n_periods // 2
    v = (params.bath_occupation + 0.5) * np.eye(4)
    v_sum = np.zeros((4, 4))
    n_sum = 0
    for k in range(n_periods):
        if k >= half:
            v_sum += v
            n_sum += 1
        v = phi_t @ v @ phi_t.T + q_t
        if np.max(np.abs(v)) > cap:
            raise Diverged("lab-frame covariance exceeded the cap (above threshold)")
    v_bar = v_sum / n_sum

    # within-period time average of the demodulated covariance; the
    # modulated-coupling scheme lands in the Y-flipped sign convention
    flip_y = isinstance(drive, ModelOne)
    acc = np.zeros((4, 4))
    for t_k, phi_k, q_k in zip(nodes[:-1], phis[:-1], qs[:-1]):
        v_k = phi_k @ v_bar @ phi_k.T + q_k
        r = _demod_blocks(t_k, omega_r, flip_y)
        acc += r @ v_k @ r.T
    v_ind = acc / (len(nodes) - 1)

    direction = (
        TransformDirection.INDIVIDUAL_TO_COLLECTIVE
        if drift.basis is Basis.COLLECTIVE_XY
        else TransformDirection.INDIVIDUAL_TO_UV
    )
    t_mat = transform_matrix(direction)
    v_lab = CovarianceMatrix4(t_mat @ v_ind @ t_mat.T, drift.basis)
    scale = np.max(np.abs(v_rot.matrix))
    deviation = float(np.max(np.abs(v_lab.matrix - v_rot.matrix)) / scale)
    return RwaCheckReport(
        lab_covariance=v_lab,
        rotating_covariance=v_rot,
        deviation=deviation,
        omega_m=omega_m,
    )
