import numpy as np
import pytest
from scipy.linalg import expm

from pairamp import (
    AsymmetryUnsupported,
    FrequencyTooLow,
    ModelOne,
    ModelTwo,
    OscillatorPairParams,
    StepTooLarge,
    TrajectoryConfig,
    default_dt,
    drift_matrix,
    full_steady_ode,
    labframe_rwa_check,
    lyapunov_unconditional,
    simulate_conditional_means,
    simulate_truth_and_filter,
    spectral_radius,
)
from pairamp.riccati import CovarianceMatrix4
from pairamp.trajectories import covariance_standard_errors


def params(**kw):
    kw.setdefault("gamma1", 1.0)
    kw.setdefault("gamma2", 1.0)
    return OscillatorPairParams(**kw)


def system(chi=5.0, margin=0.95, **kw):
    """Stable near-threshold system: chi / chi_th = margin."""
    chi_th = chi / margin
    delta = float(np.sqrt(chi_th**2 - 1.0))
    p = params(**kw)
    drive = ModelOne(chi, delta)
    drift = drift_matrix(drive, p)
    cov, _ = full_steady_ode(drift, p)
    return drive, p, drift, cov


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        _, p, drift, cov = system(chi=2.0, bath_occupation=1.0, measurement_rate=1.0)
        cfg = TrajectoryConfig(dt=1e-3, duration=0.5, n_traj=64, seed=777)
        a = simulate_conditional_means(drift, cov, p, cfg, keep_paths=True)
        b = simulate_conditional_means(drift, cov, p, cfg, keep_paths=True)
        assert np.array_equal(a.paths, b.paths)
        assert np.array_equal(a.final, b.final)

    def test_blocking_and_chunking_do_not_change_streams(self):
        # per-trajectory noise streams are batching-invariant; the propagated
        # states agree to floating-point associativity (BLAS kernels differ
        # with batch shape), not necessarily bit for bit
        _, p, drift, cov = system(chi=2.0, bath_occupation=1.0, measurement_rate=1.0)
        cfg = TrajectoryConfig(dt=1e-3, duration=0.5, n_traj=50, seed=3)
        a = simulate_conditional_means(drift, cov, p, cfg, chunk_size=7, block_steps=13)
        b = simulate_conditional_means(drift, cov, p, cfg, chunk_size=50, block_steps=4096)
        assert np.allclose(a.final, b.final, rtol=1e-10, atol=1e-12)

    def test_trajectory_range_matches_full_run(self):
        _, p, drift, cov = system(chi=2.0, bath_occupation=1.0, measurement_rate=1.0)
        cfg = TrajectoryConfig(dt=1e-3, duration=0.4, n_traj=40, seed=11)
        full = simulate_conditional_means(drift, cov, p, cfg)
        lo = simulate_conditional_means(drift, cov, p, cfg, traj_range=(0, 17))
        hi = simulate_conditional_means(drift, cov, p, cfg, traj_range=(17, 40))
        assert np.array_equal(np.vstack([lo.final, hi.final]), full.final)


class TestNoiseFreeLimit:
    def test_unmeasured_mean_follows_matrix_exponential(self):
        p = params(bath_occupation=1.0)
        drive = ModelOne(2.0, 3.0)
        drift = drift_matrix(drive, p)
        cov = lyapunov_unconditional(drift, p)
        dt = default_dt(drift, p)
        cfg = TrajectoryConfig(dt=dt, duration=2.0, n_traj=1, seed=1)
        x0 = np.array([1.0, -0.5, 0.25, 2.0])
        res = simulate_conditional_means(drift, cov, p, cfg, x0=x0, keep_paths=True)
        t_end = res.times[-1]
        exact = expm(drift.matrix * t_end) @ x0
        assert np.allclose(res.final[0], exact, rtol=0.0, atol=1e-2 * np.linalg.norm(x0))


class TestLawOfTotalVariance:
    def test_variance_of_means_complements_conditional(self):
        _, p, drift, cov = system(
            chi=2.0, margin=0.5, bath_occupation=5.0, measurement_rate=1.0
        )
        v_unc = lyapunov_unconditional(drift, p)
        dt = default_dt(drift, p, cov.matrix)
        cfg = TrajectoryConfig(dt=dt, duration=7.0, n_traj=1500, seed=2024)
        res = simulate_conditional_means(drift, cov, p, cfg, keep_paths=False)
        target = v_unc.matrix - cov.matrix
        se = covariance_standard_errors(res.stats.covariance, cfg.n_traj)
        assert np.all(np.abs(res.stats.covariance - target) <= 3.0 * se)


class TestTruthAndFilter:
    def test_zero_point_conditioning_fixture(self):
        # chi=0, N=0, eta=1, mu=gamma: steady error 1/2 per quadrature
        p = params(measurement_rate=1.0)
        drift = drift_matrix(ModelOne(0.0, 0.0), p)
        cfg = TrajectoryConfig(dt=1e-3, duration=12.0, n_traj=400, seed=5)
        res = simulate_truth_and_filter(drift, p, cfg)
        assert np.all(np.abs(res.error_sq - 0.5) <= 3.0 * res.error_sq_stderr + 0.01)

    def test_innovations_have_unit_variance_rate(self):
        p = params(bath_occupation=2.0, measurement_rate=1.5)
        drift = drift_matrix(ModelOne(2.0, 3.0), p)
        cfg = TrajectoryConfig(dt=5e-4, duration=5.0, n_traj=200, seed=6)
        res = simulate_truth_and_filter(drift, p, cfg)
        se = np.sqrt(2.0 / res.n_innovations)
        assert np.all(np.abs(res.innovation_var_ratio - 1.0) <= 3.0 * se + 5e-3)

    def test_unmeasured_filter_error_is_unconditional_variance(self):
        p = params(bath_occupation=1.0)
        drive = ModelOne(2.0, 3.0)
        drift = drift_matrix(drive, p)
        v_unc = lyapunov_unconditional(drift, p)
        cov = CovarianceMatrix4(v_unc.matrix, drift.basis)  # filter gain is zero anyway
        cfg = TrajectoryConfig(dt=5e-4, duration=10.0, n_traj=300, seed=7)
        res = simulate_truth_and_filter(drift, p, cfg, cov=cov)
        assert np.all(
            np.abs(res.error_sq - np.diag(v_unc.matrix))
            <= 4.0 * res.error_sq_stderr + 0.02
        )

    def test_near_threshold_sub_zero_point_estimation(self):
        # the optimal collective quadrature is conditioned below 1/2
        chi = 25.0
        delta = float(np.sqrt(624.0))
        p = params(bath_occupation=5.0, measurement_rate=6.0)
        drive = ModelOne(chi, delta)
        drift = drift_matrix(drive, p)
        cov, _ = full_steady_ode(drift, p)
        w, vecs = np.linalg.eigh(cov.matrix)
        u = vecs[:, 0]
        dt = default_dt(drift, p, cov.matrix)
        cfg = TrajectoryConfig(dt=dt, duration=6.0, n_traj=64, seed=8)
        res = simulate_truth_and_filter(
            drift, p, cfg, keep_paths=True, record_stride=200
        )
        keep = res.times > 3.0
        err = (res.true_paths - res.filtered_paths)[:, keep, :] @ u
        observed = float(np.mean(err**2))
        assert observed < 0.5
        assert observed == pytest.approx(w[0], rel=0.25)


class TestWeakConvergence:
    def test_halving_dt_within_monte_carlo_error(self):
        _, p, drift, cov = system(chi=1.0, margin=0.5, bath_occupation=2.0, measurement_rate=0.3)
        dt = default_dt(drift, p, cov.matrix)
        n = 10_000
        covs = []
        for step in (dt, dt / 2):
            cfg = TrajectoryConfig(dt=step, duration=5.0, n_traj=n, seed=99)
            res = simulate_conditional_means(drift, cov, p, cfg, keep_paths=False)
            covs.append(res.stats.covariance)
        se = covariance_standard_errors(covs[0], n)
        assert np.all(np.abs(covs[0] - covs[1]) <= 3.0 * np.sqrt(2.0) * se)


class TestGuards:
    def test_step_too_large(self):
        _, p, drift, cov = system(chi=5.0, measurement_rate=1.0)
        rho = spectral_radius(drift.matrix)
        cfg = TrajectoryConfig(dt=0.2 / rho, duration=1.0, n_traj=1, seed=1)
        with pytest.raises(StepTooLarge):
            simulate_conditional_means(drift, cov, p, cfg)

    def test_default_dt_respects_gate(self):
        _, p, drift, cov = system(chi=25.0, bath_occupation=5.0, measurement_rate=6.0)
        dt = default_dt(drift, p, cov.matrix)
        assert dt * spectral_radius(drift.matrix) <= 0.1


class TestLabFrame:
    def test_undriven_thermal_agreement(self):
        for drive in (ModelOne(0.0, 0.0), ModelTwo(0.0, 0.0)):
            p = params(bath_occupation=1.0, mech_frequency=500.0)
            rep = labframe_rwa_check(drive, p, t_run=10.0)
            assert rep.deviation < 1e-6

    def test_modulated_coupling_deviation_small(self):
        p = params(bath_occupation=1.0, mech_frequency=1e3)
        rep = labframe_rwa_check(ModelOne(5.0, 5.0), p)
        assert rep.deviation < 0.1

    def test_constant_coupling_deviation_small(self):
        p = params(bath_occupation=1.0, mech_frequency=1e3)
        rep = labframe_rwa_check(ModelTwo(5.0, 5.0), p)
        assert rep.deviation < 0.1

    def test_frequency_gate(self):
        p = params(bath_occupation=1.0, mech_frequency=50.0)
        with pytest.raises(FrequencyTooLow):
            labframe_rwa_check(ModelOne(5.0, 5.0), p)

    def test_requires_symmetric_damping(self):
        p = OscillatorPairParams(1.2, 0.8, bath_occupation=1.0, mech_frequency=1e4)
        with pytest.raises(AsymmetryUnsupported):
            labframe_rwa_check(ModelTwo(5.0, 8.0), p)

    def test_period_map_matches_direct_integration(self):
        # independent route: integrate the full time-dependent covariance ODE
        from scipy.integrate import solve_ivp

        from pairamp.trajectories import _demod_blocks, _lab_drift_fn

        p = params(bath_occupation=1.0, mech_frequency=150.0)
        drive = ModelOne(1.0, 1.0)
        rep = labframe_rwa_check(drive, p, t_run=12.0)

        a_of_t, omega_r, _ = _lab_drift_fn(drive, p, p.mech_frequency)
        diff = 2.0 * (p.bath_occupation + 0.5) * np.eye(4)

        def rhs(t, y):
            v = y.reshape(4, 4)
            a = a_of_t(t)
            return (a @ v + v @ a.T + diff).ravel()

        t_end = 12.0
        sample_t = np.linspace(t_end / 2, t_end, 4001)
        sol = solve_ivp(
            rhs,
            (0.0, t_end),
            ((p.bath_occupation + 0.5) * np.eye(4)).ravel(),
            t_eval=sample_t,
            rtol=1e-10,
            atol=1e-12,
            method="DOP853",
        )
        acc = np.zeros((4, 4))
        for tk, yk in zip(sol.t, sol.y.T):
            r = _demod_blocks(tk, omega_r, flip_y=True)
            acc += r @ yk.reshape(4, 4) @ r.T
        v_direct = acc / len(sol.t)
        from pairamp.model import TransformDirection, transform_matrix

        tm = transform_matrix(TransformDirection.INDIVIDUAL_TO_COLLECTIVE)
        v_direct = tm @ v_direct @ tm.T
        scale = np.max(np.abs(rep.rotating_covariance.matrix))
        assert np.max(np.abs(v_direct - rep.lab_covariance.matrix)) / scale < 5e-3
