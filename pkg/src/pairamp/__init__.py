"""Steady-state entanglement of parametrically driven oscillator pairs.

Simulates two mechanical oscillators under continuous weak position
measurement, driven either by a modulated inter-oscillator coupling or by
constant coupling with local parametric drives.  Provides closed-form,
algebraic, ODE, and Monte Carlo routes to the conditional steady state,
which cross-validate one another.
"""

from .closedform import (
    EntanglementResult,
    MuScanResult,
    SqueezeAngle,
    min_separability_over_mu,
    separability,
    separability_for_drive,
    snr,
    squeeze_angle,
)
from .errors import (
    AsymmetryUnsupported,
    BasisMismatch,
    ConfigError,
    Diverged,
    FrequencyTooLow,
    NoConvergence,
    NonFinite,
    NotConverged,
    NotHurwitz,
    NumericalError,
    PairampError,
    StepTooLarge,
)
from .model import (
    Basis,
    DriftMatrix4,
    DriveModel,
    ModelOne,
    ModelTwo,
    OscillatorPairParams,
    PairLabel,
    PairSubsystem,
    ThresholdReport,
    TransformDirection,
    chi_from_lab_coupling,
    drift_matrix,
    drift_matrix_individual,
    pair_drift_block,
    quadrature_transform,
    reduce_to_pairs,
    symplectic_form,
    threshold,
    transform_matrix,
    v0,
)
from .riccati import (
    CovarianceMatrix4,
    PairCovariance,
    full_riccati_rhs,
    full_steady_ode,
    integrate_to_steady,
    lyapunov_unconditional,
    pair_lyapunov,
    pair_riccati_rhs,
    pair_steady_ode,
    rotated_variance,
    steady_algebraic,
)
from .trajectories import (
    ConditionalMeansResult,
    EnsembleStats,
    RwaCheckReport,
    Scheme,
    TrajectoryConfig,
    TruthFilterResult,
    default_dt,
    labframe_rwa_check,
    simulate_conditional_means,
    simulate_truth_and_filter,
    spectral_radius,
)

__version__ = "0.1.0"
