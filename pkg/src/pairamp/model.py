"""Parameter types, drive schemes, and drift-matrix construction.

Two driving schemes produce the same pair-decoupled quadrature dynamics:

* modulated coupling ("model one"): the inter-oscillator spring constant is
  modulated at twice the drive frequency ``2*omega_d`` with
  ``omega_d = omega_m - detuning``; the collective quadratures
  ``X+, X-, Y+, Y-`` split into the non-commuting pairs ``(X+, Y+)`` and
  ``(X-, Y-)``.
* constant coupling ("model two"): a static coupling of rate ``coupling``
  (half the normal-mode splitting) plus local parametric drives of rate
  ``chi`` on each oscillator; the natural variables are ``U1, U2, V1, V2``
  which split into the commuting pairs ``(U1, U2)`` and ``(V1, V2)``.

Every pair reduces to the same canonical 2x2 drift block

    [[-gamma, s - delta], [s + delta, -gamma]]

where ``s`` is the signed parametric rate (positive for the first pair of
each scheme, negative for the second) and ``delta`` is the effective
detuning (the bare detuning, or the coupling rate for the constant-coupling
scheme).  The sign convention is fixed so that the conditional-variance
equations in :mod:`pairamp.riccati` follow from this block by standard
covariance propagation.

At ``delta == chi`` the upper-right entry of the first pair block vanishes:
``X+`` (and ``Y-``) evolve under damping alone, so weak measurements of the
amplified partners act as back-action-free probes of those quadratures.

Unequal damping rates are supported only by the constant-coupling scheme,
where they shift the effective parametric rates to
``chi -/+ (gamma1 - gamma2)/2`` for the two pairs.  All rates are naturally
expressed in units of the mean damping rate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import AsymmetryUnsupported, ConfigError

__all__ = [
    "OscillatorPairParams",
    "ModelOne",
    "ModelTwo",
    "DriveModel",
    "PairLabel",
    "PairSubsystem",
    "Basis",
    "DriftMatrix4",
    "ThresholdReport",
    "TransformDirection",
    "reduce_to_pairs",
    "pair_drift_block",
    "drift_matrix",
    "threshold",
    "transform_matrix",
    "quadrature_transform",
    "symplectic_form",
    "v0",
    "chi_from_lab_coupling",
]


@dataclass(frozen=True)
class OscillatorPairParams:
    """Shared physical rates of the two oscillators.

    gamma1, gamma2 : damping rates of the two oscillators
    bath_occupation : mean thermal phonon number N of both baths
    efficiency : quantum efficiency eta of the continuous measurement, (0, 1]
    measurement_rate : measurement (back-action) rate mu per quadrature
    mech_frequency : mechanical resonance frequency, only consulted by the
        lab-frame rotating-wave validation
    """

    gamma1: float
    gamma2: float
    bath_occupation: float = 0.0
    efficiency: float = 1.0
    measurement_rate: float = 0.0
    mech_frequency: float | None = None

    def __post_init__(self):
        if not (self.gamma1 > 0 and self.gamma2 > 0):
            raise ConfigError("damping rates must be positive")
        if not (0.0 < self.efficiency <= 1.0):
            raise ConfigError("efficiency must lie in (0, 1]")
        if self.measurement_rate < 0:
            raise ConfigError("measurement rate must be >= 0")
        if self.bath_occupation < 0:
            raise ConfigError("bath occupation must be >= 0")
        if self.mech_frequency is not None and not self.mech_frequency > 0:
            raise ConfigError("mechanical frequency must be positive when set")

    @property
    def gamma_mean(self) -> float:
        return 0.5 * (self.gamma1 + self.gamma2)

    @property
    def is_symmetric(self) -> bool:
        return self.gamma1 == self.gamma2


@dataclass(frozen=True)
class ModelOne:
    """Modulated inter-oscillator coupling: parametric rate plus detuning."""

    chi: float
    detuning: float

    def __post_init__(self):
        if self.chi < 0:
            raise ConfigError("chi must be >= 0 (fold signs into quadrature labels)")


@dataclass(frozen=True)
class ModelTwo:
    """Constant coupling with local parametric drives on resonance."""

    chi: float
    coupling: float

    def __post_init__(self):
        if self.chi < 0:
            raise ConfigError("chi must be >= 0 (fold signs into quadrature labels)")
        if self.coupling < 0:
            raise ConfigError("coupling must be >= 0 (fold signs into quadrature labels)")


DriveModel = ModelOne | ModelTwo


class PairLabel(enum.Enum):
    PLUS = "plus"
    MINUS = "minus"
    U = "u"
    V = "v"


#: labels whose canonical drift block carries the parametric rate with a minus sign
_NEGATIVE_PATTERN = frozenset({PairLabel.MINUS, PairLabel.V})


@dataclass(frozen=True)
class PairSubsystem:
    """One decoupled two-quadrature subsystem.

    ``chi_eff`` is the magnitude of the pair's parametric rate; the sign
    pattern of the drift block is selected by ``label`` (see
    :attr:`signed_chi`).  ``chi_eff`` itself may be negative for extreme
    damping asymmetry, in which case the pattern simply flips.
    """

    label: PairLabel
    chi_eff: float
    delta_eff: float
    gamma_mean: float

    def __post_init__(self):
        if not self.gamma_mean > 0:
            raise ConfigError("pair damping rate must be positive")

    @property
    def signed_chi(self) -> float:
        if self.label in _NEGATIVE_PATTERN:
            return -self.chi_eff
        return self.chi_eff


class Basis(enum.Enum):
    #: ordering (X+, X-, Y+, Y-); pairs live at index sets (0, 2) and (1, 3)
    COLLECTIVE_XY = "collective_xy"
    #: ordering (U1, U2, V1, V2); pairs live at index sets (0, 1) and (2, 3)
    UV = "uv"
    #: ordering (X1, Y1, X2, Y2); no pair decoupling is implied
    INDIVIDUAL = "individual"


#: index sets of the two decoupled 2x2 blocks, per basis
PAIR_INDICES = {
    Basis.COLLECTIVE_XY: ((0, 2), (1, 3)),
    Basis.UV: ((0, 1), (2, 3)),
}


@dataclass(frozen=True)
class DriftMatrix4:
    matrix: np.ndarray
    basis: Basis

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise ConfigError("drift matrix must be 4x4")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class ThresholdReport:
    chi_th: float
    stable: bool


def reduce_to_pairs(
    drive: DriveModel, params: OscillatorPairParams
) -> tuple[PairSubsystem, PairSubsystem]:
    """Split a drive scheme into its two decoupled quadrature pairs.

    The modulated-coupling scheme decouples only for equal damping rates.
    For the constant-coupling scheme a damping asymmetry shifts the
    effective parametric rates to ``chi -/+ (gamma1 - gamma2)/2`` while the
    shared detuning stays at the coupling rate.
    """
    gbar = params.gamma_mean
    if isinstance(drive, ModelOne):
        if not params.is_symmetric:
            raise AsymmetryUnsupported(
                "modulated coupling does not decouple for gamma1 != gamma2"
            )
        return (
            PairSubsystem(PairLabel.PLUS, drive.chi, drive.detuning, gbar),
            PairSubsystem(PairLabel.MINUS, drive.chi, drive.detuning, gbar),
        )
    half_asym = 0.5 * (params.gamma1 - params.gamma2)
    return (
        PairSubsystem(PairLabel.U, drive.chi - half_asym, drive.coupling, gbar),
        PairSubsystem(PairLabel.V, drive.chi + half_asym, drive.coupling, gbar),
    )


def pair_drift_block(pair: PairSubsystem) -> np.ndarray:
    """Canonical 2x2 drift block [[-g, s-d], [s+d, -g]] of one pair."""
    s, d, g = pair.signed_chi, pair.delta_eff, pair.gamma_mean
    return np.array([[-g, s - d], [s + d, -g]])


def drift_matrix(drive: DriveModel, params: OscillatorPairParams) -> DriftMatrix4:
    """Assemble the 4x4 mean-evolution drift matrix of a drive scheme.

    The output is block-decoupled: couplings appear only inside the two
    pair index sets of the basis (``(X+, Y+)``/``(X-, Y-)`` or
    ``(U1, U2)``/``(V1, V2)``).
    """
    pairs = reduce_to_pairs(drive, params)
    basis = Basis.COLLECTIVE_XY if isinstance(drive, ModelOne) else Basis.UV
    a = np.zeros((4, 4))
    for pair, (i, j) in zip(pairs, PAIR_INDICES[basis]):
        block = pair_drift_block(pair)
        a[i, i], a[i, j] = block[0, 0], block[0, 1]
        a[j, i], a[j, j] = block[1, 0], block[1, 1]
    return DriftMatrix4(a, basis)


def drift_matrix_individual(drive: DriveModel, params: OscillatorPairParams) -> DriftMatrix4:
    """Drift in the individual basis (X1, Y1, X2, Y2).

    Unlike :func:`drift_matrix` this supports unequal damping for the
    modulated-coupling scheme, where the pairs no longer decouple; the
    full-matrix covariance engine can integrate the result, but there are
    no decoupled-pair solutions to compare against in that regime.
    """
    g1, g2 = params.gamma1, params.gamma2
    a = np.diag([-g1, -g1, -g2, -g2]).astype(float)
    if isinstance(drive, ModelOne):
        chi, delta = drive.chi, drive.detuning
        # per-oscillator rotation at the detuning plus cross two-mode squeezing,
        # in the sign convention of the canonical pair block
        for (x, y) in ((0, 1), (2, 3)):
            a[x, y] += -delta
            a[y, x] += delta
        a[0, 3] += chi   # dX1 <- Y2
        a[3, 0] += chi   # dY2 <- X1
        a[1, 2] += chi   # dY1 <- X2
        a[2, 1] += chi   # dX2 <- Y1
    else:
        chi, gam = drive.chi, drive.coupling
        a[0, 0] += chi
        a[1, 1] += -chi
        a[2, 2] += chi
        a[3, 3] += -chi
        a[0, 3] += gam   # dX1 <- Y2
        a[3, 0] += -gam  # dY2 <- X1
        a[2, 1] += gam   # dX2 <- Y1
        a[1, 2] += -gam  # dY1 <- X2
    return DriftMatrix4(a, Basis.INDIVIDUAL)


def threshold(pair: PairSubsystem) -> ThresholdReport:
    """Parametric instability threshold of one pair.

    ``chi_th = sqrt(gamma^2 + delta^2)``; the unconditional dynamics are
    convergent iff ``|chi_eff| < chi_th`` (the boundary counts as unstable,
    although measurement conditioning can still stabilise the conditional
    covariance there).
    """
    chi_th = float(np.hypot(pair.gamma_mean, pair.delta_eff))
    return ThresholdReport(chi_th=chi_th, stable=abs(pair.chi_eff) < chi_th)


class TransformDirection(enum.Enum):
    INDIVIDUAL_TO_COLLECTIVE = "individual_to_collective"
    COLLECTIVE_TO_INDIVIDUAL = "collective_to_individual"
    INDIVIDUAL_TO_UV = "individual_to_uv"
    UV_TO_INDIVIDUAL = "uv_to_individual"


_SQ2 = np.sqrt(2.0)

# rows (X+, X-, Y+, Y-) in terms of (X1, Y1, X2, Y2)
_T_COLLECTIVE = np.array(
    [[1, 0, 1, 0], [1, 0, -1, 0], [0, 1, 0, 1], [0, 1, 0, -1]]
) / _SQ2

# rows (U1, U2, V1, V2) in terms of (X1, Y1, X2, Y2)
_T_UV = np.array(
    [[1, 0, 0, 1], [1, 0, 0, -1], [0, 1, -1, 0], [0, 1, 1, 0]]
) / _SQ2

_TRANSFORMS = {
    TransformDirection.INDIVIDUAL_TO_COLLECTIVE: _T_COLLECTIVE,
    TransformDirection.COLLECTIVE_TO_INDIVIDUAL: _T_COLLECTIVE.T,
    TransformDirection.INDIVIDUAL_TO_UV: _T_UV,
    TransformDirection.UV_TO_INDIVIDUAL: _T_UV.T,
}


def transform_matrix(direction: TransformDirection) -> np.ndarray:
    """Orthogonal matrix for one basis change (copy; safe to mutate)."""
    return _TRANSFORMS[direction].copy()


def quadrature_transform(values, direction: TransformDirection) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape[-1] != 4:
        raise ConfigError("expected 4-component quadrature vectors")
    return v @ _TRANSFORMS[direction].T


def symplectic_form(basis: Basis) -> np.ndarray:
    """Matrix of commutators Omega_ij = -i [r_i, r_j] for a basis ordering."""
    omega = np.zeros((4, 4))
    if basis is Basis.INDIVIDUAL:
        conj = ((0, 1), (2, 3))
    elif basis is Basis.COLLECTIVE_XY:
        conj = ((0, 2), (1, 3))   # [X+, Y+] = [X-, Y-] = i
    else:
        conj = ((0, 2), (1, 3))   # [U1, V1] = [U2, V2] = i
    for i, j in conj:
        omega[i, j] = 1.0
        omega[j, i] = -1.0
    return omega


def v0(params: OscillatorPairParams) -> float:
    """Unconditional per-quadrature variance scale N + 1/2 + mu/(2 gamma).

    Thermal plus zero-point occupation plus measurement back-action; uses
    the mean damping rate when the oscillators are asymmetric.
    """
    return (
        params.bath_occupation
        + 0.5
        + params.measurement_rate / (2.0 * params.gamma_mean)
    )


def chi_from_lab_coupling(g: float, mass: float, omega_m: float) -> float:
    """Convert a lab-frame modulation amplitude to the parametric rate.

    Documentation helper only (chi = g / (2 m omega_m)); solvers take the
    rotating-frame rates directly.
    """
    return g / (2.0 * mass * omega_m)
