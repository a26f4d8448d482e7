"""Measurement-based quadratic phase gate.

The gate couples the input to an ancilla with a QND sum gate, measures the
input mode at LO phase ``arctan(kappa)``, rescales the outcome by
``sqrt(1 + kappa**2)`` and feeds it forward as a momentum displacement on the
ancilla. With finitely squeezed resources the output picks up the additive
noise of the three-ancilla QND implementation (ancillae A, B, C).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gaussian import (
    VACUUM_VARIANCE,
    GaussianError,
    GaussianState,
    apply,
    homodyne_update,
    make_squeezed_vacuum,
    qnd_sum,
    rotation_matrix,
    shear,
)

# Noise coefficients of the QND implementation with a shared ancilla B.
C_B = (math.sqrt(5.0) - 1.0) / (2.0 * 5.0**0.25)
D_B = 5.0**-0.25
C_C = (math.sqrt(5.0) + 1.0) / (2.0 * 5.0**0.25)

DEFAULT_ANCILLAE_DB = (-4.3, -4.9, -5.2)


@dataclass(frozen=True)
class GateConfig:
    kappa: float

    def __post_init__(self):
        if not math.isfinite(self.kappa):
            raise GaussianError(f"kappa must be finite, got {self.kappa}")

    @property
    def lo_phase(self) -> float:
        return math.atan(self.kappa)

    @property
    def feedforward_gain(self) -> float:
        return math.sqrt(1.0 + self.kappa**2)


@dataclass(frozen=True)
class AncillaSpec:
    """Squeezing levels (dB, negative = squeezed) of ancillae A, B and C.

    ``-inf`` stands for an infinitely squeezed ancilla.
    """

    r_a_db: float = DEFAULT_ANCILLAE_DB[0]
    r_b_db: float = DEFAULT_ANCILLAE_DB[1]
    r_c_db: float = DEFAULT_ANCILLAE_DB[2]

    def __post_init__(self):
        for name in ("r_a_db", "r_b_db", "r_c_db"):
            v = float(getattr(self, name))
            if math.isnan(v) or v == math.inf:
                raise GaussianError(f"{name} must be finite or -inf, got {v}")
            object.__setattr__(self, name, v)

    @classmethod
    def common(cls, level_db: float) -> "AncillaSpec":
        return cls(level_db, level_db, level_db)

    @classmethod
    def vacuum(cls) -> "AncillaSpec":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def infinite(cls) -> "AncillaSpec":
        return cls(-math.inf, -math.inf, -math.inf)

    @property
    def factors(self) -> tuple[float, float, float]:
        """``e^{-2r}`` for A, B, C."""
        return tuple(10.0 ** (v / 10.0) for v in (self.r_a_db, self.r_b_db, self.r_c_db))


def measurement_params(kappa: float) -> tuple[float, float]:
    """LO phase (radians) and feedforward gain realizing gate strength ``kappa``."""
    cfg = GateConfig(kappa)
    return cfg.lo_phase, cfg.feedforward_gain


def _check_single_mode(state: GaussianState) -> None:
    if state.n_modes != 1:
        raise GaussianError(f"gate input must be single-mode, got {state.n_modes} modes")


def ideal_gate_channel(input_state: GaussianState, kappa: float, ancilla_r_db: float) -> GaussianState:
    """Single-ancilla teleportation pipeline, averaged over measurement outcomes.

    Builds ``input (x) squeezed(ancilla_r_db)``, applies the QND sum gate,
    conditions on the homodyne outcome of the input mode and displaces the
    ancilla momentum by ``gain * outcome``. Because the feedforward is linear
    in the outcome, the outcome average is the conditional covariance plus a
    rank-one term along ``(posterior gain + feedforward)``.
    """
    _check_single_mode(input_state)
    theta, g = measurement_params(kappa)
    ancilla = make_squeezed_vacuum(ancilla_r_db, "x")
    coupled = apply(input_state.tensor(ancilla), qnd_sum())
    upd = homodyne_update(coupled, 0, theta)
    kick = np.array([0.0, g])
    lever = upd.gain + kick
    mean = upd.rest_mean + kick * upd.outcome_mean
    cov = upd.rest_cov + upd.outcome_var * np.outer(lever, lever)
    return GaussianState(mean, cov)


def noise_channel(kappa: float, ancillae: AncillaSpec) -> tuple[np.ndarray, np.ndarray]:
    """Transfer matrix and additive noise (absolute units) of the finite-squeezing gate.

    ``x_out = x_in + e^{-r_A} x_A - c_B e^{-r_B} x_B``
    ``p_out = p_in + kappa x_in + d_B kappa e^{-r_B} x_B + c_C e^{-r_C} p_C``

    The shared ``x_B`` term correlates the x and p noise.
    """
    u_a, u_b, u_c = ancillae.factors
    A = np.array([[1.0, 0.0], [kappa, 1.0]])
    cross = -C_B * D_B * kappa * u_b
    N = VACUUM_VARIANCE * np.array(
        [
            [u_a + C_B**2 * u_b, cross],
            [cross, D_B**2 * kappa**2 * u_b + C_C**2 * u_c],
        ]
    )
    return A, N


def apply_noisy_gate(input_state: GaussianState, kappa: float, ancillae: AncillaSpec) -> GaussianState:
    _check_single_mode(input_state)
    input_state.check_physical()
    A, N = noise_channel(kappa, ancillae)
    return GaussianState(A @ input_state.mean, A @ input_state.cov @ A.T + N)


@dataclass(frozen=True)
class TrajectoryRecord:
    outcome: float
    pre_feedforward: GaussianState
    post_feedforward: GaussianState
    kappa: float
    ancillae: AncillaSpec
    feedforward: bool = True


@dataclass(frozen=True)
class _TrajectoryModel:
    """Joint Gaussian of (x_out, p_pre, raw outcome) for one gate configuration."""

    outcome_mean: float
    outcome_var: float
    pre_mean: np.ndarray
    pre_cov: np.ndarray
    gain_vec: np.ndarray
    feedforward_gain: float

    def pre_means(self, outcomes):
        outcomes = np.asarray(outcomes, dtype=float)
        return self.pre_mean + np.multiply.outer(outcomes - self.outcome_mean, self.gain_vec)

    def post_means(self, outcomes):
        outcomes = np.asarray(outcomes, dtype=float)
        kick = np.multiply.outer(outcomes, np.array([0.0, self.feedforward_gain]))
        return self.pre_means(outcomes) + kick


def _trajectory_model(input_state: GaussianState, kappa: float, ancillae: AncillaSpec) -> _TrajectoryModel:
    # Sources: (x_in, p_in, n_x, n_p) with n ~ N(0, N) from noise_channel.
    _check_single_mode(input_state)
    input_state.check_physical()
    _, N = noise_channel(kappa, ancillae)
    theta, g = measurement_params(kappa)
    mu = np.concatenate([input_state.mean, [0.0, 0.0]])
    sigma = np.zeros((4, 4))
    sigma[:2, :2] = input_state.cov
    sigma[2:, 2:] = N
    # rows: x_out, p_pre (output momentum before the kick), raw homodyne outcome
    L = np.array(
        [
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [np.sin(theta), np.cos(theta), 0.0, 0.0],
        ]
    )
    m = L @ mu
    V = L @ sigma @ L.T
    var_o = V[2, 2]
    if var_o < 1e-12:
        raise GaussianError("degenerate homodyne outcome distribution")
    gain_vec = V[:2, 2] / var_o
    pre_cov = V[:2, :2] - np.outer(V[:2, 2], V[:2, 2]) / var_o
    return _TrajectoryModel(float(m[2]), float(var_o), m[:2], pre_cov, gain_vec, g)


def run_trajectory(
    input_state: GaussianState,
    kappa: float,
    ancillae: AncillaSpec,
    rng: np.random.Generator,
    feedforward: bool = True,
    outcome: float | None = None,
) -> TrajectoryRecord:
    """One Monte Carlo run of the gate.

    The raw homodyne outcome ``p0`` of ``x sin(theta) + p cos(theta)`` on the
    input is drawn from its exact marginal (or taken from ``outcome``). The
    output mode is conditioned on it and displaced by ``gain * p0`` in momentum.
    Averaging over outcomes reproduces :func:`apply_noisy_gate`.
    """
    model = _trajectory_model(input_state, kappa, ancillae)
    if outcome is None:
        outcome = float(rng.normal(model.outcome_mean, math.sqrt(model.outcome_var)))
    pre = GaussianState(model.pre_means(outcome), model.pre_cov)
    post = GaussianState(model.post_means(outcome), model.pre_cov) if feedforward else pre
    return TrajectoryRecord(outcome, pre, post, kappa, ancillae, feedforward)


def run_trajectories(
    input_state: GaussianState,
    kappa: float,
    ancillae: AncillaSpec,
    n: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized batch of ``n`` trajectories.

    Returns raw outcomes ``(n,)``, post-feedforward means ``(n, 2)`` and the
    shared (outcome-independent) covariance.
    """
    model = _trajectory_model(input_state, kappa, ancillae)
    outcomes = rng.normal(model.outcome_mean, math.sqrt(model.outcome_var), size=n)
    return outcomes, model.post_means(outcomes), model.pre_cov.copy()


def decompose_shear(kappa: float) -> tuple[float, float, float]:
    """Write ``shear(kappa)`` as ``R(phi2) diag(e^{-r}, e^{r}) R(phi1)``.

    Returns ``(phi2, r, phi1)`` with ``r >= 0`` and ``phi1`` in ``(-pi/2, pi/2]``.
    """
    if not math.isfinite(kappa):
        raise GaussianError(f"kappa must be finite, got {kappa}")
    if kappa == 0.0:
        return 0.0, 0.0, 0.0
    r = math.asinh(abs(kappa) / 2.0)
    small = math.exp(-2.0 * r)
    # R(phi1)^T e_1 spans the eigenvector of M^T M with eigenvalue e^{-2r}
    phi1 = math.atan((1.0 + kappa**2 - small) / kappa)
    M = shear(kappa).matrix
    Q = M @ rotation_matrix(-phi1) @ np.diag([math.exp(r), math.exp(-r)])
    phi2 = math.atan2(Q[1, 0], Q[0, 0])
    return phi2, r, phi1


def recompose(phi2: float, r: float, phi1: float) -> np.ndarray:
    return rotation_matrix(phi2) @ np.diag([math.exp(-r), math.exp(r)]) @ rotation_matrix(phi1)
