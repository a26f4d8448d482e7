"""Phase-space representation of multimode Gaussian states.

Conventions used throughout the package:

* ``[x, p] = i/2`` and ``a = x + i p``, so the vacuum has covariance
  ``diag(1/4, 1/4)``.
* Quadratures are interleaved: ``(x1, p1, x2, p2, ...)``.
* Reported variances are normalized to the shot-noise limit (SNL):
  ``v = 4 V`` so that vacuum gives ``v = 1``.
* Homodyne phase ``theta`` selects the quadrature ``x sin(theta) + p cos(theta)``.
  ``theta = 0`` measures ``p``. Many toolkits use the opposite convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

VACUUM_VARIANCE = 0.25
SNL_SCALE = 1.0 / VACUUM_VARIANCE

_SYMMETRY_RTOL = 1e-12
_PHYSICAL_ATOL = 1e-9
_DEGENERATE_VARIANCE = 1e-12


class GaussianError(ValueError):
    """Raised for invalid Gaussian states, transforms or measurements."""


def symplectic_form(n_modes: int) -> np.ndarray:
    """Standard symplectic form for interleaved ordering."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def _mode_indices(modes: Sequence[int]) -> list[int]:
    idx = []
    for m in modes:
        idx.extend((2 * m, 2 * m + 1))
    return idx


@dataclass(frozen=True)
class GaussianState:
    """Mean vector and covariance matrix of ``n_modes`` optical modes.

    ``cov`` is in absolute units (vacuum = 1/4).
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if mean.size == 0 or mean.size % 2:
            raise GaussianError(f"mean must have even, positive length, got {mean.size}")
        if cov.shape != (mean.size, mean.size):
            raise GaussianError(f"cov shape {cov.shape} does not match mean length {mean.size}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise GaussianError("state moments must be finite")
        scale = max(np.max(np.abs(cov)), 1.0)
        if np.max(np.abs(cov - cov.T)) > _SYMMETRY_RTOL * scale:
            raise GaussianError("covariance matrix is not symmetric")
        cov = 0.5 * (cov + cov.T)
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2

    @property
    def normalized_cov(self) -> np.ndarray:
        """Covariance in shot-noise units (vacuum = identity)."""
        return SNL_SCALE * self.cov

    def symplectic_eigenvalues(self) -> np.ndarray:
        """Williamson eigenvalues in absolute units (vacuum = 1/4)."""
        omega = symplectic_form(self.n_modes)
        ev = np.abs(np.linalg.eigvals(1j * omega @ self.cov))
        return np.sort(ev)[::2]

    def is_physical(self, atol: float = _PHYSICAL_ATOL) -> bool:
        return bool(np.all(self.symplectic_eigenvalues() >= VACUUM_VARIANCE - atol))

    def purity(self) -> float:
        return float(VACUUM_VARIANCE**self.n_modes / np.sqrt(np.linalg.det(self.cov)))

    def reduced(self, modes: Sequence[int]) -> "GaussianState":
        """Marginal state of the listed modes (partial trace)."""
        idx = _mode_indices(modes)
        return GaussianState(self.mean[idx], self.cov[np.ix_(idx, idx)])

    def tensor(self, other: "GaussianState") -> "GaussianState":
        n = self.mean.size
        cov = np.zeros((n + other.mean.size,) * 2)
        cov[:n, :n] = self.cov
        cov[n:, n:] = other.cov
        return GaussianState(np.concatenate([self.mean, other.mean]), cov)

    def displaced(self, delta: Sequence[float]) -> "GaussianState":
        return GaussianState(self.mean + np.asarray(delta, dtype=float), self.cov)

    def check_physical(self) -> None:
        if not self.is_physical():
            nu = self.symplectic_eigenvalues().min()
            raise GaussianError(f"unphysical state: smallest symplectic eigenvalue {nu:.6g} < 1/4")


@dataclass(frozen=True)
class SymplecticTransform:
    """Affine phase-space map ``mean -> S mean + d``, ``cov -> S cov S^T``."""

    matrix: np.ndarray
    displacement: np.ndarray

    def __post_init__(self):
        S = np.array(self.matrix, dtype=float)
        d = np.array(self.displacement, dtype=float).reshape(-1)
        if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] % 2:
            raise GaussianError(f"bad symplectic matrix shape {S.shape}")
        if d.size != S.shape[0]:
            raise GaussianError("displacement length does not match matrix")
        S.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "matrix", S)
        object.__setattr__(self, "displacement", d)

    @classmethod
    def linear(cls, matrix) -> "SymplecticTransform":
        matrix = np.asarray(matrix, dtype=float)
        return cls(matrix, np.zeros(matrix.shape[0]))

    @classmethod
    def identity(cls, n_modes: int = 1) -> "SymplecticTransform":
        return cls.linear(np.eye(2 * n_modes))

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0] // 2

    def symplectic_residual(self) -> float:
        omega = symplectic_form(self.n_modes)
        return float(np.max(np.abs(self.matrix @ omega @ self.matrix.T - omega)))

    def is_symplectic(self, atol: float = 1e-10) -> bool:
        return self.symplectic_residual() <= atol

    def __matmul__(self, other: "SymplecticTransform") -> "SymplecticTransform":
        """``(a @ b)`` applies ``b`` first, then ``a``."""
        if self.n_modes != other.n_modes:
            raise GaussianError("cannot compose transforms of different arity")
        return SymplecticTransform(
            self.matrix @ other.matrix, self.matrix @ other.displacement + self.displacement
        )

    def inverse(self) -> "SymplecticTransform":
        inv = np.linalg.inv(self.matrix)
        return SymplecticTransform(inv, -inv @ self.displacement)


# --- state constructors ---------------------------------------------------


def vacuum(n_modes: int = 1) -> GaussianState:
    return GaussianState(np.zeros(2 * n_modes), VACUUM_VARIANCE * np.eye(2 * n_modes))


def make_coherent(alpha_x: float, alpha_p: float) -> GaussianState:
    """Coherent state with ``<x> = alpha_x`` and ``<p> = alpha_p``."""
    return GaussianState([alpha_x, alpha_p], VACUUM_VARIANCE * np.eye(2))


def db_to_factor(level_db: float) -> float:
    """Variance factor ``e^{-2r}`` for a squeezing level in dB (negative = squeezed)."""
    if not np.isfinite(level_db):
        raise GaussianError(f"squeezing level must be finite, got {level_db}")
    return 10.0 ** (level_db / 10.0)


def make_squeezed_vacuum(squeezing_db: float, squeezed_quadrature: str = "x") -> GaussianState:
    """Pure minimum-uncertainty squeezed vacuum.

    The squeezed quadrature has normalized variance ``10**(squeezing_db/10)``;
    the conjugate one is anti-squeezed by the inverse factor.
    """
    u = db_to_factor(squeezing_db)
    if squeezed_quadrature == "x":
        diag = (u, 1.0 / u)
    elif squeezed_quadrature == "p":
        diag = (1.0 / u, u)
    else:
        raise GaussianError(f"squeezed_quadrature must be 'x' or 'p', got {squeezed_quadrature!r}")
    return GaussianState(np.zeros(2), VACUUM_VARIANCE * np.diag(diag))


# --- elementary transforms --------------------------------------------------


def rotation_matrix(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def rotation(phi: float) -> SymplecticTransform:
    """Phase-space rotation by ``phi`` (counter-clockwise in the x-p plane)."""
    return SymplecticTransform.linear(rotation_matrix(phi))


def squeezer(r: float) -> SymplecticTransform:
    """``diag(e^{-r}, e^{r})``: squeezes x for ``r > 0``."""
    return SymplecticTransform.linear(np.diag([np.exp(-r), np.exp(r)]))


def shear(kappa: float) -> SymplecticTransform:
    """Quadratic phase gate ``exp(i kappa x^2)``: ``p -> p + kappa x``."""
    if not np.isfinite(kappa):
        raise GaussianError(f"kappa must be finite, got {kappa}")
    return SymplecticTransform.linear([[1.0, 0.0], [kappa, 1.0]])


def fourier() -> SymplecticTransform:
    """Fourier gate, ``(x, p) -> (-p, x)``."""
    return SymplecticTransform.linear([[0.0, -1.0], [1.0, 0.0]])


def displace_z(s: float) -> SymplecticTransform:
    """Momentum shift ``Z(s) = exp(2isx)``; shifts ``<p>`` by ``s``."""
    return SymplecticTransform(np.eye(2), [0.0, s])


def displace_x(s: float) -> SymplecticTransform:
    """Position shift ``X(s) = exp(-2isp)``; shifts ``<x>`` by ``s``."""
    return SymplecticTransform(np.eye(2), [s, 0.0])


def controlled_z() -> SymplecticTransform:
    """``C_Z = exp(2i x1 x2)``: ``p1 -> p1 + x2``, ``p2 -> p2 + x1``."""
    S = np.eye(4)
    S[1, 2] = 1.0
    S[3, 0] = 1.0
    return SymplecticTransform.linear(S)


def qnd_sum() -> SymplecticTransform:
    """Ideal QND coupling ``exp(-2i x_in p_A)`` on modes ``(in, A)``.

    ``x_A -> x_A + x_in`` and ``p_in -> p_in - p_A``.
    """
    S = np.eye(4)
    S[2, 0] = 1.0
    S[1, 3] = -1.0
    return SymplecticTransform.linear(S)


# --- channels and measurements ----------------------------------------------


def apply(state: GaussianState, t: SymplecticTransform, modes: Sequence[int] | None = None) -> GaussianState:
    """Apply ``t`` to the listed modes of ``state`` (all modes by default)."""
    if modes is None:
        modes = list(range(state.n_modes))
    modes = list(modes)
    if len(modes) != t.n_modes:
        raise GaussianError(f"transform acts on {t.n_modes} modes but {len(modes)} were given")
    if len(set(modes)) != len(modes):
        raise GaussianError(f"mode indices must be distinct: {modes}")
    for m in modes:
        if not 0 <= m < state.n_modes:
            raise GaussianError(f"mode {m} out of range for a {state.n_modes}-mode state")
    idx = _mode_indices(modes)
    S = np.eye(state.mean.size)
    S[np.ix_(idx, idx)] = t.matrix
    d = np.zeros(state.mean.size)
    d[idx] = t.displacement
    return GaussianState(S @ state.mean + d, S @ state.cov @ S.T)


def loss_channel(state: GaussianState, mode: int, efficiency_eta: float) -> GaussianState:
    """Pure-loss channel of transmissivity ``efficiency_eta`` on one mode."""
    if not 0.0 <= efficiency_eta <= 1.0:
        raise GaussianError(f"efficiency must lie in [0, 1], got {efficiency_eta}")
    _check_mode(state, mode)
    idx = _mode_indices([mode])
    scale = np.ones(state.mean.size)
    scale[idx] = np.sqrt(efficiency_eta)
    cov = state.cov * np.outer(scale, scale)
    cov[idx, idx] += (1.0 - efficiency_eta) * VACUUM_VARIANCE
    return GaussianState(state.mean * scale, cov)


def _check_mode(state: GaussianState, mode: int) -> None:
    if not 0 <= mode < state.n_modes:
        raise GaussianError(f"mode {mode} out of range for a {state.n_modes}-mode state")


def quadrature_vector(n_modes: int, mode: int, theta: float) -> np.ndarray:
    """Coefficients of ``x sin(theta) + p cos(theta)`` on ``mode``."""
    c = np.zeros(2 * n_modes)
    c[2 * mode] = np.sin(theta)
    c[2 * mode + 1] = np.cos(theta)
    return c


@dataclass(frozen=True)
class HomodyneUpdate:
    """Linear-Gaussian description of a homodyne measurement.

    For outcome ``o`` the remaining modes have mean
    ``rest_mean + gain * (o - outcome_mean)`` and covariance ``rest_cov``.
    """

    outcome_mean: float
    outcome_var: float
    rest_mean: np.ndarray
    rest_cov: np.ndarray
    gain: np.ndarray

    def posterior(self, outcome: float) -> GaussianState | None:
        if self.rest_mean.size == 0:
            return None
        return GaussianState(self.rest_mean + self.gain * (outcome - self.outcome_mean), self.rest_cov)


def homodyne_update(state: GaussianState, mode: int, theta: float) -> HomodyneUpdate:
    _check_mode(state, mode)
    c = quadrature_vector(state.n_modes, mode, theta)
    var = float(c @ state.cov @ c)
    if var < _DEGENERATE_VARIANCE:
        raise GaussianError(f"measured quadrature variance {var:.3g} is degenerate")
    rest = [i for i in range(state.mean.size) if i not in (2 * mode, 2 * mode + 1)]
    cross = state.cov[rest] @ c
    gain = cross / var
    rest_cov = state.cov[np.ix_(rest, rest)] - np.outer(cross, cross) / var
    return HomodyneUpdate(float(c @ state.mean), var, state.mean[rest], rest_cov, gain)


def homodyne_measure(
    state: GaussianState,
    mode: int,
    lo_phase_theta: float,
    outcome: float | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[float, GaussianState | None]:
    """Measure ``x sin(theta) + p cos(theta)`` on ``mode``.

    If ``outcome`` is given it is used as the measurement result; otherwise one
    is drawn from the exact Gaussian marginal with ``rng``. Returns the outcome
    and the conditional state of the remaining modes (``None`` when no modes
    remain).
    """
    upd = homodyne_update(state, mode, lo_phase_theta)
    if outcome is None:
        if rng is None:
            raise GaussianError("either an outcome or an rng must be supplied")
        outcome = float(rng.normal(upd.outcome_mean, np.sqrt(upd.outcome_var)))
    return float(outcome), upd.posterior(outcome)


def rotated_moments(state: GaussianState, mode: int, theta) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of the homodyne quadrature at phase(s) ``theta``."""
    _check_mode(state, mode)
    theta = np.asarray(theta, dtype=float)
    x, p = state.mean[2 * mode], state.mean[2 * mode + 1]
    vxx = state.cov[2 * mode, 2 * mode]
    vpp = state.cov[2 * mode + 1, 2 * mode + 1]
    vxp = state.cov[2 * mode, 2 * mode + 1]
    s, c = np.sin(theta), np.cos(theta)
    return x * s + p * c, vxx * s**2 + vpp * c**2 + 2 * vxp * s * c


def marginal_pdf(state: GaussianState, mode: int, theta, x_value):
    """Probability density of the homodyne outcome ``x_value`` at phase ``theta``."""
    mu, var = rotated_moments(state, mode, theta)
    x_value = np.asarray(x_value, dtype=float)
    return np.exp(-0.5 * (x_value - mu) ** 2 / var) / np.sqrt(2 * np.pi * var)
