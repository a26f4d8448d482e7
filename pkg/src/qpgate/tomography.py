"""Homodyne tomography in a truncated Fock basis.

Binned maximum-likelihood reconstruction with the RrhoR fixed-point
iteration, quadrature moments from ladder-operator matrix elements, Wigner
functions on a grid, and an exact Gaussian-to-Fock conversion used as an
independent verification path.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .gaussian import VACUUM_VARIANCE, GaussianState
from .sampling import HomodyneDataset

MAX_CUTOFF = 60


class TomographyError(RuntimeError):
    """Raised when a reconstruction cannot proceed."""


@dataclass(frozen=True)
class FockDensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 1:
            raise TomographyError(f"density matrix must be square, got shape {rho.shape}")
        rho.flags.writeable = False
        object.__setattr__(self, "entries", rho)

    @property
    def cutoff(self) -> int:
        return self.entries.shape[0]

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.entries + self.entries.conj().T)
        return float(np.linalg.eigvalsh(h)[0])

    def is_valid(self) -> bool:
        return (
            self.hermiticity_error() <= 1e-10
            and abs(self.trace() - 1.0) <= 1e-9
            and self.min_eigenvalue() >= -1e-9
        )

    def populations(self) -> np.ndarray:
        return np.diag(self.entries).real.copy()


# --- Hermite functions and POVM elements ---------------------------------------


def hermite_functions(x, cutoff: int) -> np.ndarray:
    """Normalized oscillator eigenfunctions for vacuum variance 1/4.

    Returns shape ``(cutoff, *x.shape)``. Uses the three-term recurrence, so no
    factorials appear and high orders stay finite.
    """
    if cutoff < 1:
        raise TomographyError(f"cutoff must be >= 1, got {cutoff}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise TomographyError("quadrature values must be finite")
    y = math.sqrt(2.0) * x
    out = np.empty((cutoff,) + x.shape)
    out[0] = (2.0 / math.pi) ** 0.25 * np.exp(-0.5 * y**2)
    if cutoff > 1:
        out[1] = math.sqrt(2.0) * y * out[0]
    for n in range(1, cutoff - 1):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * y * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def quadrature_amplitudes(theta, x, cutoff: int) -> np.ndarray:
    """``<n|x; theta>`` for the eigenstate of ``x sin(theta) + p cos(theta)``.

    That quadrature is ``x cos(phi) + p sin(phi)`` with ``phi = pi/2 - theta``,
    whose eigenstates are ``exp(i phi n)|x>``. Shape ``(cutoff, *broadcast)``.
    """
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise TomographyError("phase must be finite")
    theta, x = np.broadcast_arrays(theta, np.asarray(x, dtype=float))
    n = np.arange(cutoff).reshape((cutoff,) + (1,) * theta.ndim)
    phase = np.exp(1j * n * (0.5 * math.pi - theta))
    return phase * hermite_functions(x, cutoff)


def quadrature_projector(theta: float, x_value: float, cutoff: int) -> np.ndarray:
    """Rank-one POVM density ``|x; theta><x; theta|`` truncated to ``cutoff`` levels."""
    v = quadrature_amplitudes(theta, x_value, cutoff)
    return np.outer(v, v.conj())


# --- binning -------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureHistogram:
    phase_edges: np.ndarray
    value_edges: np.ndarray
    counts: np.ndarray
    overflow: int

    @property
    def phase_centers(self) -> np.ndarray:
        return 0.5 * (self.phase_edges[1:] + self.phase_edges[:-1])

    @property
    def value_centers(self) -> np.ndarray:
        return 0.5 * (self.value_edges[1:] + self.value_edges[:-1])

    @property
    def value_width(self) -> float:
        return float(self.value_edges[1] - self.value_edges[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.overflow


def bin(dataset: HomodyneDataset, phase_bins: int = 60, value_bins: int = 128, x_max: float = 6.0) -> QuadratureHistogram:
    """Histogram over ``[0, pi) x [-x_max, x_max]``.

    Samples at ``theta >= pi`` are folded to ``theta - pi`` with the value negated.
    Values outside the range are counted as overflow.
    """
    if phase_bins < 1 or value_bins < 1 or not x_max > 0:
        raise TomographyError("bin counts must be positive and x_max > 0")
    phases = np.array(dataset.phases)
    values = np.array(dataset.values)
    upper = phases >= math.pi
    phases[upper] -= math.pi
    values[upper] *= -1.0
    phase_edges = np.linspace(0.0, math.pi, phase_bins + 1)
    value_edges = np.linspace(-x_max, x_max, value_bins + 1)
    counts, _, _ = np.histogram2d(phases, values, bins=(phase_edges, value_edges))
    counts = counts.astype(np.int64)
    overflow = len(dataset) - int(counts.sum())
    return QuadratureHistogram(phase_edges, value_edges, counts, overflow)


# --- maximum likelihood ----------------------------------------------------------


@dataclass
class MLEDiagnostics:
    iterations: int
    log_likelihood: float
    stop_reason: str
    history: list = field(default_factory=list)
    damped_steps: int = 0


def _project_valid(rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def mle_reconstruct(
    hist: QuadratureHistogram,
    cutoff: int,
    max_iter: int = 2000,
    tol: float = 1e-9,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> tuple[FockDensityMatrix, MLEDiagnostics]:
    """Iterative maximum-likelihood state estimate from a binned scan.

    Each step replaces ``rho`` by ``R rho R`` normalized, with
    ``R = sum_b (f_b / p_b) Pi_b`` over bin-center projectors. A step that
    lowers the log-likelihood is retried as ``(1 - lam) rho + lam R rho R``
    with ``lam`` halved until it no longer does. Stops when the relative
    log-likelihood gain drops below ``tol``.
    """
    if not 1 <= cutoff <= MAX_CUTOFF:
        raise TomographyError(f"cutoff must lie in [1, {MAX_CUTOFF}], got {cutoff}")
    occupied = hist.counts > 0
    if not occupied.any():
        raise TomographyError("histogram is empty")
    P, Q = hist.counts.shape
    theta = np.repeat(hist.phase_centers, Q).reshape(P, Q)[occupied]
    xval = np.tile(hist.value_centers, P).reshape(P, Q)[occupied]
    counts = hist.counts[occupied].astype(float)
    freqs = counts / counts.sum()
    V = quadrature_amplitudes(theta, xval, cutoff).T  # (bins, cutoff)
    Vc = V.conj()
    dx = hist.value_width

    def probabilities(rho):
        return np.einsum("bn,nm,bm->b", Vc, rho, V).real * dx

    def loglik(p):
        return float(counts @ np.log(p))

    def check(p):
        bad = p < 1e-300
        if bad.any():
            i = int(np.argmax(bad))
            raise TomographyError(
                f"bin at phase {theta[i]:.4f}, value {xval[i]:.4f} has counts but probability "
                f"{p[i]:.3g}; increase the cutoff or x_max"
            )

    rho = np.eye(cutoff, dtype=complex) / cutoff
    p = probabilities(rho)
    check(p)
    ll = loglik(p)
    diag = MLEDiagnostics(0, ll, "max_iter", [ll])
    slack = 1e-12 * max(abs(ll), 1.0)
    for it in range(1, max_iter + 1):
        R = (V.T * (freqs / p)) @ Vc
        target = _project_valid(R @ rho @ R)
        lam = 1.0
        while True:
            cand = target if lam == 1.0 else _project_valid((1.0 - lam) * rho + lam * target)
            p_new = probabilities(cand)
            check(p_new)
            ll_new = loglik(p_new)
            if ll_new >= ll - slack or lam < 1e-6:
                break
            lam *= 0.5
            diag.damped_steps += 1
        gain = (ll_new - ll) / max(abs(ll), 1e-300)
        rho, p, ll = cand, p_new, ll_new
        diag.iterations = it
        diag.log_likelihood = ll
        diag.history.append(ll)
        if callback is not None:
            callback(it, rho, ll)
        if 0.0 <= gain < tol:
            diag.stop_reason = "converged"
            break
    return FockDensityMatrix(rho), diag


def reconstruct_dataset(
    dataset: HomodyneDataset,
    cutoff: int = 14,
    phase_bins: int = 60,
    value_bins: int = 128,
    x_max: float = 6.0,
    max_iter: int = 2000,
    tol: float = 1e-9,
) -> tuple[FockDensityMatrix, MLEDiagnostics, QuadratureHistogram]:
    hist = bin(dataset, phase_bins, value_bins, x_max)
    rho, diag = mle_reconstruct(hist, cutoff, max_iter, tol)
    return rho, diag, hist


# --- moments and Wigner function --------------------------------------------------


def annihilation(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff)), k=1).astype(complex)


def moments(rho: FockDensityMatrix | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature mean and symmetrized covariance (absolute units) of ``rho``.

    The needed ladder matrix elements (``a``, ``a^2``, ``a^dag a``) are exact
    within the truncated space, so no padding is required.
    """
    r = rho.entries if isinstance(rho, FockDensityMatrix) else np.asarray(rho, dtype=complex)
    a = annihilation(r.shape[0])
    ea = np.trace(r @ a)
    ea2 = np.trace(r @ a @ a)
    en = np.trace(r @ a.conj().T @ a).real
    mx, mp = ea.real, ea.imag
    xx = (2 * ea2.real + 2 * en + 1) / 4 - mx**2
    pp = (-2 * ea2.real + 2 * en + 1) / 4 - mp**2
    xp = ea2.imag / 2 - mx * mp
    return np.array([mx, mp]), np.array([[xx, xp], [xp, pp]])


@dataclass(frozen=True)
class WignerGrid:
    x: np.ndarray
    p: np.ndarray
    values: np.ndarray  # shape (len(p), len(x))

    def integral(self) -> float:
        dx = self.x[1] - self.x[0]
        dp = self.p[1] - self.p[0]
        return float(self.values.sum() * dx * dp)


def wigner(rho: FockDensityMatrix | np.ndarray, x, p) -> WignerGrid:
    """Wigner function ``W(x, p)`` normalized so that ``int W dx dp = 1``.

    Laguerre-series recurrence over matrix elements of ``|m><n|`` with
    ``alpha = x + i p``; vacuum peaks at ``2/pi``.
    """
    r = rho.entries if isinstance(rho, FockDensityMatrix) else np.asarray(rho, dtype=complex)
    D = r.shape[0]
    tail = np.diag(r).real[-max(1, D // 10):].sum()
    if tail > 0.01:
        warnings.warn(
            f"population {tail:.3g} in the top levels of a cutoff-{D} state; Wigner function may be truncated",
            RuntimeWarning,
            stacklevel=2,
        )
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    X, P = np.meshgrid(x, p)
    A = X + 1j * P
    w = [np.zeros_like(A) for _ in range(D)]
    w[0] = np.exp(-2.0 * np.abs(A) ** 2) / math.pi
    W = r[0, 0].real * w[0].real
    for n in range(1, D):
        w[n] = 2.0 * A * w[n - 1] / math.sqrt(n)
        W = W + 2.0 * np.real(r[0, n] * w[n])
    for m in range(1, D):
        temp = w[m].copy()
        w[m] = (2.0 * np.conj(A) * temp - math.sqrt(m) * w[m - 1]) / math.sqrt(m)
        W = W + np.real(r[m, m] * w[m])
        for n in range(m + 1, D):
            temp2 = (2.0 * A * w[n - 1] - math.sqrt(m) * temp) / math.sqrt(n)
            temp = w[n].copy()
            w[n] = temp2
            W = W + 2.0 * np.real(r[m, n] * w[n])
    return WignerGrid(x, p, 2.0 * W)


# --- Gaussian states in the Fock basis ---------------------------------------------


def gaussian_to_fock(state: GaussianState, cutoff: int, work_dim: int | None = None, max_tail: float = 1e-3) -> FockDensityMatrix:
    """Density matrix of a single-mode Gaussian state, truncated to ``cutoff`` levels.

    Built as ``D(alpha) R(phi) S(r) rho_thermal S^dag R^dag D^dag`` from matrix
    exponentials in a larger working space, then cropped. Raises if more than
    ``max_tail`` of the population lies above the cutoff.
    """
    if state.n_modes != 1:
        raise TomographyError("only single-mode states can be converted")
    work = work_dim or max(4 * cutoff, cutoff + 80)
    V = state.cov
    det = np.linalg.det(V)
    nu = math.sqrt(det) / VACUUM_VARIANCE
    evals, evecs = np.linalg.eigh(V)
    r = 0.5 * math.log(math.sqrt(det) / evals[0])
    phi = math.atan2(evecs[1, 0], evecs[0, 0])
    a = annihilation(work)
    ad = a.conj().T
    alpha = state.mean[0] + 1j * state.mean[1]
    S = expm(0.5 * r * (a @ a - ad @ ad))
    R = np.diag(np.exp(1j * phi * np.arange(work)))
    Dop = expm(alpha * ad - np.conj(alpha) * a)
    U = Dop @ R @ S
    nbar = max((nu - 1.0) / 2.0, 0.0)
    if nbar < 1e-14:
        psi = U[:, 0]
        rho = np.outer(psi, psi.conj())
    else:
        q = nbar / (nbar + 1.0)
        pops = (1.0 - q) * q ** np.arange(work)
        rho = (U * pops) @ U.conj().T
    cropped = rho[:cutoff, :cutoff]
    tail = 1.0 - np.trace(cropped).real
    if tail > max_tail:
        raise TomographyError(f"{tail:.3g} of the population lies above cutoff {cutoff}")
    return FockDensityMatrix(cropped / np.trace(cropped).real)


# --- export --------------------------------------------------------------------------


def write_density_matrix(rho: FockDensityMatrix, path) -> None:
    doc = {
        "cutoff": rho.cutoff,
        "real": rho.entries.real.tolist(),
        "imag": rho.entries.imag.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def read_density_matrix(path) -> FockDensityMatrix:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    rho = np.array(doc["real"]) + 1j * np.array(doc["imag"])
    if rho.shape != (doc["cutoff"], doc["cutoff"]):
        raise TomographyError(f"{path}: matrix shape {rho.shape} does not match cutoff {doc['cutoff']}")
    return FockDensityMatrix(rho)


def write_wigner_csv(grid: WignerGrid, path) -> None:
    X, P = np.meshgrid(grid.x, grid.p)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("x,p,w\n")
        for xv, pv, wv in zip(X.ravel(), P.ravel(), grid.values.ravel()):
            fh.write(f"{xv:.17g},{pv:.17g},{wv:.17g}\n")


def read_wigner_csv(path) -> WignerGrid:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x = np.unique(data[:, 0])
    p = np.unique(data[:, 1])
    return WignerGrid(x, p, data[:, 2].reshape(len(p), len(x)))
