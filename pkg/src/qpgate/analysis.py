"""Figures of merit and theory curves for the one-way quadratic phase gate."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .gaussian import GaussianError, GaussianState, apply, loss_channel, shear, vacuum
from .gate import C_B, C_C, D_B, AncillaSpec, apply_noisy_gate
from .tomography import gaussian_to_fock

SCENARIOS = ("squeezed-ancillae", "vacuum-ancillae", "infinite-squeezing", "snl")
CURVE_HEADER = ("kappa", "scenario", "fidelity", "min_variance_db")


@dataclass(frozen=True)
class CurvePoint:
    kappa: float
    scenario: str
    fidelity: float | None  # undefined for the shot-noise reference line
    min_variance_db: float


def fidelity_gaussian(pure: GaussianState, mixed: GaussianState) -> float:
    """Overlap ``<psi|rho|psi>`` of a pure and a mixed single-mode Gaussian state."""
    if pure.n_modes != 1 or mixed.n_modes != 1:
        raise GaussianError("fidelity is defined here for single-mode states only")
    if pure.purity() < 1.0 - 1e-6:
        raise GaussianError(f"first argument must be pure, purity is {pure.purity():.8f}")
    sigma = pure.cov + mixed.cov
    det = np.linalg.det(sigma)
    if det <= 1e-300:
        raise GaussianError("singular covariance sum")
    delta = mixed.mean - pure.mean
    return float(np.exp(-0.5 * delta @ np.linalg.solve(sigma, delta)) / (2.0 * math.sqrt(det)))


def fidelity_fock_oracle(pure: GaussianState, mixed: GaussianState, cutoff: int = 30) -> float:
    """Same overlap evaluated as ``Tr(rho_psi rho)`` in a truncated Fock basis."""
    if pure.purity() < 1.0 - 1e-6:
        raise GaussianError(f"first argument must be pure, purity is {pure.purity():.8f}")
    rho_psi = gaussian_to_fock(pure, cutoff).entries
    rho = gaussian_to_fock(mixed, cutoff).entries
    return float(np.trace(rho_psi @ rho).real)


def min_variance_db(state: GaussianState) -> float:
    """Squeezed-quadrature variance relative to the shot-noise limit, in dB."""
    if state.n_modes != 1:
        raise GaussianError("min_variance_db expects a single-mode state")
    return float(10.0 * np.log10(np.linalg.eigvalsh(state.normalized_cov)[0]))


def estimate_kappa_act(input_mean_x: float, output: GaussianState) -> float:
    if abs(input_mean_x) < 1e-9:
        raise GaussianError("kappa_act needs a nonzero input x amplitude")
    return float(output.mean[1] / input_mean_x)


def ideal_output(input_state: GaussianState, kappa: float) -> GaussianState:
    return apply(input_state, shear(kappa))


def gate_output(
    input_state: GaussianState, kappa: float, ancillae: AncillaSpec, loss_eta: float = 1.0
) -> GaussianState:
    """Noisy gate output, optionally followed by propagation loss."""
    out = apply_noisy_gate(input_state, kappa, ancillae)
    if loss_eta < 1.0:
        out = loss_channel(out, 0, loss_eta)
    return out


def scenario_ancillae(scenario: str, ancillae: AncillaSpec) -> AncillaSpec:
    if scenario == "squeezed-ancillae":
        return ancillae
    if scenario == "vacuum-ancillae":
        return AncillaSpec.vacuum()
    if scenario == "infinite-squeezing":
        return AncillaSpec.infinite()
    raise ValueError(f"scenario {scenario!r} has no ancilla model")


def theory_curves(
    kappa_grid: Iterable[float],
    ancillae: AncillaSpec | None = None,
    scenarios: Sequence[str] = SCENARIOS,
    loss_eta: float = 1.0,
) -> list[CurvePoint]:
    """Fidelity and squeezed-quadrature variance versus ``kappa`` per scenario.

    Inputs are vacuum (coherent inputs share the covariance, and the Gaussian
    fidelity only sees covariance differences when the means agree).
    """
    ancillae = ancillae or AncillaSpec()
    for s in scenarios:
        if s not in SCENARIOS:
            raise ValueError(f"unknown scenario {s!r}; expected one of {SCENARIOS}")
    points = []
    vac = vacuum()
    for kappa in kappa_grid:
        kappa = float(kappa)
        target = ideal_output(vac, kappa)
        for s in scenarios:
            if s == "snl":
                points.append(CurvePoint(kappa, s, None, 0.0))
                continue
            out = gate_output(vac, kappa, scenario_ancillae(s, ancillae), loss_eta)
            points.append(CurvePoint(kappa, s, fidelity_gaussian(target, out), min_variance_db(out)))
    return points


def write_curves_csv(points: Sequence[CurvePoint], path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(CURVE_HEADER) + "\n")
        for pt in points:
            fid = "" if pt.fidelity is None else f"{pt.fidelity:.17g}"
            fh.write(f"{pt.kappa:.17g},{pt.scenario},{fid},{pt.min_variance_db:.17g}\n")


def read_curves_csv(path) -> list[CurvePoint]:
    points = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            fid = float(row["fidelity"]) if row["fidelity"] else None
            points.append(CurvePoint(float(row["kappa"]), row["scenario"], fid, float(row["min_variance_db"])))
    return points


def _min_eig_common(kappa: float, level_db: float) -> float:
    out = apply_noisy_gate(vacuum(), kappa, AncillaSpec.common(level_db))
    return float(np.linalg.eigvalsh(out.normalized_cov)[0])


def asymptotic_threshold_factor() -> float:
    """Common ancilla factor ``u = e^{-2r}`` at which squeezing appears as kappa -> inf.

    Dividing ``det(V - I)`` of the normalized output by ``kappa**2`` and letting
    ``kappa`` grow leaves ``d_B^2 u^2 + (c_C^2 + 2 c_B d_B) u - 1 = 0``.
    """
    a = D_B**2
    b = C_C**2 + 2.0 * C_B * D_B
    return (-b + math.sqrt(b * b + 4.0 * a)) / (2.0 * a)


def ancilla_threshold_db(kappa_max: float, tol: float = 1e-10) -> float:
    """Common ancilla squeezing (dB) below which the output at ``kappa_max`` is squeezed.

    ``kappa_max = inf`` returns the closed-form asymptotic value.
    """
    if not kappa_max > 0:
        raise ValueError(f"kappa_max must be positive, got {kappa_max}")
    if math.isinf(kappa_max):
        return 10.0 * math.log10(asymptotic_threshold_factor())
    lo, hi = -60.0, 0.0  # squeezed at lo, not at hi
    if _min_eig_common(kappa_max, lo) >= 1.0:
        raise ValueError(f"no squeezing reachable at kappa={kappa_max} with -60 dB ancillae")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _min_eig_common(kappa_max, mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
