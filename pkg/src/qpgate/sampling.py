"""Phase-scanned homodyne datasets and their CSV interchange format."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .gaussian import GaussianError, GaussianState, rotated_moments

CSV_HEADER = ("phase_rad", "quadrature")
TWO_PI = 2.0 * math.pi


class DatasetError(ValueError):
    """Raised for malformed homodyne datasets or files."""


class HomodyneSample(NamedTuple):
    phase: float
    value: float


@dataclass(frozen=True)
class HomodyneDataset:
    """Phase-tagged quadrature outcomes in absolute units."""

    phases: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        phases = np.array(self.phases, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float).reshape(-1)
        if phases.size == 0:
            raise DatasetError("dataset has no samples")
        if phases.shape != values.shape:
            raise DatasetError("phases and values differ in length")
        if not np.all(np.isfinite(values)):
            raise DatasetError("quadrature values must be finite")
        if np.any(phases < 0.0) or np.any(phases >= TWO_PI) or not np.all(np.isfinite(phases)):
            raise DatasetError("phases must lie in [0, 2*pi)")
        phases.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.phases.size

    def __iter__(self) -> Iterator[HomodyneSample]:
        for ph, v in zip(self.phases, self.values):
            yield HomodyneSample(float(ph), float(v))


def phase_scan(
    state: GaussianState,
    n_samples: int,
    rng: np.random.Generator | int | None = None,
    stratified: bool = True,
) -> HomodyneDataset:
    """Emulate a slow LO-phase scan over ``[0, 2*pi)``.

    With ``stratified=True`` sample ``i`` is taken at phase ``2*pi*i/n``;
    otherwise phases are uniform random (and sorted, so the scan stays monotone).
    Passing an integer seed records it in the dataset.
    """
    if state.n_modes != 1:
        raise GaussianError(f"phase_scan needs a single-mode state, got {state.n_modes} modes")
    if n_samples < 1:
        raise DatasetError(f"n_samples must be >= 1, got {n_samples}")
    state.check_physical()
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    if stratified:
        phases = TWO_PI * np.arange(n_samples) / n_samples
    else:
        phases = np.sort(rng.uniform(0.0, TWO_PI, size=n_samples))
    mu, var = rotated_moments(state, 0, phases)
    values = mu + np.sqrt(var) * rng.standard_normal(n_samples)
    meta = {
        "mean": state.mean.tolist(),
        "cov": state.cov.tolist(),
        "stratified": stratified,
    }
    return HomodyneDataset(phases, values, meta, None if seed is None else int(seed))


def write_csv(dataset: HomodyneDataset, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for ph, v in zip(dataset.phases, dataset.values):
            fh.write(f"{ph:.17g},{v:.17g}\n")


def read_csv(path) -> HomodyneDataset:
    path = Path(path)
    phases, values = [], []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file")
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise DatasetError(f"{path}:1: expected header {','.join(CSV_HEADER)!r}, got {','.join(header)!r}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DatasetError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            try:
                ph, v = float(row[0]), float(row[1])
            except ValueError:
                raise DatasetError(f"{path}:{line}: non-numeric field in {row!r}") from None
            if not (math.isfinite(ph) and 0.0 <= ph < TWO_PI):
                raise DatasetError(f"{path}:{line}: phase {row[0]} outside [0, 2*pi)")
            if not math.isfinite(v):
                raise DatasetError(f"{path}:{line}: quadrature value {row[1]} is not finite")
            phases.append(ph)
            values.append(v)
    if not phases:
        raise DatasetError(f"{path}: no samples")
    return HomodyneDataset(np.array(phases), np.array(values), {"source": str(path)})
