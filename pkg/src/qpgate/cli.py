"""Command-line experiment runner.

Subcommands: simulate, sample, reconstruct, curves, decompose.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis import (
    SCENARIOS,
    estimate_kappa_act,
    fidelity_gaussian,
    gate_output,
    ideal_output,
    min_variance_db,
    scenario_ancillae,
    theory_curves,
    write_curves_csv,
)
from .gate import DEFAULT_ANCILLAE_DB, AncillaSpec, decompose_shear, measurement_params, recompose
from .gaussian import GaussianError, make_coherent, shear
from .sampling import DatasetError, phase_scan, read_csv, write_csv
from .tomography import (
    MAX_CUTOFF,
    TomographyError,
    mle_reconstruct,
    moments,
    wigner,
    write_density_matrix,
    write_wigner_csv,
)
from .tomography import bin as bin_dataset

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
DEFAULT_KAPPAS = (0.0, 1.0, -1.0, 1.5, -1.5, 2.0, -2.0)

log = logging.getLogger("qpgate")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TomographyOptions:
    cutoff: int = 14
    phase_bins: int = 60
    value_bins: int = 128
    x_max: float = 6.0
    tol: float = 1e-9
    max_iter: int = 2000


@dataclass(frozen=True)
class ExperimentConfig:
    input: dict = field(default_factory=lambda: {"alpha_x": 1.4, "alpha_p": 0.0})
    kappas: tuple = DEFAULT_KAPPAS
    ancillae_db: tuple = DEFAULT_ANCILLAE_DB
    scenario: tuple = ("squeezed-ancillae",)
    seed: int = 0
    samples_per_scan: int = 80000
    tomography: TomographyOptions = TomographyOptions()
    loss_eta: float = 1.0
    output_dir: str = "results"

    @property
    def ancillae(self) -> AncillaSpec:
        return AncillaSpec(*self.ancillae_db)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kappas"] = list(self.kappas)
        d["ancillae_db"] = list(self.ancillae_db)
        d["scenario"] = list(self.scenario)
        return {"schema_version": SCHEMA_VERSION, **d}


def _reject_unknown(section: str, data: dict, allowed) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(sorted(unknown))}")


def parse_config(data: dict | None) -> ExperimentConfig:
    """Validate a config mapping; unknown keys are errors."""
    data = dict(data or {})
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    _reject_unknown("config", data, [f.name for f in fields(ExperimentConfig)])
    kw = {}
    try:
        if "input" in data:
            inp = dict(data["input"])
            _reject_unknown("input", inp, ["alpha_x", "alpha_p"])
            kw["input"] = {"alpha_x": float(inp.get("alpha_x", 0.0)), "alpha_p": float(inp.get("alpha_p", 0.0))}
        if "kappas" in data:
            kw["kappas"] = tuple(float(k) for k in data["kappas"])
        if "ancillae_db" in data:
            anc = tuple(float(v) for v in data["ancillae_db"])
            if len(anc) != 3:
                raise ConfigError("ancillae_db needs exactly three levels (A, B, C)")
            kw["ancillae_db"] = anc
        if "scenario" in data:
            sc = data["scenario"]
            kw["scenario"] = (sc,) if isinstance(sc, str) else tuple(sc)
        if "seed" in data:
            kw["seed"] = int(data["seed"])
        if "samples_per_scan" in data:
            kw["samples_per_scan"] = int(data["samples_per_scan"])
        if "tomography" in data:
            tomo = dict(data["tomography"])
            _reject_unknown("tomography", tomo, [f.name for f in fields(TomographyOptions)])
            kw["tomography"] = TomographyOptions(
                **{k: (int(v) if k in ("cutoff", "phase_bins", "value_bins", "max_iter") else float(v)) for k, v in tomo.items()}
            )
        if "loss_eta" in data:
            kw["loss_eta"] = float(data["loss_eta"])
        if "output_dir" in data:
            kw["output_dir"] = str(data["output_dir"])
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from None
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    if not cfg.kappas:
        raise ConfigError("kappas must be non-empty")
    if not all(math.isfinite(k) for k in cfg.kappas):
        raise ConfigError("kappas must be finite")
    if cfg.samples_per_scan < 100:
        raise ConfigError("samples_per_scan must be >= 100")
    if not 4 <= cfg.tomography.cutoff <= MAX_CUTOFF:
        raise ConfigError(f"tomography.cutoff must lie in [4, {MAX_CUTOFF}]")
    if not 0.0 <= cfg.loss_eta <= 1.0:
        raise ConfigError("loss_eta must lie in [0, 1]")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    for s in cfg.scenario:
        if s not in SCENARIOS or s == "snl":
            raise ConfigError(f"scenario {s!r} not one of squeezed-ancillae, vacuum-ancillae, infinite-squeezing")
    for v in cfg.ancillae_db:
        if math.isnan(v) or v == math.inf:
            raise ConfigError("ancilla levels must be finite or -inf")


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return parse_config({})
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return parse_config(data)


def _atomic_write(path: Path, writer) -> None:
    """Write through a temporary file so partial results never appear."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        writer(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _kappa_tag(kappa: float) -> str:
    return f"{kappa:+.3f}".replace(".", "p")


# --- subcommands -------------------------------------------------------------------


def simulate_records(cfg: ExperimentConfig) -> list[dict]:
    inp = make_coherent(cfg.input["alpha_x"], cfg.input["alpha_p"])
    records = []
    for kappa in cfg.kappas:
        theta, gain = measurement_params(kappa)
        target = ideal_output(inp, kappa)
        for scenario in cfg.scenario:
            out = gate_output(inp, kappa, scenario_ancillae(scenario, cfg.ancillae), cfg.loss_eta)
            kappa_act = estimate_kappa_act(inp.mean[0], out) if abs(inp.mean[0]) >= 1e-9 else None
            records.append(
                {
                    "kappa": kappa,
                    "scenario": scenario,
                    "lo_phase_deg": math.degrees(theta),
                    "feedforward_gain": gain,
                    "output_mean": out.mean.tolist(),
                    "normalized_cov": out.normalized_cov.tolist(),
                    "fidelity": fidelity_gaussian(target, out),
                    "min_variance_db": min_variance_db(out),
                    "kappa_act": kappa_act,
                }
            )
    return records


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path) -> Path:
    doc = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "records": simulate_records(cfg)}
    path = out_dir / "results.json"
    _atomic_write(path, lambda p: p.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8"))
    return path


def cmd_sample(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    inp = make_coherent(cfg.input["alpha_x"], cfg.input["alpha_p"])
    scenario = cfg.scenario[0]
    children = np.random.SeedSequence(cfg.seed).spawn(len(cfg.kappas))
    scans = []
    for kappa, child in zip(cfg.kappas, children):
        out = gate_output(inp, kappa, scenario_ancillae(scenario, cfg.ancillae), cfg.loss_eta)
        ds = phase_scan(out, cfg.samples_per_scan, np.random.default_rng(child))
        scans.append((out_dir / f"scan_kappa{_kappa_tag(kappa)}_seed{cfg.seed}.csv", ds))
    for path, ds in scans:
        _atomic_write(path, lambda p, ds=ds: write_csv(ds, p))
    return [path for path, _ in scans]


def cmd_reconstruct(csv_path: Path, opts: TomographyOptions, out_dir: Path) -> tuple[dict, bool]:
    ds = read_csv(csv_path)
    hist = bin_dataset(ds, opts.phase_bins, opts.value_bins, opts.x_max)
    rho, diag = mle_reconstruct(hist, opts.cutoff, opts.max_iter, opts.tol)
    mean, cov = moments(rho)
    axis = np.linspace(-opts.x_max, opts.x_max, 121)
    grid = wigner(rho, axis, axis)
    stem = csv_path.stem
    rho_path = out_dir / f"{stem}_rho.json"
    wig_path = out_dir / f"{stem}_wigner.csv"
    report = {
        "schema_version": SCHEMA_VERSION,
        "source": str(csv_path),
        "n_samples": len(ds),
        "overflow": hist.overflow,
        "tomography": asdict(opts),
        "iterations": diag.iterations,
        "log_likelihood": diag.log_likelihood,
        "stop_reason": diag.stop_reason,
        "mean": mean.tolist(),
        "normalized_cov": (4.0 * cov).tolist(),
        "vacuum_population": float(rho.populations()[0]),
        "wigner_integral": grid.integral(),
        "density_matrix": rho_path.name,
        "wigner": wig_path.name,
    }
    _atomic_write(rho_path, lambda p: write_density_matrix(rho, p))
    _atomic_write(wig_path, lambda p: write_wigner_csv(grid, p))
    _atomic_write(out_dir / f"{stem}_moments.json", lambda p: p.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8"))
    return report, diag.stop_reason == "converged"


def default_kappa_grid() -> np.ndarray:
    return np.round(np.arange(-50, 51) * 0.05, 12)


def cmd_curves(cfg: ExperimentConfig, out_dir: Path, kappa_grid=None) -> Path:
    grid = default_kappa_grid() if kappa_grid is None else kappa_grid
    points = theory_curves(grid, cfg.ancillae, loss_eta=cfg.loss_eta)
    path = out_dir / "curves.csv"
    _atomic_write(path, lambda p: write_curves_csv(points, p))
    return path


def decompose_report(kappa: float) -> str:
    phi2, r, phi1 = decompose_shear(kappa)
    residual = float(np.max(np.abs(recompose(phi2, r, phi1) - shear(kappa).matrix)))
    db = 10.0 * math.log10(math.exp(2.0 * r))
    return (
        f"kappa      = {kappa:.6g}\n"
        f"phi2       = {phi2:.12f} rad ({math.degrees(phi2):.4f} deg)\n"
        f"r          = {r:.12f} ({db:.4f} dB)\n"
        f"phi1       = {phi1:.12f} rad ({math.degrees(phi1):.4f} deg)\n"
        f"residual   = {residual:.3e}\n"
    )


# --- entry point -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON experiment config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (overrides config output_dir)")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(prog="qpgate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="gate outputs and figures of merit per kappa")
    sub.add_parser("sample", parents=[common], help="phase-scan homodyne CSV per kappa")
    rec = sub.add_parser("reconstruct", parents=[common], help="maximum-likelihood tomography of a scan CSV")
    rec.add_argument("csv", help="phase_rad,quadrature CSV file")
    rec.add_argument("--cutoff", type=int)
    rec.add_argument("--phase-bins", type=int)
    rec.add_argument("--value-bins", type=int)
    rec.add_argument("--x-max", type=float)
    rec.add_argument("--tol", type=float)
    rec.add_argument("--max-iter", type=int)
    sub.add_parser("curves", parents=[common], help="theory curves of fidelity and squeezing")
    dec = sub.add_parser("decompose", parents=[common], help="rotation-squeeze-rotation form of the gate")
    dec.add_argument("--kappa", type=float, required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.command == "reconstruct":
            overrides = {
                k: getattr(args, k)
                for k in ("cutoff", "phase_bins", "value_bins", "x_max", "tol", "max_iter")
                if getattr(args, k) is not None
            }
            cfg = replace(cfg, tomography=replace(cfg.tomography, **overrides))
        validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out or cfg.output_dir)

    try:
        if args.command == "simulate":
            path = cmd_simulate(cfg, out_dir)
            log.info("wrote %s", path)
        elif args.command == "sample":
            for path in cmd_sample(cfg, out_dir):
                log.info("wrote %s", path)
        elif args.command == "reconstruct":
            report, converged = cmd_reconstruct(Path(args.csv), cfg.tomography, out_dir)
            log.info(
                "%s: %d iterations (%s), mean %s",
                args.csv, report["iterations"], report["stop_reason"], np.round(report["mean"], 4).tolist(),
            )
            if not converged:
                print(f"reconstruction did not converge: {report['stop_reason']}", file=sys.stderr)
                return EXIT_NUMERIC
        elif args.command == "curves":
            path = cmd_curves(cfg, out_dir)
            log.info("wrote %s", path)
        elif args.command == "decompose":
            sys.stdout.write(decompose_report(args.kappa))
    except (DatasetError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GaussianError, TomographyError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
