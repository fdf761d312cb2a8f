"""Reproducible Monte Carlo experiments.

An :class:`ExperimentConfig` describes an instance family, a noise model,
a pipeline and sweep axes (dimension grid, signal grid, seed range).
Every (d, lambda, seed) cell is a trial whose random streams are derived
from ``(root_seed, d_index, seed)`` only, so cells can run in any order or
in parallel with identical results. Trials at different signal levels but
the same (d, seed) share their factors and noise.

Outputs are ``trials.csv`` (one row per trial x component x mode, columns
in :data:`CSV_COLUMNS`) and ``summary.json``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .analysis import asymptotic_statistics, first_order_residual, match_components
from .decomposition import (
    FixedPointConfig,
    decompose_with_deflation,
    noiseless_decompose,
    oracle_initializer,
    perturbed_oracle_initializer,
    random_initializer,
)
from .initialization import general_initializer, incoherent_initializer
from .noise_lab import NoiseSpec, error_functionals, sample_noise
from .odeco_model import random_odeco, resolve_lambdas, section3_example, synthesize
from .rng import derive_rng, derive_seed

SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "schema_version",
    "config_hash",
    "cell",
    "d",
    "lambda",
    "seed",
    "status",
    "reason",
    "component",
    "mode",
    "lambda_true",
    "lambda_hat",
    "sin_angle",
    "max_mode_sin",
    "first_order_residual",
    "deviation",
    "eps0",
    "eps1",
    "eps2",
    "spectral_norm_est",
    "converged",
)

INSTANCE_KINDS = ("random_odeco", "section3")
LAMBDA_MODES = ("absolute", "eps1_ratio")
ALGORITHMS = ("power_deflation", "noiseless")
INITIALIZERS = ("oracle", "perturbed_oracle", "random", "alg3", "alg4")


def _from_dict(cls, d: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


@dataclass
class InstanceSpec:
    """Signal family.

    For ``random_odeco`` the weights are ``lambda * resolve_lambdas(shape)``
    (``lambda_mode="absolute"``) or ``lambda * eps1 * resolve_lambdas(shape)``
    (``"eps1_ratio"``, with ``eps1`` from the trial's own noise). For
    ``section3`` the rank is ``d - 1`` and the noise spec is ignored.
    """

    kind: str = "random_odeco"
    p: int = 3
    r: int = 2
    shape: object = 1.0
    lambda_mode: str = "absolute"

    def __post_init__(self):
        if self.kind not in INSTANCE_KINDS:
            raise ValueError(f"instance kind must be one of {INSTANCE_KINDS}")
        if self.lambda_mode not in LAMBDA_MODES:
            raise ValueError(f"lambda_mode must be one of {LAMBDA_MODES}")
        if self.kind == "section3" and self.p != 3:
            raise ValueError("the section3 instance is third order")


@dataclass
class PipelineSpec:
    algorithm: str = "power_deflation"
    initializer: str = "alg3"
    init_angle: float = 0.25
    slices: int | None = None
    iters: int | None = None
    sweeps: int = 50
    spectral_norm: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.initializer not in INITIALIZERS:
            raise ValueError(f"initializer must be one of {INITIALIZERS}")


@dataclass
class SweepSpec:
    d: list = field(default_factory=lambda: [20])
    lam: list = field(default_factory=lambda: [1.0])
    seeds: int = 10
    seed_start: int = 0

    def __post_init__(self):
        if not self.d or not self.lam:
            raise ValueError("sweep grids must be nonempty")
        if self.seeds < 1:
            raise ValueError("seed range must be nonempty")


@dataclass
class ExperimentConfig:
    instance: InstanceSpec = field(default_factory=InstanceSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    pipeline: PipelineSpec = field(default_factory=PipelineSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    root_seed: int = 0
    name: str = "experiment"
    out: str | None = None

    def to_dict(self) -> dict:
        return {
            "instance": asdict(self.instance),
            "noise": self.noise.to_dict(),
            "pipeline": asdict(self.pipeline),
            "sweep": asdict(self.sweep),
            "root_seed": self.root_seed,
            "name": self.name,
            "out": self.out,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - {"instance", "noise", "pipeline", "sweep", "root_seed", "name", "out"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(
            instance=_from_dict(InstanceSpec, d.get("instance", {})),
            noise=_from_dict(NoiseSpec, d.get("noise", {})),
            pipeline=_from_dict(PipelineSpec, d.get("pipeline", {})),
            sweep=_from_dict(SweepSpec, d.get("sweep", {})),
            root_seed=int(d.get("root_seed", 0)),
            name=str(d.get("name", "experiment")),
            out=d.get("out"),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def fingerprint(self) -> str:
        """Hash of everything that affects results (the output path does not)."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def cells(self) -> list[tuple[int, int, int]]:
        """``(d_index, lambda_index, seed)`` in canonical order."""
        seeds = range(self.sweep.seed_start, self.sweep.seed_start + self.sweep.seeds)
        return [(i, j, s) for i in range(len(self.sweep.d)) for j in range(len(self.sweep.lam)) for s in seeds]


@dataclass
class TrialReport:
    """Outcome of one cell. Missing sections are ``None`` and ``reason`` says why."""

    config_hash: str
    cell: int
    d: int
    lam: float
    seed: int
    status: str
    reason: str | None = None
    lambdas_true: list | None = None
    noise: dict | None = None
    match: dict | None = None
    first_order: dict | None = None
    asymptotic: dict | None = None
    converged: list | None = None
    wall_time: float = 0.0

    def rows(self) -> list[dict]:
        base = {
            "schema_version": SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "cell": self.cell,
            "d": self.d,
            "lambda": self.lam,
            "seed": self.seed,
            "status": self.status,
            "reason": self.reason or "",
        }
        if self.status != "ok":
            return [{c: base.get(c, "") for c in CSV_COLUMNS}]
        noise = self.noise or {}
        sins = np.asarray(self.match["sin_angles"])
        fo = np.asarray(self.first_order["residuals"]) if self.first_order else None
        dev = np.asarray(self.asymptotic["deviation"]) if self.asymptotic else None
        out = []
        r, p = sins.shape
        for k in range(r):
            for q in range(p):
                row = dict(base)
                row.update(
                    component=k,
                    mode=q,
                    lambda_true=self.lambdas_true[k],
                    lambda_hat=self.match["lambda_hat"][k],
                    sin_angle=float(sins[k, q]),
                    max_mode_sin=float(sins[k].max()),
                    first_order_residual=float(fo[k, q]) if fo is not None else "",
                    deviation=float(dev[k, q]) if dev is not None else "",
                    eps0=noise.get("eps0", ""),
                    eps1=noise.get("eps1", ""),
                    eps2=noise.get("eps2", ""),
                    spectral_norm_est=noise.get("spectral_norm_est", ""),
                    converged=int(self.converged[k]) if self.converged else "",
                )
                out.append({c: row.get(c, "") for c in CSV_COLUMNS})
        return out


def _make_initializer(cfg: ExperimentConfig, truth, r: int, seed: int):
    kind = cfg.pipeline.initializer
    if kind == "oracle":
        return oracle_initializer(truth)
    if kind == "perturbed_oracle":
        return perturbed_oracle_initializer(truth, cfg.pipeline.init_angle, seed=seed)
    if kind == "random":
        return random_initializer(seed)
    if kind == "alg3":
        return general_initializer(r, cfg.pipeline.slices, seed=seed)
    return incoherent_initializer(r, cfg.pipeline.slices, seed=seed)


def run_trial(cfg: ExperimentConfig, cell_index: int, cell: tuple[int, int, int]) -> TrialReport:
    d_idx, lam_idx, seed = cell
    d = int(cfg.sweep.d[d_idx])
    lam = float(cfg.sweep.lam[lam_idx])
    report = TrialReport(cfg.fingerprint(), cell_index, d, lam, seed, status="ok")
    start = time.perf_counter()
    try:
        _run_trial(cfg, report, d_idx, d, lam, seed)
    except Exception as exc:  # noqa: BLE001 - failures are data, the sweep goes on
        report.status = "failed"
        report.reason = f"{type(exc).__name__}: {exc}"
    report.wall_time = time.perf_counter() - start
    return report


def _run_trial(cfg, report, d_idx, d, lam, seed):
    inst = cfg.instance
    rng = derive_rng(cfg.root_seed, d_idx, seed, 0)
    pipeline_seed = derive_seed(cfg.root_seed, d_idx, seed, 1)

    if inst.kind == "section3":
        ex = section3_example(d, lam)
        truth, e = ex.truth, ex.X - ex.T
        r = truth.r
    else:
        r = inst.r
        dims = [d] * inst.p
        base = random_odeco(dims, r, resolve_lambdas(inst.shape, r), seed=rng)
        e = sample_noise(dims, cfg.noise, rng)
        scale = lam
        if inst.lambda_mode == "eps1_ratio":
            scale *= error_functionals(e, base, spectral_norm=False).eps1
        truth = base.scaled(scale)
    x = synthesize(truth) + e
    report.lambdas_true = truth.lambdas.tolist()

    diag = error_functionals(e, truth, spectral_norm=cfg.pipeline.spectral_norm, seed=pipeline_seed)
    report.noise = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in diag.as_dict().items()}

    pipe = cfg.pipeline
    if pipe.algorithm == "noiseless":
        est = noiseless_decompose(x, r, FixedPointConfig(sweeps=pipe.sweeps), seed=pipeline_seed)
        if est.unrecovered:
            raise RuntimeError(f"unrecovered components {est.unrecovered}")
        converged = [True] * est.r
    else:
        init = _make_initializer(cfg, truth, r, pipeline_seed)
        est = decompose_with_deflation(x, r, init, iters=pipe.iters, fallback_seed=pipeline_seed)
        converged = [tr.converged for tr in est.traces]

    match = match_components(truth, est)
    report.converged = [bool(converged[i]) for i in match.perm]
    report.match = {
        "perm": match.perm.tolist(),
        "sin_angles": match.sin_angles.tolist(),
        "lambda_hat": match.lambda_hat.tolist(),
        "lambda_errors": match.lambda_errors.tolist(),
    }
    fo = first_order_residual(truth, est, e, match=match, diagnostics=diag)
    report.first_order = {
        "residuals": fo.residuals.tolist(),
        "power_envelope": [None if math.isnan(v) else float(v) for v in fo.power_envelope],
    }
    asym = asymptotic_statistics(truth, est, e, match=match)
    report.asymptotic = {
        "deviation": asym.deviation.tolist(),
        "overlap_stat": asym.overlap_stat.tolist(),
        "sigma2": asym.sigma2.tolist(),
    }


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("ODECO_THREADS", "1")))
    except ValueError:
        return 1


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int | None = None) -> list[TrialReport]:
    """Run every cell; write ``trials.csv`` and ``summary.json`` to ``out_dir`` (or ``cfg.out``) if set."""
    out_dir = cfg.out if out_dir is None else out_dir
    cells = cfg.cells()
    workers = _workers() if workers is None else workers
    idx = list(range(len(cells)))
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run_trial, [cfg] * len(cells), idx, cells))
    else:
        reports = [run_trial(cfg, i, c) for i, c in zip(idx, cells)]
    reports.sort(key=lambda rep: rep.cell)
    if out_dir is not None:
        write_outputs(cfg, reports, out_dir)
    return reports


def trial_rows(reports: list[TrialReport]) -> list[dict]:
    return [row for rep in reports for row in rep.rows()]


def write_outputs(cfg: ExperimentConfig, reports: list[TrialReport], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = trial_rows(reports)
    with open(out / "trials.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\r\n")
        writer.writeheader()
        writer.writerows(rows)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": cfg.fingerprint(),
        "config": {k: v for k, v in cfg.to_dict().items() if k != "out"},
        "trials": len(reports),
        "failed": sum(rep.status != "ok" for rep in reports),
        "groups": summarize_rows(rows),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Aggregation


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return list(reader)


def summarize_rows(rows: list[dict]) -> list[dict]:
    """Per (d, lambda): seed-median and 10/90% quantiles of the trial error.

    The trial error is the largest sine angle over components and modes.
    """
    trials: dict[tuple, dict] = {}
    for row in rows:
        key = (int(row["d"]), float(row["lambda"]))
        tkey = (int(row["cell"]), int(row["seed"]))
        group = trials.setdefault(key, {})
        if row["status"] != "ok":
            group.setdefault(tkey, None)
            continue
        prev = group.get(tkey)
        val = float(row["sin_angle"])
        group[tkey] = val if prev is None else max(prev, val)
    out = []
    for (d, lam), group in sorted(trials.items()):
        errs = np.array([v for v in group.values() if v is not None])
        entry = {"d": d, "lambda": lam, "n_ok": int(errs.size), "n_failed": sum(v is None for v in group.values())}
        if errs.size:
            entry.update(
                median_error=float(np.median(errs)),
                q10_error=float(np.quantile(errs, 0.1)),
                q90_error=float(np.quantile(errs, 0.9)),
            )
        out.append(entry)
    return out


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points to fit a slope")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def slopes(groups: list[dict], against: str = "lambda") -> dict:
    """Fitted log-log slope of median error against ``lambda`` (per d) or ``d`` (per lambda)."""
    if against not in ("lambda", "d"):
        raise ValueError("slope axis must be 'lambda' or 'd'")
    other = "d" if against == "lambda" else "lambda"
    out = {}
    for key in sorted({g[other] for g in groups}):
        pts = sorted((g[against], g["median_error"]) for g in groups if g[other] == key and "median_error" in g)
        if len(pts) >= 2:
            out[key] = fit_loglog_slope(*zip(*pts))
    return out
