"""Command line entry point: ``odeco generate | decompose | experiment | report | verify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .analysis import match_components
from .decomposition import (
    EstimatedDecomposition,
    decompose_with_deflation,
    noiseless_decompose,
    oracle_initializer,
    random_initializer,
)
from .harness import ExperimentConfig, read_rows, run_experiment, slopes, summarize_rows, trial_rows
from .initialization import general_initializer, incoherent_initializer
from .noise_lab import NoiseSpec, sample_noise
from .odeco_model import OdecoDecomposition, random_odeco, section3_example, synthesize
from .rng import as_rng

log = logging.getLogger("odeco")


class CliError(Exception):
    pass


def _cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "section3":
        ex = section3_example(args.d, args.lam)
        t, x, truth = ex.T, ex.X, ex.truth
        io.write_json(out / "perturbed_truth.json", ex.perturbed_truth.to_dict())
    else:
        dims = args.dims or [args.d] * args.p
        rng = as_rng(args.seed)
        lambdas = args.lambdas[0] if len(args.lambdas) == 1 else args.lambdas
        truth = random_odeco(dims, args.rank, lambdas, seed=rng)
        t = synthesize(truth)
        if args.noise == "none":
            e = np.zeros_like(t)
        else:
            spec = NoiseSpec(args.noise, sigma=args.sigma, df=args.df, allow_heavy=args.allow_heavy)
            e = sample_noise(dims, spec, rng)
        x = t + e
    io.write_tensor(out / "X.odct", x)
    io.write_tensor(out / "T.odct", t)
    io.write_tensor(out / "E.odct", x - t)
    io.write_json(out / "truth.json", truth.to_dict())
    if args.json:
        io.write_json(out / "X.json", io.tensor_to_json(x))
    print(f"wrote {out}/X.odct dims={list(x.shape)} rank={truth.r}")
    return 0


def _initializer(method: str, r: int, args, truth):
    if method == "oracle":
        if truth is None:
            raise CliError("--init oracle needs --truth")
        return oracle_initializer(truth)
    if method == "random":
        return random_initializer(args.seed)
    if method == "alg4":
        return incoherent_initializer(r, args.slices, seed=args.seed)
    return general_initializer(r, args.slices, seed=args.seed)


def _cmd_decompose(args) -> int:
    x = io.load_tensor(args.tensor)
    truth = OdecoDecomposition.from_dict(io.read_json(args.truth)) if args.truth else None
    r = args.rank if args.rank is not None else (truth.r if truth is not None else None)
    if r is None:
        raise CliError("--rank is required without --truth")
    if args.init == "noiseless":
        est = noiseless_decompose(x, r, seed=args.seed)
    else:
        est = decompose_with_deflation(x, r, _initializer(args.init, r, args, truth), iters=args.iters,
                                       fallback_seed=args.seed)
    print("lambda_hat: " + " ".join(f"{v:.6g}" for v in est.lambdas))
    for j, note in est.notes.items():
        print(f"note[{j}]: {note}")
    if truth is not None:
        m = match_components(truth, est)
        print("matched sin-angles (component x mode):")
        for k in range(truth.r):
            row = " ".join(f"{v:.3e}" for v in m.sin_angles[k])
            print(f"  {k:3d}  lambda={truth.lambdas[k]:.6g}  lambda_hat={m.lambda_hat[k]:.6g}  sin: {row}")
        print(f"max sin-angle: {m.sin_angles.max():.3e}")
    if args.out:
        io.write_json(args.out, est.to_dict(include_traces=args.traces))
    return 0


def _print_groups(groups) -> None:
    print(f"{'d':>6} {'lambda':>12} {'n_ok':>5} {'failed':>6} {'median':>11} {'q10':>11} {'q90':>11}")
    for g in groups:
        if "median_error" in g:
            vals = f"{g['median_error']:11.4e} {g['q10_error']:11.4e} {g['q90_error']:11.4e}"
        else:
            vals = f"{'-':>11} {'-':>11} {'-':>11}"
        print(f"{g['d']:>6} {g['lambda']:>12.6g} {g['n_ok']:>5} {g['n_failed']:>6} {vals}")


def _cmd_experiment(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise CliError(f"bad config {args.config}: {exc}") from exc
    if args.seed is not None:
        cfg.root_seed = args.seed
    if args.out:
        cfg.out = args.out
    reports = run_experiment(cfg)
    _print_groups(summarize_rows(trial_rows(reports)))
    failed = sum(rep.status != "ok" for rep in reports)
    print(f"{len(reports)} trials, {failed} failed, config {cfg.fingerprint()}" + (f", wrote {cfg.out}" if cfg.out else ""))
    return 0


def _cmd_report(args) -> int:
    rows = []
    for path in args.csv:
        rows.extend(read_rows(path))
    groups = summarize_rows(rows)
    _print_groups(groups)
    out = {"groups": groups}
    if args.slope:
        lhs, _, rhs = args.slope.partition("~")
        if lhs != "error" or rhs not in ("lambda", "d"):
            raise CliError("--slope must be error~lambda or error~d")
        fitted = slopes(groups, rhs)
        other = "d" if rhs == "lambda" else "lambda"
        for key, val in fitted.items():
            print(f"slope log(median error) ~ log({rhs}) at {other}={key:g}: {val:.4f}")
        out["slopes"] = {f"{other}={k:g}": v for k, v in fitted.items()}
    if args.out:
        io.write_json(args.out, out)
    return 0


def _cmd_verify(args) -> int:
    from .acceptance import run_all

    only = {int(v) for v in args.only.split(",")} if args.only else None
    results = run_all(only=only, echo=lambda line: print(line, flush=True))
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return 0 if passed == len(results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="odeco", description="Odeco tensor generation, decomposition and experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a signal + noise instance")
    g.add_argument("--kind", choices=("random", "section3"), default="random")
    g.add_argument("--dims", type=int, nargs="+", help="mode dimensions (default: --d repeated --p times)")
    g.add_argument("--d", type=int, default=10)
    g.add_argument("--p", type=int, default=3)
    g.add_argument("--rank", type=int, default=2)
    g.add_argument("--lambdas", type=float, nargs="+", default=[10.0], help="one value (equal) or r values")
    g.add_argument("--lam", type=float, default=10.0, help="signal level of the section3 instance")
    g.add_argument("--noise", choices=("gaussian", "student_t", "none"), default="gaussian")
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--df", type=float, default=9.0)
    g.add_argument("--allow-heavy", action="store_true")
    g.add_argument("--json", action="store_true", help="also write X.json (debug format)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)

    dcp = sub.add_parser("decompose", help="run a pipeline on a tensor file")
    dcp.add_argument("tensor")
    dcp.add_argument("--rank", type=int)
    dcp.add_argument("--init", choices=("alg3", "alg4", "random", "oracle", "noiseless"), default="alg3")
    dcp.add_argument("--slices", type=int, help="slicing trials L")
    dcp.add_argument("--iters", type=int)
    dcp.add_argument("--truth", help="truth.json for matched sin-angles")
    dcp.add_argument("--traces", action="store_true", help="include power-iteration traces in --out")
    dcp.add_argument("--seed", type=int, default=0)
    dcp.add_argument("--out")
    dcp.set_defaults(func=_cmd_decompose)

    e = sub.add_parser("experiment", help="run an experiment config")
    e.add_argument("--config", required=True)
    e.add_argument("--seed", type=int, help="override root_seed")
    e.add_argument("--out", help="output directory (overrides the config)")
    e.set_defaults(func=_cmd_experiment)

    r = sub.add_parser("report", help="aggregate trials.csv files")
    r.add_argument("csv", nargs="+")
    r.add_argument("--slope", help="error~lambda or error~d")
    r.add_argument("--out", help="write the aggregate as JSON")
    r.set_defaults(func=_cmd_report)

    v = sub.add_parser("verify", help="run the acceptance suite")
    v.add_argument("--only", help="comma-separated criterion numbers")
    v.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"odeco {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
