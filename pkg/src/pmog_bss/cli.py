"""Command-line surface: data generation, extraction, evaluation, image demo.

Flag values override config-file values; every command is deterministic
for a fixed seed. Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import MU_RANGE, SIGMA2_RANGE, make_experiment_dataset
from .em import EmConfig
from .errors import ConstantRow, ExtractionFailed, PmogError, ShapeMismatch, SizeMismatch
from .matrixio import load_json, load_matrix, save_json, save_matrix
from .pgm import read_pgm, to_uint8, write_pgm
from .pipeline import (
    DUPLICATE_THRESHOLD,
    FITS_PER_SOURCE,
    extract_sources,
)
from .plots import save_image_montage, save_match_curves, save_objective_traces
from .ppca import ppca_fit, whiten
from .stats import compare_matches, match_score

SCHEMA_VERSION = 1

MODE_MAP = {
    "pmog-orth": "orthogonal",
    "pmog-nonorth": "nonorthogonal",
    "fica-defl": "fica_defl",
    "fica-symm": "fica_symm",
}

DEFAULTS = {
    "q": 7,
    "p": 20,
    "n": 1000,
    "m_runs": 50,
    "R": 5,
    "mode": "pmog-orth",
    "eps_rel": 1e-5,
    "eps_m": 1e-3,
    "max_restarts": 20,
    "duplicate_threshold": DUPLICATE_THRESHOLD,
    "fits_per_source": FITS_PER_SOURCE,
    "mu_range": list(MU_RANGE),
    "sigma2_range": list(SIGMA2_RANGE),
    "fica_mode": "symm",
}


class UsageError(Exception):
    pass


def _resolve(args: argparse.Namespace, keys: list[str]) -> dict:
    """Defaults <- config file <- explicit flags, plus seed resolution.

    The seed falls back to the PMOG_SEED environment variable when neither
    the flag nor the config file provides one, and to 42 after that.
    """
    cfg = {k: DEFAULTS[k] for k in keys if k in DEFAULTS}
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = load_json(args.config)
        if not isinstance(file_cfg, dict):
            raise UsageError("--config must contain a JSON object")
        unknown = set(file_cfg) - set(DEFAULTS) - {"seed"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        # a shared config file may carry keys for other subcommands
        cfg.update({k: v for k, v in file_cfg.items() if k in keys})
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v

    if getattr(args, "seed", None) is not None:
        cfg["seed"] = int(args.seed)
    elif "seed" in file_cfg:
        cfg["seed"] = int(file_cfg["seed"])
    elif os.environ.get("PMOG_SEED"):
        cfg["seed"] = int(os.environ["PMOG_SEED"])
    else:
        cfg["seed"] = 42
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _base_report(command: str, cfg: dict) -> dict:
    return {
        "command": command,
        "config": cfg,
        "seed": cfg["seed"],
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
    }


def cmd_generate(args) -> int:
    cfg = _resolve(args, ["q", "p", "n", "R", "m_runs", "mu_range", "sigma2_range"])
    if cfg["q"] > cfg["p"]:
        raise UsageError("q must not exceed p")
    if cfg["n"] < 2 or cfg["n"] < cfg["q"]:
        raise UsageError("need n >= 2 and n >= q")
    out = _outdir(args)
    data = make_experiment_dataset(
        q=cfg["q"],
        n=cfg["n"],
        R=cfg["R"],
        p=cfg["p"],
        m_runs=cfg["m_runs"],
        seed=cfg["seed"],
        mu_range=tuple(cfg["mu_range"]),
        sigma2_range=tuple(cfg["sigma2_range"]),
    )
    save_matrix(out / "sources.csv", data.sources)
    files = {"sources": "sources.csv"}
    runs = []
    for j in range(cfg["m_runs"]):
        suffix = "" if cfg["m_runs"] == 1 else f"_run{j:03d}"
        mixed_name = f"mixed{suffix}.csv"
        mixing_name = f"mixing{suffix}.csv"
        save_matrix(out / mixed_name, data.mixed[j])
        save_matrix(out / mixing_name, data.mixings[j])
        runs.append({"run": j, "mixed": mixed_name, "mixing": mixing_name})
    meta = _base_report("generate", cfg)
    meta["files"] = files
    meta["runs"] = runs
    save_json(out / "meta.json", meta)
    print(f"wrote sources and {cfg['m_runs']} mixed run(s) to {out}")
    return 0


def _extraction_report(cfg: dict, result, fit, failed_index=None) -> dict:
    W = result.W
    report = _base_report("extract", cfg)
    dev = float(np.max(np.abs(W @ W.T - np.eye(W.shape[0])))) if W.size else float("nan")
    report.update(
        {
            "mode": result.mode,
            "entropies": [d.entropy_estimate for d in result.per_source],
            "restarts": [d.restarts for d in result.per_source],
            "converged": [bool(d.converged) for d in result.per_source],
            "correlation_penalty": (
                None
                if not np.isfinite(result.correlation_penalty)
                else result.correlation_penalty
            ),
            "orthonormal_rows": {
                "max_deviation": None if not np.isfinite(dev) else dev,
                "ok": bool(np.isfinite(dev) and dev <= 1e-6),
            },
            "ppca": {
                "sigma2_hat": fit.sigma2_hat,
                "leading_eigenvalues": [float(v) for v in fit.Lambda_q],
            },
            "failed_source": failed_index,
        }
    )
    return report


def _write_extraction(
    out: Path, cfg: dict, result, fit, failed_index=None, wall_time=None
) -> None:
    save_matrix(out / "sources_hat.csv", result.S_hat)
    save_matrix(out / "unmixing.csv", result.W)
    report = _extraction_report(cfg, result, fit, failed_index)
    if wall_time is not None:
        report["wall_time_s"] = wall_time
    save_json(out / "report.json", report)
    traces = [d.objective_trace for d in result.per_source if d.objective_trace is not None]
    if traces:
        save_objective_traces(out / "objective_trace.png", traces)


def cmd_extract(args) -> int:
    cfg = _resolve(
        args,
        [
            "q",
            "R",
            "mode",
            "eps_rel",
            "eps_m",
            "max_restarts",
            "duplicate_threshold",
            "fits_per_source",
        ],
    )
    if cfg["mode"] not in MODE_MAP:
        raise UsageError(f"mode must be one of {sorted(MODE_MAP)}")
    X = load_matrix(args.input)
    if cfg["q"] > X.shape[0]:
        raise UsageError(f"q ({cfg['q']}) exceeds input dimension ({X.shape[0]})")
    out = _outdir(args)
    fit = ppca_fit(X, cfg["q"])
    Z = whiten(X, fit)
    em = EmConfig(
        R=cfg["R"],
        eps_rel=cfg["eps_rel"],
        eps_m=cfg["eps_m"],
        max_restarts=cfg["max_restarts"],
        seed=cfg["seed"],
    )
    started = time.perf_counter()
    try:
        result = extract_sources(
            Z,
            MODE_MAP[cfg["mode"]],
            em,
            fits_per_source=cfg["fits_per_source"],
            duplicate_threshold=cfg["duplicate_threshold"],
        )
    except ExtractionFailed as exc:
        wall = time.perf_counter() - started if args.timing else None
        if exc.partial is not None:
            _write_extraction(
                out, cfg, exc.partial, fit,
                failed_index=exc.source_index, wall_time=wall,
            )
        print(f"error: {exc}", file=sys.stderr)
        return 1
    wall = time.perf_counter() - started if args.timing else None
    _write_extraction(out, cfg, result, fit, wall_time=wall)
    print(f"extracted {result.W.shape[0]} sources ({cfg['mode']}) to {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve(args, [])
    pairs = args.pair or []
    if len(pairs) < 2:
        raise UsageError("need at least two --pair entries (m >= 2 runs)")
    truth = load_matrix(args.truth)
    match_a = []
    match_b = []
    for est_a, est_b in pairs:
        for path in (est_a, est_b):
            est = load_matrix(path)
            if est.shape[1] != truth.shape[1]:
                raise ShapeMismatch(
                    f"{path} has {est.shape[1]} columns, truth has {truth.shape[1]}"
                )
        match_a.append(match_score(truth, load_matrix(est_a)))
        match_b.append(match_score(truth, load_matrix(est_b)))
    report = compare_matches(match_a, match_b)
    out = _outdir(args)
    label_a, label_b = args.label_a, args.label_b

    doc = _base_report("evaluate", cfg)
    doc.update(
        {
            "labels": [label_a, label_b],
            "per_run": [
                {"run": j, label_a: report.match_a[j], label_b: report.match_b[j]}
                for j in range(len(pairs))
            ],
            "aggregate": {
                "mean_" + label_a: float(report.match_a.mean()),
                "mean_" + label_b: float(report.match_b.mean()),
                "t_stat": report.t_stat,
                "dof": None if not np.isfinite(report.dof) else report.dof,
                "p_value": report.p_value,
                "note": report.note,
            },
        }
    )
    save_json(out / "comparison.json", doc)

    lines = [f"# run match_{label_a} run match_{label_b}"]
    for j in range(len(pairs)):
        lines.append(
            f"{j + 1} {report.match_a[j]:.17g} {j + 1} {report.match_b[j]:.17g}"
        )
    (out / "match_curves.dat").write_text("\n".join(lines) + "\n", encoding="ascii")
    save_match_curves(
        out / "match_curves.png",
        report.match_a,
        report.match_b,
        label_a,
        label_b,
        p_value=report.p_value,
    )
    print(
        f"mean Match: {label_a} {report.match_a.mean():.4f}, "
        f"{label_b} {report.match_b.mean():.4f}, p = {report.p_value:.3g}"
    )
    return 0


def _standardize_image(img: np.ndarray) -> np.ndarray:
    flat = np.asarray(img, dtype=float)
    sd = flat.std()
    if sd <= 0.0:
        raise ConstantRow("image is constant; cannot standardize")
    return (flat - flat.mean()) / sd


def run_image_demo(
    images: list[np.ndarray],
    seed: int,
    mixing: str = "random",
    R: int = 5,
    fica_mode: str = "symm",
    analyses: tuple[str, ...] = ("fica", "pmog-orth", "pmog-nonorth"),
    em_overrides: dict | None = None,
) -> dict:
    """Mix three standardized images and recover them with each analysis.

    Returns a dict with the mixed rows, per-analysis recovered rows, the
    Match-vs-truth table and per-analysis convergence flags. ``mixing``
    may be "random" (entries and mean offset from N(0, 1)) or "identity",
    which bypasses estimation entirely and checks the data path.
    """
    if len(images) != 3:
        raise SizeMismatch("need exactly three images")
    shape = images[0].shape
    if any(im.shape != shape for im in images[1:]):
        raise SizeMismatch("images must share the same dimensions")
    S = np.vstack([_standardize_image(im).ravel() for im in images])

    rng = np.random.default_rng(seed)
    if mixing == "identity":
        A = np.eye(3)
        offset = np.zeros(3)
        X = S.copy()
        return {
            "shape": shape,
            "truth": S,
            "mixing": A,
            "offset": offset,
            "mixed": X,
            "recovered": {"identity": X},
            "match": {"identity": match_score(S, X)},
            "converged": {"identity": [True, True, True]},
            "failed": {},
        }
    if mixing != "random":
        raise UsageError("mixing must be 'random' or 'identity'")
    A = rng.standard_normal((3, 3))
    offset = rng.standard_normal(3)
    X = A @ S + offset[:, None]

    recovered = {}
    match = {}
    converged = {}
    failed = {}
    for analysis in analyses:
        mode = MODE_MAP[{"fica": f"fica-{fica_mode}"}.get(analysis, analysis)]
        em = EmConfig(R=R, seed=seed, **(em_overrides or {}))
        fit = ppca_fit(X, 3)
        Z = whiten(X, fit)
        try:
            result = extract_sources(Z, mode, em)
        except ExtractionFailed as exc:
            failed[analysis] = exc.source_index
            if exc.partial is not None:
                recovered[analysis] = exc.partial.S_hat
            continue
        recovered[analysis] = result.S_hat
        match[analysis] = match_score(S, result.S_hat)
        converged[analysis] = [bool(d.converged) for d in result.per_source]
    return {
        "shape": shape,
        "truth": S,
        "mixing": A,
        "offset": offset,
        "mixed": X,
        "recovered": recovered,
        "match": match,
        "converged": converged,
        "failed": failed,
    }


def cmd_demo_images(args) -> int:
    cfg = _resolve(args, ["R", "fica_mode"])
    images = [read_pgm(p) for p in args.images]
    out = _outdir(args)
    demo = run_image_demo(
        images,
        seed=cfg["seed"],
        mixing=args.mixing,
        R=cfg["R"],
        fica_mode=cfg["fica_mode"],
    )
    shape = demo["shape"]
    for i in range(3):
        write_pgm(out / f"mixed_{i + 1}.pgm", to_uint8(demo["mixed"][i].reshape(shape)))
    panels = {
        "sources": [demo["truth"][i].reshape(shape) for i in range(3)],
        "mixed": [demo["mixed"][i].reshape(shape) for i in range(3)],
    }
    for analysis, S_hat in demo["recovered"].items():
        imgs = [S_hat[i].reshape(shape) for i in range(S_hat.shape[0])]
        panels[analysis] = imgs
        for i, im in enumerate(imgs):
            write_pgm(out / f"recovered_{analysis}_{i + 1}.pgm", to_uint8(im))

    table = _base_report("demo-images", cfg)
    table["mixing"] = args.mixing
    table["match"] = {k: demo["match"].get(k) for k in demo["recovered"]}
    table["converged"] = {k: demo["converged"].get(k) for k in demo["recovered"]}
    table["failed"] = demo["failed"]
    save_json(out / "match_table.json", table)

    width = max(len(k) for k in demo["recovered"])
    lines = [f"{'analysis':<{width}}  match_vs_truth"]
    for k in demo["recovered"]:
        m = demo["match"].get(k)
        lines.append(f"{k:<{width}}  {'failed' if m is None else f'{m:.6f}'}")
    (out / "match_table.txt").write_text("\n".join(lines) + "\n", encoding="ascii")

    save_image_montage(out / "montage.png", panels)
    print("\n".join(lines))
    return 1 if demo["failed"] else 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="RNG seed (default: $PMOG_SEED or 42)")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--out-dir", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmog-bss",
        description="Blind source separation with a projected mixture-of-Gaussians "
        "fit, a FastICA baseline, and a statistical evaluation harness.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize whitened mixture sources and mixings")
    g.add_argument("--q", type=int, help=f"number of sources (default {DEFAULTS['q']})")
    g.add_argument("--p", type=int, help=f"mixed dimension (default {DEFAULTS['p']})")
    g.add_argument("--n", type=int, help=f"samples per source (default {DEFAULTS['n']})")
    g.add_argument("--R", type=int, help=f"mixture components per source (default {DEFAULTS['R']})")
    g.add_argument("--m-runs", dest="m_runs", type=int,
                   help=f"number of mixing runs (default {DEFAULTS['m_runs']})")
    _add_common(g)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("extract", help="whiten mixed data and extract sources")
    e.add_argument("--input", required=True, help="mixed.csv (p x n)")
    e.add_argument("--q", type=int, help=f"number of sources (default {DEFAULTS['q']})")
    e.add_argument("--R", type=int, help=f"mixture components (default {DEFAULTS['R']})")
    e.add_argument("--mode", choices=sorted(MODE_MAP),
                   help=f"extraction mode (default {DEFAULTS['mode']})")
    e.add_argument("--eps-rel", dest="eps_rel", type=float,
                   help=f"relative EM tolerance (default {DEFAULTS['eps_rel']})")
    e.add_argument("--eps-m", dest="eps_m", type=float,
                   help=f"M-step alternation tolerance (default {DEFAULTS['eps_m']})")
    e.add_argument("--max-restarts", dest="max_restarts", type=int,
                   help=f"randomized M-step restarts (default {DEFAULTS['max_restarts']})")
    e.add_argument("--duplicate-threshold", dest="duplicate_threshold", type=float,
                   help="cosine above which a projection repeats a previous one "
                        f"(default {DEFAULTS['duplicate_threshold']})")
    e.add_argument("--fits-per-source", dest="fits_per_source", type=int,
                   help=f"independent fits per source, best kept (default {DEFAULTS['fits_per_source']})")
    e.add_argument("--timing", action="store_true",
                   help="record wall time in report.json (breaks byte determinism)")
    _add_common(e)
    e.set_defaults(func=cmd_extract)

    v = sub.add_parser("evaluate", help="Match estimates against truth and compare methods")
    v.add_argument("--truth", required=True, help="sources.csv (q x n)")
    v.add_argument("--pair", nargs=2, action="append", metavar=("EST_A", "EST_B"),
                   help="one run's estimate files for methods A and B; repeatable")
    v.add_argument("--label-a", dest="label_a", default="fica")
    v.add_argument("--label-b", dest="label_b", default="pmog")
    _add_common(v)
    v.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("demo-images", help="mix three PGM images and recover them")
    d.add_argument("images", nargs=3, metavar="IMAGE.pgm")
    d.add_argument("--mixing", choices=["random", "identity"], default="random")
    d.add_argument("--R", type=int, help=f"mixture components (default {DEFAULTS['R']})")
    d.add_argument("--fica-mode", dest="fica_mode", choices=["defl", "symm"],
                   help=f"baseline flavor (default {DEFAULTS['fica_mode']})")
    _add_common(d)
    d.set_defaults(func=cmd_demo_images)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (PmogError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
