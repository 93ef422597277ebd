"""Command-line entry point: ``smcbench run | stats | explain | report | synth``.

Configuration is one flat YAML/JSON mapping. Precedence, lowest first:
built-in defaults, the config file, environment variables
(``SMCBENCH_OUTPUT_DIR``, ``SMCBENCH_JOBS``), command-line flags.

Exit codes: 0 success, 1 hard failure, 2 finished with failed cells.
"""

import argparse
import hashlib
import json
import logging
import os
from pathlib import Path
import platform
import sys

import numpy as np
import pandas as pd
import yaml

from . import __version__
from . import dataio, evalharness, explain, models, stats

logger = logging.getLogger("smcbench")

EXIT_OK, EXIT_FAIL, EXIT_PARTIAL = 0, 1, 2
PART_MODALITIES = ("CT", "GM", "JD", "WM")
DATA_FILES = {m: f"{m.lower()}.csv" for m in PART_MODALITIES}
ENV_OUTPUT = "SMCBENCH_OUTPUT_DIR"
ENV_JOBS = "SMCBENCH_JOBS"

DEFAULTS = {
    "data_dir": None,
    "data": {},
    "models": "all",
    "modalities": list(dataio.MODALITIES),
    "train_fraction": 0.7,
    "split_seed": 0,
    "k": 5,
    "repetitions": 20,
    "seeds": None,
    "grid_overrides": {},
    "output_dir": "smcbench_out",
    "full_grid": False,
    "no_standardize": False,
    "full_precision_ties": False,
    "jobs": 1,
    "n_perms": 100,
    "explain_seed": 0,
}
# keys that change where or how fast results are produced, not what they are
NON_NUMERIC_KEYS = ("output_dir", "jobs")


class CliError(Exception):
    """A user-facing failure reported without a traceback."""


# ---------------------------------------------------------------- config

def _split_list(v):
    if v is None or isinstance(v, list):
        return v
    return [s.strip() for s in str(v).split(",") if s.strip()]


def parse_seeds(v):
    """``"1-20"``, ``"1,2,5"`` or a list of ints."""
    if v is None:
        return None
    if isinstance(v, (list, tuple)):
        return [int(s) for s in v]
    out = []
    for part in str(v).split(","):
        part = part.strip()
        if "-" in part[1:]:
            a, b = part.split("-", 1) if not part.startswith("-") else (part, None)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def resolve_models(v):
    v = "all" if v is None else v
    if isinstance(v, str) and v.lower() in ("all", "rnn", "hbc"):
        return list({"all": models.ALL_TAGS, "rnn": models.RNN_TAGS, "hbc": models.HBC_TAGS}[v.lower()])
    tags = _split_list(v)
    bad = [t for t in tags if t not in models.ALL_TAGS]
    if bad:
        raise CliError(f"unknown model tag(s) {bad}; valid tags: {', '.join(models.ALL_TAGS)}")
    return tags


def load_config_file(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {p}")
    cfg = yaml.safe_load(p.read_text()) or {}
    if not isinstance(cfg, dict):
        raise CliError("config file must hold a mapping")
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise CliError(f"unknown config keys {sorted(unknown)}; valid keys: {', '.join(DEFAULTS)}")
    return cfg


def build_config(args, environ=None):
    environ = os.environ if environ is None else environ
    cfg = dict(DEFAULTS)
    cfg.update(load_config_file(getattr(args, "config", None)))
    if environ.get(ENV_OUTPUT):
        cfg["output_dir"] = environ[ENV_OUTPUT]
    if environ.get(ENV_JOBS):
        cfg["jobs"] = int(environ[ENV_JOBS])
    flags = {
        "data_dir": args.data_dir, "models": args.models, "modalities": args.modalities,
        "seeds": args.seeds, "repetitions": args.repetitions, "output_dir": args.out, "jobs": args.jobs,
        "k": args.k, "split_seed": args.split_seed, "train_fraction": args.train_fraction,
    }
    cfg.update({k: v for k, v in flags.items() if v is not None})
    for key in ("full_grid", "no_standardize", "full_precision_ties"):
        if getattr(args, key, False):
            cfg[key] = True
    return normalize_config(cfg)


def normalize_config(cfg):
    cfg = dict(cfg)
    cfg["models"] = resolve_models(cfg["models"])
    cfg["modalities"] = _split_list(cfg["modalities"])
    bad = [m for m in cfg["modalities"] if m not in dataio.MODALITIES]
    if bad:
        raise CliError(f"unknown modality {bad}; valid: {', '.join(dataio.MODALITIES)}")
    if not cfg["models"] or not cfg["modalities"]:
        raise CliError("at least one model and one modality are required")
    seeds = parse_seeds(cfg["seeds"])
    cfg["seeds"] = seeds if seeds else list(range(1, int(cfg["repetitions"]) + 1))
    cfg["repetitions"] = len(cfg["seeds"])
    cfg["jobs"] = int(cfg["jobs"])
    if cfg["jobs"] == 0 or cfg["jobs"] < -1:
        raise CliError("jobs must be positive or -1")
    for tag in cfg["grid_overrides"]:
        if tag not in models.ALL_TAGS:
            raise CliError(f"grid override for unknown tag {tag!r}")
    return cfg


def config_hash(cfg):
    numeric = {k: v for k, v in cfg.items() if k not in NON_NUMERIC_KEYS}
    blob = json.dumps(numeric, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------- data

def data_paths(cfg):
    paths = {m: Path(p) for m, p in (cfg.get("data") or {}).items()}
    if cfg.get("data_dir"):
        for m, name in DATA_FILES.items():
            paths.setdefault(m, Path(cfg["data_dir"]) / name)
    return paths


def load_datasets(cfg):
    """Datasets for the configured modalities; ALL is fused from the parts."""
    paths = data_paths(cfg)
    wanted = cfg["modalities"]
    need = set(wanted)
    if "ALL" in need and "ALL" not in paths:
        need |= set(PART_MODALITIES)
    loaded = {}
    for m in sorted(need, key=dataio.MODALITIES.index):
        if m == "ALL" and "ALL" not in paths:
            continue
        if m not in paths:
            raise CliError(f"no data file configured for modality {m}")
        if not paths[m].exists():
            raise CliError(f"data file not found: {paths[m]}")
        loaded[m] = dataio.load_modality(paths[m], m)
    if "ALL" in wanted and "ALL" not in loaded:
        loaded["ALL"] = dataio.fuse_all([loaded[m] for m in PART_MODALITIES])
    inputs = {m: {"path": str(p), "sha256": _sha256(p)} for m, p in paths.items() if m in need and p.exists()}
    return {m: loaded[m] for m in wanted}, inputs


def grids_for(cfg):
    grids = {}
    for tag in cfg["models"]:
        g = models.grid_for(tag, full=cfg["full_grid"])
        over = cfg["grid_overrides"].get(tag)
        if over:
            axes = dict(g.axes)
            for name, values in over.items():
                axes[name] = list(values) if isinstance(values, (list, tuple)) else [values]
            g = models.GridSpec(tag, tuple(axes.items()), g.stage2)
        grids[tag] = g
    return grids


def split_spec(cfg):
    return dataio.SplitSpec(train_fraction=float(cfg["train_fraction"]), seed=int(cfg["split_seed"]))


# ---------------------------------------------------------------- commands

def versions():
    import joblib
    import scipy

    return {
        "smcbench": __version__, "python": platform.python_version(), "numpy": np.__version__,
        "scipy": scipy.__version__, "pandas": pd.__version__, "joblib": joblib.__version__,
    }


def cmd_run(args):
    cfg = build_config(args)
    datasets, inputs = load_datasets(cfg)
    out = Path(cfg["output_dir"])
    res_dir = out / "results"
    logger.info("running %d models x %d modalities x %d seeds", len(cfg["models"]), len(datasets), len(cfg["seeds"]))
    results = evalharness.run_experiment(
        cfg["models"], datasets, split=split_spec(cfg), seeds=cfg["seeds"], k=int(cfg["k"]),
        grids=grids_for(cfg), standardize=not cfg["no_standardize"], n_jobs=cfg["jobs"],
    )
    evalharness.write_results(results, res_dir, cfg["models"], cfg["modalities"])
    cells = [{"model": m, "modality": d, "status": "failed" if r.failed else "ok", "error": r.error}
             for (m, d), r in results.items()]
    manifest = {
        "format": 1, "config": cfg, "config_hash": config_hash(cfg), "seeds": cfg["seeds"],
        "versions": versions(), "inputs": inputs, "cells": cells,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    failed = [c for c in cells if c["status"] == "failed"]
    print(evalharness.summary_markdown(results, cfg["models"], cfg["modalities"]))
    for c in failed:
        print(f"FAILED {c['model']}/{c['modality']}: {c['error']}", file=sys.stderr)
    print(f"wrote {res_dir}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _find_matrix(path):
    p = Path(path)
    for cand in (p, p / "accuracy_matrix.csv", p / "results" / "accuracy_matrix.csv"):
        if cand.is_file():
            return cand
    raise CliError(f"no accuracy_matrix.csv under {p}")


def cmd_stats(args):
    mpath = _find_matrix(args.results_dir)
    try:
        M = evalharness.read_accuracy_matrix(mpath)
    except (ValueError, pd.errors.ParserError) as exc:
        raise CliError(f"malformed accuracy matrix {mpath}: {exc}") from exc
    if M.isna().any().any():
        missing = [f"{m}/{d}" for m in M.index for d in M.columns if np.isnan(M.loc[m, d])]
        raise CliError(f"accuracy matrix has missing cells: {', '.join(missing)}")
    if M.shape[0] < 2:
        raise CliError("need >=2 models")
    if M.shape[1] < 2:
        raise CliError("need >=2 modalities")
    groups = {"all": list(M.index)}
    fam = args.family
    rnn = [m for m in M.index if m in models.RNN_TAGS]
    hbc = [m for m in M.index if m in models.HBC_TAGS]
    if fam == "auto":
        groups = {"rnn": rnn, "hbc": hbc} if len(rnn) >= 2 and len(hbc) >= 2 else groups
    elif fam in ("rnn", "hbc"):
        groups = {fam: rnn if fam == "rnn" else hbc}
    out = Path(args.out) if args.out else mpath.parent.parent / "stats"
    tie_tol = 0.0 if args.full_precision_ties else stats.DEFAULT_TIE_TOL
    for name, rows in groups.items():
        if len(rows) < 2:
            raise CliError(f"need >=2 models in family {name}")
        sub = out if len(groups) == 1 else out / name
        rm, res, wtl = stats.run_battery(M.loc[rows], sub, tie_tol=tie_tol, critical_value=args.critical_value)
        print(f"[{name}] chi2_F = {res.chi2:.2f}, F_F = {res.ff:.2f}, critical = {res.critical_value:.2f}: "
              f"{res.verdict()}")
        print(f"[{name}] win-tie-loss threshold = {wtl.threshold:.2f}; {len(wtl.significant_pairs)} significant pairs")
    print(f"wrote {out}")
    return EXIT_OK


def _manifest(out_dir):
    p = Path(out_dir) / "manifest.json"
    if not p.exists():
        raise CliError(f"no manifest.json in {out_dir}; run `smcbench run` first")
    return json.loads(p.read_text())


def cmd_explain(args):
    if args.k < 1:
        raise CliError("k must be >= 1")
    if args.model not in models.ALL_TAGS:
        raise CliError(f"unknown model tag {args.model!r}; valid tags: {', '.join(models.ALL_TAGS)}")
    if args.modality not in dataio.MODALITIES:
        raise CliError(f"unknown modality {args.modality!r}; valid: {', '.join(dataio.MODALITIES)}")
    out = Path(args.results_dir)
    dump = out / "results" / "models" / args.modality / f"{args.model}.npz"
    if not dump.exists():
        raise CliError(f"missing model dump {dump}")
    cfg = normalize_config(_manifest(out)["config"])
    cfg["modalities"] = [args.modality]
    datasets, _ = load_datasets(cfg)
    ds = datasets[args.modality]
    train, test = dataio.split_train_test(ds, split_spec(cfg))
    Xtr, Xte = train.features, test.features
    if not cfg["no_standardize"]:
        sp = dataio.fit_scaler(Xtr)
        Xtr, Xte = sp.transform(Xtr), sp.transform(Xte)
    model = models.load_model(dump)
    if args.subset == "smc_correct":
        rows = explain.default_explained(model, Xte, test.labels)
    else:
        rows = np.arange(test.n_samples)
    if rows.size == 0:
        raise CliError("no test instances to explain (no correctly classified SMC subjects)")
    n_perms = args.n_perms if args.n_perms is not None else int(cfg["n_perms"])
    seed = args.seed if args.seed is not None else int(cfg["explain_seed"])
    rep = explain.shapley_sample(model, Xtr, Xte[rows], n_perms=n_perms, seed=seed,
                                 feature_names=ds.feature_names)
    top = explain.top_k_features(rep, args.k)
    p_top, _ = explain.write_shap_tables(rep, top, out / "shap", args.modality)
    print(f"| Modality | Top {len(top.names)} Features |")
    print("|---|---|")
    print(f"| {args.modality} | " + ", ".join(top.names) + " |")
    print(f"wrote {p_top}")
    return EXIT_OK


def cmd_report(args):
    res_dir = Path(args.results_dir) / "results"
    if not res_dir.is_dir():
        raise CliError(f"no results directory under {args.results_dir}")
    results = evalharness.load_results(res_dir)
    if not results:
        raise CliError(f"no per-cell results in {res_dir}")
    order = None
    mp = Path(args.results_dir) / "manifest.json"
    if mp.exists():
        cfg = json.loads(mp.read_text())["config"]
        order = (cfg["models"], cfg["modalities"])
    text = evalharness.summary_markdown(results, *(order or (None, None)))
    (res_dir / "summary.md").write_text(text)
    print(text)
    return EXIT_OK


def cmd_synth(args):
    paths = dataio.write_synthetic_cohort(args.directory, n_per_class=args.n_per_class, seed=args.seed)
    for m, p in paths.items():
        print(f"{m}: {p}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    ap = argparse.ArgumentParser(prog="smcbench", description="Classifier benchmark for SMC vs HC feature tables.")
    ap.add_argument("--version", action="version", version=f"smcbench {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="tune, evaluate and persist results")
    r.add_argument("--config", help="YAML or JSON file with flat keys")
    r.add_argument("--data-dir", help="directory holding ct.csv, gm.csv, jd.csv, wm.csv")
    r.add_argument("--models", help="comma list of tags, or all/rnn/hbc")
    r.add_argument("--modalities", help="comma list from CT,GM,JD,WM,ALL")
    r.add_argument("--seeds", help="repetition seeds, e.g. 1-20 or 1,2,3")
    r.add_argument("--repetitions", type=int, help="use seeds 1..N when --seeds is absent")
    r.add_argument("--k", type=int, help="cross-validation folds")
    r.add_argument("--split-seed", type=int)
    r.add_argument("--train-fraction", type=float)
    r.add_argument("--out", help=f"output directory (env {ENV_OUTPUT})")
    r.add_argument("--jobs", type=int, help=f"parallel workers (env {ENV_JOBS})")
    r.add_argument("--full-grid", action="store_true", help="use the complete tuning grids")
    r.add_argument("--no-standardize", action="store_true")
    r.add_argument("--full-precision-ties", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("stats", help="ranks, Friedman test and win-tie-loss from an accuracy matrix")
    s.add_argument("results_dir", help="run output directory or accuracy_matrix.csv")
    s.add_argument("--family", choices=("auto", "all", "rnn", "hbc"), default="auto",
                   help="auto tests each family separately when both are present")
    s.add_argument("--critical-value", type=float, help="F critical value (default: alpha=0.05 quantile)")
    s.add_argument("--full-precision-ties", action="store_true", help="only exactly equal accuracies tie")
    s.add_argument("--out", help="directory for ranks.csv, friedman.txt, wtl.csv")
    s.set_defaults(func=cmd_stats)

    e = sub.add_parser("explain", help="Shapley top-k features of a stored model")
    e.add_argument("results_dir")
    e.add_argument("--model", required=True)
    e.add_argument("--modality", required=True)
    e.add_argument("--k", type=int, default=5)
    e.add_argument("--n-perms", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--subset", choices=("smc_correct", "test"), default="smc_correct")
    e.set_defaults(func=cmd_explain)

    p = sub.add_parser("report", help="rebuild the Markdown summary from per-cell CSVs")
    p.add_argument("results_dir")
    p.set_defaults(func=cmd_report)

    y = sub.add_parser("synth", help="write a synthetic cohort in the expected CSV layout")
    y.add_argument("directory")
    y.add_argument("--n-per-class", type=int, default=111)
    y.add_argument("--seed", type=int, default=0)
    y.set_defaults(func=cmd_synth)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (dataio.DataError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
