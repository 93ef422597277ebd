"""Metrics, cross-validated grid search and the repeated hold-out protocol.

The protocol for one (model, modality) cell:

1. split the cohort once into a stratified 70/30 train/test partition;
2. for every repetition seed, run a 5-fold grid search on the training
   partition (fold assignment and hidden weights both use that seed),
   refit the winner on the whole training partition and score it on the
   test partition;
3. keep every repetition and select the one with the highest validation
   accuracy, so the test rows never influence the choice.
"""

from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
import json
import logging
from pathlib import Path
import warnings

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import models as registry
from .dataio import kfold_indices, fit_scaler, split_train_test, SplitSpec

logger = logging.getLogger(__name__)

METRIC_NAMES = ("acc", "sens", "spec", "prec", "fmeasure")
MISSING = "NA"
DEFAULT_SEEDS = tuple(range(1, 21))

# Exceptions that mark a single configuration (or cell) as failed rather than
# aborting the whole run.
SOFT_FAILURES = (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError)


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with +1 (SMC) as the positive class."""

    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v}")
            object.__setattr__(self, name, int(v))

    @property
    def n(self):
        return self.tp + self.tn + self.fp + self.fn

    @property
    def positives(self):
        return self.tp + self.fn

    @property
    def negatives(self):
        return self.tn + self.fp


@dataclass(frozen=True)
class MetricReport:
    acc: float
    sens: float
    spec: float
    prec: float
    fmeasure: float
    cm: ConfusionMatrix
    undefined: tuple = ()

    def as_dict(self, percent=False):
        s = 100.0 if percent else 1.0
        return {k: getattr(self, k) * s for k in METRIC_NAMES}


def _check_pm1(v, what):
    v = np.asarray(v)
    if v.ndim != 1:
        raise ValueError(f"{what} must be a vector")
    if not np.all(np.isin(v, (-1, 1))):
        raise ValueError(f"{what} contains labels other than +1/-1")
    return v.astype(int)


def confusion(y_true, y_pred):
    t = _check_pm1(y_true, "y_true")
    p = _check_pm1(y_pred, "y_pred")
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} vs {p.size}")
    return ConfusionMatrix(
        tp=int(np.sum((t == 1) & (p == 1))),
        tn=int(np.sum((t == -1) & (p == -1))),
        fp=int(np.sum((t == -1) & (p == 1))),
        fn=int(np.sum((t == 1) & (p == -1))),
    )


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def f_measure(prec, sens):
    """Harmonic mean of precision and sensitivity (0 when both are 0)."""
    return 0.0 if prec + sens == 0 else 2.0 * prec * sens / (prec + sens)


def metrics(cm):
    """Accuracy, sensitivity, specificity, precision and f-measure of ``cm``.

    Ratios with a zero denominator are reported as 0 and their names are
    listed in ``MetricReport.undefined``.
    """
    if cm.n == 0:
        raise ValueError("empty confusion matrix")
    flags = []
    acc = (cm.tp + cm.tn) / cm.n
    sens = _ratio(cm.tp, cm.tp + cm.fn, "sens", flags)
    spec = _ratio(cm.tn, cm.tn + cm.fp, "spec", flags)
    prec = _ratio(cm.tp, cm.tp + cm.fp, "prec", flags)
    if prec + sens == 0:
        flags.append("fmeasure")
    return MetricReport(acc, sens, spec, prec, f_measure(prec, sens), cm, tuple(flags))


def evaluate(y_true, y_pred):
    return metrics(confusion(y_true, y_pred))


# ---------------------------------------------------------------- grid search

@dataclass
class CvResult:
    best: dict
    best_score: float
    table: pd.DataFrame
    n_failed: int = 0

    @property
    def best_index(self):
        return int(self.table.loc[self.table["selected"]].index[0])


def _fold_sets(train, k, seed, standardize):
    folds = kfold_indices(train.labels, k=k, seed=seed)
    X, y = train.features, train.labels
    out = []
    for f in range(k):
        tr, va = folds.indices(f)
        Xtr, Xva = X[tr], X[va]
        if standardize:
            sp = fit_scaler(Xtr)
            Xtr, Xva = sp.transform(Xtr), sp.transform(Xva)
        out.append((Xtr, y[tr], Xva, y[va]))
    return out


def _score_config(tag, cfg, fold_sets, seed):
    """Fold accuracies for one configuration, or the failure message."""
    accs = []
    try:
        with warnings.catch_warnings():
            # solver warnings are expected somewhere in wide grids; a
            # non-converged QP already raises through the trainers
            warnings.simplefilter("ignore")
            for Xtr, ytr, Xva, yva in fold_sets:
                model = registry.fit(tag, (Xtr, ytr), cfg, seed=seed)
                pred, _ = registry.predict(model, Xva)
                accs.append(float(np.mean(pred == yva)))
    except SOFT_FAILURES as exc:
        return None, f"{type(exc).__name__}: {exc}"
    return accs, None


def _run_stage(tag, configs, fold_sets, seed, n_jobs, stage):
    if n_jobs == 1:
        out = [_score_config(tag, c, fold_sets, seed) for c in configs]
    else:
        out = Parallel(n_jobs=n_jobs)(delayed(_score_config)(tag, c, fold_sets, seed) for c in configs)
    rows = []
    for i, (cfg, (accs, err)) in enumerate(zip(configs, out)):
        if err is not None:
            logger.info("%s stage %d config %d %s failed: %s", tag, stage, i, cfg, err)
        rows.append({
            "stage": stage, "config_index": i, "config": cfg,
            "fold_acc": accs, "mean_acc": np.nan if accs is None else float(np.mean(accs)),
            "error": err,
        })
    return rows


def _argmax_first(rows):
    best = None
    for r in rows:
        if r["error"] is None and (best is None or r["mean_acc"] > best["mean_acc"]):
            best = r
    return best


def grid_search_cv(tag, grid, train, k=5, seed=0, standardize=True, n_jobs=1):
    """Pick the configuration of ``grid`` with the best mean k-fold accuracy.

    Parameters
    ----------
    tag : str
        Model tag from :data:`smcbench.models.ALL_TAGS`.
    grid : GridSpec
    train : Dataset
        Training partition only; it is the sole data this function touches.
    k, seed : int
        Fold count and seed; the seed also drives the hidden weights.
    standardize : bool
        Z-score each fold with statistics of its own training rows.

    Returns
    -------
    CvResult
        ``table`` lists every evaluated configuration in grid order. Ties go
        to the first configuration. Configurations whose training raised are
        kept in the table with their error and excluded from selection.
    """
    if grid.tag != tag:
        raise ValueError(f"grid is for {grid.tag!r}, not {tag!r}")
    fold_sets = _fold_sets(train, k, seed, standardize)
    rows = _run_stage(tag, grid.configs(), fold_sets, seed, n_jobs, stage=1)
    best = _argmax_first(rows)
    if best is None:
        raise RuntimeError(f"{tag}: every grid configuration failed")
    if grid.stage2 is not None:
        stage2 = grid.configs(grid.stage2.axes(best["config"]))
        rows2 = _run_stage(tag, stage2, fold_sets, seed, n_jobs, stage=2)
        best2 = _argmax_first(rows2)
        # stage-one rows precede stage-two rows, so an equal score keeps the
        # stage-one winner
        if best2 is not None and best2["mean_acc"] > best["mean_acc"]:
            best = best2
        rows += rows2
    table = pd.DataFrame(rows)
    table["selected"] = [r is best for r in rows]
    n_failed = int(table["error"].notna().sum())
    return CvResult(dict(best["config"]), float(best["mean_acc"]), table, n_failed)


# ---------------------------------------------------------------- experiment

@dataclass
class Repetition:
    seed: int
    config: dict
    val_acc: float
    report: MetricReport


@dataclass
class ExperimentResult:
    model: str
    modality: str
    repetitions: list = field(default_factory=list)
    selected_index: int = None
    error: str = None
    selected_model: object = None

    @property
    def failed(self):
        return self.error is not None

    @property
    def selected(self):
        return None if self.failed else self.repetitions[self.selected_index].report

    @property
    def best_hyper(self):
        return None if self.failed else self.repetitions[self.selected_index].config

    @property
    def reports(self):
        return [r.report for r in self.repetitions]

    @property
    def accuracies(self):
        return np.array([r.report.acc for r in self.repetitions])

    @property
    def mean_acc(self):
        return float(np.mean(self.accuracies)) if self.repetitions else np.nan

    @property
    def std_acc(self):
        return float(np.std(self.accuracies, ddof=1)) if len(self.repetitions) > 1 else 0.0


def _prepared_split(ds, split, standardize):
    train, test = split_train_test(ds, split)
    Xtr, Xte = train.features, test.features
    if standardize:
        sp = fit_scaler(Xtr)
        Xtr, Xte = sp.transform(Xtr), sp.transform(Xte)
    return train, test, Xtr, Xte


def run_repetition(tag, ds, grid, seed, split=SplitSpec(), k=5, standardize=True):
    """Tune on the training partition with ``seed``, then score on the test rows."""
    train, test, Xtr, Xte = _prepared_split(ds, split, standardize)
    cv = grid_search_cv(tag, grid, train, k=k, seed=seed, standardize=standardize)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = registry.fit(tag, (Xtr, train.labels), cv.best, seed=seed)
    pred, _ = registry.predict(model, Xte)
    return Repetition(int(seed), cv.best, cv.best_score, evaluate(test.labels, pred)), model


def _cell_rep(tag, modality, ds, grid, seed, split, k, standardize):
    try:
        return run_repetition(tag, ds, grid, seed, split, k, standardize), None
    except SOFT_FAILURES as exc:
        logger.warning("%s/%s seed %d failed: %s", tag, modality, seed, exc)
        return None, f"seed {seed}: {type(exc).__name__}: {exc}"


def run_experiment(model_tags, datasets, split=SplitSpec(), seeds=DEFAULT_SEEDS, k=5,
                   full_grid=False, grids=None, standardize=True, n_jobs=1):
    """Run every (model, modality, seed) cell of the protocol.

    Parameters
    ----------
    model_tags : sequence of str
    datasets : dict
        Modality name to :class:`~smcbench.dataio.Dataset`.
    split : SplitSpec
        Fixed train/test partition shared by all repetitions.
    seeds : sequence of int
        One repetition per seed, 1..20 by default.
    grids : dict, optional
        Tag to GridSpec overrides; otherwise smoke or full grids.
    n_jobs : int
        Work items are (model, modality, seed) triples; results are merged by
        key, so any ``n_jobs`` gives the same table.

    Returns
    -------
    dict
        ``(model, modality)`` to :class:`ExperimentResult`. A cell with any
        failed repetition is marked failed instead of aborting the run.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("at least one repetition seed is required")
    grids = dict(grids or {})
    keys = [(m, mod, s) for m in model_tags for mod in datasets for s in seeds]
    for m in model_tags:
        grids.setdefault(m, registry.grid_for(m, full=full_grid))
    jobs = (delayed(_cell_rep)(m, mod, datasets[mod], grids[m], s, split, k, standardize) for m, mod, s in keys)
    if n_jobs == 1:
        outs = [fn(*a, **kw) for fn, a, kw in jobs]
    else:
        outs = Parallel(n_jobs=n_jobs)(jobs)
    by_key = dict(zip(keys, outs))

    results = {}
    for m in model_tags:
        for mod in datasets:
            res = ExperimentResult(m, mod)
            errors = []
            fitted = []
            for s in seeds:
                out, err = by_key[(m, mod, s)]
                if err is not None:
                    errors.append(err)
                else:
                    res.repetitions.append(out[0])
                    fitted.append(out[1])
            if errors:
                res.error = "; ".join(errors)
            else:
                vals = [r.val_acc for r in res.repetitions]
                res.selected_index = int(np.argmax(vals))
                res.selected_model = fitted[res.selected_index]
            results[(m, mod)] = res
    return results


# ---------------------------------------------------------------- tables

def round_half_up(x, places=2):
    """Decimal rounding with ties away from zero, as printed in result tables."""
    if x is None or not np.isfinite(x):
        return np.nan
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def format_percent(x, places=2):
    if x is None or not np.isfinite(x):
        return MISSING
    return f"{round_half_up(x, places):.{places}f}"


def accuracy_matrix(results, models=None, modalities=None, which="selected"):
    """Model x modality accuracies in percent, full precision.

    ``which`` is ``"selected"`` (best-validation repetition) or ``"mean"``.
    Failed or absent cells are NaN, written as ``NA``.
    """
    models = list(models) if models is not None else list(dict.fromkeys(m for m, _ in results))
    modalities = list(modalities) if modalities is not None else list(dict.fromkeys(d for _, d in results))
    M = np.full((len(models), len(modalities)), np.nan)
    for i, m in enumerate(models):
        for j, d in enumerate(modalities):
            r = results.get((m, d))
            if r is None or r.failed:
                continue
            M[i, j] = 100.0 * (r.selected.acc if which == "selected" else r.mean_acc)
    return pd.DataFrame(M, index=pd.Index(models, name="model"), columns=modalities)


def matrix_from_metrics(df, metric="acc"):
    """Pivot a long ``model,modality,<metrics>`` table into a model x modality matrix."""
    models = list(dict.fromkeys(df["model"]))
    mods = list(dict.fromkeys(df["modality"]))
    out = df.pivot(index="model", columns="modality", values=metric).loc[models, mods]
    out.columns.name = None
    return out.astype(float)


def write_accuracy_matrix(M, path):
    out = M.apply(lambda col: col.map(format_percent))
    out.to_csv(path, index_label="model")


def read_accuracy_matrix(path):
    df = pd.read_csv(path, index_col=0, dtype=str, keep_default_na=False)
    return df.apply(lambda col: pd.to_numeric(col.where(col != MISSING), errors="raise")).astype(float)


def repetition_frame(result):
    rows = []
    for i, rep in enumerate(result.repetitions):
        cm = rep.report.cm
        row = {"repetition": i + 1, "seed": rep.seed, "val_acc": rep.val_acc}
        row.update(rep.report.as_dict())
        row.update(tp=cm.tp, tn=cm.tn, fp=cm.fp, fn=cm.fn)
        row["undefined"] = ";".join(rep.report.undefined)
        row["selected"] = i == result.selected_index
        row["config"] = json.dumps(rep.config, sort_keys=True)
        rows.append(row)
    return pd.DataFrame(rows)


def summary_markdown(results, models=None, modalities=None):
    """Markdown table: one row per model, ``Acc, Sens, Spec, Prec, F`` per modality."""
    models = list(models) if models is not None else list(dict.fromkeys(m for m, _ in results))
    modalities = list(modalities) if modalities is not None else list(dict.fromkeys(d for _, d in results))
    head = "| Model | " + " | ".join(modalities) + " |"
    sep = "|---" * (len(modalities) + 1) + "|"
    lines = ["Selected repetition: [Acc, Sens, Spec, Prec, F-measure] in percent", "", head, sep]
    for m in models:
        cells = []
        for d in modalities:
            r = results.get((m, d))
            if r is None or r.failed:
                cells.append(MISSING)
            else:
                vals = r.selected.as_dict(percent=True)
                cells.append("[" + ", ".join(format_percent(vals[k]) for k in METRIC_NAMES) + "]")
        lines.append(f"| {m} | " + " | ".join(cells) + " |")
    lines += ["", "Mean +- std test accuracy over repetitions (percent)", "", head, sep]
    for m in models:
        cells = []
        for d in modalities:
            r = results.get((m, d))
            if r is None or r.failed:
                cells.append(MISSING)
            else:
                cells.append(f"{format_percent(100 * r.mean_acc)} +- {format_percent(100 * r.std_acc)}")
        lines.append(f"| {m} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_results(results, out_dir, models=None, modalities=None, save_models=True):
    """Persist per-cell CSVs, the accuracy matrices, the summary and model dumps.

    Returns the list of written paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for (m, d), r in results.items():
        sub = out / d
        sub.mkdir(exist_ok=True)
        p = sub / f"{m}.csv"
        if r.failed:
            pd.DataFrame([{"error": r.error}]).to_csv(p, index=False)
        else:
            repetition_frame(r).to_csv(p, index=False, float_format="%.17g")
        written.append(p)
        if save_models and not r.failed and r.selected_model is not None:
            mp = out / "models" / d
            mp.mkdir(parents=True, exist_ok=True)
            registry.save_model(r.selected_model, mp / f"{m}.npz")
            written.append(mp / f"{m}.npz")
    p = out / "accuracy_matrix.csv"
    write_accuracy_matrix(accuracy_matrix(results, models, modalities), p)
    written.append(p)
    p = out / "accuracy_matrix_mean.csv"
    write_accuracy_matrix(accuracy_matrix(results, models, modalities, which="mean"), p)
    written.append(p)
    p = out / "summary.md"
    p.write_text(summary_markdown(results, models, modalities))
    written.append(p)
    return written


def load_results(out_dir):
    """Rebuild ``(model, modality) -> ExperimentResult`` from per-cell CSVs."""
    out = Path(out_dir)
    results = {}
    for sub in sorted(p for p in out.iterdir() if p.is_dir() and p.name != "models"):
        for f in sorted(sub.glob("*.csv")):
            df = pd.read_csv(f, keep_default_na=False)
            res = ExperimentResult(f.stem, sub.name)
            if "error" in df.columns:
                res.error = str(df["error"].iloc[0])
            else:
                for _, row in df.iterrows():
                    cm = ConfusionMatrix(int(row.tp), int(row.tn), int(row.fp), int(row.fn))
                    res.repetitions.append(Repetition(int(row.seed), json.loads(row.config), float(row.val_acc), metrics(cm)))
                res.selected_index = int(np.flatnonzero(df["selected"].astype(str) == "True")[0])
            results[(res.model, res.modality)] = res
    return results
