"""Shapley attributions of a model's raw decision score.

Absent features take the value of a single reference point, by default the
training-set feature means. The sampling estimator walks random feature
orderings and switches features from the reference to the explained
instance one at a time; each switch's change in score is that feature's
marginal contribution. The contributions along one ordering telescope to
``f(x) - f(reference)``, so efficiency holds exactly for every estimate.
"""

from dataclasses import dataclass
from math import factorial
from pathlib import Path

import numpy as np
import pandas as pd

from . import models as registry

EXACT_MAX_FEATURES = 12


@dataclass(frozen=True)
class ShapleyReport:
    """Attributions for a set of explained instances.

    ``values[i, j]`` is feature ``j``'s attribution on instance ``i``;
    ``attributions`` is their mean over instances and ``stderr`` its
    standard error over sampled orderings.
    """

    values: np.ndarray
    attributions: np.ndarray
    stderr: np.ndarray
    base_value: float
    n_permutations: int
    seed: int
    feature_names: tuple

    @property
    def mean_abs(self):
        return np.abs(self.values).mean(axis=0)


@dataclass(frozen=True)
class TopFeatures:
    names: tuple
    importance: tuple
    indices: tuple

    def to_frame(self):
        return pd.DataFrame({"rank": np.arange(1, len(self.names) + 1), "feature": list(self.names),
                             "mean_abs_shap": list(self.importance)})


def score_function(model):
    """Raw score callable for a trained model, or ``model`` itself if callable."""
    if callable(model):
        return model
    return lambda X: registry.predict(model, X)[1]


def _scores(f, Z):
    s = np.asarray(f(Z), dtype=float).reshape(-1)
    if s.shape[0] != Z.shape[0]:
        raise ValueError("score function returned the wrong number of values")
    if not np.all(np.isfinite(s)):
        raise FloatingPointError("model score is not finite on a synthetic point")
    return s


def shapley_sample(model, background, explain_set, n_perms=100, seed=0, feature_names=None, chunk=64):
    """Permutation-sampling Shapley estimate.

    Parameters
    ----------
    model : trained model or callable
        Callables map an ``(m, d)`` matrix to ``m`` scores.
    background : (n, d) or (d,) array
        Its column means are the reference point.
    explain_set : (m, d) array
    n_perms : int
        Orderings sampled; every explained instance shares them.
    seed : int
    chunk : int
        Orderings' steps evaluated per batch, a memory/speed trade-off only.
    """
    if n_perms < 1:
        raise ValueError("n_perms must be >= 1")
    f = score_function(model)
    ref = np.atleast_2d(np.asarray(background, dtype=float)).mean(axis=0)
    X = np.atleast_2d(np.asarray(explain_set, dtype=float))
    m, d = X.shape
    if ref.shape[0] != d:
        raise ValueError(f"background has {ref.shape[0]} features, explained set {d}")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(d))
    if len(names) != d:
        raise ValueError("feature_names has the wrong length")
    base = float(_scores(f, ref[None, :])[0])
    rng = np.random.default_rng(seed)
    total = np.zeros((m, d))
    per_perm = np.zeros((n_perms, d))
    for p in range(n_perms):
        order = rng.permutation(d)
        Z = np.repeat(ref[None, :], m, axis=0)
        prev = np.full(m, base)
        contrib = np.zeros((m, d))
        for start in range(0, d, chunk):
            steps = order[start:start + chunk]
            # one row block per step: features switched so far, this one included
            block = np.empty((len(steps), m, d))
            for s, j in enumerate(steps):
                Z[:, j] = X[:, j]
                block[s] = Z
            out = _scores(f, block.reshape(-1, d)).reshape(len(steps), m)
            for s, j in enumerate(steps):
                contrib[:, j] = out[s] - prev
                prev = out[s]
        total += contrib
        per_perm[p] = contrib.mean(axis=0)
    values = total / n_perms
    stderr = per_perm.std(axis=0, ddof=1) / np.sqrt(n_perms) if n_perms > 1 else np.full(d, np.nan)
    return ShapleyReport(values, values.mean(axis=0), stderr, base, int(n_perms), int(seed), names)


def shapley_exact(model, background, instance):
    """Exact Shapley values by enumerating all ``2^d`` coalitions (``d <= 12``)."""
    f = score_function(model)
    ref = np.atleast_2d(np.asarray(background, dtype=float)).mean(axis=0)
    x = np.asarray(instance, dtype=float).reshape(-1)
    d = x.size
    if ref.shape[0] != d:
        raise ValueError("background and instance dimensions differ")
    if d > EXACT_MAX_FEATURES:
        raise ValueError(f"exact enumeration supports at most {EXACT_MAX_FEATURES} features, got {d}")
    masks = np.arange(2**d)
    member = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
    v = _scores(f, np.where(member, x, ref))
    size = member.sum(axis=1)
    weight = np.array([factorial(s) * factorial(d - s - 1) / factorial(d) for s in range(d)])
    phi = np.zeros(d)
    for j in range(d):
        without = masks[~member[:, j]]
        phi[j] = np.sum(weight[size[without]] * (v[without | (1 << j)] - v[without]))
    return phi


def top_k_features(report, k=5):
    """Features ordered by mean absolute attribution; ties keep feature order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    imp = report.mean_abs
    k = min(k, imp.size)
    order = np.lexsort((np.arange(imp.size), -imp))[:k]
    return TopFeatures(tuple(report.feature_names[j] for j in order), tuple(float(imp[j]) for j in order),
                       tuple(int(j) for j in order))


def default_explained(model, X_test, y_test):
    """Rows of the test set that are SMC and classified correctly."""
    pred, _ = registry.predict(model, X_test)
    keep = (np.asarray(y_test) == 1) & (pred == 1)
    return np.flatnonzero(keep)


def write_shap_tables(report, top, out_dir, modality):
    """``<modality>_top<k>.csv`` plus a long-format per-instance table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = len(top.names)
    p_top = out / f"{modality}_top{k}.csv"
    top.to_frame().to_csv(p_top, index=False, float_format="%.10g")
    m, d = report.values.shape
    long = pd.DataFrame({
        "instance": np.repeat(np.arange(m), d),
        "feature": np.tile(report.feature_names, m),
        "attribution": report.values.reshape(-1),
    })
    p_long = out / f"{modality}_shap_long.csv"
    long.to_csv(p_long, index=False, float_format="%.10g")
    return p_top, p_long
