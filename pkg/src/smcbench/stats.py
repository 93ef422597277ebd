"""Rank-based comparison of several classifiers over several datasets.

All functions take an accuracy matrix with one row per dataset (modality)
and one column per model, either as a numpy array or as a DataFrame whose
index/columns carry the names.
"""

from dataclasses import dataclass
import math
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats as sps

DEFAULT_TIE_TOL = 0.05
Z_95 = 1.96


@dataclass(frozen=True)
class RankMatrix:
    ranks: np.ndarray
    avg_ranks: np.ndarray
    models: tuple
    datasets: tuple

    @property
    def n_models(self):
        return self.ranks.shape[1]

    @property
    def n_datasets(self):
        return self.ranks.shape[0]

    def to_frame(self):
        df = pd.DataFrame(self.ranks, index=list(self.datasets), columns=list(self.models))
        df.loc["avg"] = self.avg_ranks
        df.index.name = "modality"
        return df


@dataclass(frozen=True)
class FriedmanResult:
    chi2: float
    ff: float
    dof1: int
    dof2: int
    critical_value: float
    reject: bool
    pole: bool = False

    def verdict(self):
        return "reject" if self.reject else "fail to reject"


@dataclass(frozen=True)
class WtlTable:
    """Pairwise ``[wins, ties, losses]`` of row model against column model."""

    counts: np.ndarray
    models: tuple
    threshold: float
    significant_pairs: tuple

    def triple(self, row, col):
        i, j = self.models.index(row), self.models.index(col)
        return tuple(int(v) for v in self.counts[i, j])

    def to_frame(self):
        rows = []
        for i, a in enumerate(self.models):
            for j, b in enumerate(self.models):
                if i != j:
                    w, t, l = self.counts[i, j]
                    rows.append({"row": a, "col": b, "win": int(w), "tie": int(t), "loss": int(l),
                                 "significant": (a, b) in self.significant_pairs})
        return pd.DataFrame(rows)


def _matrix(acc, models=None, datasets=None):
    if isinstance(acc, pd.DataFrame):
        models = tuple(str(c) for c in acc.columns) if models is None else tuple(models)
        datasets = tuple(str(i) for i in acc.index) if datasets is None else tuple(datasets)
        A = acc.to_numpy(dtype=float)
    else:
        A = np.atleast_2d(np.asarray(acc, dtype=float))
        models = tuple(f"m{j}" for j in range(A.shape[1])) if models is None else tuple(models)
        datasets = tuple(f"d{i}" for i in range(A.shape[0])) if datasets is None else tuple(datasets)
    if A.ndim != 2:
        raise ValueError("accuracy matrix must be 2-D")
    if not np.all(np.isfinite(A)):
        raise ValueError("accuracy matrix has missing cells")
    if len(models) != A.shape[1] or len(datasets) != A.shape[0]:
        raise ValueError("names do not match the matrix shape")
    return A, models, datasets


def _tie_groups(values, tol):
    """Indices sorted by descending value, split into groups of tied values.

    Neighbours in sorted order closer than ``tol`` are chained into one group.
    ``tol=0`` means exact equality.
    """
    order = np.argsort(-values, kind="stable")
    groups = [[order[0]]]
    for a, b in zip(order[:-1], order[1:]):
        if values[a] - values[b] <= tol:
            groups[-1].append(b)
        else:
            groups.append([b])
    return groups


def rank_row(values, tie_tol=DEFAULT_TIE_TOL):
    """Rank 1 for the highest value; tied values share their mean position."""
    values = np.asarray(values, dtype=float)
    ranks = np.empty(values.size)
    pos = 1
    for g in _tie_groups(values, tie_tol):
        ranks[g] = pos + (len(g) - 1) / 2.0
        pos += len(g)
    return ranks


def rank_models(acc, tie_tol=DEFAULT_TIE_TOL, models=None, datasets=None):
    """Per-dataset ranks and their column means.

    Parameters
    ----------
    acc : (P, N) array or DataFrame
        Accuracies in percent, datasets by models.
    tie_tol : float
        Accuracies closer than this (in the same units) count as tied. The
        default absorbs the rounding of values reported to two decimals; pass 0
        for exact comparison.
    """
    A, models, datasets = _matrix(acc, models, datasets)
    R = np.vstack([rank_row(row, tie_tol) for row in A])
    return RankMatrix(R, R.mean(axis=0), models, datasets)


def f_critical(dof1, dof2, alpha=0.05):
    """Upper ``alpha`` quantile of the F distribution."""
    return float(sps.f.ppf(1.0 - alpha, dof1, dof2))


def friedman(rm, critical_value=None, alpha=0.05):
    """Friedman chi-square and its F-distributed correction.

    ``critical_value`` defaults to the F quantile at ``alpha`` for
    ``(N - 1, (P - 1)(N - 1))`` degrees of freedom. When ``P (N - 1)``
    equals the chi-square statistic the correction has a pole: ``ff`` is
    infinite and ``pole`` is set.
    """
    N, P = rm.n_models, rm.n_datasets
    if N < 2:
        raise ValueError("need >=2 models")
    if P < 2:
        raise ValueError("need >=2 datasets")
    R = rm.avg_ranks
    chi2 = 12.0 * P / (N * (N + 1)) * (np.sum(R**2) - N * (N + 1) ** 2 / 4.0)
    chi2 = max(float(chi2), 0.0) if abs(chi2) < 1e-12 else float(chi2)
    denom = P * (N - 1) - chi2
    pole = abs(denom) <= 1e-12 * P * N
    ff = math.inf if pole else (P - 1) * chi2 / denom
    dof1, dof2 = N - 1, (P - 1) * (N - 1)
    if critical_value is None:
        critical_value = f_critical(dof1, dof2, alpha)
    return FriedmanResult(chi2, float(ff), dof1, dof2, float(critical_value), bool(ff > critical_value), pole)


def wtl_threshold(P, z=Z_95):
    return P / 2.0 + z * math.sqrt(P) / 2.0


def effective_wins(wins, ties):
    """Wins plus half of the ties; with an odd tie count one tie is dropped."""
    return wins + ties // 2


def win_tie_loss(acc, tie_tol=DEFAULT_TIE_TOL, models=None, datasets=None, z=Z_95):
    """Pairwise sign test over datasets.

    Raw counts are stored untouched; significance uses
    :func:`effective_wins` against ``P/2 + z sqrt(P)/2``.
    """
    A, models, datasets = _matrix(acc, models, datasets)
    P, N = A.shape
    counts = np.zeros((N, N, 3), dtype=int)
    for i in range(N):
        for j in range(N):
            diff = A[:, i] - A[:, j]
            tie = np.abs(diff) <= tie_tol
            counts[i, j] = (np.sum(~tie & (diff > 0)), np.sum(tie), np.sum(~tie & (diff < 0)))
    thr = wtl_threshold(P, z)
    sig = tuple(
        (models[i], models[j]) for i in range(N) for j in range(N)
        if i != j and effective_wins(counts[i, j, 0], counts[i, j, 1]) >= thr
    )
    return WtlTable(counts, models, thr, sig)


def friedman_report(rm, res):
    lines = [
        f"models N = {rm.n_models}, datasets P = {rm.n_datasets}",
        "average ranks:",
    ]
    lines += [f"  {m}: {r:.2f}" for m, r in zip(rm.models, rm.avg_ranks)]
    lines += [
        f"chi2_F = {res.chi2:.4f}",
        f"F_F = {res.ff:.4f}" + ("  (pole: P(N-1) equals chi2_F)" if res.pole else ""),
        f"dof = ({res.dof1}, {res.dof2})",
        f"critical value = {res.critical_value:.4f}",
        f"verdict: {res.verdict()}",
    ]
    return "\n".join(lines) + "\n"


def run_battery(acc_by_model, out_dir=None, tie_tol=DEFAULT_TIE_TOL, critical_value=None, alpha=0.05):
    """Ranks, Friedman test and win-tie-loss for a model x modality matrix.

    ``acc_by_model`` is laid out like ``accuracy_matrix.csv`` (models as
    rows). When ``out_dir`` is given, ``ranks.csv``, ``friedman.txt`` and
    ``wtl.csv`` are written there.
    """
    A = acc_by_model.T
    if A.shape[1] < 2:
        raise ValueError("need >=2 models")
    rm = rank_models(A, tie_tol)
    res = friedman(rm, critical_value, alpha)
    wtl = win_tie_loss(A, tie_tol)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rm.to_frame().to_csv(out / "ranks.csv", float_format="%.10g")
        (out / "friedman.txt").write_text(
            friedman_report(rm, res) + f"win-tie-loss threshold = {wtl.threshold:.4f}\n"
        )
        wtl.to_frame().to_csv(out / "wtl.csv", index=False)
    return rm, res, wtl
