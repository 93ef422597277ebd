"""Acceptance criteria, one test per criterion.

Each test records a one-line verdict through the ``acceptance_line`` fixture;
the lines are printed together at the end of the pytest run.
"""

import json
import os
import re
import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from smcbench import cli, dataio, evalharness, models
from smcbench.evalharness import f_measure, matrix_from_metrics, write_accuracy_matrix
from smcbench.explain import shapley_exact, shapley_sample
from smcbench.hbc import (
    HbcHyper, decision_values, predict_hbc, train_iftsvm, train_lssvm, train_pin_gtsvm, train_pin_svm,
    train_svm, train_tsvm,
)
from smcbench.numcore import QpProblem, box_qp_solve, pinv, ridge_residual, ridge_solve
from smcbench.rnn import RnnHyper, predict, train, train_drvfl, train_edrvfl, train_ifrvfl, train_rvfl

from conftest import enumerate_box_qp, toy_two_class

DATA = Path(__file__).parent / "data"

# environment variables pointing at the released data; the data-dependent
# criteria are skipped when they are unset
RESULTS_ENV = "SMCBENCH_ACCEPT_RESULTS"
COHORT_ENV = "SMCBENCH_ACCEPT_COHORT"


def _verdict(ok):
    return "PASS" if ok else "FAIL"


# ---------------------------------------------------------------- criterion 1

def _stats_via_cli(tmp_path, fam, critical):
    """Run ``smcbench stats`` on the reference accuracy matrix of one family (tests/data)."""
    M = matrix_from_metrics(pd.read_csv(DATA / f"{fam}_metrics.csv"))
    mpath = tmp_path / fam / "accuracy_matrix.csv"
    mpath.parent.mkdir(parents=True)
    write_accuracy_matrix(M, mpath)
    out = tmp_path / fam / "stats"
    code = cli.main(["stats", str(mpath), "--family", fam, "--critical-value", str(critical), "--out", str(out)])
    assert code == 0
    ranks = pd.read_csv(out / "ranks.csv", index_col=0)
    text = (out / "friedman.txt").read_text()
    fields = dict(re.findall(r"^(chi2_F|F_F|verdict|win-tie-loss threshold) = ?:? ?(.+)$", text, re.M))
    verdict = re.search(r"^verdict: (.+)$", text, re.M).group(1)
    wtl = pd.read_csv(out / "wtl.csv")
    return ranks, float(fields["chi2_F"]), float(fields["F_F"].split()[0]), verdict, \
        float(fields["win-tie-loss threshold"]), wtl


def _criterion_1(tmp_path):
    t0 = time.perf_counter()
    checks = {}
    for fam, critical, chi2, ff, chi_tol, verdict in (
        ("rnn", 1.96, 32.56, 4.75, 0.01, "reject"),
        ("hbc", 1.84, 16.01, 1.09, 0.02, "fail to reject"),
    ):
        ranks, got_chi2, got_ff, got_verdict, thr, wtl = _stats_via_cli(tmp_path, fam, critical)
        ref = pd.read_csv(DATA / f"{fam}_ranks.csv", index_col=0)
        got = ranks.loc[ref.index, ref.columns]
        checks[f"{fam} ranks"] = bool(np.array_equal(got.to_numpy(), ref.to_numpy()))
        avg = ranks.loc["avg", ref.columns].to_numpy()
        checks[f"{fam} avg ranks"] = bool(np.allclose(avg, ref.to_numpy().mean(axis=0)))
        checks[f"{fam} chi2"] = abs(got_chi2 - chi2) <= chi_tol
        checks[f"{fam} F_F"] = abs(got_ff - ff) <= 0.01
        checks[f"{fam} verdict"] = got_verdict == verdict
        if fam == "rnn":
            checks["threshold"] = abs(thr - 4.69) <= 0.01
            mine = wtl[wtl["row"] == "dRVFL"]
            triples = {r.col: (r.win, r.tie, r.loss) for r in mine.itertuples()}
    elapsed = time.perf_counter() - t0
    checks["runtime"] = elapsed < 1.0
    return checks, triples, elapsed


def test_criterion_1_statistics(tmp_path, acceptance_line):
    checks, triples, elapsed = _criterion_1(tmp_path)
    drvfl_clause = len(triples) == 12 and all(t == (5, 0, 0) for t in triples.values())
    off = {m: t for m, t in triples.items() if t != (5, 0, 0)}
    failed = [k for k, ok in checks.items() if not ok]
    if not drvfl_clause:
        failed.append("dRVFL [5,0,0] vs all 12 (" + ", ".join(f"{m}={list(t)}" for m, t in off.items()) + ")")
    acceptance_line(1, _verdict(not failed),
                    f"ranks/Friedman/threshold {sum(checks.values())}/{len(checks)} ok in {elapsed:.2f}s"
                    + (f"; failing: {'; '.join(failed)}" if failed else ""))
    # the dRVFL clause is asserted separately below
    assert not [k for k, ok in checks.items() if not ok]


@pytest.mark.xfail(strict=True, reason="reference accuracies give dRVFL vs edRVFL = [3,0,2], not [5,0,0]; "
                                      "see the decisions ledger")
def test_criterion_1_drvfl_beats_all_twelve(tmp_path):
    _, triples, _ = _criterion_1(tmp_path)
    assert len(triples) == 12
    for m, t in triples.items():
        assert t == (5, 0, 0), f"dRVFL vs {m} = {list(t)}"


# ---------------------------------------------------------------- criterion 2

def test_criterion_2_metric_consistency(acceptance_line):
    worst, bad, n = 0.0, [], 0
    for fam in ("rnn", "hbc"):
        for r in pd.read_csv(DATA / f"{fam}_metrics.csv").itertuples():
            gap = abs(f_measure(r.prec, r.sens) - r.fmeasure)
            worst = max(worst, gap)
            n += 1
            if gap > 0.05:
                bad.append(f"{r.model}/{r.modality}")
    example = f_measure(63.34, 61.3)
    ok = not bad and abs(example - 62.30) <= 0.05
    acceptance_line(2, _verdict(ok), f"{n} rows, worst |f - stated| = {worst:.4f} pp, RVFL/CT -> {example:.2f}"
                    + (f"; off: {', '.join(bad)}" if bad else ""))
    assert ok


# ---------------------------------------------------------------- criterion 3

def _random_qp(r, with_eq):
    M = r.normal(size=(4, 4))
    Q = M @ M.T if r.random() < 0.7 else M[:, :2] @ M[:, :2].T
    q = r.normal(size=4) * 2
    lower = -r.uniform(0, 2, 4)
    upper = r.uniform(0, 2, 4)
    if with_eq:
        a = r.choice([-1.0, 1.0], 4)
        return Q, q, lower, upper, a, float(a @ r.uniform(lower, upper))
    return Q, q, lower, upper, None, None


def test_criterion_3_solvers(acceptance_line):
    t0 = time.perf_counter()
    r = np.random.default_rng(7)
    gap = 0.0
    for i in range(200):
        Q, q, lo, hi, a, b = _random_qp(r, with_eq=i % 2 == 1)
        res = box_qp_solve(QpProblem(Q, q, lo, hi, a, b), tol=1e-10)
        feasible = np.all(res.x >= lo) and np.all(res.x <= hi) and (a is None or abs(a @ res.x - b) < 1e-9)
        gap = max(gap, res.fun - enumerate_box_qp(Q, q, lo, hi, a, b)[0] if feasible else np.inf)
    ridge = 0.0
    for n, d in ((40, 10), (10, 40), (60, 60)):
        A, B = r.normal(size=(n, d)), r.normal(size=(n, 2))
        for C in (1e-3, 1.0, 1e3):
            ridge = max(ridge, ridge_residual(A, B, C, ridge_solve(A, B, C)))
    penrose = 0.0
    for shape, rank in (((8, 5), 5), ((5, 8), 5), ((7, 6), 3)):
        A = r.normal(size=(shape[0], rank)) @ r.normal(size=(rank, shape[1]))
        P = pinv(A)
        penrose = max(penrose, *(np.abs(v).max() for v in (
            A @ P @ A - A, P @ A @ P - P, (A @ P).T - A @ P, (P @ A).T - P @ A)))
    elapsed = time.perf_counter() - t0
    ok = gap < 1e-6 and ridge < 1e-7 and penrose < 1e-8 and elapsed < 30
    acceptance_line(3, _verdict(ok), f"QP gap {gap:.1e}, ridge residual {ridge:.1e}, "
                    f"Penrose {penrose:.1e}, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- criterion 4

def _rnn_hyper(**kw):
    base = dict(C=1.0, N=40, Act=3, lam=0.0, mu=2.0, L=1, n_feat_groups=3, n_feat_nodes=4, n_enh_groups=10)
    base.update(kw)
    return RnnHyper(**base)


def _max_gap(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def test_criterion_4_reductions(acceptance_line):
    t0 = time.perf_counter()
    X, y = toy_two_class(n_per=40, d=4, shift=2.0, seed=1)
    toy = (X, y)
    h = _rnn_hyper()

    def rnn_score(tag, hyper=h):
        return predict(train(tag, toy, hyper, seed=4), X)[1]

    gaps = {
        "{MCVELM,MVELM,GEELM-LDA,GEELM-LFDA}(lam=0)=ELM": max(
            _max_gap(rnn_score(v), rnn_score("ELM")) for v in ("MCVELM", "MVELM", "GEELM-LDA", "GEELM-LFDA")),
        "{Class,Total}-Var-RVFL(lam=0)=RVFL": max(
            _max_gap(rnn_score(v), rnn_score("RVFL")) for v in ("Class-Var-RVFL", "Total-Var-RVFL")),
        "IFRVFL(scores=1)=RVFL": _max_gap(predict(train_ifrvfl(toy, h, 4, scores=np.ones(len(y))), X)[1],
                                          predict(train_rvfl(toy, h, 4), X)[1]),
        "dRVFL(L=1)=RVFL": _max_gap(predict(train_drvfl(toy, h, 4), X)[1], predict(train_rvfl(toy, h, 4), X)[1]),
        "edRVFL(L=1)=dRVFL(L=1)": _max_gap(predict(train_edrvfl(toy, h, 4), X)[1],
                                           predict(train_drvfl(toy, h, 4), X)[1]),
    }
    Xh, yh = toy_two_class(n_per=30, d=3, seed=8)
    Xt = np.random.default_rng(1).normal(size=(40, 3))
    pin, gt, ift = [], [], []
    for kernel in ("linear", "gaussian"):
        hs = HbcHyper(C=2.0, sigma=2.0, kernel=kernel, tau=0.0)
        pin.append(_max_gap(predict_hbc(train_pin_svm((Xh, yh), hs), Xt)[1],
                            predict_hbc(train_svm((Xh, yh), hs), Xt)[1]))
        ht = HbcHyper(C1=2.0, C2=0.5, sigma=2.0, kernel=kernel, tau1=0.0, tau2=0.0)
        tsvm = decision_values(train_tsvm((Xh, yh), ht), Xt)
        gt.append(_max_gap(decision_values(train_pin_gtsvm((Xh, yh), ht), Xt), tsvm))
        ift.append(_max_gap(decision_values(train_iftsvm((Xh, yh), ht, scores=np.ones(len(yh))), Xt), tsvm))
    gaps["Pin-SVM(tau=0)=SVM"] = max(pin)
    gaps["Pin-GTSVM(tau=0,0)=TSVM"] = max(gt)
    gaps["IFTSVM(scores=1)=TSVM"] = max(ift)
    elapsed = time.perf_counter() - t0
    bad = [k for k, g in gaps.items() if not g <= 1e-6]
    ok = not bad and elapsed < 60
    acceptance_line(4, _verdict(ok), f"{len(gaps) - len(bad)}/{len(gaps)} identities within 1e-6 "
                    f"(worst {max(gaps.values()):.1e}), {elapsed:.1f}s" + (f"; failing: {', '.join(bad)}" if bad else ""))
    assert len(gaps) == 8
    assert ok


# ---------------------------------------------------------------- criterion 5

def _separable(seed, n=40, d=2, gap=0.5):
    r = np.random.default_rng(seed)
    X = r.normal(size=(4 * n, d))
    s = X @ np.ones(d) / np.sqrt(d)
    keep = np.abs(s) > gap
    X, s = X[keep][:2 * n], s[keep][:2 * n]
    return X, np.where(s > 0, 1.0, -1.0)


def test_criterion_5_analytic_svm(acceptance_line):
    antipodal = (np.array([[1.0], [-1.0]]), np.array([1.0, -1.0]))
    errs = {}
    for name, m in (("SVM", train_svm(antipodal, HbcHyper(C=1e6))),
                    ("Pin-SVM(tau=0)", train_pin_svm(antipodal, HbcHyper(C=1e6, tau=0.0)))):
        errs[name] = max(abs(m.coefs[0][0] - 1.0), abs(m.biases[0]), *np.abs(m.meta["alpha"] - 0.5))
    agree = []
    for seed in range(20):
        X, y = _separable(seed)
        Xt = np.random.default_rng(100 + seed).normal(size=(200, 2))
        a = predict_hbc(train_lssvm((X, y), HbcHyper(C=1e3)), Xt)[0]
        b = predict_hbc(train_svm((X, y), HbcHyper(C=1e3)), Xt)[0]
        agree.append(np.mean(a == b))
    ok = all(e < 1e-6 for e in errs.values()) and np.mean(agree) >= 0.95
    acceptance_line(5, _verdict(ok), ", ".join(f"{k} max err {v:.1e}" for k, v in errs.items())
                    + f"; LSSVM/SVM sign agreement {100 * np.mean(agree):.1f}% over 20 seeds")
    assert ok


# ---------------------------------------------------------------- criterion 6

W8 = np.array([1.5, -1.0, 0.8, 0.5, -0.3, 0.2, 0.1, 0.0])


def nonlinear8(Z):
    return np.tanh(Z @ W8) + Z[:, 0] * Z[:, 1] + 0.5 * np.sin(Z[:, 2] * Z[:, 3]) + 0.3 * Z[:, 4] ** 2


def test_criterion_6_shapley(acceptance_line):
    t0 = time.perf_counter()
    r = np.random.default_rng(3)
    axioms = {"efficiency": 0.0, "symmetry": 0.0, "null player": 0.0}
    for d in (4, 6, 8, 10):
        w = r.normal(size=d)
        w[-1] = 0.0            # last feature never enters the score
        w[1] = w[0]            # features 0 and 1 are interchangeable

        def f(Z, w=w):
            return np.tanh(Z @ w) + (Z[:, 0] + Z[:, 1]) ** 2 * (1 + 0.5 * Z[:, 2])

        bg = r.normal(size=(20, d))
        bg[:, 1] = bg[:, 0]
        x = r.normal(size=d)
        x[1] = x[0]
        phi = shapley_exact(f, bg, x)
        ref = bg.mean(axis=0)
        axioms["efficiency"] = max(axioms["efficiency"], abs(phi.sum() - (f(x[None])[0] - f(ref[None])[0])))
        axioms["symmetry"] = max(axioms["symmetry"], abs(phi[0] - phi[1]))
        axioms["null player"] = max(axioms["null player"], abs(phi[-1]))
    rr = np.random.default_rng(0)
    bg8, x8 = rr.normal(size=(50, 8)), rr.normal(size=8) + 0.5
    exact = shapley_exact(nonlinear8, bg8, x8)
    est = shapley_sample(nonlinear8, bg8, x8[None, :], n_perms=2000, seed=0).values[0]
    rel = np.linalg.norm(est - exact) / np.linalg.norm(exact)
    elapsed = time.perf_counter() - t0
    # "exactly" up to floating-point summation of 2^d terms
    ok = max(axioms.values()) < 1e-10 and rel <= 0.05 and elapsed < 120
    acceptance_line(6, _verdict(ok), ", ".join(f"{k} {v:.1e}" for k, v in axioms.items())
                    + f"; sampled vs exact {100 * rel:.2f}% relative, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- criterion 7

def test_criterion_7_end_to_end(acceptance_line):
    root = os.environ.get(RESULTS_ENV)
    if not root or not (Path(root) / "manifest.json").exists():
        acceptance_line(7, "SKIP", f"set {RESULTS_ENV} to a full-protocol `smcbench run` output on the released data")
        pytest.skip(f"{RESULTS_ENV} not set")
    manifest = json.loads((Path(root) / "manifest.json").read_text())
    cfg = manifest["config"]
    if not cfg.get("full_grid") or len(manifest["seeds"]) != 20:
        acceptance_line(7, "SKIP", "results were not produced with --full-grid and 20 seeds")
        pytest.skip("not a full-protocol run")
    M = evalharness.read_accuracy_matrix(Path(root) / "results" / "accuracy_matrix_mean.csv")
    rnn = M.loc[[m for m in models.RNN_TAGS if m in M.index]]
    top3 = 0
    for mod in rnn.columns:
        col = rnn[mod].dropna().sort_values(ascending=False, kind="stable")
        top3 += {"dRVFL", "edRVFL"} <= set(col.index[:3])
    all_acc = float(M.loc["dRVFL", "ALL"])
    ok = top3 >= 4 and all_acc > 70.0
    acceptance_line(7, _verdict(ok), f"dRVFL and edRVFL both top-3 in {top3}/{rnn.shape[1]} modalities; "
                    f"dRVFL ALL mean accuracy {all_acc:.2f}%")
    assert ok


# ---------------------------------------------------------------- criterion 8

def test_criterion_8_demographics(acceptance_line):
    path = os.environ.get(COHORT_ENV)
    if not path or not Path(path).exists():
        acceptance_line(8, "SKIP", f"cohort table absent (set {COHORT_ENV} to a CSV with label, age, sex)")
        pytest.skip("cohort table absent")
    p_t, p_c = dataio.demographics_from_csv(path)
    ok = abs(p_t - 0.15) <= 0.02 and abs(p_c - 0.56) <= 0.02
    acceptance_line(8, _verdict(ok), f"age t-test p = {p_t:.3f}, sex chi-squared p = {p_c:.3f}")
    assert ok
