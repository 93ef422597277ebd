import itertools

import numpy as np
import pytest


def enumerate_box_qp(Q, q, lower, upper, a=None, b=None):
    """Brute-force oracle: try every lower/free/upper pattern.

    For each pattern the free variables solve the equality-constrained
    stationarity system; feasible candidates are compared by objective.
    """
    n = len(q)
    best = np.inf
    best_x = None
    for pattern in itertools.product((0, 1, 2), repeat=n):
        x = np.zeros(n)
        free = [i for i, s in enumerate(pattern) if s == 1]
        for i, s in enumerate(pattern):
            if s == 0:
                x[i] = lower[i]
            elif s == 2:
                x[i] = upper[i]
        fixed = [i for i in range(n) if i not in free]
        if free:
            QF = Q[np.ix_(free, free)]
            rhs = -(q[free] + Q[np.ix_(free, fixed)] @ x[fixed])
            if a is None:
                sol = np.linalg.lstsq(QF, rhs, rcond=None)[0]
            else:
                m = len(free)
                K = np.zeros((m + 1, m + 1))
                K[:m, :m] = QF
                K[:m, m] = a[free]
                K[m, :m] = a[free]
                r = np.concatenate([rhs, [b - a[fixed] @ x[fixed]]])
                sol = np.linalg.lstsq(K, r, rcond=None)[0][:m]
            x[free] = sol
        if np.any(x < lower - 1e-9) or np.any(x > upper + 1e-9):
            continue
        if a is not None and abs(a @ x - b) > 1e-8:
            continue
        f = 0.5 * x @ Q @ x + q @ x
        if f < best:
            best, best_x = f, x
    return best, best_x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def toy_two_class(n_per=40, d=4, shift=1.5, seed=0):
    r = np.random.default_rng(seed)
    Xp = r.normal(size=(n_per, d)) + shift / np.sqrt(d)
    Xn = r.normal(size=(n_per, d)) - shift / np.sqrt(d)
    X = np.vstack([Xp, Xn])
    y = np.concatenate([np.ones(n_per), -np.ones(n_per)])
    return X, y


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance_line():
    """Record the one-line verdict of an acceptance criterion.

    Lines are printed together at the end of the run, in criterion order.
    """

    def record(number, status, detail):
        _ACCEPTANCE_LINES[number] = f"criterion {number}: {status:<4} {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(_ACCEPTANCE_LINES[number])
