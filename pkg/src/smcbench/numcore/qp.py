"""Convex quadratic programs over a box with at most one linear equality.

Solves::

    minimize    0.5 x^T Q x + q^T x
    subject to  lower <= x <= upper
                a^T x = b            (optional)

Box-only problems go to a primal active-set method: the free variables are
minimized exactly through an eigendecomposition of their Hessian block
(zero-curvature descent directions run to the nearest bound), blocking
bounds join the working set, and the bound with the worst multiplier leaves
it. This terminates finitely and copes with the badly conditioned Hessians
of twin-plane duals when features outnumber samples.

With the equality constraint a gradient-projection / subspace-Newton hybrid
is used instead. Every outer iteration takes one projected-gradient step
(Barzilai-Borwein length, Armijo backtracking along the projection arc),
which identifies the active bounds, followed by an exact minimization over
the free variables with the active bounds held fixed.

Problems handled here are small (n of a few hundred at most), so all
subspace steps are dense.

Stationarity is measured relative to ``max(1, |q|_inf, |Q|_max |x|_inf)``,
the size of the terms whose rounding errors the gradient inherits.
"""

from dataclasses import dataclass
import warnings

import numpy as np
from scipy.optimize import minimize_scalar


class QpWarning(RuntimeWarning):
    pass


@dataclass
class QpProblem:
    Q: np.ndarray
    q: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    eq_a: np.ndarray = None
    eq_b: float = None

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = self.Q.shape[0]
        if self.Q.shape != (n, n):
            raise ValueError(f"Q must be square, got {self.Q.shape}")
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if self.q.shape != (n,):
            raise ValueError("q has the wrong length")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("bounds must be finite")
        scale = max(1.0, np.abs(self.Q).max(initial=0.0))
        if np.abs(self.Q - self.Q.T).max(initial=0.0) > 1e-10 * scale:
            raise ValueError("Q is not symmetric")
        self.Q = 0.5 * (self.Q + self.Q.T)
        if (self.eq_a is None) != (self.eq_b is None):
            raise ValueError("eq_a and eq_b must be given together")
        if self.eq_a is not None:
            self.eq_a = np.asarray(self.eq_a, dtype=float).reshape(-1)
            if self.eq_a.shape != (n,):
                raise ValueError("eq_a has the wrong length")
            self.eq_b = float(self.eq_b)

    @property
    def n(self):
        return self.Q.shape[0]

    def objective(self, x):
        return 0.5 * x @ self.Q @ x + self.q @ x


@dataclass
class QpResult:
    x: np.ndarray
    fun: float
    converged: bool
    n_iter: int
    kkt_residual: float


def project(y, lower, upper, a=None, b=None):
    """Euclidean projection onto ``{lower <= x <= upper, a^T x = b}``.

    The equality is handled exactly: ``a^T clip(y - nu a)`` is piecewise
    linear and nonincreasing in ``nu``, so the root is located between two
    consecutive breakpoints and interpolated.
    """
    if a is None:
        return np.clip(y, lower, upper)
    nz = a != 0
    if not np.any(nz):
        if abs(b) > 1e-12:
            raise ValueError("infeasible equality constraint")
        return np.clip(y, lower, upper)
    bp = np.concatenate([(y[nz] - lower[nz]) / a[nz], (y[nz] - upper[nz]) / a[nz]])
    bp = np.unique(bp)
    X = np.clip(y[None, :] - bp[:, None] * a[None, :], lower, upper)
    h = X @ a
    span = max(1.0, np.abs(a).sum() * max(np.abs(lower).max(), np.abs(upper).max()))
    if b > h[0] + 1e-9 * span or b < h[-1] - 1e-9 * span:
        raise ValueError("infeasible: equality constraint unreachable within the box")
    if b >= h[0]:
        nu = bp[0]
    elif b <= h[-1]:
        nu = bp[-1]
    else:
        j = np.searchsorted(-h, -b, side="right") - 1
        j = min(max(j, 0), len(bp) - 2)
        dh = h[j] - h[j + 1]
        nu = bp[j] if dh <= 0 else bp[j] + (h[j] - b) / dh * (bp[j + 1] - bp[j])
    return np.clip(y - nu * a, lower, upper)


def _projected_gradient(g, x, lower, upper, a, nu):
    r = g if a is None else g + nu * a
    pg = r.copy()
    at_lo = x <= lower
    at_hi = x >= upper
    pg[at_lo] = np.minimum(r[at_lo], 0.0)
    pg[at_hi] = np.maximum(r[at_hi], 0.0)
    pg[at_lo & at_hi] = 0.0
    return pg


def kkt_residual(p, x):
    """Infinity norm of the projected gradient, with the best equality multiplier."""
    g = p.Q @ x + p.q
    if p.eq_a is None:
        return float(np.abs(_projected_gradient(g, x, p.lower, p.upper, None, 0.0)).max(initial=0.0))
    a = p.eq_a

    def res(nu):
        return np.sum(_projected_gradient(g, x, p.lower, p.upper, a, nu) ** 2)

    nz = a != 0
    cands = -g[nz] / a[nz]
    lo, hi = cands.min() - 1.0, cands.max() + 1.0
    free = (x > p.lower) & (x < p.upper) & nz
    best = []
    if np.any(free):
        best.append(-(a[free] @ g[free]) / (a[free] @ a[free]))
    sol = minimize_scalar(res, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
    best.append(sol.x)
    nu = min(best, key=res)
    return float(np.abs(_projected_gradient(g, x, p.lower, p.upper, a, nu)).max(initial=0.0))


def kkt_scale(p, x):
    """Magnitude against which the KKT residual of ``x`` is judged."""
    qmax = np.abs(p.q).max(initial=0.0)
    return max(1.0, qmax, np.abs(p.Q).max(initial=0.0) * np.abs(x).max(initial=0.0))


def _active_set(p, x, tol, max_iter):
    """Primal active-set method for box constraints only."""
    lower, upper = p.lower, p.upper
    n = p.n
    fixed = (x <= lower) | (x >= upper)
    pinned = lower >= upper
    qscale = max(np.abs(p.Q).max(initial=0.0), 1e-300)
    it = 0
    res = np.inf
    while it < max_iter:
        it += 1
        g = p.Q @ x + p.q
        F = np.flatnonzero(~fixed)
        reached_min = True
        if F.size:
            gF = g[F]
            w, V = np.linalg.eigh(p.Q[np.ix_(F, F)])
            keep = w > 1e-13 * qscale * F.size
            c = V.T @ gF
            null = V[:, ~keep] @ c[~keep]
            unbounded = np.linalg.norm(null) > 1e-12 * max(1.0, np.linalg.norm(gF))
            # on a flat direction with nonzero slope the minimum lies on a bound
            dF = -null if unbounded else -(V[:, keep] @ (c[keep] / w[keep]))
            if np.abs(dF).max() > 0:
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = np.where(dF < 0, (lower[F] - x[F]) / dF,
                                 np.where(dF > 0, (upper[F] - x[F]) / dF, np.inf))
                j = int(np.argmin(t))
                t_max = max(float(t[j]), 0.0)
                alpha = t_max if unbounded else min(1.0, t_max)
                x[F] = x[F] + alpha * dF
                if alpha == t_max:
                    i = F[j]
                    x[i] = lower[i] if dF[j] < 0 else upper[i]
                    fixed[i] = True
                    reached_min = False
        np.clip(x, lower, upper, out=x)
        g = p.Q @ x + p.q
        res = kkt_residual(p, x)
        if res <= tol * kkt_scale(p, x):
            break
        if not reached_min:
            continue
        # release the bound whose multiplier has the wrong sign by the most
        viol = np.zeros(n)
        lo = fixed & (x <= lower) & (g < 0)
        hi = fixed & (x >= upper) & (g > 0)
        viol[lo] = -g[lo]
        viol[hi] = g[hi]
        viol[pinned] = 0.0
        k = int(np.argmax(viol))
        if viol[k] <= 0:
            break
        fixed[k] = False
    return x, it, res


def _subspace_step(p, x, g):
    free = (x > p.lower) & (x < p.upper)
    idx = np.flatnonzero(free)
    if idx.size == 0:
        return None
    QF = p.Q[np.ix_(idx, idx)]
    gF = g[idx]
    if p.eq_a is None:
        K = QF
        rhs = -gF
    else:
        aF = p.eq_a[idx]
        m = idx.size
        K = np.zeros((m + 1, m + 1))
        K[:m, :m] = QF
        K[:m, m] = aF
        K[m, :m] = aF
        rhs = np.concatenate([-gF, [0.0]])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    dF = sol[: idx.size]
    if p.eq_a is not None:
        # keep the step inside the equality hyperplane
        aF = p.eq_a[idx]
        if aF @ aF > 0:
            dF = dF - (aF @ dF) / (aF @ aF) * aF
    slope = gF @ dF
    if not slope < 0:
        return None
    d = np.zeros_like(x)
    d[idx] = dF
    return d


def _line_to_bounds(p, x, d):
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = np.where(d < 0, (p.lower - x) / d, np.inf)
        t_hi = np.where(d > 0, (p.upper - x) / d, np.inf)
    t = np.minimum(t_lo, t_hi)
    j = int(np.argmin(t))
    return max(float(t[j]), 0.0), j


def box_qp_solve(p, tol=1e-8, max_iter=5000, x0=None):
    """Solve a :class:`QpProblem`.

    Returns a :class:`QpResult`. When ``max_iter`` is hit before the KKT
    residual drops below ``tol * kkt_scale`` the last iterate is returned
    with ``converged=False`` and a :class:`QpWarning` is emitted.
    """
    lower, upper, a, b = p.lower, p.upper, p.eq_a, p.eq_b
    start = np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=float)
    x = project(start, lower, upper, a, b)
    if a is None:
        x, it, res = _active_set(p, x, tol, max_iter)
        return _finish(p, x, it, res, tol)
    g = p.Q @ x + p.q
    f = p.objective(x)
    qnorm = np.linalg.norm(p.Q, 2) if p.n <= 500 else np.linalg.norm(p.Q)
    step = 1.0 / qnorm if qnorm > 0 else 1.0
    res = kkt_residual(p, x)
    it = 0
    stall = 0
    while res > tol * kkt_scale(p, x) and it < max_iter:
        it += 1
        f_old = f
        # projected gradient step, Armijo along the projection arc
        s = step
        for _ in range(60):
            x_new = project(x - s * g, lower, upper, a, b)
            dx = x_new - x
            f_new = p.objective(x_new)
            if f_new <= f + 1e-4 * (g @ dx) + 1e-15 * abs(f):
                break
            s *= 0.5
        g_new = p.Q @ x_new + p.q
        sy = dx @ (g_new - g)
        ss = dx @ dx
        step = ss / sy if sy > 1e-300 else s * 2.0
        step = min(max(step, 1e-12), 1e12)
        x, g, f = x_new, g_new, f_new

        d = _subspace_step(p, x, g)
        if d is not None:
            curv = d @ p.Q @ d
            slope = g @ d
            t_opt = -slope / curv if curv > 1e-14 * (d @ d) else np.inf
            t_max, j = _line_to_bounds(p, x, d)
            t = min(t_opt, t_max)
            if np.isfinite(t) and t > 0:
                x_try = x + t * d
                if t == t_max and t_max <= t_opt:
                    x_try[j] = lower[j] if d[j] < 0 else upper[j]
                x_try = np.clip(x_try, lower, upper)
                f_try = p.objective(x_try)
                if f_try <= f:
                    x, f = x_try, f_try
                    g = p.Q @ x + p.q
        res = kkt_residual(p, x)
        if f_old - f <= 1e-16 * max(1.0, abs(f)):
            stall += 1
            if stall >= 50:
                break
        else:
            stall = 0
    return _finish(p, x, it, res, tol)


def _finish(p, x, it, res, tol):
    f = p.objective(x)
    converged = res <= tol * kkt_scale(p, x)
    if not converged:
        warnings.warn(
            f"QP stopped after {it} iterations with KKT residual {res:.3g}", QpWarning, stacklevel=2
        )
    return QpResult(x=x, fun=float(f), converged=bool(converged), n_iter=it, kkt_residual=res)
