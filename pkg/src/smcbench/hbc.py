"""Hyperplane classifiers: eight families, each with a linear and a kernel form.

Single-plane families (SVM, LSSVM, Linex-SVM, Pin-SVM) score a sample by its
signed decision value. Twin families (TSVM, IFTSVM, LSTSVM, Pin-GTSVM) fit a
plane hugging each class and score by ``d_neg - d_pos``, the difference of
normalized perpendicular distances, so that positive scores mean "closer to
the positive plane". Labels are ``sign(score)`` with ties going to +1.

Kernel forms use ``exp(-||x - z||^2 / sigma^2)``; the ``"dot"`` kernel runs
the kernel code path with plain inner products and exists for consistency
checks against the linear forms.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .numcore import (
    QpProblem, SgdParams, box_qp_solve, gaussian_kernel, kkt_scale, if_score, linear_kernel, sgd_momentum,
)

FAMILIES = ("SVM", "TSVM", "IFTSVM", "LSSVM", "LSTSVM", "Linex-SVM", "Pin-SVM", "Pin-GTSVM")
TWIN_FAMILIES = ("TSVM", "IFTSVM", "LSTSVM", "Pin-GTSVM")
KERNELS = ("linear", "gaussian", "dot")

JITTER = 1e-7
KKT_LIMIT = 1e-6
EXP_CLIP = 50.0


class ConvergenceError(RuntimeError):
    """A solver finished without meeting its optimality tolerance."""


@dataclass(frozen=True)
class HbcHyper:
    C: float = 1.0
    C1: float = 1.0
    C2: float = 1.0
    sigma: float = 1.0
    tau: float = 0.0
    tau1: float = 0.0
    tau2: float = 0.0
    a: float = -1.0
    mu: float = 1.0
    sgd: SgdParams = field(default_factory=SgdParams)
    kernel: str = "linear"

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        for name in ("C", "C1", "C2", "sigma", "mu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("tau", "tau1", "tau2"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class TrainedHbc:
    """Fitted hyperplane model.

    ``coefs[k]`` multiplies either raw features (linear) or kernel columns
    against ``support`` (kernel forms); ``biases[k]`` is the matching offset
    and ``norms[k]`` the plane normalizer used by twin families.
    """

    family: str
    kernel: str
    sigma: float
    n_features: int
    coefs: tuple
    biases: tuple
    norms: tuple = ()
    support: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def tag(self):
        return f"{self.family}-{'L' if self.kernel == 'linear' else 'K'}"

    @property
    def is_twin(self):
        return self.family in TWIN_FAMILIES


def _xy(train):
    if isinstance(train, tuple):
        X, y = train
    else:
        X, y = train.features, train.labels
    X = np.asarray(X, dtype=float)
    y = np.where(np.asarray(y, dtype=float).reshape(-1) > 0, 1.0, -1.0)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("features and labels disagree in length")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both classes must be present")
    return X, y


def kernel_matrix(X, Y, kernel, sigma):
    if kernel == "gaussian":
        return gaussian_kernel(X, Y, sigma)
    return linear_kernel(X, Y)


def _features(model, X):
    """Map inputs into the space the coefficients live in."""
    if model.kernel == "linear":
        return X
    return kernel_matrix(X, model.support, model.kernel, model.sigma)


def _solve_qp(p, what):
    res = box_qp_solve(p)
    limit = KKT_LIMIT * kkt_scale(p, res.x)
    if res.kkt_residual >= limit:
        raise ConvergenceError(f"{what}: KKT residual {res.kkt_residual:.3g} >= {limit:.3g}")
    return res


# ---------------------------------------------------------------- single plane

def _bias_from_kkt(f0, y, alpha, lower, upper, tol=1e-8):
    """Offset ``b`` for ``f = f0 + b`` from the dual solution.

    Averages ``y_i - f0_i`` over multipliers strictly inside their bounds;
    with none inside, takes the midpoint of the interval allowed by the
    bound-active multipliers.
    """
    span = np.maximum(upper - lower, 1e-300)
    inside = (alpha > lower + tol * span) & (alpha < upper - tol * span)
    if np.any(inside):
        return float(np.mean(y[inside] - f0[inside]))
    at_low = ~inside & (alpha <= lower + tol * span)
    # at the lower bound y f >= 1; at the upper bound y f <= 1
    r = y - f0
    lo_b = np.concatenate([r[at_low & (y > 0)], r[~at_low & (y < 0)]])
    hi_b = np.concatenate([r[at_low & (y < 0)], r[~at_low & (y > 0)]])
    lb = lo_b.max() if lo_b.size else -np.inf
    ub = hi_b.min() if hi_b.size else np.inf
    if np.isfinite(lb) and np.isfinite(ub):
        return float(0.5 * (lb + ub))
    return float(lb if np.isfinite(lb) else ub if np.isfinite(ub) else 0.0)


def _svm_dual(X, y, h, lower_frac, family):
    K = kernel_matrix(X, X, h.kernel, h.sigma)
    n = y.size
    lower = -lower_frac * h.C * np.ones(n)
    upper = h.C * np.ones(n)
    p = QpProblem((y[:, None] * y[None, :]) * K, -np.ones(n), lower, upper, eq_a=y, eq_b=0.0)
    res = _solve_qp(p, family)
    alpha = res.x
    coef_dual = alpha * y
    f0 = K @ coef_dual
    b = _bias_from_kkt(f0, y, alpha, lower, upper)
    meta = {"alpha": alpha, "kkt_residual": res.kkt_residual, "qp_iterations": res.n_iter}
    if h.kernel == "linear":
        return TrainedHbc(family, "linear", h.sigma, X.shape[1], (X.T @ coef_dual,), (b,), meta=meta)
    return TrainedHbc(family, h.kernel, h.sigma, X.shape[1], (coef_dual,), (b,), support=X.copy(), meta=meta)


def train_svm(train, h, seed=0):
    """Soft-margin SVM through its dual QP."""
    X, y = _xy(train)
    return _svm_dual(X, y, h, 0.0, "SVM")


def train_pin_svm(train, h, seed=0):
    """Pinball-loss SVM: the hinge dual with the lower bound widened to ``-tau*C``."""
    X, y = _xy(train)
    return _svm_dual(X, y, h, h.tau, "Pin-SVM")


def train_lssvm(train, h, seed=0):
    """Least-squares SVM.

    The kernel form solves the bordered system
    ``[[0, y^T], [y, Omega + I/C]] [b; alpha] = [0; 1]``; the linear form
    solves the equivalent ``(d + 1)`` primal normal equations.
    """
    X, y = _xy(train)
    n, d = X.shape
    if h.kernel == "linear":
        Xe = np.hstack([X, np.ones((n, 1))])
        M = Xe.T @ Xe
        M[:d, :d] += np.eye(d) / h.C
        rhs = Xe.T @ y
        sol = _linear_solve(M, rhs, "LSSVM")
        resid = np.linalg.norm(M @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
        return TrainedHbc("LSSVM", "linear", h.sigma, d, (sol[:d],), (float(sol[d]),), meta={"residual": resid})
    K = kernel_matrix(X, X, h.kernel, h.sigma)
    M = np.zeros((n + 1, n + 1))
    M[0, 1:] = y
    M[1:, 0] = y
    M[1:, 1:] = (y[:, None] * y[None, :]) * K + np.eye(n) / h.C
    rhs = np.concatenate([[0.0], np.ones(n)])
    sol = _linear_solve(M, rhs, "LSSVM")
    resid = np.linalg.norm(M @ sol - rhs) / np.linalg.norm(rhs)
    alpha = sol[1:]
    return TrainedHbc(
        "LSSVM", h.kernel, h.sigma, d, (alpha * y,), (float(sol[0]),), support=X.copy(),
        meta={"residual": resid, "alpha": alpha},
    )


def _linear_solve(M, rhs, what):
    try:
        sol = scipy.linalg.solve(M, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        sol = None
    if sol is None or not np.all(np.isfinite(sol)):
        M = M + JITTER * np.eye(M.shape[0])
        try:
            sol = scipy.linalg.solve(M, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise np.linalg.LinAlgError(f"{what}: singular system") from exc
    return sol


def linex_loss(u, a):
    """``exp(a u) - a u - 1`` with the exponent clipped to avoid overflow."""
    au = np.clip(a * np.asarray(u, dtype=float), -np.inf, EXP_CLIP)
    return np.exp(au) - a * np.asarray(u, dtype=float) - 1.0


def linex_grad(u, a):
    """Derivative of :func:`linex_loss` in ``u``."""
    au = np.clip(a * np.asarray(u, dtype=float), -np.inf, EXP_CLIP)
    return a * (np.exp(au) - 1.0)


def linex_objective(theta, Phi, y, h):
    """``0.5 ||w||^2 + C * sum linex(1 - y f)`` with ``theta = [w; b]``."""
    f = Phi @ theta[:-1] + theta[-1]
    w = theta[:-1]
    return 0.5 * w @ w + h.C * np.sum(linex_loss(1.0 - y * f, h.a))


def empirical_kernel_map(K, rel_tol=1e-10):
    """Factor ``K = Phi Phi^T`` through its eigendecomposition.

    Returns ``Phi`` and the matrix ``T`` with ``beta = T gamma`` mapping
    coefficients in ``Phi``-space back onto kernel columns.
    """
    lam, V = np.linalg.eigh(K)
    keep = lam > rel_tol * max(lam.max(), 0.0)
    lam, V = lam[keep], V[:, keep]
    root = np.sqrt(lam)
    return V * root, V / root


def train_linex_svm(train, h, seed=0, lr=None):
    """Linex-loss SVM trained by mini-batch SGD with momentum.

    Both forms optimize in coordinates with orthogonal feature columns: the
    principal coordinates of ``X`` for the linear form and the empirical
    kernel map ``Phi`` (``K = Phi Phi^T``) for the kernel form, where the
    regularizer ``beta^T K beta`` becomes ``||gamma||^2``. Results are mapped
    back to ``w`` or to coefficients on kernel columns. Without ``lr`` each
    coordinate's base step is the inverse curvature of the objective at the
    margin (``u = 0``), and stochastic gradients are clipped to the initial
    full-gradient norm.
    """
    if not h.a < 0:
        raise ValueError("Linex parameter a must be negative")
    X, y = _xy(train)
    n = y.size
    if h.kernel == "linear":
        # principal coordinates: Phi = X W has orthogonal columns, w = W gamma
        _, _, Wt = np.linalg.svd(X, full_matrices=False)
        back = Wt.T
        Phi = X @ back
    else:
        Phi, back = empirical_kernel_map(kernel_matrix(X, X, h.kernel, h.sigma))
    if lr is None:
        # Phi has orthogonal columns, so the curvature at u = 0 is diagonal:
        # 1 + C a^2 ||phi_j||^2 per weight and C a^2 n for the bias
        lr = np.empty(Phi.shape[1] + 1)
        lr[:-1] = 1.0 / (1.0 + h.C * h.a**2 * np.sum(Phi**2, axis=0))
        lr[-1] = 1.0 / (h.C * h.a**2 * n)

    def raw_grad(theta, idx):
        f = Phi[idx] @ theta[:-1] + theta[-1]
        g_u = linex_grad(1.0 - y[idx] * f, h.a)
        g_f = -h.C * (n / idx.size) * g_u * y[idx]
        g = np.empty_like(theta)
        g[:-1] = theta[:-1] + Phi[idx].T @ g_f
        g[-1] = g_f.sum()
        return g

    init = np.full(Phi.shape[1] + 1, float(h.sgd.t))
    # the exponential branch makes curvature unbounded, so steps are clipped
    g_cap = np.linalg.norm(raw_grad(init, np.arange(n)))

    def grad(theta, idx):
        g = raw_grad(theta, idx)
        nrm = np.linalg.norm(g)
        return g if nrm <= g_cap or g_cap == 0 else g * (g_cap / nrm)

    res = sgd_momentum(grad, init, h.sgd, seed, n, lr=lr)
    if res.diverged:
        raise ConvergenceError("Linex-SVM: SGD diverged")
    theta = res.x
    meta = {"sgd_iterations": res.n_iter, "sgd_converged": res.converged, "lr": np.min(lr),
            "objective": float(linex_objective(theta, Phi, y, h))}
    if h.kernel == "linear":
        return TrainedHbc("Linex-SVM", "linear", h.sigma, X.shape[1], (back @ theta[:-1],), (float(theta[-1]),),
                          meta=meta)
    return TrainedHbc(
        "Linex-SVM", h.kernel, h.sigma, X.shape[1], (back @ theta[:-1],), (float(theta[-1]),),
        support=X.copy(), meta=meta,
    )


# ---------------------------------------------------------------- twin planes

def _augmented(X, y, h):
    """``E = [A e]`` for the positive rows and ``F = [B e]`` for the negative rows."""
    Phi = X if h.kernel == "linear" else kernel_matrix(X, X, h.kernel, h.sigma)
    ones = np.ones((y.size, 1))
    P = np.hstack([Phi, ones])
    return P[y > 0], P[y < 0]


def _plane_norm(u, X, h):
    w = u[:-1]
    if h.kernel == "linear":
        nrm2 = w @ w
    else:
        nrm2 = w @ kernel_matrix(X, X, h.kernel, h.sigma) @ w
    return float(np.sqrt(max(nrm2, 0.0)))


def _twin_plane(own, other, lower, upper, what):
    """Plane close to ``own`` rows, pushed to distance >= 1 from ``other`` rows.

    Dual: ``min 0.5 a^T G (H^T H + eps I)^{-1} G^T a - e^T a`` over the box,
    with ``H = own`` and ``G = other``; returns ``u = -(H^T H + eps I)^{-1} G^T a``.
    """
    HtH = own.T @ own + JITTER * np.eye(own.shape[1])
    try:
        Z = scipy.linalg.solve(HtH, other.T, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise np.linalg.LinAlgError(f"{what}: singular Gram block") from exc
    Q = other @ Z
    Q = 0.5 * (Q + Q.T)
    p = QpProblem(Q, -np.ones(other.shape[0]), lower, upper)
    res = _solve_qp(p, what)
    return -Z @ res.x, res


def _twin_model(family, X, y, h, planes, meta):
    (u1, u2) = planes
    norms = (_plane_norm(u1, X, h), _plane_norm(u2, X, h))
    support = None if h.kernel == "linear" else X.copy()
    return TrainedHbc(
        family, h.kernel, h.sigma, X.shape[1], (u1[:-1], u2[:-1]), (float(u1[-1]), float(u2[-1])),
        norms, support, meta,
    )


def _qp_twin(family, X, y, h, s_neg=None, s_pos=None, tau1=0.0, tau2=0.0):
    E, F = _augmented(X, y, h)
    m_neg, m_pos = F.shape[0], E.shape[0]
    s_neg = np.ones(m_neg) if s_neg is None else s_neg
    s_pos = np.ones(m_pos) if s_pos is None else s_pos
    up1 = h.C1 * s_neg
    up2 = h.C2 * s_pos
    u1, r1 = _twin_plane(E, F, -tau1 * up1, up1, f"{family} plane 1")
    # the second plane hugs the negative class; its dual enters with the opposite sign
    v2, r2 = _twin_plane(F, E, -tau2 * up2, up2, f"{family} plane 2")
    u2 = -v2
    meta = {"kkt_residual": max(r1.kkt_residual, r2.kkt_residual), "alpha": r1.x, "gamma": r2.x}
    return _twin_model(family, X, y, h, (u1, u2), meta)


def train_tsvm(train, h, seed=0):
    """Twin SVM: two box QPs, ``C1`` weighting negative-class slack against the positive plane."""
    X, y = _xy(train)
    return _qp_twin("TSVM", X, y, h)


def train_iftsvm(train, h, seed=0, scores=None):
    """Twin SVM whose slack penalties are scaled by intuitionistic-fuzzy scores."""
    X, y = _xy(train)
    s = if_score(X, y, h.mu).score if scores is None else np.asarray(scores, dtype=float)
    model = _qp_twin("IFTSVM", X, y, h, s_neg=s[y < 0], s_pos=s[y > 0])
    model.meta["if_scores"] = s
    return model


def train_pin_gtsvm(train, h, seed=0):
    """Twin SVM with pinball slack: each plane's dual box widens to ``[-tau C, C]``."""
    X, y = _xy(train)
    return _qp_twin("Pin-GTSVM", X, y, h, tau1=h.tau1, tau2=h.tau2)


def train_lstsvm(train, h, seed=0):
    """Least-squares twin SVM: two linear systems instead of two QPs.

    ``u1 = -(F^T F + E^T E / C1)^{-1} F^T e`` and
    ``u2 = (E^T E + F^T F / C2)^{-1} E^T e``.
    """
    X, y = _xy(train)
    E, F = _augmented(X, y, h)
    k = E.shape[1]
    M1 = F.T @ F + (E.T @ E) / h.C1 + JITTER * np.eye(k)
    r1 = -F.T @ np.ones(F.shape[0])
    M2 = E.T @ E + (F.T @ F) / h.C2 + JITTER * np.eye(k)
    r2 = E.T @ np.ones(E.shape[0])
    u1 = _linear_solve(M1, r1, "LSTSVM")
    u2 = _linear_solve(M2, r2, "LSTSVM")
    res = max(
        np.linalg.norm(M1 @ u1 - r1) / max(np.linalg.norm(r1), 1e-300),
        np.linalg.norm(M2 @ u2 - r2) / max(np.linalg.norm(r2), 1e-300),
    )
    return _twin_model("LSTSVM", X, y, h, (u1, u2), {"residual": res})


TRAINERS = {
    "SVM": train_svm,
    "TSVM": train_tsvm,
    "IFTSVM": train_iftsvm,
    "LSSVM": train_lssvm,
    "LSTSVM": train_lstsvm,
    "Linex-SVM": train_linex_svm,
    "Pin-SVM": train_pin_svm,
    "Pin-GTSVM": train_pin_gtsvm,
}


def train(tag, train_set, hyper, seed=0):
    """Fit a model by tag (``"SVM-L"``, ``"Pin-GTSVM-K"``, ...) or family name.

    A ``-K`` tag switches a linear ``hyper.kernel`` to the Gaussian kernel and
    a ``-L`` tag forces the linear form.
    """
    family, kernel = split_tag(tag, hyper.kernel)
    if kernel != hyper.kernel:
        from dataclasses import replace

        hyper = replace(hyper, kernel=kernel)
    return TRAINERS[family](train_set, hyper, seed)


def split_tag(tag, default_kernel="linear"):
    if tag in FAMILIES:
        return tag, default_kernel
    family, _, suffix = tag.rpartition("-")
    if family not in FAMILIES or suffix not in ("L", "K"):
        raise ValueError(f"unknown hyperplane model {tag!r}")
    if suffix == "L":
        return family, "linear"
    return family, default_kernel if default_kernel != "linear" else "gaussian"


# ---------------------------------------------------------------- prediction

def decision_values(model, X):
    """Raw plane values ``f_k(x)``, one row per plane."""
    Phi = _features(model, X)
    return np.vstack([Phi @ c + b for c, b in zip(model.coefs, model.biases)])


def predict_hbc(model, X):
    """Return ``(labels, scores)`` with labels in {+1, -1} and ties mapped to +1."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, model.n_features)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    F = decision_values(model, X)
    if model.is_twin:
        n1, n2 = (max(v, 1e-300) for v in model.norms)
        scores = np.abs(F[1]) / n2 - np.abs(F[0]) / n1
    else:
        scores = F[0]
    return np.where(scores >= 0, 1, -1), scores


predict = predict_hbc
