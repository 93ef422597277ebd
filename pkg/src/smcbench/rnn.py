"""Randomized-network classifiers with closed-form output weights.

Every model here is a fixed random feature map followed by one (or, for
edRVFL, one per layer) regularized least-squares solve. Hidden weights and
biases are drawn from Uniform(-1, 1) with one generator per block, seeded by
``(seed, block_kind, block_index)`` and drawing ``W`` before ``b``; the
output weights are fitted against a single +-1 target column.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.cluster.vq import ClusterError, kmeans2

from .numcore import activation, if_score, ridge_residual, ridge_solve
from .numcore.linalg import sq_distances

VARIANTS = (
    "RVFL", "ELM", "MCVELM", "MVELM", "IFRVFL", "Class-Var-RVFL", "Total-Var-RVFL",
    "GEELM-LDA", "GEELM-LFDA", "dRVFL", "edRVFL", "BLS", "NF-BLS",
)

# generator stream kinds
_HIDDEN, _FEATURE, _ENHANCE, _FUZZY, _KMEANS = 0, 1, 2, 3, 4

LFDA_NEIGHBORS = 7
KMEANS_ATTEMPTS = 5


@dataclass(frozen=True)
class RnnHyper:
    """Hyperparameters; each variant reads only the fields it needs.

    ``lam`` is the variance / graph regularization weight, ``mu`` the
    intuitionistic-fuzzy kernel width. For NF-BLS the feature-group fields
    count fuzzy subsystems and rules per subsystem.
    """

    C: float = 1.0
    N: int = 100
    Act: int = 1
    lam: float = 0.0
    mu: float = 1.0
    L: int = 1
    n_feat_groups: int = 5
    n_feat_nodes: int = 5
    n_enh_groups: int = 5
    n_enh_nodes: int = 1

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        for name in ("N", "L", "n_feat_groups", "n_feat_nodes", "n_enh_groups", "n_enh_nodes"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if not 1 <= self.Act <= 9:
            raise ValueError("Act must lie in 1..9")


@dataclass(frozen=True)
class TrainedRnn:
    variant: str
    n_features: int
    seed: int
    hyper: RnnHyper
    weights: dict
    betas: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for a in list(self.weights.values()) + list(self.betas):
            a.setflags(write=False)


def _xy(train):
    if isinstance(train, tuple):
        X, y = train
    else:
        X, y = train.features, train.labels
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("features and labels disagree in length")
    return X, y


def _sign(s):
    return np.where(s >= 0, 1, -1)


def _uniform_block(seed, kind, index, d_in, n_out):
    rng = np.random.default_rng([int(seed), kind, index])
    W = rng.uniform(-1.0, 1.0, size=(d_in, n_out))
    b = rng.uniform(-1.0, 1.0, size=n_out)
    return W, b


def _require_both_classes(y):
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both classes must be present")


# ---------------------------------------------------------------- penalties

def scatter_matrix(H, y, kind):
    """Within-class (``intraclass``) or total scatter of the rows of ``H``, divided by n."""
    n = H.shape[0]
    if kind == "total":
        Hc = H - H.mean(axis=0)
    elif kind == "intraclass":
        Hc = H.copy()
        for c in np.unique(y):
            m = y == c
            Hc[m] -= H[m].mean(axis=0)
    else:
        raise ValueError(f"unknown scatter kind {kind!r}")
    return Hc.T @ Hc / n


def laplacian(W):
    return np.diag(W.sum(axis=1)) - W


def lda_affinity(y):
    """Within-class graph: weight 1/n_c between every pair of the same class."""
    W = np.zeros((y.size, y.size))
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.size < 2:
            raise ValueError("singleton class")
        W[np.ix_(idx, idx)] = 1.0 / idx.size
    return W


def lfda_affinity(H, y, k=LFDA_NEIGHBORS):
    """Locality-weighted within-class graph with locally scaled heat kernel.

    ``A_ij = exp(-||h_i - h_j||^2 / (s_i s_j))`` where ``s_i`` is the distance
    from ``h_i`` to its k-th nearest neighbour; same-class pairs get
    ``A_ij / n_c``, others zero.
    """
    D2 = sq_distances(H, H)
    n = H.shape[0]
    kk = min(k, n - 1)
    s = np.sqrt(np.sort(D2, axis=1)[:, kk])
    s = np.maximum(s, 1e-12)
    A = np.exp(-D2 / np.outer(s, s))
    W = np.zeros_like(A)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.size < 2:
            raise ValueError("singleton class")
        W[np.ix_(idx, idx)] = A[np.ix_(idx, idx)] / idx.size
    return W


# ---------------------------------------------------------------- feature maps

def _hidden_stack(X, hyper, seed, n_layers, weights, enhanced_inputs=False):
    """Hidden layers 1..n_layers. With ``enhanced_inputs`` later layers see [X | H_prev]."""
    Hs = []
    inp = X
    for ell in range(n_layers):
        key_W, key_b = f"W{ell}", f"b{ell}"
        if key_W not in weights:
            weights[key_W], weights[key_b] = _uniform_block(seed, _HIDDEN, ell, inp.shape[1], int(hyper.N))
        H = activation(hyper.Act, inp @ weights[key_W] + weights[key_b])
        Hs.append(H)
        inp = np.hstack([X, H]) if enhanced_inputs else H
    return Hs


def _bls_features(X, hyper, seed, weights):
    Z = []
    for g in range(int(hyper.n_feat_groups)):
        kW, kb = f"F{g}W", f"F{g}b"
        if kW not in weights:
            weights[kW], weights[kb] = _uniform_block(seed, _FEATURE, g, X.shape[1], int(hyper.n_feat_nodes))
        Z.append(activation(hyper.Act, X @ weights[kW] + weights[kb]))
    return np.hstack(Z)


def _enhancement(Z, hyper, seed, weights):
    n_enh = int(hyper.n_enh_groups) * int(hyper.n_enh_nodes)
    if "EW" not in weights:
        weights["EW"], weights["Eb"] = _uniform_block(seed, _ENHANCE, 0, Z.shape[1], n_enh)
    return activation(hyper.Act, Z @ weights["EW"] + weights["Eb"])


def _fuzzy_centers(X, n_rules, seed, group):
    if n_rules > X.shape[0]:
        raise ValueError("more fuzzy rules than training samples")
    if n_rules == 1:
        return X.mean(axis=0, keepdims=True)
    for attempt in range(KMEANS_ATTEMPTS):
        rng = np.random.default_rng([int(seed), _KMEANS, group, attempt])
        try:
            centers, _ = kmeans2(X, n_rules, minit="++", missing="raise", seed=rng)
            return centers
        except ClusterError:
            continue
    raise RuntimeError(f"k-means left an empty cluster after {KMEANS_ATTEMPTS} attempts")


def fuzzy_firing(X, centers):
    """Normalized Gaussian rule firing strengths with unit widths (softmax of -||x-c||^2)."""
    logits = -sq_distances(X, centers)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


def _nfbls_features(X, hyper, seed, weights, y=None):
    """First-order Takagi-Sugeno subsystems; one output per rule per group."""
    out = []
    R = int(hyper.n_feat_nodes)
    for g in range(int(hyper.n_feat_groups)):
        kc, ka, ka0 = f"Z{g}c", f"Z{g}a", f"Z{g}a0"
        if kc not in weights:
            weights[kc] = _fuzzy_centers(X, R, seed, g)
            weights[ka], weights[ka0] = _uniform_block(seed, _FUZZY, g, X.shape[1], R)
        firing = fuzzy_firing(X, weights[kc])
        conseq = X @ weights[ka] + weights[ka0]
        out.append(firing * conseq)
    return np.hstack(out)


def _design(variant, X, hyper, seed, weights):
    """Design matrix (or list of per-layer matrices for edRVFL)."""
    if variant in ("ELM", "MCVELM", "MVELM", "GEELM-LDA", "GEELM-LFDA"):
        return _hidden_stack(X, hyper, seed, 1, weights)[0]
    if variant in ("RVFL", "IFRVFL", "Class-Var-RVFL", "Total-Var-RVFL"):
        H = _hidden_stack(X, hyper, seed, 1, weights)[0]
        return np.hstack([X, H])
    if variant == "dRVFL":
        return np.hstack([X] + _hidden_stack(X, hyper, seed, int(hyper.L), weights))
    if variant == "edRVFL":
        Hs = _hidden_stack(X, hyper, seed, int(hyper.L), weights, enhanced_inputs=True)
        return [np.hstack([X, H]) for H in Hs]
    if variant == "BLS":
        Z = _bls_features(X, hyper, seed, weights)
        return np.hstack([Z, _enhancement(Z, hyper, seed, weights)])
    if variant == "NF-BLS":
        F = _nfbls_features(X, hyper, seed, weights)
        return np.hstack([F, _enhancement(F, hyper, seed, weights)])
    raise ValueError(f"unknown RNN variant {variant!r}")


# ---------------------------------------------------------------- training

def train(variant, train, hyper, seed=0, scores=None):
    """Fit any variant in :data:`VARIANTS`.

    Parameters
    ----------
    variant : str
    train : Dataset or (X, y) tuple
        Features are expected to be standardized already.
    hyper : RnnHyper
    seed : int
    scores : array, optional
        IFRVFL sample weights overriding the intuitionistic-fuzzy scores.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown RNN variant {variant!r}")
    X, y = _xy(train)
    weights = {}
    meta = {}
    D = _design(variant, X, hyper, seed, weights)
    C = float(hyper.C)

    if variant == "edRVFL":
        betas = tuple(ridge_solve(Dl, y, C) for Dl in D)
        meta["residual"] = max(ridge_residual(Dl, y, C, b) for Dl, b in zip(D, betas))
        return TrainedRnn(variant, X.shape[1], int(seed), hyper, weights, betas, meta)

    penalty = None
    A, B = D, y
    if variant in ("MCVELM", "MVELM", "Class-Var-RVFL", "Total-Var-RVFL"):
        _require_both_classes(y)
        kind = "intraclass" if variant in ("MCVELM", "Class-Var-RVFL") else "total"
        if hyper.lam > 0:
            penalty = hyper.lam * scatter_matrix(D, y, kind)
    elif variant in ("GEELM-LDA", "GEELM-LFDA"):
        _require_both_classes(y)
        if hyper.lam > 0:
            W = lda_affinity(y) if variant == "GEELM-LDA" else lfda_affinity(D, y)
            penalty = hyper.lam * (D.T @ laplacian(W) @ D)
    elif variant == "IFRVFL":
        _require_both_classes(y)
        s = if_score(X, y, hyper.mu).score if scores is None else np.asarray(scores, dtype=float)
        if not np.any(s > 0):
            raise ValueError("all intuitionistic fuzzy scores are zero")
        root = np.sqrt(s)
        A, B = D * root[:, None], y * root
        meta["if_scores"] = s
    beta = ridge_solve(A, B, C, penalty=penalty)
    if not np.all(np.isfinite(beta)):
        raise FloatingPointError("output weights are not finite")
    meta["residual"] = ridge_residual(A, B, C, beta, penalty=penalty)
    return TrainedRnn(variant, X.shape[1], int(seed), hyper, weights, (beta,), meta)


def train_rvfl(train_set, h, seed=0):
    return train("RVFL", train_set, h, seed)


def train_elm(train_set, h, seed=0):
    return train("ELM", train_set, h, seed)


def train_variance_elm(train_set, h, seed=0, scatter="intraclass"):
    return train({"intraclass": "MCVELM", "total": "MVELM"}[scatter], train_set, h, seed)


def train_variance_rvfl(train_set, h, seed=0, scatter="intraclass"):
    return train({"intraclass": "Class-Var-RVFL", "total": "Total-Var-RVFL"}[scatter], train_set, h, seed)


def train_ifrvfl(train_set, h, seed=0, scores=None):
    return train("IFRVFL", train_set, h, seed, scores=scores)


def train_geelm(train_set, h, seed=0, graph="LDA"):
    return train(f"GEELM-{graph.upper()}", train_set, h, seed)


def train_drvfl(train_set, h, seed=0):
    return train("dRVFL", train_set, h, seed)


def train_edrvfl(train_set, h, seed=0):
    return train("edRVFL", train_set, h, seed)


def train_bls(train_set, h, seed=0):
    return train("BLS", train_set, h, seed)


def train_nfbls(train_set, h, seed=0):
    return train("NF-BLS", train_set, h, seed)


# ---------------------------------------------------------------- prediction

def majority_vote(layer_labels):
    """Column-wise majority of +-1 votes; ties go to +1."""
    total = np.sum(layer_labels, axis=0)
    return np.where(total >= 0, 1, -1)


def layer_scores(model, X):
    X = np.asarray(X, dtype=float)
    weights = dict(model.weights)
    D = _design(model.variant, X, model.hyper, model.seed, weights)
    if model.variant == "edRVFL":
        return np.vstack([Dl @ b for Dl, b in zip(D, model.betas)])
    return (D @ model.betas[0])[None, :]


def predict(model, X):
    """Return ``(labels, scores)``; labels are +-1 with 0 mapped to +1."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, model.n_features)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    S = layer_scores(model, X)
    if model.variant == "edRVFL":
        return majority_vote(_sign(S)), S.mean(axis=0)
    return _sign(S[0]), S[0]


def n_outputs(model):
    """Length of each output-weight block."""
    return tuple(b.shape[0] for b in model.betas)


def log10_or_zero(v):
    return 0.0 if v <= 0 else math.log10(v)
