"""Intuitionistic fuzzy sample scores used to down-weight noisy samples."""

from dataclasses import dataclass

import numpy as np

from .linalg import gaussian_kernel

N_NEIGHBORS = 5
DELTA = 1e-8


@dataclass
class IfScore:
    membership: np.ndarray
    nonmembership: np.ndarray
    score: np.ndarray


def score_function(membership, nonmembership):
    """Combine membership and nonmembership degrees into one weight in [0, 1]."""
    mu = np.asarray(membership, dtype=float)
    nu = np.asarray(nonmembership, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        mixed = (1.0 - nu) / (2.0 - mu - nu)
    out = np.where(mu <= nu, 0.0, mixed)
    return np.where(nu == 0, mu, out)


def if_score(X, labels, mu, k=N_NEIGHBORS, delta=DELTA):
    """Score every sample by centroid proximity and neighbourhood purity.

    Membership is ``1 - d / (r + delta)`` where ``d`` is the distance to the
    own-class centroid in the feature space induced by a Gaussian kernel of
    width ``mu`` and ``r`` the largest such distance within the class.
    Nonmembership is ``(1 - membership)`` times the fraction of the ``k``
    nearest neighbours carrying the other label.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(labels)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("both classes must be present")
    n = X.shape[0]
    K = gaussian_kernel(X, X, mu)
    membership = np.empty(n)
    for c in classes:
        idx = np.flatnonzero(y == c)
        Kc = K[np.ix_(idx, idx)]
        d2 = np.diag(Kc) - 2.0 * Kc.mean(axis=1) + Kc.mean()
        d = np.sqrt(np.maximum(d2, 0.0))
        if idx.size == 1:
            d[:] = 0.0
        membership[idx] = 1.0 - d / (d.max() + delta)

    kk = min(k, n - 1)
    # kernel distance 2 - 2K is monotone in Euclidean distance
    dist = 2.0 - 2.0 * K
    np.fill_diagonal(dist, np.inf)
    nbrs = np.argsort(dist, axis=1, kind="stable")[:, :kk]
    hetero = (y[nbrs] != y[:, None]).mean(axis=1) if kk > 0 else np.zeros(n)
    nonmembership = (1.0 - membership) * hetero
    return IfScore(membership, nonmembership, score_function(membership, nonmembership))
