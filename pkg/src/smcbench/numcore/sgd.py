"""Mini-batch stochastic gradient descent with classical momentum."""

from dataclasses import dataclass
import warnings

import numpy as np


@dataclass(frozen=True)
class SgdParams:
    """Optimizer constants.

    ``t`` is the value every parameter starts from, ``k`` the per-epoch
    learning-rate decay (``lr / (1 + k * epoch)``), ``epsilon`` the stopping
    threshold on the parameter change, ``r`` the momentum, ``max_it`` the cap
    on mini-batch updates and ``m`` the mini-batch size.
    """

    t: float = 0.0
    k: float = 0.1
    epsilon: float = 1e-8
    r: float = 0.6
    max_it: int = 5000
    m: int = 100

    def __post_init__(self):
        if self.m < 1 or self.max_it < 1:
            raise ValueError("m and max_it must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 <= self.r < 1:
            raise ValueError("momentum r must lie in [0, 1)")


@dataclass
class SgdResult:
    x: np.ndarray
    n_iter: int
    converged: bool
    diverged: bool


DIVERGENCE_NORM = 1e12


def sgd_momentum(grad_fn, init, params, seed, n_samples, lr=0.1):
    """Minimize a finite sum given its mini-batch gradient.

    Parameters
    ----------
    grad_fn : callable ``(w, batch_indices) -> gradient``
    init : array or None
        Starting point; ``None`` means a vector filled with ``params.t``
        (then ``n_samples`` alone does not fix the size, so pass an array).
    params : SgdParams
    seed : int
        Seeds the mini-batch shuffling.
    n_samples : int
        Number of terms in the sum; batches are drawn from ``range(n_samples)``.
    lr : float
        Base step size before decay.
    """
    w = np.array(init, dtype=float)
    v = np.zeros_like(w)
    rng = np.random.default_rng(seed)
    it = 0
    epoch = 0
    while it < params.max_it:
        order = rng.permutation(n_samples)
        eta = lr / (1.0 + params.k * epoch)
        for start in range(0, n_samples, params.m):
            batch = order[start:start + params.m]
            v = params.r * v - eta * np.asarray(grad_fn(w, batch), dtype=float)
            w_new = w + v
            it += 1
            if not np.all(np.isfinite(w_new)) or np.linalg.norm(w_new) > DIVERGENCE_NORM:
                warnings.warn("SGD diverged", RuntimeWarning, stacklevel=2)
                return SgdResult(w, it, False, True)
            if np.linalg.norm(w_new - w) < params.epsilon:
                return SgdResult(w_new, it, True, False)
            w = w_new
            if it >= params.max_it:
                break
        epoch += 1
    return SgdResult(w, it, False, False)
