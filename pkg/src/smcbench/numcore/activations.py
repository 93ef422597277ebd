"""Activation functions indexed 1..9 as used by the randomized networks."""

import numpy as np

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805


def selu(x):
    x = np.asarray(x, dtype=float)
    neg = SELU_ALPHA * np.expm1(np.minimum(x, 0.0))
    return SELU_SCALE * np.where(x > 0, x, neg)


def relu(x):
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sine(x):
    return np.sin(np.asarray(x, dtype=float))


def hardlim(x):
    return (np.asarray(x, dtype=float) >= 0).astype(float)


def tribas(x):
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(x, dtype=float)))


def radbas(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x)


def sgn(x):
    return np.where(np.asarray(x, dtype=float) >= 0, 1.0, -1.0)


def tansig(x):
    return np.tanh(np.asarray(x, dtype=float))


ACTIVATIONS = {
    1: selu,
    2: relu,
    3: sigmoid,
    4: sine,
    5: hardlim,
    6: tribas,
    7: radbas,
    8: sgn,
    9: tansig,
}

ACTIVATION_NAMES = {
    1: "selu", 2: "relu", 3: "sigmoid", 4: "sin", 5: "hardlim",
    6: "tribas", 7: "radbas", 8: "sgn", 9: "tansig",
}


def activation(index, x):
    """Apply activation number ``index`` (1..9) elementwise to ``x``."""
    try:
        fn = ACTIVATIONS[int(index)]
    except (KeyError, TypeError, ValueError):
        raise ValueError(f"unknown activation index {index!r}; expected 1..9") from None
    return fn(x)
