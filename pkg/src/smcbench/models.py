"""Uniform registry over both classifier families.

Every model is addressed by its tag (``"RVFL"``, ``"Pin-GTSVM-K"``, ...) and
configured by a flat dict of hyperparameters. This module owns the tuning
grids, the train/predict dispatch and the on-disk model format.
"""

from dataclasses import asdict, dataclass, field, fields
import itertools
import json

import numpy as np

from . import hbc, rnn
from .numcore import SgdParams

RNN_TAGS = rnn.VARIANTS
HBC_TAGS = tuple(f"{fam}-{k}" for fam in hbc.FAMILIES for k in ("L", "K"))
ALL_TAGS = RNN_TAGS + HBC_TAGS
FORMAT_VERSION = 1

# ---------------------------------------------------------------- grid values

C_RNN = [1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6, 1e8]
N_RNN = list(range(3, 504, 20))
ACTS = list(range(1, 10))
LAM_VAR = [1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6, 1e8]
LAM_GRAPH = [1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6]
MU_IF = [10.0**p for p in range(-5, 6)]
C_HBC = [2.0**p for p in (-5, -3, -1, 1, 3, 5)]
POW2_21 = [2.0**p for p in range(-10, 11)]
TAUS = [round(0.1 * i, 1) for i in range(11)]
LINEX_A = [float(a) for a in range(-10, 0)]
SMOKE_SGD_EPOCHS = 500
STAGE_MULTIPLIERS = [0.9, 0.925, 0.95, 0.975, 1.0, 1.025, 1.05, 1.075, 1.1]


@dataclass(frozen=True)
class StageTwo:
    """Refinement around a first-stage winner ``(C*, N*)``."""

    multipliers: tuple = tuple(STAGE_MULTIPLIERS)
    L: tuple = tuple(range(1, 11))
    Act: tuple = tuple(ACTS)

    def axes(self, best):
        c = float(best["C"])
        n = int(best["N"])
        Cs = [c * m for m in self.multipliers]
        Ns = [max(1, int(round(n * m))) for m in self.multipliers]
        return (("C", Cs), ("N", Ns), ("L", list(self.L)), ("Act", list(self.Act)))


@dataclass(frozen=True)
class GridSpec:
    tag: str
    axes: tuple
    stage2: StageTwo = None

    def __post_init__(self):
        if not self.axes or any(len(v) == 0 for _, v in self.axes):
            raise ValueError("grid axes must be non-empty")
        if self.stage2 is not None and self.tag not in ("dRVFL", "edRVFL"):
            raise ValueError("a second stage is only defined for dRVFL/edRVFL")

    def configs(self, axes=None):
        axes = self.axes if axes is None else axes
        names = [a for a, _ in axes]
        return [dict(zip(names, combo)) for combo in itertools.product(*(v for _, v in axes))]

    def size(self):
        return int(np.prod([len(v) for _, v in self.axes]))


def _axes(**kw):
    return tuple((k, list(v)) for k, v in kw.items())


def full_grid(tag):
    """Tuning grid with every axis listed in its reference order."""
    if tag in ("RVFL", "ELM"):
        return GridSpec(tag, _axes(C=C_RNN, N=N_RNN, Act=ACTS))
    if tag in ("MCVELM", "MVELM", "Class-Var-RVFL", "Total-Var-RVFL"):
        return GridSpec(tag, _axes(C=C_RNN, lam=LAM_VAR, N=N_RNN, Act=ACTS))
    if tag in ("GEELM-LDA", "GEELM-LFDA"):
        return GridSpec(tag, _axes(C=C_RNN, lam=LAM_GRAPH, N=N_RNN, Act=ACTS))
    if tag == "IFRVFL":
        return GridSpec(tag, _axes(C=C_RNN, mu=MU_IF, N=N_RNN, Act=ACTS))
    if tag in ("dRVFL", "edRVFL"):
        return GridSpec(tag, _axes(C=C_RNN, N=[256, 512, 1024], L=[2], Act=[7]), StageTwo())
    if tag in ("BLS", "NF-BLS"):
        return GridSpec(tag, _axes(
            C=C_RNN, n_feat_groups=range(5, 51, 5), n_feat_nodes=range(1, 22, 2),
            n_enh_groups=range(5, 106, 10), n_enh_nodes=[1], Act=ACTS,
        ))
    family, kernel = hbc.split_tag(tag)
    K = kernel != "linear"
    sig = {"sigma": POW2_21} if K else {}
    if family in ("SVM", "LSSVM"):
        return GridSpec(tag, _axes(C=C_HBC, **sig))
    if family in ("TSVM", "LSTSVM"):
        return GridSpec(tag, _axes(C1=C_HBC, C2=C_HBC, **sig))
    if family == "IFTSVM":
        return GridSpec(tag, _axes(C1=C_HBC, C2=C_HBC, **sig, mu=POW2_21))
    if family == "Linex-SVM":
        # the kernel form's C range is not listed; the linear form's is reused
        return GridSpec(tag, _axes(C=C_HBC, a=LINEX_A, **sig))
    if family == "Pin-SVM":
        return GridSpec(tag, _axes(C=C_HBC, **sig, tau=TAUS))
    if family == "Pin-GTSVM":
        return GridSpec(tag, _axes(C1=C_HBC, C2=C_HBC, **sig, tau1=TAUS, tau2=TAUS))
    raise ValueError(f"unknown model tag {tag!r}")


def smoke_grid(tag):
    """A few points from the full grid, for quick end-to-end runs."""
    if tag in ("RVFL", "ELM"):
        return GridSpec(tag, _axes(C=[1e-2, 1.0, 1e2], N=[63, 203], Act=[1, 3]))
    if tag in ("MCVELM", "MVELM", "Class-Var-RVFL", "Total-Var-RVFL"):
        return GridSpec(tag, _axes(C=[1e-2, 1.0], lam=[1e-2, 1.0], N=[63, 203], Act=[3]))
    if tag in ("GEELM-LDA", "GEELM-LFDA"):
        return GridSpec(tag, _axes(C=[1e-2, 1.0], lam=[1e-2, 1.0], N=[63, 203], Act=[3]))
    if tag == "IFRVFL":
        return GridSpec(tag, _axes(C=[1e-2, 1.0], mu=[10.0, 100.0], N=[63, 203], Act=[3]))
    if tag in ("dRVFL", "edRVFL"):
        return GridSpec(
            tag, _axes(C=[1e-2, 1.0], N=[256], L=[2], Act=[7]),
            StageTwo(multipliers=(0.9, 1.1), L=(1, 2, 3), Act=(7,)),
        )
    if tag in ("BLS", "NF-BLS"):
        return GridSpec(tag, _axes(C=[1e-2, 1.0], n_feat_groups=[5], n_feat_nodes=[5], n_enh_groups=[15, 45],
                                   n_enh_nodes=[1], Act=[3]))
    family, kernel = hbc.split_tag(tag)
    K = kernel != "linear"
    sig = {"sigma": [2.0**3, 2.0**5]} if K else {}
    c2 = [2.0**-1, 2.0]
    if family in ("SVM", "LSSVM"):
        return GridSpec(tag, _axes(C=c2, **sig))
    if family in ("TSVM", "LSTSVM"):
        return GridSpec(tag, _axes(C1=c2, C2=[2.0**-1], **sig))
    if family == "IFTSVM":
        return GridSpec(tag, _axes(C1=c2, C2=[2.0**-1], **sig, mu=[2.0**5]))
    if family == "Linex-SVM":
        # the smoke preset trades SGD epochs for speed
        return GridSpec(tag, _axes(C=c2, a=[-1.0], **sig, sgd=[{"max_it": SMOKE_SGD_EPOCHS}]))
    if family == "Pin-SVM":
        return GridSpec(tag, _axes(C=c2, **sig, tau=[0.0, 0.5]))
    if family == "Pin-GTSVM":
        return GridSpec(tag, _axes(C1=c2, C2=[2.0**-1], **sig, tau1=[0.5], tau2=[0.5]))
    raise ValueError(f"unknown model tag {tag!r}")


def grid_for(tag, full=False):
    return full_grid(tag) if full else smoke_grid(tag)


# ---------------------------------------------------------------- dispatch

def family_of(tag):
    if tag in RNN_TAGS:
        return "rnn"
    if tag in HBC_TAGS:
        return "hbc"
    raise ValueError(f"unknown model tag {tag!r}")


def make_hyper(tag, cfg):
    """Build the typed hyperparameter record for ``tag`` from a flat dict."""
    cfg = dict(cfg)
    if "lambda" in cfg:
        cfg["lam"] = cfg.pop("lambda")
    if family_of(tag) == "rnn":
        known = {f.name for f in fields(rnn.RnnHyper)}
        bad = set(cfg) - known
        if bad:
            raise ValueError(f"{tag}: unknown hyperparameters {sorted(bad)}")
        for key in ("N", "Act", "L", "n_feat_groups", "n_feat_nodes", "n_enh_groups", "n_enh_nodes"):
            if key in cfg:
                cfg[key] = int(cfg[key])
        return rnn.RnnHyper(**cfg)
    _, kernel = hbc.split_tag(tag)
    known = {f.name for f in fields(hbc.HbcHyper)} - {"kernel"}
    sgd = cfg.pop("sgd", None)
    bad = set(cfg) - known
    if bad:
        raise ValueError(f"{tag}: unknown hyperparameters {sorted(bad)}")
    if isinstance(sgd, dict):
        cfg["sgd"] = SgdParams(**sgd)
    elif sgd is not None:
        cfg["sgd"] = sgd
    return hbc.HbcHyper(kernel=kernel, **cfg)


def fit(tag, train, cfg, seed=0):
    """Train ``tag`` on a Dataset or ``(X, y)`` tuple with hyperparameters ``cfg``."""
    h = make_hyper(tag, cfg)
    if family_of(tag) == "rnn":
        return rnn.train(tag, train, h, seed)
    return hbc.train(tag, train, h, seed)


def predict(model, X):
    """``(labels, scores)`` for any trained model."""
    if isinstance(model, rnn.TrainedRnn):
        return rnn.predict(model, X)
    return hbc.predict_hbc(model, X)


def model_tag(model):
    return model.variant if isinstance(model, rnn.TrainedRnn) else model.tag


# ---------------------------------------------------------------- persistence

def _json_safe(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return str(v)
    return v


def save_model(model, path):
    """Write a model as a single ``.npz``: arrays plus a JSON header.

    Floats are stored as float64 arrays so reloaded models predict
    bit-identically.
    """
    arrays = {}
    if isinstance(model, rnn.TrainedRnn):
        header = {
            "format": FORMAT_VERSION, "kind": "rnn", "variant": model.variant,
            "n_features": model.n_features, "seed": model.seed, "hyper": asdict(model.hyper),
            "weights": sorted(model.weights), "n_betas": len(model.betas),
        }
        for k, v in model.weights.items():
            arrays[f"w_{k}"] = v
        for i, b in enumerate(model.betas):
            arrays[f"beta_{i}"] = b
    else:
        header = {
            "format": FORMAT_VERSION, "kind": "hbc", "family": model.family, "kernel": model.kernel,
            "sigma": model.sigma, "n_features": model.n_features, "biases": list(map(float, model.biases)),
            "norms": list(map(float, model.norms)), "n_coefs": len(model.coefs),
            "has_support": model.support is not None,
        }
        for i, c in enumerate(model.coefs):
            arrays[f"coef_{i}"] = c
        if model.support is not None:
            arrays["support"] = model.support
    scalars = {k: _json_safe(v) for k, v in model.meta.items() if np.isscalar(v) or isinstance(v, (bool,))}
    header["meta"] = scalars
    arrays["__header__"] = np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path):
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(bytes(z["__header__"]).decode("utf-8"))
        if header.get("format") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {header.get('format')!r}")
        if header["kind"] == "rnn":
            weights = {k: np.array(z[f"w_{k}"]) for k in header["weights"]}
            betas = tuple(np.array(z[f"beta_{i}"]) for i in range(header["n_betas"]))
            return rnn.TrainedRnn(
                header["variant"], header["n_features"], header["seed"], rnn.RnnHyper(**header["hyper"]),
                weights, betas, header["meta"],
            )
        coefs = tuple(np.array(z[f"coef_{i}"]) for i in range(header["n_coefs"]))
        support = np.array(z["support"]) if header["has_support"] else None
        return hbc.TrainedHbc(
            header["family"], header["kernel"], header["sigma"], header["n_features"], coefs,
            tuple(header["biases"]), tuple(header["norms"]), support, header["meta"],
        )
