"""Feature-table ingestion, fusion, splitting, fold assignment and scaling.

Every modality file is a comma-separated table with one ``subject_id``
column, one ``label`` column (``SMC``/``HC`` or ``+1``/``-1``) and one
numeric column per feature. Age and sex travel as ordinary feature columns.
"""

from dataclasses import dataclass, field, replace
import logging
import warnings

import numpy as np
import pandas as pd
from scipy import stats as sps

logger = logging.getLogger(__name__)

MODALITIES = ("CT", "GM", "JD", "WM", "ALL")
DEMOGRAPHIC_COLUMNS = ("age", "sex")
LABEL_MAP = {"SMC": 1, "HC": -1, "1": 1, "+1": 1, "-1": -1}
STD_FLOOR = 1e-12


class DataError(ValueError):
    """Raised for malformed or inconsistent input tables."""


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    modality: str
    features: np.ndarray
    feature_names: tuple
    labels: np.ndarray
    subject_ids: tuple

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise DataError(f"unknown modality {self.modality!r}")
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        y = np.asarray(self.labels).astype(int)
        names = tuple(str(s) for s in self.feature_names)
        ids = tuple(str(s) for s in self.subject_ids)
        if not np.all(np.isin(y, (-1, 1))):
            raise DataError("labels must be +1 or -1")
        if not (X.shape[0] == y.shape[0] == len(ids)):
            raise DataError("row counts of features, labels and subject ids differ")
        if len(names) != X.shape[1]:
            raise DataError("feature_names does not match the column count")
        if len(set(names)) != len(names):
            raise DataError("duplicate feature names")
        if len(set(ids)) != len(ids):
            raise DataError("duplicate subject id")
        if not np.all(np.isfinite(X)):
            raise DataError("NaN/Inf in features")
        object.__setattr__(self, "features", _readonly(X))
        object.__setattr__(self, "labels", _readonly(y))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "subject_ids", ids)

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def take(self, idx):
        idx = np.asarray(idx, dtype=int)
        return Dataset(
            self.modality, self.features[idx], self.feature_names,
            self.labels[idx], tuple(self.subject_ids[i] for i in idx),
        )

    def column(self, name):
        return self.features[:, self.feature_names.index(name)]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie strictly between 0 and 1")


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray
    k: int = 5

    def indices(self, fold):
        """Return (train_idx, val_idx) for one fold."""
        val = np.flatnonzero(self.fold_of == fold)
        train = np.flatnonzero(self.fold_of != fold)
        return train, val


@dataclass(frozen=True)
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray
    constant: tuple = field(default=())

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def inverse(self, Z):
        return np.asarray(Z, dtype=float) * self.std + self.mean


# --------------------------------------------------------------------- loading

def _parse_labels(col):
    out = []
    for v in col:
        key = str(v).strip().upper()
        if key.endswith(".0"):
            key = key[:-2]
        if key not in LABEL_MAP:
            raise DataError(f"unrecognised label {v!r}")
        out.append(LABEL_MAP[key])
    return np.array(out, dtype=int)


def load_modality(path, modality, expected_dim=None):
    """Read one modality table into a :class:`Dataset`.

    ``expected_dim`` is advisory: a mismatch only logs a warning since the
    regional count may or may not include the demographic columns.
    """
    modality = modality.upper()
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: no rows") from None
    if df.shape[0] == 0:
        raise DataError(f"{path}: no rows")
    cols = [c.strip() for c in df.columns]
    df.columns = cols
    lower = {c.lower(): c for c in cols}
    if "label" not in lower:
        raise DataError(f"{path}: missing label column")
    if "subject_id" not in lower:
        raise DataError(f"{path}: missing subject_id column")
    label_col, id_col = lower["label"], lower["subject_id"]
    feat_cols = [c for c in cols if c not in (label_col, id_col)]
    raw = df[feat_cols].apply(lambda s: s.str.strip())
    num = raw.apply(pd.to_numeric, errors="coerce")
    bad = num.isna() & ~raw.isin(["nan", "NaN", "inf", "-inf", "Inf", "-Inf"])
    if bad.to_numpy().any():
        r, c = np.argwhere(bad.to_numpy())[0]
        raise DataError(f"{path}: non-numeric feature cell at row {r + 1}, column {feat_cols[c]!r}")
    X = num.to_numpy(dtype=float)
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: NaN/Inf in features")
    ids = df[id_col].str.strip().tolist()
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate subject id")
    if expected_dim is not None and len(feat_cols) != expected_dim:
        warnings.warn(
            f"{path}: {len(feat_cols)} feature columns, expected {expected_dim}", UserWarning, stacklevel=2
        )
    return Dataset(modality, X, feat_cols, _parse_labels(df[label_col]), ids)


def fuse_all(parts):
    """Concatenate modality datasets column-wise into the ``ALL`` set.

    Feature names are prefixed with their source modality (``GM:...``);
    demographic columns are kept once, unprefixed, at the end.
    """
    parts = list(parts)
    if not parts:
        raise DataError("nothing to fuse")
    mods = [p.modality for p in parts]
    if len(set(mods)) != len(mods):
        raise DataError(f"modality repeated: {mods}")
    if len(parts) == 1:
        return replace(parts[0], modality="ALL")
    ids = parts[0].subject_ids
    for p in parts[1:]:
        if p.subject_ids != ids:
            raise DataError("subject-id mismatch between parts")
        if not np.array_equal(p.labels, parts[0].labels):
            raise DataError("label mismatch between parts")
    blocks, names = [], []
    demo = {}
    for p in parts:
        for j, name in enumerate(p.feature_names):
            if name.lower() in DEMOGRAPHIC_COLUMNS:
                col = p.features[:, j]
                key = name.lower()
                if key in demo and not np.array_equal(demo[key][1], col):
                    raise DataError(f"demographic column {name!r} differs between parts")
                demo.setdefault(key, (name, col))
                continue
            blocks.append(p.features[:, j])
            names.append(name if p.modality == "ALL" else f"{p.modality}:{name}")
    for key in DEMOGRAPHIC_COLUMNS:
        if key in demo:
            names.append(demo[key][0])
            blocks.append(demo[key][1])
    return Dataset("ALL", np.column_stack(blocks), names, parts[0].labels, ids)


# --------------------------------------------------------------------- splits

def split_train_test(ds, spec):
    """Seeded stratified hold-out split.

    Each class contributes ``floor((1 - train_fraction) * n_c)`` test rows,
    so 111/111 subjects at 0.7 give 33+33 test and 78+78 train.
    """
    y = ds.labels
    rng = np.random.default_rng(spec.seed)
    test = []
    if spec.stratified:
        for c in (-1, 1):
            idx = np.flatnonzero(y == c)
            if idx.size < 2:
                raise DataError(f"class {c:+d} has fewer than 2 members")
            n_test = int(np.floor((1 - spec.train_fraction) * idx.size + 1e-9))
            n_test = min(max(n_test, 1), idx.size - 1)
            test.extend(rng.choice(idx, n_test, replace=False))
    else:
        n_test = int(np.floor((1 - spec.train_fraction) * y.size + 1e-9))
        test.extend(rng.choice(y.size, n_test, replace=False))
    test = np.sort(np.asarray(test, dtype=int))
    train = np.setdiff1d(np.arange(y.size), test)
    return ds.take(train), ds.take(test)


def kfold_indices(labels, k=5, seed=0):
    """Stratified fold assignment.

    Shuffles each class with the seed and deals its members round-robin onto
    the folds, continuing from where the previous class stopped so fold sizes
    differ by at most one overall.
    """
    y = np.asarray(labels)
    n = y.size
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of samples {n}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=int)
    offset = 0
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold_of[idx] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    return FoldAssignment(fold_of, k)


# --------------------------------------------------------------------- scaling

def fit_scaler(X):
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    const = tuple(int(j) for j in np.flatnonzero(std < STD_FLOOR))
    std = np.maximum(std, STD_FLOOR)
    # constant columns map to zero instead of being blown up by the floor
    std[list(const)] = 1.0
    return ScalerParams(mean, std, const)


def standardize(train, test):
    """Z-score both sets using training statistics only (population std)."""
    if train.feature_names != test.feature_names:
        raise DataError("train and test feature columns differ")
    sp = fit_scaler(train.features)
    if sp.constant:
        cols = [train.feature_names[j] for j in sp.constant]
        warnings.warn(f"constant columns standardized to zero: {cols}", UserWarning, stacklevel=2)
    return (
        replace(train, features=sp.transform(train.features)),
        replace(test, features=sp.transform(test.features)),
        sp,
    )


def standardization_report(ds, sp):
    lines = [f"modality {ds.modality}: {ds.n_features} features standardized on {ds.n_samples} rows"]
    if sp.constant:
        for j in sp.constant:
            lines.append(f"WARNING constant column {ds.feature_names[j]} (std floored, mapped to 0)")
    else:
        lines.append("no constant columns")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------- demographics

def demographics_tests(age_a, age_b, sex_a, sex_b):
    """Group-difference p-values: Welch t-test on age, Pearson chi-squared on sex."""
    age_a, age_b = np.asarray(age_a, float), np.asarray(age_b, float)
    sex_a, sex_b = np.asarray(sex_a), np.asarray(sex_b)
    if min(age_a.size, age_b.size, sex_a.size, sex_b.size) == 0:
        raise ValueError("both groups must be non-empty")
    if np.var(age_a) == 0 and np.var(age_b) == 0:
        raise ValueError("zero age variance in both groups; t-test undefined")
    p_t = float(sps.ttest_ind(age_a, age_b, equal_var=False).pvalue)
    levels = np.unique(np.concatenate([sex_a, sex_b]))
    table = np.array([[np.sum(sex_a == v) for v in levels], [np.sum(sex_b == v) for v in levels]])
    p_c = chi2_pvalue(table)
    return p_t, p_c


def chi2_pvalue(table):
    table = np.asarray(table, dtype=float)
    if table.shape[1] < 2:
        return 1.0
    return float(sps.chi2_contingency(table, correction=False).pvalue)


def demographics_from(ds, age_col="age", sex_col="sex"):
    """Run :func:`demographics_tests` with SMC as group A and HC as group B."""
    pos, neg = ds.labels == 1, ds.labels == -1
    age, sex = ds.column(age_col), ds.column(sex_col)
    return demographics_tests(age[pos], age[neg], sex[pos], sex[neg])


def demographics_from_csv(path):
    """Read a cohort table with ``label``, ``age`` and ``sex`` columns and run
    :func:`demographics_tests` (SMC versus HC)."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    df.columns = [c.strip().lower() for c in df.columns]
    missing = [c for c in ("label", "age", "sex") if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    y = _parse_labels(df["label"])
    try:
        age = df["age"].astype(float).to_numpy()
    except ValueError:
        raise DataError(f"{path}: non-numeric age") from None
    sex = df["sex"].str.strip().str.upper().to_numpy()
    return demographics_tests(age[y == 1], age[y == -1], sex[y == 1], sex[y == -1])


# --------------------------------------------------------------------- synthetic data

DEFAULT_WIDTHS = {"CT": 68, "GM": 273, "JD": 273, "WM": 273}


def synthetic_cohort(n_per_class=111, widths=None, seed=0, signal=0.35, informative=10):
    """Generate a cohort of modality tables shaped like the real feature sets.

    Returns a dict ``modality -> DataFrame`` ready for ``to_csv``. A handful
    of columns per modality carry a mean shift between the groups; the rest
    are noise. Age and sex are appended to every table with identical values.
    """
    widths = dict(DEFAULT_WIDTHS if widths is None else widths)
    rng = np.random.default_rng(seed)
    n = 2 * n_per_class
    labels = np.array(["SMC"] * n_per_class + ["HC"] * n_per_class)
    y = np.where(labels == "SMC", 1.0, -1.0)
    ids = [f"S{i:04d}" for i in range(n)]
    age = np.round(rng.normal(72.5, 6.0, n), 1)
    sex = rng.integers(0, 2, n)
    out = {}
    for mod, w in widths.items():
        latent = rng.normal(size=(n, w))
        k = min(informative, w)
        latent[:, :k] += signal * y[:, None]
        df = pd.DataFrame(latent, columns=[f"{mod.lower()}_r{j:03d}" for j in range(w)])
        df.insert(0, "label", labels)
        df.insert(0, "subject_id", ids)
        df["age"] = age
        df["sex"] = sex
        out[mod] = df
    return out


def write_synthetic_cohort(directory, **kw):
    import os

    os.makedirs(directory, exist_ok=True)
    paths = {}
    for mod, df in synthetic_cohort(**kw).items():
        p = os.path.join(directory, f"{mod.lower()}.csv")
        df.to_csv(p, index=False)
        paths[mod] = p
    return paths
