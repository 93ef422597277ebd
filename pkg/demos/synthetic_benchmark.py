"""A small end-to-end benchmark on a synthetic cohort.

Writes four modality CSVs, runs a handful of models through the split /
cross-validation / refit protocol with the smoke grids, and feeds the
resulting accuracy matrix to the statistics battery.  Takes about a minute.

    python demos/synthetic_benchmark.py [output_dir]
"""
# %%
import sys
import tempfile
from pathlib import Path

from smcbench import dataio
from smcbench.evalharness import accuracy_matrix, run_experiment, write_results
from smcbench.stats import run_battery

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="smcbench_demo_"))

# %% [markdown]
# 40 subjects per class, narrow feature tables so the demo stays quick.
# Only the first few columns of each table carry class signal.

# %%
paths = dataio.write_synthetic_cohort(out / "data", n_per_class=40, seed=3,
                                      widths={"CT": 20, "GM": 30, "JD": 30, "WM": 30})
parts = {m: dataio.load_modality(p, m) for m, p in paths.items()}
datasets = dict(parts)
datasets["ALL"] = dataio.fuse_all([parts[m] for m in ("CT", "GM", "JD", "WM")])
for m, ds in datasets.items():
    print(f"{m:3s} {ds.n_samples} subjects x {ds.n_features} features")

# %% [markdown]
# Three seeds instead of twenty.  Each seed re-draws the fold assignment and
# the random hidden weights; the train/test split itself stays fixed.

# %%
tags = ["RVFL", "ELM", "dRVFL", "edRVFL", "SVM-L", "LSSVM-K"]
results = run_experiment(tags, datasets, seeds=(1, 2, 3))
M = accuracy_matrix(results, tags, list(datasets), which="mean")
print(M.round(2))

# %%
write_results(results, out / "results", tags, list(datasets))
rm, res, wtl = run_battery(M, out / "stats")
print(rm.to_frame().round(2))
print(f"chi2_F = {res.chi2:.2f}, F_F = {res.ff:.2f} ({res.verdict()} at {res.critical_value:.2f})")
print("written to", out)
