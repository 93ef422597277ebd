"""Rank, Friedman and win-tie-loss statistics on the reference accuracy tables in tests/data.

Run from the repository root:

    python demos/reference_statistics.py
"""
# %%
from pathlib import Path

import numpy as np
import pandas as pd

from smcbench.evalharness import matrix_from_metrics
from smcbench.stats import friedman, friedman_report, rank_models, win_tie_loss

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"

# %% [markdown]
# The metric tables hold one row per (model, modality) with accuracy,
# sensitivity, specificity, precision and f-measure in percent.  The stats
# functions want datasets as rows and models as columns.

# %%
rnn = matrix_from_metrics(pd.read_csv(DATA / "rnn_metrics.csv")).T
print(rnn.round(2))

# %% [markdown]
# Accuracies are printed with two decimals, so values 0.01 apart are treated
# as tied (the default tolerance is 0.05 points).  Compare with exact ties.

# %%
rm = rank_models(rnn)
exact = rank_models(rnn, tie_tol=0.0)
print(rm.to_frame())
print("cells that change under exact ties:", int(np.sum(rm.ranks != exact.ranks)))

# %%
res = friedman(rm, critical_value=1.96)
print(friedman_report(rm, res))

# %% [markdown]
# Pairwise sign test.  With five modalities a model needs at least
# 4.69 effective wins, so only a clean sweep is significant.

# %%
wtl = win_tie_loss(rnn)
print(f"threshold = {wtl.threshold:.2f}")
for other in wtl.models:
    if other != "dRVFL":
        print(f"dRVFL vs {other:15s} {list(wtl.triple('dRVFL', other))}")

# %% [markdown]
# The hyperplane family for contrast: its F statistic stays under the
# critical value, so the ranks there are not separable.

# %%
hbc = matrix_from_metrics(pd.read_csv(DATA / "hbc_metrics.csv")).T
rm_h = rank_models(hbc)
print(friedman_report(rm_h, friedman(rm_h, critical_value=1.84)))
