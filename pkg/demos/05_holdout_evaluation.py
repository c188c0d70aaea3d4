"""
Chronological hold-out evaluation
=================================

Train on the first 80% of interviews, predict the remaining 20% and score
the most probable grade against the observed one.
"""

import numpy as np

from bhopm import BHOPM, SamplerConfig, SyntheticConfig, fit, generate_synthetic
from bhopm.analytics import predict_dataset
from bhopm.data import chronological_split
from bhopm.diagnostics import confusion_matrix

ds, _ = generate_synthetic(SyntheticConfig(C=30, I=8, R=3, N=500, seed=6))
cutoff = float(np.sort(ds.order_key)[int(0.8 * ds.N) - 1])
train, test = chronological_split(ds, cutoff)
print(f"train {train.N} rows, test {test.N} rows, {int(test.unseen.sum())} with unseen entities")

post = fit(BHOPM(train), SamplerConfig(chains=2, warmup=300, samples=300, master_seed=3))
probs = predict_dataset(post, test, "full")
rep = confusion_matrix(np.argmax(probs, axis=1) + 1, test.grade, ds.K)
print("rows = actual grade, columns = predicted grade")
print(rep.matrix)
print(f"exact {rep.exact_rate:.2f}, within one grade {rep.within_one_rate:.2f}")
