"""
Predicting grades and updating a candidate after an interview
=============================================================

Posterior predictive grade distributions for a known candidate and for an
average newcomer, then the change in a candidate's potential after a
hypothetical grade from a tough and from an easy interviewer.
"""

import numpy as np

from bhopm import BHOPM, SamplerConfig, SyntheticConfig, fit, generate_synthetic
from bhopm.analytics import (AVERAGE, empirical_bayes_update, point_estimates,
                             predict_grade_full, prob_above_threshold)

ds, _ = generate_synthetic(SyntheticConfig(C=20, I=6, R=2, N=300, seed=4))
post = fit(BHOPM(ds), SamplerConfig(chains=2, warmup=300, samples=300, master_seed=2))

print("candidate 0, interviewer 1, round 1:", predict_grade_full(post, 0, 1, 0).probs.round(3))
print("average newcomer, same interviewer: ", predict_grade_full(post, AVERAGE, 1, 0).probs.round(3))
print("P(candidate 0 potential > 0) = %.2f" % prob_above_threshold(post, 0, 0.0))

beta = point_estimates(post).beta
tough, easy = int(np.argmin(beta)), int(np.argmax(beta))
for grade in (1, 4):
    for who, i in (("tough", tough), ("easy", easy)):
        upd = empirical_bayes_update(post, 0, i, 0, grade)
        print(f"grade {grade} from {who} interviewer: shift {upd.shift:+.3f}")
