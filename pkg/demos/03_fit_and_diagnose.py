"""
Fitting the model and checking convergence
==========================================

A short NUTS run on a small synthetic dataset, followed by split R-hat,
effective sample size and WAIC.
"""

import numpy as np

from bhopm import BHOPM, SamplerConfig, SyntheticConfig, fit, generate_synthetic
from bhopm.analytics import point_estimates
from bhopm.diagnostics import ess_report, rhat_report, spearman, waic
from bhopm.model import pointwise_loglik_draws

ds, truth = generate_synthetic(SyntheticConfig(C=20, I=6, R=2, N=300, seed=4))
model = BHOPM(ds)

# 4 chains of 300 warmup + 300 draws; the published setting is 1000 + 4000
post = fit(model, SamplerConfig(chains=4, warmup=300, samples=300, master_seed=1))
print("divergences:", post.divergence_count)

rep = rhat_report(post)
print("max split R-hat: %.3f  (worst: %s)" % (rep.max_rhat, rep.worst[0][0]))
print("min ESS: %.0f" % min(ess_report(post).values()))
print(waic(pointwise_loglik_draws(model, post.unconstrained())).to_dict())

# rank agreement between recovered and true interviewer toughness
est = point_estimates(post)
print("Spearman(beta): %.2f" % spearman(est.beta, truth.beta))
print("Spearman(alpha): %.2f" % spearman(est.alpha, truth.alpha))
print("mean |alpha error|: %.2f" % np.mean(np.abs(est.alpha - truth.alpha)))
