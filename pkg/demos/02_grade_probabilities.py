"""
Grade probabilities of the ordered-probit link
==============================================

How the latent score, the noise scale and an interviewer's cut points
shape the four-grade distribution.
"""

import numpy as np

from bhopm.model import cell_probabilities, log_cell_probabilities

cuts = [-1.0, 0.0, 1.0]
for m in (-1.0, 0.0, 1.0):
    print(f"m={m:+.1f}", cell_probabilities(m, 1.0, cuts).round(4))

# a harsher interviewer: the middle cut sits higher, so grade 3 is rarer
print("harsh cuts", cell_probabilities(0.0, 1.0, [-1.0, 0.6, 1.0]).round(4))

# far in the tails the log scale stays exact even when probabilities underflow
print("log cells at m=40:", log_cell_probabilities(40.0, 1.0, cuts).round(2))
print("sums to one at m=40:", np.isclose(cell_probabilities(40.0, 1.0, cuts).sum(), 1.0))
