# Random Sobol' indices of Y = mu + sigma * W
#
# mu ~ U(0, 1) and sigma ~ U(1, 1 + L) are the uncertain parameters and
# W ~ N(0, 1) is the intrinsic noise. For a fixed W the indices are known in
# closed form, so this model is a good first check of the sampling pipeline.

import numpy as np

from stochsobol.models import ToyModel, toy_expected_sigma_index, toy_indices
from stochsobol.pipeline import Experiment, run_algorithm2
from stochsobol.sampling import RngStream
from stochsobol.sobol import moments

# the indices for a few noise values
for w in (0.0, 0.5, 1.0, 2.0):
    print("w = %.1f  (S_mu, S_sigma) =" % w, np.round(toy_indices(1.0, w).values, 4))

# expected importance of sigma grows with the width L of its range
for L in (0.1, 0.5, 1.0, 2.0, 5.0, 10.0):
    print("L = %4.1f  E[S_sigma] = %.4f" % (L, toy_expected_sigma_index(L)))

# surrogate estimate: 500 noise draws, 200 model runs each
exp = Experiment("toy", n=200, m=500, seed=7)
sample = run_algorithm2(exp)
mean = moments(sample, 1).values
print("surrogate mean indices:", np.round(mean, 4))
print("closed form            :", np.round(ToyModel(1.0).expected_indices(), 4))
print("model evaluations      :", sample.meta["evaluations"])

# the spread of the sampled indices against the exact law
exact = ToyModel(1.0).oracle_sample(RngStream(1), 100_000)
for q in (10, 50, 90):
    print("percentile %d: surrogate %.3f  exact %.3f"
          % (q, np.percentile(sample.valid()[:, 1], q), np.percentile(exact[:, 1], q)))
