# Stochastic g-function: 15 inputs whose weights a_k(W) depend on W ~ Beta(5, 3)
#
# Compare the expected indices obtained from per-noise MARS surrogates with
# the quadrature oracle, then look at how the error shrinks with n.

import numpy as np

from stochsobol.models import GFunction, gfun_expected_indices
from stochsobol.pipeline import Experiment, convergence_study, distribution_summary, run_algorithm2
from stochsobol.sobol import moments

exact = gfun_expected_indices(200_000)
print("oracle E[S_k]           :", np.round(exact, 4))
print("sum of expectations     : %.4f" % exact.sum())

sample = run_algorithm2(Experiment("gfunction", n=600, m=200, seed=1))
est = moments(sample, 1).values
print("normalised oracle       :", np.round(exact / exact.sum(), 3))
print("normalised surrogate    :", np.round(est / est.sum(), 3))
print("mean MARS basis size    : %.1f" % sample.meta["mean_terms"])

# histograms and QQ pairs of the first three indices
summary = distribution_summary(sample, bins=20, model=GFunction(), oracle_size=200_000)
qq = np.asarray(summary["qq_surrogate"]) - np.asarray(summary["qq_exact"])
print("median QQ offset S_1..S_3:", np.round(np.median(qq[:3], axis=1), 4))

# a small convergence sweep (the full study uses 500 datasets)
table = convergence_study(Experiment("gfunction", n=100, m=100, seed=2), [100, 200, 400], replicates=5)
for n, e in zip(table.n_values, table.mean_error):
    print("n = %4d  mean error %.4f" % (n, e))
print("fitted rate: %.2f" % table.rate)
