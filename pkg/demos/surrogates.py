# Two surrogates for one deterministic function
#
# Additive MARS gives first-order indices from closed-form hinge moments;
# sparse Legendre chaos gives them from squared coefficients. Both are
# checked against pick-and-freeze Monte Carlo on the surrogate itself.

import numpy as np

from stochsobol.mars import anova, fit
from stochsobol.pce import fit_pc, pc_sobol
from stochsobol.sampling import ParameterSpace, RngStream, lhs
from stochsobol.sobol import saltelli

space = ParameterSpace.uniform_box([(0.0, 1.0)] * 4)
X = lhs(space, 400, RngStream(3))
y = np.exp(X[:, 0]) + 2 * np.abs(X[:, 1] - 0.4) + 0.5 * np.sin(6 * X[:, 2]) + 0.1 * X[:, 3]

s = fit(X, y, space=space)
print("MARS terms:", len(s.hinges), " R^2 = %.4f" % s.info["r2"])
print("MARS indices     :", np.round(anova(s).indices.values, 4))
mc = saltelli(s, space, 50_000, RngStream(4))
print("pick-freeze on it:", np.round(mc.values, 4), "+/-", np.round(mc.stderr, 4))

pc = fit_pc(X, y, order=4, tau=0.5, space=space)
print("PC iterations:", pc.info["iterations"])
print("PC indices       :", np.round(pc_sobol(pc).indices.values, 4))

# the surrogate is plain data
doc = s.to_json()
print("JSON document of %d characters" % len(doc))
