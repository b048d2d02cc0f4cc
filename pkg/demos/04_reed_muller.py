"""Evaluating a degree-5 polynomial over F_101^2 with a structure that is wrong half the time.

The query point is joined to four random reference points by lines.  Each
line is list decoded, the list trimmed by the known value at the reference
point, and the four survivors combined; a final outer line is then uniquely
decoded.
"""
import numpy as np

from selfcorrect.experiments import rm_setup
from selfcorrect.poly import MultivariatePoly

setup = rm_setup({"p": 101, "m": 2, "d": 5, "alpha": 0.5, "delta": 0.1, "seed": 4})
W = setup["W"]
print(f"planted density {setup['bounds']['planted_density']:.3f}, Z basis codimension {W.z_basis.basis.t}")

rng = np.random.default_rng(4)
q = MultivariatePoly(rng.integers(0, 101, 21), 2, 5, 101)
state = W.preprocess(q, rng)
for x in rng.integers(0, 101, (5, 2)):
    print(f"  q({x[0]:3d}, {x[1]:3d}) = {q(x):3d}, reduction says {W.query(state, x, rng):3d}")
