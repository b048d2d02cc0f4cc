"""A multiplier that is right on a 0.375 fraction of inputs, boosted to always right.

The faulty multiplier only works when A satisfies a hidden linear condition
and B satisfies another one that depends on A.  Random low-rank shifts move a
worst-case pair into the good region often enough, and Freivalds' check
throws away every wrong combination, so the answer is never wrong.
"""
import numpy as np

from selfcorrect.experiments import mm_setup
from selfcorrect.ff import mat_mul
from selfcorrect.mm import boost_mm_small_field

alpha = 0.3
setup = mm_setup({"p": 2, "n": 8, "alpha": alpha, "delta": 0.1, "seed": 1, "kind": "small"})
oracle = setup["oracle"]
print(f"planted density {setup['bounds']['planted_density']}, retry budget {setup['bounds']['budget']}")

rng = np.random.default_rng(1)
A = np.eye(8, dtype=np.int64)
B = np.triu(np.ones((8, 8), dtype=np.int64))
print("the faulty multiplier on this pair is", "right" if np.array_equal(oracle(A, B), mat_mul(A, B, 2)) else "wrong")
res = boost_mm_small_field(oracle, A, B, alpha, 0.1, 2, rng, return_info=True)
print(f"boosted product correct: {np.array_equal(res.product, mat_mul(A, B, 2))} after {res.trials} trials")
