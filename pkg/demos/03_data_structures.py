"""Worst-case inputs for two data structures that only work on average.

Linear problem: store x, answer <A_i, x>.  The stored state is four
average-case states plus a short sparse correction, and every answer is
exact.  Online matrix-vector: the same idea on the matrix, with answers
checked against a small-bias set before they are returned.
"""
from selfcorrect.experiments import linear_setup, linear_trial, omv_setup, omv_trial

setup = linear_setup({"p": 2, "n": 10, "m": 16, "alpha": 0.25, "delta": 0.1, "seed": 3})
print("linear problem, planted density", setup["bounds"]["planted_density"])
for i in range(3):
    r = linear_trial(setup, i).rows[0]
    print(f"  input {i}: {r['correct_queries']}/16 exact, shift support {r['v_nnz']}, state {r['state_bytes']} bytes")

setup = omv_setup({"p": 2, "n": 8, "alpha": 0.25, "delta": 0.1, "seed": 3, "queries": 3})
print("online matrix-vector, planted density", setup["bounds"]["planted_density"])
for r in omv_trial(setup, 0).rows:
    print(f"  query {r['query']}: {'right' if r['success'] else 'failed'}, {r['resamples']} resamples, "
          f"{r['checks']} checks")
