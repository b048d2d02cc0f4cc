"""Why four random points are enough: a coset union of density 1/4 in F_2^12.

We compute the large Fourier coefficients of the set, turn them into a
subspace V, and watch random four-term decompositions of a point of V land
inside the set at a rate far above the alpha^5 guarantee.
"""
import numpy as np

from selfcorrect.ff import enumerate_space
from selfcorrect.fourier import build_correction_basis, compute_spectrum_exact, decomposition_success_rate, parseval_sum
from selfcorrect.planted import make_planted_good_set

rng = np.random.default_rng(0)
p, n = 2, 12
X = make_planted_good_set("subspace_coset_union", p, n, rng, codim=2, cosets=1)
ind = X.indicator()
alpha = ind.mean()
print(f"planted set: density {alpha}, two hidden linear constraints")

spec = compute_spectrum_exact(ind, alpha**1.5, p, n)
print(f"{len(spec)} frequencies above alpha^1.5 (at most 1/alpha^2 = {1 / alpha**2:.0f})")
print(f"Parseval: sum of squared coefficients {parseval_sum(ind, p):.6f} equals alpha")

basis = build_correction_basis(spec)
print(f"V has codimension {basis.t}")
pts = enumerate_space(p, n)
y = pts[~basis.syndromes(pts).any(axis=1)][5]
rate = decomposition_success_rate(y, basis, X.contains_batch, 50_000, rng)
print(f"y = {y.tolist()} in V: y = x1 + x2 - x3 - x4 with all four in X for {rate:.3f} of tries "
      f"(guarantee alpha^5 = {alpha**5:.5f})")
