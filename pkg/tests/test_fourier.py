import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selfcorrect.ff import enumerate_space, vectors_to_index, mat_mul
from selfcorrect.fourier import (
    MembershipOracle, Spectrum, fourier_coefficients, direct_coefficient, compute_spectrum_exact,
    compute_spectrum_gl, build_correction_basis, sparse_shift, shift_dense, sample_decomposition,
    decomposition_success_rate, DecompositionExhausted, default_max_tries, indicator_from_predicate,
    compute_popular_differences, croot_sisask_membership, CrootSisask, CrootSisaskParams,
    quasipoly_subspace, parseval_sum, DomainTooLarge, OracleBudgetExceeded, votes_for, SparseVector,
)


def hyperplane(p, n, r0, value=0):
    pts = enumerate_space(p, n)
    return (pts @ np.asarray(r0)) % p == value


def coset_union(p, n, rows, syndromes):
    pts = enumerate_space(p, n)
    syn = (pts @ np.asarray(rows).T) % p
    return np.any(np.all(syn[:, None, :] == np.asarray(syndromes)[None], axis=2), axis=1)


def test_fft_matches_direct_character_sums():
    rng = np.random.default_rng(0)
    for p, n in ((2, 4), (3, 3), (5, 2)):
        ind = rng.random(p**n) < 0.4
        coeffs = fourier_coefficients(ind, p).ravel()
        for idx, r in enumerate(enumerate_space(p, n)):
            assert abs(coeffs[idx] - direct_coefficient(ind, r, p)) < 1e-9


def test_spectrum_full_space_is_empty():
    S = compute_spectrum_exact(np.ones(2**5, bool), 0.5, 2)
    assert len(S) == 0 and S.alpha == 1.0


def test_spectrum_hyperplane_f2_4():
    r0 = np.array([1, 0, 1, 1])
    ind = hyperplane(2, 4, r0)
    # oracle: direct character sum at r0
    assert abs(abs(direct_coefficient(ind, r0, 2)) - 0.5) < 1e-12
    S = compute_spectrum_exact(ind, 0.5**1.5, 2)
    assert S.r.tolist() == [r0.tolist()]
    assert S.magnitudes[0] == pytest.approx(0.5, abs=1e-12)


def test_spectrum_exhaustive_limit():
    with pytest.raises(DomainTooLarge):
        fourier_coefficients(np.zeros(2**23, bool), 2)


def test_planted_quarter_density_bound_and_parseval():
    rng = np.random.default_rng(1)
    for _ in range(10):
        rows = rng.integers(0, 2, (3, 10))
        while np.linalg.matrix_rank(rows) < 3:
            rows = rng.integers(0, 2, (3, 10))
        syn = [list(s) for s in itertools.product(range(2), repeat=3)]
        chosen = [syn[i] for i in rng.choice(8, 2, replace=False)]
        ind = coset_union(2, 10, rows, chosen)
        alpha = ind.mean()
        assert alpha == 0.25
        S = compute_spectrum_exact(ind, alpha**1.5, 2)
        assert len(S) <= 1 / alpha**2
        assert abs(parseval_sum(ind, 2) - alpha) <= 1e-6


def test_parseval_odd_p():
    rng = np.random.default_rng(2)
    ind = rng.random(3**6) < 0.3
    assert abs(parseval_sum(ind, 3) - ind.mean()) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([(2, 6), (3, 4), (5, 3)]), st.floats(0.1, 0.9), st.integers(0, 2**32 - 1))
def test_spectrum_threshold_is_exact(pn, dens, seed):
    p, n = pn
    rng = np.random.default_rng(seed)
    ind = rng.random(p**n) < dens
    if not ind.any():
        ind[0] = True
    alpha = ind.mean()
    thr = alpha**1.5
    S = compute_spectrum_exact(ind, thr, p)
    mags = np.abs(fourier_coefficients(ind, p)).ravel()
    expect = {i for i in range(1, p**n) if mags[i] >= thr - 1e-9}
    assert set(vectors_to_index(S.r, p).tolist()) == expect
    assert len(S) <= S.parseval_bound + 1e-9


def test_gl_finds_hyperplane_in_f2_10():
    rng = np.random.default_rng(3)
    r0 = np.array([1, 1, 0, 0, 1, 0, 1, 1, 0, 1])
    ind = hyperplane(2, 10, r0)
    exact = compute_spectrum_exact(ind, 0.3, 2)
    oracle = MembershipOracle.from_indicator(ind, 2)
    S = compute_spectrum_gl(oracle, 0.3, 0.05, 2, rng)
    got = {tuple(r) for r in S.r}
    assert {tuple(r) for r in exact.r} <= got
    assert tuple(r0) in got
    mags = np.abs(fourier_coefficients(ind, 2)).ravel()
    assert all(mags[vectors_to_index(np.array(r), 2)] >= 0.15 for r in got)
    assert len(S) <= 4 / (0.5 * 0.3**2)


def test_gl_odd_p_matches_exact():
    rng = np.random.default_rng(4)
    rows = np.array([[1, 2, 0, 1, 1, 0], [0, 1, 1, 2, 0, 1]])
    ind = coset_union(3, 6, rows, [[0, 0], [1, 2], [2, 2]])
    alpha = ind.mean()
    gamma = alpha**1.5
    exact = compute_spectrum_exact(ind, gamma, 3)
    S = compute_spectrum_gl(MembershipOracle.from_indicator(ind, 3), gamma, 0.05, 3, rng)
    assert {tuple(r) for r in exact.r} <= {tuple(r) for r in S.r}
    mags = np.abs(fourier_coefficients(ind, 3)).ravel()
    assert all(mags[vectors_to_index(r, 3)] >= gamma / 2 for r in S.r)


def test_gl_full_space_empty_and_budget():
    rng = np.random.default_rng(5)
    full = MembershipOracle(lambda X: np.ones(len(X), bool), 12, 2)
    assert len(compute_spectrum_gl(full, 0.5, 0.1, 2, rng)) == 0
    with pytest.raises(OracleBudgetExceeded):
        compute_spectrum_gl(full, 0.5, 0.1, 2, rng, max_calls=100)


def test_gl_output_cap():
    # a set whose spectrum has many moderate coefficients: the cap 4/(alpha gamma^2) holds
    rng = np.random.default_rng(6)
    ind = rng.random(2**10) < 0.5
    gamma = 0.1
    S = compute_spectrum_gl(MembershipOracle.from_indicator(ind, 2), gamma, 0.1, 2, rng)
    assert len(S) <= 4 / (S.alpha * gamma**2)


def test_basis_examples():
    B = build_correction_basis(np.zeros((0, 5), int), 2, n=5)
    assert B.t == 0 and B.contains(np.ones(5, int))
    B = build_correction_basis([[0, 0, 1, 0]], 2)
    assert B.b.tolist() == [[0, 0, 1, 0]] and B.k == (2,)
    B = build_correction_basis([[1, 1, 0], [0, 1, 1]], 2)
    assert B.b.tolist() == [[1, 0, 1], [0, 1, 1]] and B.k == (0, 1)
    s = sparse_shift([1, 1, 1], B)
    assert s.nnz == 0
    s = sparse_shift([1, 0, 0], B)
    assert s.to_dense().tolist() == [1, 0, 0]


def _check_pivots(B):
    for j, kj in enumerate(B.k):
        assert B.b[j, kj] == 1
        assert np.count_nonzero(B.b[:, kj]) == 1


def test_sparse_shift_exhaustive_small():
    rng = np.random.default_rng(7)
    p, n = 3, 5
    R = rng.integers(0, 3, (3, n))
    B = build_correction_basis(R, p)
    _check_pivots(B)
    Y = enumerate_space(p, n)
    S = shift_dense(Y, B)
    assert not B.syndromes((Y - S) % p).any()
    in_V = ~B.syndromes(Y).any(axis=1)
    assert not S[in_V].any()
    for y in Y[::17]:
        s = sparse_shift(y, B)
        assert np.array_equal(s.to_dense(), S[vectors_to_index(y, p)])
        assert set(s.indices.tolist()) <= set(B.k)
        assert np.all(s.values != 0)


def test_sparse_vector_dot():
    s = SparseVector.from_dense([0, 3, 0, 1], 5)
    assert s.indices.tolist() == [1, 3]
    assert s.dot([9, 2, 9, 4]) == (6 + 4) % 5


def test_decomposition_full_space_first_try():
    rng = np.random.default_rng(8)
    oracle = MembershipOracle(lambda X: np.ones(len(X), bool), 6, 5)
    B = build_correction_basis(np.zeros((0, 6), int), 5, n=6)
    y = rng.integers(0, 5, 6)
    dec = sample_decomposition(y, B, oracle, 1, rng)
    assert dec.tries == 1
    assert np.array_equal(dec.combine(5), y)


def test_decomposition_hyperplane_rate_is_one_eighth():
    r0 = np.array([1, 1, 0, 1])
    ind = hyperplane(2, 4, r0)
    pts = enumerate_space(2, 4)
    y = pts[ind][3]
    # oracle: exhaustive count over all triples
    good = 0
    for a, b, c in itertools.product(range(16), repeat=3):
        x4 = (pts[a] + pts[b] + pts[c] + y) % 2
        good += ind[a] and ind[b] and ind[c] and ind[vectors_to_index(x4, 2)]
    assert good / 16**3 == 1 / 8
    B = build_correction_basis(compute_spectrum_exact(ind, 0.5**1.5, 2))
    member = lambda X: ind[vectors_to_index(X, 2)]
    rate = decomposition_success_rate(y, B, member, 200_000, np.random.default_rng(9))
    assert abs(rate - 1 / 8) < 3 * math.sqrt((1 / 8) * (7 / 8) / 200_000) + 1e-3


def test_decomposition_identity_and_membership_odd_p():
    rng = np.random.default_rng(10)
    p, n = 5, 4
    rows = np.array([[1, 2, 3, 4]])
    ind = coset_union(p, n, rows, [[0], [1], [4]])
    alpha = ind.mean()
    B = build_correction_basis(compute_spectrum_exact(ind, alpha**1.5, p))
    oracle = MembershipOracle.from_indicator(ind, p)
    for _ in range(30):
        y = rng.integers(0, p, n)
        dec = sample_decomposition(y, B, oracle, default_max_tries(alpha, 1e-3), rng)
        assert np.array_equal(dec.combine(p), y)
        for x in dec.x:
            assert ind[vectors_to_index(x, p)]


def test_decomposition_exhausted():
    rng = np.random.default_rng(11)
    oracle = MembershipOracle(lambda X: np.zeros(len(X), bool), 3, 2)
    B = build_correction_basis(np.zeros((0, 3), int), 2, n=3)
    with pytest.raises(DecompositionExhausted):
        sample_decomposition([1, 0, 1], B, oracle, 50, rng)
    assert default_max_tries(0.25, 0.1) == math.ceil(8 * math.log(10) * 1024)


def test_majority_votes():
    rng = np.random.default_rng(12)
    truth = np.zeros(16, bool)
    truth[::3] = True
    noisy = lambda X: truth[vectors_to_index(X, 2)] ^ (rng.random(len(X)) < 1 / 3)
    v = votes_for(1e-3)
    assert v % 2 == 1
    O = MembershipOracle(noisy, 4, 2, votes=v)
    pts = enumerate_space(2, 4)
    wrong = sum(int((O.batch(pts) != truth).sum()) for _ in range(20))
    assert wrong <= 2


def test_popular_differences_subgroup_and_coset():
    r0 = np.array([0, 1, 1, 1])
    W = hyperplane(2, 4, r0)
    D = compute_popular_differences(W, 2)
    assert np.array_equal(D.member, W)
    assert D.delta_pop == 0.25 / 20
    coset = hyperplane(2, 4, r0, 1)
    D = compute_popular_differences(coset, 2)
    assert np.array_equal(D.member, W)
    # oracle: direct count Pr_a[a in A, a - d in A]
    pts = enumerate_space(2, 4)
    for d in pts:
        direct = np.mean([coset[vectors_to_index(a, 2)] and coset[vectors_to_index((a - d) % 2, 2)] for a in pts])
        assert abs(D.conv[vectors_to_index(d, 2)] - direct) < 1e-12


def test_popular_difference_threshold_odd_p():
    rng = np.random.default_rng(13)
    ind = rng.random(3**5) < 0.2
    D = compute_popular_differences(ind, 3)
    alpha = ind.mean()
    assert D.delta_pop == pytest.approx(alpha**2 / 20)
    assert np.array_equal(D.member, D.conv >= alpha**2 / 20 - 1e-12)


def test_croot_sisask_examples():
    r0 = np.array([1, 0, 1, 1, 0, 1])
    X = hyperplane(2, 6, r0)
    D = compute_popular_differences(X, 2)
    prm = CrootSisaskParams.for_alpha(0.5)
    assert (prm.p_norm, prm.t_cs, prm.eps) == (1.0, 4, 1 / 160)
    assert croot_sisask_membership(np.zeros(6, int), X, D, prm.p_norm, prm.eps)
    outside = enumerate_space(2, 6)[~X]
    cs = CrootSisask(X, D, prm)
    for x in outside[:10]:
        assert cs.norm(x) == pytest.approx(1.0)
        assert not cs.contains(x)
    full = np.ones(64, bool)
    cs_full = CrootSisask(full, compute_popular_differences(full, 2), CrootSisaskParams.for_alpha(1.0))
    assert all(cs_full.norm(x) == 0 for x in enumerate_space(2, 6)[::7])


def test_quasipoly_index2_and_full():
    r0 = np.array([1, 1, 0, 1, 0, 1])
    X = hyperplane(2, 6, r0)
    S = quasipoly_subspace(X, 0.5, 2)
    assert S.r.tolist() == [r0.tolist()]
    assert S.info["codim"] == 1 and S.info["codim"] <= S.info["codim_bound"]
    assert S.info["chang_ok"]
    B = build_correction_basis(S)
    assert all(B.contains(x) == X[i] for i, x in enumerate(enumerate_space(2, 6)))
    S = quasipoly_subspace(np.ones(64, bool), 1.0, 2)
    assert len(S) == 0
