import itertools
import math

import numpy as np
import pytest
from scipy.stats import binom

from selfcorrect.ff import mat_mul, mat_vec, enumerate_space
from selfcorrect.verify import (
    freivalds_verify, generate_small_bias_set, measure_bias, small_bias_size,
    SmallBiasSet, verify_matvec_claim, verification_checks, full_space_set,
)


def _rank1(rng, n, p):
    u = np.zeros(n, int)
    v = np.zeros(n, int)
    while not u.any() or not v.any():
        u = rng.integers(0, p, n)
        v = rng.integers(0, p, n)
    return np.outer(u, v) % p


def test_freivalds_identity_accepts():
    rng = np.random.default_rng(0)
    I = np.eye(5, dtype=int)
    assert all(freivalds_verify(I, I, I, 3, 7, rng) for _ in range(50))


def test_freivalds_dimension_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        freivalds_verify(np.eye(2, dtype=int), np.eye(3, dtype=int), np.eye(2, dtype=int), 1, 2, rng)
    with pytest.raises(ValueError):
        freivalds_verify(np.eye(2, dtype=int), np.eye(2, dtype=int), np.eye(2, dtype=int), 0, 2, rng)


def test_rank1_catch_probability_by_enumeration():
    # oracle: fraction of v in F_2^2 with Ev != 0 for a rank-1 E
    E = np.array([[1, 1], [0, 0]])
    caught = sum(bool(((E @ np.array(v)) % 2).any()) for v in itertools.product(range(2), repeat=2))
    assert caught / 4 == 0.5
    # any rank-1 E over F_2^n: Ev = u <w,v>, nonzero iff <w,v>=1, i.e. half of all v
    rng = np.random.default_rng(1)
    for _ in range(10):
        E = _rank1(rng, 4, 2)
        V = enumerate_space(2, 4)
        assert ((V @ E.T) % 2).any(axis=1).mean() == 0.5


def test_freivalds_never_rejects_correct():
    rng = np.random.default_rng(2)
    for p in (2, 3, 257):
        for _ in range(200):
            A = rng.integers(0, p, (6, 6))
            B = rng.integers(0, p, (6, 6))
            assert freivalds_verify(A, B, mat_mul(A, B, p), 2, p, rng)


def test_freivalds_k10_false_accept_rate():
    rng = np.random.default_rng(3)
    trials, accepted = 3000, 0
    for _ in range(trials):
        A = rng.integers(0, 2, (8, 8))
        B = rng.integers(0, 2, (8, 8))
        C = (mat_mul(A, B, 2) + _rank1(rng, 8, 2)) % 2
        accepted += freivalds_verify(A, B, C, 10, 2, rng)
    # oracle: Binomial(3000, 2^-10) upper tail
    assert accepted <= binom.ppf(0.9999, trials, 2**-10)


def test_small_bias_size_examples():
    rng = np.random.default_rng(0)
    S = generate_small_bias_set(1, 2, c=8, rng=rng, measure=False)
    assert S.vectors.shape == (8, 1) and set(np.unique(S.vectors)) <= {0, 1}
    assert small_bias_size(8, 2, 8) == 64
    assert small_bias_size(4, 3, 8) == math.ceil(4 * math.log2(3) * 8) == 51
    S = generate_small_bias_set(4, 3, c=8, rng=rng, measure=False)
    assert S.size == 51 and S.vectors.max() <= 2


def _bias_direct(vectors, p):
    n = vectors.shape[1]
    worst = 0.0
    for r in itertools.product(range(p), repeat=n):
        if not any(r):
            continue
        vals = (vectors @ np.array(r)) % p
        for b in range(p):
            worst = max(worst, abs(np.mean(vals == b) - 1 / p))
    return worst


def test_measure_bias_trivial_cases():
    assert measure_bias(full_space_set(3, 2), 2) == 0.0
    zeros = SmallBiasSet(np.zeros((10, 3), int), 3, 8, 0.1)
    assert measure_bias(zeros, 3) == pytest.approx(1 - 1 / 3)
    assert measure_bias(SmallBiasSet(np.zeros((4, 2), int), 2, 8, 0.1), 2) == pytest.approx(0.5)


def test_measure_bias_matches_direct_enumeration():
    rng = np.random.default_rng(5)
    for p, n in ((2, 5), (3, 3), (5, 2)):
        vecs = rng.integers(0, p, (40, n))
        assert measure_bias(vecs, p) == pytest.approx(_bias_direct(vecs, p), abs=1e-12)


def test_sampled_bias_close_to_exhaustive():
    rng = np.random.default_rng(6)
    S = generate_small_bias_set(8, 2, c=48, rng=rng, measure=False)
    exact = measure_bias(S, 2)
    sampled = measure_bias(S, 2, rng=np.random.default_rng(7), samples=20000)
    assert sampled <= exact + 1e-12
    assert exact - sampled <= 0.02


def test_calibrated_default_reaches_target():
    rng = np.random.default_rng(8)
    S = generate_small_bias_set(8, 2, rng=rng)
    assert S.size == small_bias_size(8, 2, 48) == 384
    assert S.measured_bias <= 0.1


def test_c8_at_n8_is_not_a_0p1_biased_set():
    # 64 vectors: each of 255 tests has std 1/16, the max lands near 0.19.
    rng = np.random.default_rng(9)
    biases = [measure_bias(rng.integers(0, 2, (64, 8)), 2) for _ in range(30)]
    assert sum(b <= 0.1 for b in biases) == 0
    assert 0.12 < np.median(biases) < 0.3


def test_matvec_claim_true_always_accepts():
    rng = np.random.default_rng(10)
    M = rng.integers(0, 2, (8, 8))
    S = generate_small_bias_set(8, 2, rng=rng)
    E, EM = S.vectors, mat_mul(S.vectors, M, 2)
    for _ in range(100):
        x = rng.integers(0, 2, 8)
        assert verify_matvec_claim(E, EM, x, mat_vec(M, x, 2), 20, 2, rng)


def test_matvec_claim_catch_rate_single_sample():
    rng = np.random.default_rng(11)
    M = rng.integers(0, 2, (8, 8))
    S = generate_small_bias_set(8, 2, rng=rng)
    E, EM = S.vectors, mat_mul(S.vectors, M, 2)
    trials, rejected = 4000, 0
    for _ in range(trials):
        x = rng.integers(0, 2, 8)
        err = rng.integers(0, 2, 8)
        if not err.any():
            err[0] = 1
        rejected += not verify_matvec_claim(E, EM, x, (mat_vec(M, x, 2) + err) % 2, 1, 2, rng)
    rate = rejected / trials
    assert rate >= 0.4 - 3 * math.sqrt(0.24 / trials)


def test_matvec_claim_twenty_samples():
    assert 0.6**20 == pytest.approx(3.656e-5, rel=1e-3)
    rng = np.random.default_rng(12)
    M = rng.integers(0, 2, (8, 8))
    S = generate_small_bias_set(8, 2, rng=rng)
    E, EM = S.vectors, mat_mul(S.vectors, M, 2)
    x = rng.integers(0, 2, 8)
    wrong = (mat_vec(M, x, 2) + 1) % 2
    assert sum(verify_matvec_claim(E, EM, x, wrong, 20, 2, rng) for _ in range(2000)) == 0


def test_verification_checks_formula():
    T = math.ceil(8 * math.log(80) / 0.25**5)
    assert verification_checks(T, 0.1) == math.ceil(math.log(32 * T / 0.1) / math.log(1 / 0.6))
