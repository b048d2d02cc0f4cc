import numpy as np
import pytest

from selfcorrect.ff import enumerate_space, mat_vec
from selfcorrect.fourier import DecompositionExhausted
from selfcorrect.omv import (
    OmvQueryFailed, QueryStats, WorstCaseOMV, catch_rate, omv_matrix_basis, omv_preprocess, omv_query,
    z_membership_oracle,
)
from selfcorrect.planted import HashedCosetRule, OMVOracle, full_space, make_planted_good_set
from selfcorrect.verify import full_space_set, generate_small_bias_set


class NoFastPath:
    """Hides the batched O_Z so the generic sampling oracle is exercised."""

    def __init__(self, inner):
        self.inner = inner
        self.F = inner.F
        self.n = inner.n

    def preprocess(self, M):
        return self.inner.preprocess(M)


def planted(seed=0, n=3, p=2, x_codim=1):
    rng = np.random.default_rng(seed)
    Z = make_planted_good_set("subspace_coset_union", p, n * n, rng, codim=1, cosets=1, include_zero=True)
    return Z, OMVOracle(p, n, Z, HashedCosetRule(p, n, x_codim, 1, key=seed + 5), key=seed + 1), rng


def test_perfect_oracle_zero_shift_and_first_samples():
    rng = np.random.default_rng(1)
    n, p = 4, 3
    ds = OMVOracle(p, n, full_space(p, n * n), None)
    W = WorstCaseOMV(ds, 1.0, 0.1, p, n, rng, backend="gl")
    assert W.matrix_basis.basis.t == 0
    M = rng.integers(0, p, (n, n))
    st = W.preprocess(M)
    assert st.U.nnz == 0 and all(c.basis.t == 0 for c in st.components)
    stats = QueryStats()
    for _ in range(5):
        x = rng.integers(0, p, n)
        assert np.array_equal(W.query(st, x, stats=stats), mat_vec(M, x, p))
    assert set(stats.resamples) == {1}
    assert np.array_equal(W.query(st, np.zeros(n, dtype=np.int64)), np.zeros(n))


def test_matrix_basis_recovers_planted_constraint_exact_backend():
    Z, ds, rng = planted(2)
    mb = omv_matrix_basis(ds, 0.25, 0.1, 2, 3, rng)
    assert mb.backend == "exact" and mb.density == 0.5
    assert mb.basis.t == 1 and np.array_equal(mb.basis.b[0], Z.rows[0])


def test_planted_queries_exact_and_decomposition_identity():
    Z, ds, rng = planted(3)
    W = WorstCaseOMV(ds, 0.25, 0.1, 2, 3, rng)
    wrong = 0
    for _ in range(20):
        M = rng.integers(0, 2, (3, 3))
        st = W.preprocess(M)
        Ms = [c.M for c in st.components]
        assert np.array_equal((Ms[0] + Ms[1] - Ms[2] - Ms[3] + st.U_dense()) % 2, M)
        assert Z.contains_batch(np.stack([m.ravel() for m in Ms])).all()
        assert st.U.nnz <= 1
        for x in rng.integers(0, 2, (5, 3)):
            wrong += not np.array_equal(W.query(st, x), mat_vec(M, x, 2))
    assert wrong == 0


def test_matrix_in_V_has_zero_U():
    Z, ds, rng = planted(4)
    W = WorstCaseOMV(ds, 0.25, 0.1, 2, 3, rng)
    pts = enumerate_space(2, 9)
    inV = pts[Z.contains_batch(pts)]
    st = W.preprocess(inV[7].reshape(3, 3))
    assert st.U.nnz == 0


def test_sparse_U_product_matches_dense():
    Z, ds, rng = planted(5)
    W = WorstCaseOMV(ds, 0.25, 0.1, 2, 3, rng)
    for _ in range(10):
        st = W.preprocess(rng.integers(0, 2, (3, 3)))
        for x in enumerate_space(2, 3):
            assert np.array_equal(st.Ux(x), mat_vec(st.U_dense(), x, 2))


def test_generic_oz_agrees_with_batched_on_clear_cases():
    Z, ds, rng = planted(6)
    fast = z_membership_oracle(ds, 0.25, 2, 3, rng)
    slow = z_membership_oracle(NoFastPath(ds), 0.25, 2, 3, rng)
    Ms = rng.integers(0, 2, (60, 9))
    truth = Z.contains_batch(Ms)
    assert np.array_equal(fast.batch(Ms), truth)
    assert np.array_equal(slow.batch(Ms), truth)


def test_catch_rate_bounds():
    rng = np.random.default_rng(7)
    diffs = rng.integers(0, 2, (200, 8))
    diffs[~diffs.any(axis=1), 0] = 1
    assert np.allclose(catch_rate(full_space_set(8, 2), diffs), 0.5)
    S = generate_small_bias_set(8, 2, rng=rng)
    assert S.measured_bias <= 0.1
    assert catch_rate(S, diffs).min() >= 0.5 - S.measured_bias - 1e-12


def test_rejected_answers_are_wrong_ones():
    Z, ds, rng = planted(8)
    W = WorstCaseOMV(ds, 0.25, 0.1, 2, 3, rng)
    st = W.preprocess(rng.integers(0, 2, (3, 3)))
    stats = QueryStats()
    for x in rng.integers(0, 2, (20, 3)):
        W.query(st, x, stats=stats)
    assert stats.rejected == stats.rejected_wrong


def test_bad_oracle_fails_loudly():
    rng = np.random.default_rng(9)
    n, p = 3, 2
    Z = make_planted_good_set("subspace_coset_union", p, n * n, rng, codim=1, cosets=1, include_zero=True)
    ds = OMVOracle(p, n, Z, HashedCosetRule(p, n, 1, 1, key=1), key=2)
    W = WorstCaseOMV(ds, 0.25, 0.1, p, n, rng)
    st = W.preprocess(rng.integers(0, 2, (n, n)))
    with pytest.raises(OmvQueryFailed):
        omv_query(st, np.ones(n, dtype=np.int64), rng, budget=0)
    nothing = OMVOracle(p, n, Z, HashedCosetRule(p, n, 1, 1, key=1), key=2)
    nothing.Z = make_planted_good_set("random_dense_enumerable", p, n * n, rng, alpha=1 / 512)
    with pytest.raises(DecompositionExhausted):
        omv_preprocess(rng.integers(0, 2, (n, n)), nothing, 0.25, 0.1, p, rng, max_tries=200)
