import dataclasses
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selfcorrect.ff import interpolate_univariate
from selfcorrect.fourier import DecompositionExhausted
from selfcorrect.planted import HashedDensityRule, RMOracle, full_space, make_planted_good_set
from selfcorrect.poly import MultivariatePoly, eval_multivariate
from selfcorrect.rm import (
    RMDecodeFailure, RMStats, ReferenceState, WorstCaseRM, _interpolate_codewords, berlekamp_welch,
    highagreement_batch, line_points, list_decode_line, reference_line_audit, rm_highagreement_preprocess,
    rm_highagreement_query, rm_preprocess_full, rm_query_full, trim_by_reference, unique_decode_codeword,
    unique_decode_line,
)


def brute_codewords(p, d):
    """Every degree-<=d polynomial as (coeff tuple, values), by plain Python arithmetic."""
    out = []
    for c in itertools.product(range(p), repeat=d + 1):
        out.append((c, [sum(ci * pow(r, i, p) for i, ci in enumerate(c)) % p for r in range(p)]))
    return out


def codeword(c, p):
    return np.array([sum(int(ci) * pow(r, i, p) for i, ci in enumerate(c)) % p for r in range(p)])


class ShiftedSub:
    """Substate answers minus a known polynomial h."""

    def __init__(self, sub, h):
        self.sub, self.h = sub, h

    def query_batch(self, X):
        return (self.sub.query_batch(X) - self.h(np.asarray(X))) % self.h.p


class ConstantSub:
    def __init__(self, v):
        self.v = v

    def query_batch(self, X):
        return np.full(len(np.atleast_2d(X)), self.v)


# ---- evaluation and lines ----------------------------------------------------------

def test_eval_examples():
    q = MultivariatePoly.from_terms({(2, 1): 3, (0, 0): 7}, 2, 3, 101)
    assert eval_multivariate(q, [2, 5]) == 67
    c = MultivariatePoly.from_terms({(0, 0): 9}, 2, 2, 13)
    assert all(c(x) == 9 for x in [[0, 0], [3, 4], [12, 12]])
    x1 = MultivariatePoly.from_terms({(1, 0): 1}, 2, 2, 13)
    assert x1([5, 7]) == 5
    with pytest.raises(ValueError):
        q([1, 2, 3])


def test_line_points_endpoints_and_degenerate():
    pts = line_points([1, 2], [4, 9], 11)
    assert pts.shape == (11, 2)
    assert pts[0].tolist() == [1, 2] and pts[1].tolist() == [4, 9]
    assert len({tuple(r) for r in pts}) == 11
    with pytest.raises(ValueError):
        line_points([3, 3], [3, 3], 11)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([7, 11, 101]), st.integers(0, 5), st.data())
def test_batched_interpolation_matches_lagrange(p, d, data):
    d = min(d, p - 1)
    S = np.array(data.draw(st.permutations(range(p)))[: d + 1])
    Y = np.array(data.draw(st.lists(st.integers(0, p - 1), min_size=d + 1, max_size=d + 1)))
    ref = interpolate_univariate(list(zip(S, Y)), d, p)
    got = _interpolate_codewords(S[None], Y[None], p)[0]
    assert got.tolist() == [ref(r) for r in range(p)]


# ---- list decoding -----------------------------------------------------------------

def test_list_decode_exhaustive_matches_brute_force():
    p, d = 7, 2
    table = brute_codewords(p, d)
    rng = np.random.default_rng(0)
    for beta in (0.3, 0.5, 0.72):
        for _ in range(15):
            y = rng.integers(0, p, p)
            if rng.random() < 0.5:                       # plant a codeword on some positions
                c, vals = table[rng.integers(len(table))]
                m = rng.random(p) < 0.6
                y[m] = np.array(vals)[m]
            K = math.ceil(beta * p - 1e-9)
            want = sorted(c for c, vals in table if sum(a == b for a, b in zip(vals, y)) >= K)
            got = list_decode_line(y, d, beta, p)
            assert sorted(cand.key() for cand in got.candidates) == want
            assert all(a >= K for a in got.agreements)


def test_list_decode_exact_codeword_and_garbage():
    p, d = 11, 2
    cw = codeword([4, 0, 9], p)
    lst = list_decode_line(cw, d, 1.0, p)
    assert [c.key() for c in lst.candidates] == [(4, 0, 9)]
    # garbage: brute force confirms no quadratic meets 6 of 11 points
    rng = np.random.default_rng(1)
    table = brute_codewords(p, d)
    while True:
        y = rng.integers(0, p, p)
        if max(sum(a == b for a, b in zip(vals, y)) for _, vals in table) < 6:
            break
    assert len(list_decode_line(y, d, 0.5, p)) == 0


def test_subset_mode_agrees_with_exhaustive():
    p, d = 11, 2
    rng = np.random.default_rng(2)
    for _ in range(20):
        a, b = codeword(rng.integers(0, p, 3), p), codeword(rng.integers(0, p, 3), p)
        y = np.where(rng.random(p) < 0.5, a, b)
        ex = list_decode_line(y, d, 0.4, p, mode="exhaustive")
        sub = list_decode_line(y, d, 0.4, p, rng, mode="subsets", eta=1e-9)
        assert [c.key() for c in sub.candidates] == [c.key() for c in ex.candidates]


def test_two_codeword_mixtures_list_size_two():
    p, d, alpha = 101, 5, 0.5
    rng = np.random.default_rng(3)
    for _ in range(30):
        c1, c2 = rng.integers(0, p, (2, d + 1))
        a, b = codeword(c1, p), codeword(c2, p)
        y = np.where(rng.permutation(p) < 51, a, b)
        lst = list_decode_line(y, d, alpha / 2, p, rng)
        assert len(lst) == 2 and lst.within_bound(alpha) and lst.certified
        assert {c.key() for c in lst.candidates} == {tuple(c1), tuple(c2)}


def test_trim_by_reference():
    p, d = 101, 5
    rng = np.random.default_rng(4)
    c1, c2 = rng.integers(0, p, (2, d + 1))
    a, b = codeword(c1, p), codeword(c2, p)
    y = np.where(rng.permutation(p) < 51, a, b)
    lst = list_decode_line(y, d, 0.25, p, rng)
    assert [c.key() for c in trim_by_reference(lst, 1, a[1]).candidates] == [tuple(c1)] or a[1] == b[1]
    free = next(v for v in range(p) if v not in (a[1], b[1]))
    assert len(trim_by_reference(lst, 1, free)) == 0
    solo = list_decode_line(a, d, 0.9, p, rng)
    assert trim_by_reference(solo, 1, a[1]).candidates == solo.candidates


# ---- unique decoding ---------------------------------------------------------------

def test_unique_decoding_radius_all_error_positions():
    p, d = 11, 2
    rng = np.random.default_rng(5)
    radius = (p - d - 1) // 2
    assert radius == 4
    patterns = [s for e in range(radius + 1) for s in itertools.combinations(range(p), e)]
    for _ in range(20):
        c = rng.integers(0, p, d + 1)
        cw = codeword(c, p)
        for pos in patterns:
            y = cw.copy()
            y[list(pos)] = (y[list(pos)] + rng.integers(1, p, len(pos))) % p
            got = unique_decode_line(y, d, p)
            assert got is not None and got.key() == tuple(c)


def test_unique_decode_tie_is_failure():
    # constants 0 and 1 both agree on two points of five
    assert unique_decode_line(np.array([0, 0, 1, 1, 2]), 0, 5) is None


def test_unique_decode_large_field_and_berlekamp_welch():
    p, d = 101, 5
    rng = np.random.default_rng(6)
    for errors in (0, 10, 47):
        c = rng.integers(0, p, d + 1)
        y = codeword(c, p)
        pos = rng.choice(p, errors, replace=False)
        y[pos] = (y[pos] + rng.integers(1, p, errors)) % p
        assert unique_decode_line(y, d, p, rng).key() == tuple(c)
        assert berlekamp_welch(np.arange(p), y, d, p).tolist() == c.tolist()
    # erasures shrink the radius but are never counted as agreement
    y = codeword(c, p)
    y[:30] = -1
    assert unique_decode_codeword(y, d, p, rng).agreement == p - 30


def test_unique_agrees_with_list_top_candidate():
    p, d = 11, 2
    rng = np.random.default_rng(7)
    for _ in range(40):
        y = codeword(rng.integers(0, p, 3), p)
        k = rng.integers(0, 5)
        y[rng.choice(p, k, replace=False)] = rng.integers(0, p, k)
        lst = list_decode_line(y, d, 0.2, p)
        top = int(np.argmax(lst.agreements))
        if lst.agreements[top] > (p + d) / 2:
            assert unique_decode_line(y, d, p).key() == lst.candidates[top].key()


# ---- reference-point wrapper -------------------------------------------------------

def random_poly(rng, m, d, p):
    from selfcorrect.poly import num_coeffs
    return MultivariatePoly(rng.integers(0, p, num_coeffs(m, d)), m, d, p)


def test_highagreement_exact_oracle():
    p, m, d = 101, 2, 5
    rng = np.random.default_rng(8)
    avg = RMOracle(p, m, d, full_space(p, 21))
    q = random_poly(rng, m, d, p)
    ref = rm_highagreement_preprocess(q, avg, p, rng)
    X = rng.integers(0, p, (30, 2))
    X[0] = ref.w
    assert highagreement_batch(ref, X, 0.5, rng).tolist() == q(X).tolist()
    assert rm_highagreement_query(ref.sub, (ref.w, ref.qw), X[1], 0.5, p, d, rng) == q(X[1])


def test_highagreement_empty_trim_is_explicit_failure():
    p, m, d = 101, 2, 5
    rng = np.random.default_rng(9)
    avg = RMOracle(p, m, d, full_space(p, 21))
    q = random_poly(rng, m, d, p)
    sub = avg.preprocess(q)
    w = rng.integers(0, p, 2)
    x = (w + 1) % p
    assert rm_highagreement_query(sub, (w, (q(w) + 1) % p), x, 0.5, p, d, rng) is None


def planted_half(seed, p=101, m=2, d=5):
    return RMOracle(p, m, d, full_space(p, 21), HashedDensityRule(0.5, key=seed), key=seed + 1)


def test_highagreement_planted_half_density_and_list_bound():
    p, m, d = 101, 2, 5
    rng = np.random.default_rng(10)
    avg = planted_half(10)
    stats = RMStats()
    ok = total = 0
    for _ in range(4):
        q = random_poly(rng, m, d, p)
        ref = rm_highagreement_preprocess(q, avg, p, rng)
        X = rng.integers(0, p, (25, 2))
        got = highagreement_batch(ref, X, 0.5, rng, stats)
        ok += int((got == q(X)).sum())
        total += len(X)
    assert ok / total > 0.6
    assert stats.list_bound_violations == 0 and stats.max_list <= 4


def test_shift_symmetry():
    p, m, d = 101, 2, 5
    avg = planted_half(11)
    rng = np.random.default_rng(11)
    q, h = random_poly(rng, m, d, p), random_poly(rng, m, d, p)
    qs = MultivariatePoly((q.coeffs - h.coeffs) % p, m, d, p)
    sub = avg.preprocess(q)
    w = rng.integers(0, p, 2)
    X = rng.integers(0, p, (20, 2))
    a = highagreement_batch(ReferenceState(sub, w, q(w), m, d, p), X, 0.5, np.random.default_rng(0))
    b = highagreement_batch(ReferenceState(ShiftedSub(sub, h), w, qs(w), m, d, p), X, 0.5,
                            np.random.default_rng(0))
    assert ((a == q(X)) == (b == qs(X))).all()


def test_reference_line_audit_bound():
    p, m, d, alpha = 101, 2, 5, 0.5
    rng = np.random.default_rng(12)
    avg = planted_half(12)
    q = random_poly(rng, m, d, p)
    rates = reference_line_audit(avg.preprocess(q), q, alpha, rng, n_w=20, n_x=100)
    bound = 1 - 4 / (p * alpha)
    assert rates.mean() >= bound - 3 * math.sqrt(bound * (1 - bound) / rates.size / 100)


# ---- full pipeline -----------------------------------------------------------------

def planted_rm(seed, p=101, m=2, d=5):
    rng = np.random.default_rng(seed)
    Z = make_planted_good_set("subspace_coset_union", p, 21, rng, codim=1, cosets=57, include_zero=True)
    return Z, RMOracle(p, m, d, Z, HashedDensityRule(0.9, key=seed + 7), key=seed + 3), rng


def test_full_perfect_oracle_exact():
    p, m, d = 101, 2, 5
    rng = np.random.default_rng(13)
    W = WorstCaseRM(RMOracle(p, m, d, full_space(p, 21)), 0.5, 0.1, p, m, d, rng)
    assert W.z_basis.basis.t == 0
    for _ in range(5):
        q = random_poly(rng, m, d, p)
        s = W.preprocess(q)
        for x in rng.integers(0, p, (4, 2)):
            assert W.query(s, x) == q(x)


def test_full_planted_decomposition_and_answers():
    Z, avg, rng = planted_rm(14)
    p, m, d = 101, 2, 5
    W = WorstCaseRM(avg, 0.5, 0.1, p, m, d, rng)
    stats = RMStats()
    right = failed = 0
    for _ in range(15):
        q = random_poly(rng, m, d, p)
        s = W.preprocess(q)
        q1, q2, q3, q4 = s.parts
        assert ((q1 + q2 - q3 - q4 + s.u.to_dense()) % p == q.coeffs).all()
        assert Z.contains_batch(np.stack(s.parts)).all()
        x = rng.integers(0, p, 2)
        try:
            right += W.query(s, x, stats=stats) == q(x)
        except RMDecodeFailure:
            failed += 1
    assert right + failed == 15 and right >= 13
    assert stats.list_bound_violations == 0


def test_u_only_polynomial_uses_direct_evaluation():
    # Z is the subspace {constant term = 0}; constants land entirely in u
    p, m, d = 13, 1, 1
    rng = np.random.default_rng(15)
    Z = make_planted_good_set("subspace_coset_union", p, 2, rng, codim=1, cosets=1, include_zero=True)
    Z = type(Z)(Z.kind, p, 2, Z.density, np.array([[1, 0]]), np.array([[0]]))
    avg = RMOracle(p, m, d, Z)
    s = rm_preprocess_full(MultivariatePoly(np.array([5, 0]), m, d, p), avg, 0.9, 0.1, p, rng)
    assert s.z_basis.basis.t == 1 and s.u.nnz == 1
    assert all(rm_query_full(s, np.array([x]), rng) == 5 for x in range(p))


def test_decode_failure_is_raised_not_guessed():
    p, m, d = 101, 2, 5
    rng = np.random.default_rng(16)
    W = WorstCaseRM(RMOracle(p, m, d, full_space(p, 21)), 0.5, 0.1, p, m, d, rng)
    s = W.preprocess(random_poly(rng, m, d, p))
    broken = tuple(ReferenceState(ConstantSub(0), r.w, (r.qw + 1) % p, m, d, p) for r in s.refs)
    with pytest.raises(RMDecodeFailure):
        rm_query_full(dataclasses.replace(s, refs=broken), rng.integers(0, p, 2), rng)


def test_preprocess_rejects_infeasible_alpha_and_exhausts():
    p, m, d = 101, 2, 5
    rng = np.random.default_rng(17)
    avg = RMOracle(p, m, d, full_space(p, 21))
    q = random_poly(rng, m, d, p)
    with pytest.raises(ValueError):
        rm_preprocess_full(q, avg, 0.4, 0.1, p, rng)
    Z, bad, rng = planted_rm(18)
    zb = WorstCaseRM(bad, 0.5, 0.1, p, m, d, rng).z_basis
    bad.Z = make_planted_good_set("subspace_coset_union", p, 21, rng, codim=3, cosets=1)
    with pytest.raises(DecompositionExhausted):
        rm_preprocess_full(q, bad, 0.5, 0.1, p, rng, z_basis=zb, max_tries=50)
