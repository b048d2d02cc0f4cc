"""Worst-case Reed-Muller evaluation from a weak average-case structure.

Three layers.  A reference-point wrapper turns a structure that is right on
an alpha fraction of points into one that is right almost everywhere: query
the line through x and a stored point w, list-decode it, and keep the
candidate that matches the stored value q(w).  The coefficient vector of q
is split once as q1 + q2 - q3 - q4 + u with every q_i in the good set Z and
u sparse.  A query at x then reads a random line through x, sums the four
wrapped answers plus u at every point and unique-decodes the result.

Line parametrisation: point r of the line through x towards w is
x + r (w - x), so r = 0 is x and r = 1 is w.  A univariate polynomial on a
line is carried as its codeword, the vector of its p values at r = 0..p-1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

from .ff import UnivariatePoly, _as_field, _dot_mod, enumerate_space, index_to_vectors, solve
from .fourier import (
    CorrectionBasis, DecompositionExhausted, MembershipOracle, SparseVector, build_correction_basis,
    compute_spectrum_exact, compute_spectrum_gl, default_max_tries, sample_decomposition, votes_for,
)
from .planted import membership_oracle_OZ
from .poly import MultivariatePoly, eval_coeffs, monomial_values, num_coeffs

SIGNS = (1, 1, -1, -1)
EXHAUSTIVE_LIMIT = 2**22          # candidate polynomials enumerated by the exhaustive decoders
COEFF_EXHAUSTIVE_LIMIT = 2**12    # coefficient vectors enumerated for the Z spectrum
_CHUNK = 1 << 16


class RMDecodeFailure(RuntimeError):
    """The outer line did not decode to a polynomial with enough agreement."""


class ListDecodingTooLarge(ValueError):
    """Neither exhaustive enumeration nor subset sampling fits the budget."""


# ---- lines and codewords -------------------------------------------------------------

def line_points(x, w, field) -> np.ndarray:
    """The p points x + r (w - x), row r for r = 0..p-1."""
    p = _as_field(field).p
    x = np.asarray(x, dtype=np.int64) % p
    w = np.asarray(w, dtype=np.int64) % p
    if x.shape != w.shape or x.ndim != 1:
        raise ValueError("x and w must be points of the same arity")
    if np.array_equal(x, w):
        raise ValueError("degenerate line: w = x")
    r = np.arange(p, dtype=np.int64)[:, None]
    return (x[None, :] + r * (w - x)[None, :]) % p


def _lines_through(X: np.ndarray, w: np.ndarray, p: int) -> np.ndarray:
    """(P, m) base points, common far point w -> (P, p, m)."""
    r = np.arange(p, dtype=np.int64)[None, :, None]
    return (X[:, None, :] + r * ((w[None, :] - X) % p)[:, None, :]) % p


@lru_cache(maxsize=None)
def _powers(p: int, d: int) -> np.ndarray:
    """(d+1, p) with entry [j, r] = r^j."""
    out = np.ones((d + 1, p), dtype=np.int64)
    r = np.arange(p, dtype=np.int64)
    for j in range(1, d + 1):
        out[j] = out[j - 1] * r % p
    return out


@lru_cache(maxsize=None)
def _values_to_coeffs(p: int, d: int) -> np.ndarray:
    """T with coeffs = T @ (values at r = 0..d)."""
    V = _powers(p, d)[:, : d + 1].T
    T = np.zeros((d + 1, d + 1), dtype=np.int64)
    for j in range(d + 1):
        e = np.zeros(d + 1, dtype=np.int64)
        e[j] = 1
        T[:, j] = solve(V, e, p)
    return T


def codeword_coeffs(C, p: int, d: int) -> np.ndarray:
    C = np.atleast_2d(np.asarray(C, dtype=np.int64))
    return C[:, : d + 1] @ _values_to_coeffs(p, d).T % p


def _codewords_of(coeffs: np.ndarray, p: int, d: int) -> np.ndarray:
    return coeffs @ _powers(p, d) % p


def _interpolate_codewords(S: np.ndarray, Y: np.ndarray, p: int) -> np.ndarray:
    """Codewords of the interpolants through (S[b, j], Y[b, j]); nodes distinct per row."""
    B, k = S.shape
    inv = _as_field(p).inv_table
    S = S % p
    M = np.zeros((B, k + 1), dtype=np.int64)         # prod_j (X - s_j), lowest degree first
    M[:, 0] = 1
    for j in range(k):
        shifted = np.zeros_like(M)
        shifted[:, 1:] = M[:, :-1]
        M = (shifted - S[:, j, None] * M) % p
    # Q[:, j] = M / (X - s_j) by synthetic division, all j at once
    Q = np.zeros((B, k, k), dtype=np.int64)
    Q[:, :, k - 1] = M[:, k, None]
    for i in range(k - 1, 0, -1):
        Q[:, :, i - 1] = (M[:, i, None] + S * Q[:, :, i]) % p
    dd = (S[:, :, None] - S[:, None, :]) % p
    dd[:, np.arange(k), np.arange(k)] = 1
    den = np.ones((B, k), dtype=np.int64)
    for l in range(k):
        den = den * dd[:, :, l] % p
    scale = Y % p * inv[den] % p
    coeffs = np.einsum("bj,bji->bi", scale, Q) % p
    return _dot_mod(coeffs, _powers(p, k - 1), p)


def _random_subsets(pool: np.ndarray, count: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` uniform size-subsets of the True positions of each pool row -> (W, count, size)."""
    W, p = pool.shape
    keys = rng.random((W, count, p))
    keys[~np.broadcast_to(pool[:, None, :], keys.shape)] = np.inf
    return np.argpartition(keys, size - 1, axis=2)[:, :, :size]


@lru_cache(maxsize=8)
def _codeword_table(p: int, d: int) -> np.ndarray:
    return _codewords_of(enumerate_space(p, d + 1)[:, ::-1], p, d)


def _exhaustive_scan(received: np.ndarray, p: int, d: int):
    """Yield (coeff block, agreements) over every polynomial of degree <= d."""
    total = p ** (d + 1)
    if total > EXHAUSTIVE_LIMIT:
        raise ListDecodingTooLarge(f"p^(d+1) = {total} exceeds {EXHAUSTIVE_LIMIT}")
    small = total * p <= 1 << 24
    for s in range(0, total, _CHUNK):
        idx = np.arange(s, min(total, s + _CHUNK))
        coeffs = index_to_vectors(idx, p, d + 1)[:, ::-1]              # c_0 varies fastest
        cw = _codeword_table(p, d)[idx] if small else _codewords_of(coeffs, p, d)
        yield coeffs, cw, (cw == received[None, :]).sum(axis=1)


# ---- list decoding -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LineList:
    """Candidates of degree <= d with agreement >= threshold, lowest coefficient tuple first.

    ``certified`` is False when completeness rests on sampling; ``miss_bound``
    then bounds the chance that a qualifying polynomial was missed.
    """

    codewords: np.ndarray          # k x p
    agreements: np.ndarray
    threshold: int                 # K = ceil(beta p)
    beta: float
    p: int
    d: int
    certified: bool = True
    miss_bound: float = 0.0
    subsets: int = 0

    def __len__(self) -> int:
        return len(self.codewords)

    @property
    def coeffs(self) -> np.ndarray:
        return codeword_coeffs(self.codewords, self.p, self.d) if len(self) else np.zeros((0, self.d + 1), np.int64)

    @property
    def candidates(self) -> list[UnivariatePoly]:
        return [UnivariatePoly(c, self.p) for c in self.coeffs]

    def within_bound(self, alpha: float) -> bool:
        """List size <= 2/alpha (meaningful when alpha > 2 sqrt(d/p))."""
        return len(self) <= 2 / alpha + 1e-12

    def subset(self, mask) -> "LineList":
        mask = np.asarray(mask, dtype=bool)
        return LineList(self.codewords[mask], self.agreements[mask], self.threshold, self.beta, self.p,
                        self.d, self.certified, self.miss_bound, self.subsets)


def _make_list(cws, agr, K, beta, p, d, certified=True, miss=0.0, subsets=0) -> LineList:
    cws = np.asarray(cws, dtype=np.int64).reshape(-1, p)
    agr = np.asarray(agr, dtype=np.int64).reshape(-1)
    if len(cws):
        co = codeword_coeffs(cws, p, d)
        order = np.lexsort(co.T[::-1])
        cws, agr = cws[order], agr[order]
    return LineList(cws, agr, K, beta, p, d, certified, miss, subsets)


def _threshold(beta: float, p: int) -> int:
    return max(1, math.ceil(beta * p - 1e-9))


def _hit_probability(good: int, pool: int, k: int) -> float:
    if good < k or pool < k:
        return 0.0
    return math.comb(good, k) / math.comb(pool, k)


def _subset_list_decode(R: np.ndarray, d: int, K: int, beta: float, p: int, rng: np.random.Generator,
                        eta: float, batch: int, max_subsets: int) -> list[LineList]:
    """Batched subset-interpolation list decoder, one LineList per row of R (-1 = erasure)."""
    W = len(R)
    k = d + 1
    valid = R >= 0
    found = [dict() for _ in range(W)]
    since = np.zeros(W, dtype=np.int64)      # subsets drawn since the found set last changed
    total = np.zeros(W, dtype=np.int64)
    done = np.zeros(W, dtype=bool)
    certified = np.zeros(W, dtype=bool)
    miss = np.ones(W)
    covered = np.zeros((W, p), dtype=bool)
    while not done.all():
        act = np.flatnonzero(~done)
        pool = np.empty((len(act), p), dtype=bool)
        hit_p = np.empty(len(act))
        for a, w in enumerate(act):
            U = valid[w] & ~covered[w]
            nU, nF, nV = int(U.sum()), len(found[w]), int(valid[w].sum())
            if nU + d * nF < K:
                done[w] = certified[w] = True
                miss[w] = 0.0
                continue
            Kp = K - d * nF
            if Kp >= k and nU >= k:
                pool[a], hit_p[a] = U, _hit_probability(Kp, nU, k)
            else:
                pool[a], hit_p[a] = valid[w], _hit_probability(K, nV, k)
            miss[w] = (1 - hit_p[a]) ** since[w] if hit_p[a] > 0 else 1.0
            if since[w] and miss[w] <= eta:
                done[w] = True
            elif total[w] >= max_subsets or nV < k:
                raise ListDecodingTooLarge(
                    f"subset sampling needs more than {max_subsets} interpolations (hit rate {hit_p[a]:.2e})")
        keep = ~done[act]
        act, pool = act[keep], pool[keep]
        if not len(act):
            break
        # small first round (most words certify at once), then wider rounds for stragglers
        b = 4 if not total[act].any() else max(batch, min(512, 4096 // len(act)))
        S = _random_subsets(pool, b, k, rng).reshape(-1, k)
        rows = np.repeat(act, b)
        Y = R[rows[:, None], S]
        cw = _interpolate_codewords(S, Y, p)
        agr = (cw == R[rows]).sum(axis=1)
        since[act] += b
        total[act] += b
        for j in np.flatnonzero(agr >= K):
            w = rows[j]
            key = cw[j, :k].tobytes()
            if key not in found[w]:
                found[w][key] = (cw[j], int(agr[j]))
                covered[w] |= cw[j] == R[w]
                since[w] = 0
    out = []
    for w in range(W):
        vals = list(found[w].values())
        cws = np.array([c for c, _ in vals], dtype=np.int64).reshape(-1, p)
        agr = np.array([a for _, a in vals], dtype=np.int64)
        out.append(_make_list(cws, agr, K, beta, p, d, bool(certified[w]), float(miss[w]), int(total[w])))
    return out


def list_decode_batch(R, d: int, beta: float, field, rng: np.random.Generator | None = None, *,
                      mode: str = "auto", eta: float = 1e-6, batch: int = 16,
                      max_subsets: int = 200_000) -> list[LineList]:
    F = _as_field(field)
    p = F.p
    R = np.atleast_2d(np.asarray(R, dtype=np.int64))
    if R.shape[1] != p:
        raise ValueError(f"received words must have length p = {p}")
    if d + 1 > p:
        raise ValueError("degree bound needs d + 1 <= p")
    K = _threshold(beta, p)
    if mode == "auto":
        mode = "exhaustive" if p ** (d + 1) <= EXHAUSTIVE_LIMIT else "subsets"
    if mode == "exhaustive":
        out = []
        for row in R:
            cws, ags = [], []
            for _, cw, agr in _exhaustive_scan(row, p, d):
                sel = agr >= K
                cws.append(cw[sel])
                ags.append(agr[sel])
            out.append(_make_list(np.concatenate(cws), np.concatenate(ags), K, beta, p, d))
        return out
    if mode != "subsets":
        raise ValueError(f"unknown mode {mode!r}")
    rng = rng if rng is not None else np.random.default_rng()
    return _subset_list_decode(R, d, K, beta, p, rng, eta, batch, max_subsets)


def list_decode_line(received, d: int, beta: float, field, rng: np.random.Generator | None = None,
                     **kw) -> LineList:
    """All degree-<=d polynomials agreeing with ``received`` on >= beta p points (-1 marks an erasure)."""
    return list_decode_batch(np.asarray(received)[None, :], d, beta, field, rng, **kw)[0]


def trim_by_reference(lst: LineList, r_w: int, q_w: int) -> LineList:
    return lst.subset(lst.codewords[:, int(r_w) % lst.p] == int(q_w) % lst.p) if len(lst) else lst


# ---- unique decoding -----------------------------------------------------------------

def _poly_divmod(num: list[int], den: list[int], p: int) -> tuple[list[int], list[int]]:
    """Long division of coefficient lists (lowest degree first)."""
    num = [c % p for c in num]
    while len(den) > 1 and den[-1] % p == 0:
        den = den[:-1]
    inv = pow(den[-1] % p, -1, p)
    q = [0] * max(1, len(num) - len(den) + 1)
    for i in range(len(num) - len(den), -1, -1):
        c = num[i + len(den) - 1] * inv % p
        q[i] = c
        for j, dj in enumerate(den):
            num[i + j] = (num[i + j] - c * dj) % p
    return q, num[: len(den) - 1]


def berlekamp_welch(xs, ys, d: int, field) -> np.ndarray | None:
    """Coefficients of the degree-<=d polynomial within (N-d-1)/2 errors of (xs, ys), or None."""
    p = _as_field(field).p
    xs = np.asarray(xs, dtype=np.int64) % p
    ys = np.asarray(ys, dtype=np.int64) % p
    N = len(xs)
    e = (N - d - 1) // 2
    if e < 0:
        return None
    nq = e + d + 1
    pw = np.ones((N, max(nq, e + 1)), dtype=np.int64)
    for j in range(1, pw.shape[1]):
        pw[:, j] = pw[:, j - 1] * xs % p
    A = np.hstack([pw[:, :nq], (-ys[:, None] * pw[:, :e]) % p])
    b = ys * pw[:, e] % p
    sol = solve(A, b, p)
    if sol is None:
        return None
    Q = sol[:nq].tolist()
    E = sol[nq:].tolist() + [1]
    h, rem = _poly_divmod(Q, E, p)
    if any(rem):
        return None
    h = (h + [0] * (d + 1))[: d + 1]
    return np.array(h, dtype=np.int64) % p


@dataclass(frozen=True)
class Decoded:
    codeword: np.ndarray
    agreement: int
    method: str

    def poly(self, d: int) -> UnivariatePoly:
        p = len(self.codeword)
        return UnivariatePoly(codeword_coeffs(self.codeword, p, d)[0], p)


def unique_decode_codeword(received, d: int, field, rng: np.random.Generator | None = None, *,
                           mode: str = "auto", eta: float = 1e-9, batch: int = 32) -> Decoded | None:
    """Closest codeword (exhaustive) or the codeword beyond half the unerased points plus d/2.

    Erasures are marked -1.  Returns None on a tie (exhaustive mode) or when
    nothing lies inside the unique-decoding radius (sampling mode).
    """
    p = _as_field(field).p
    y = np.asarray(received, dtype=np.int64)
    if y.shape != (p,):
        raise ValueError(f"received word must have length p = {p}")
    if mode == "auto":
        mode = "exhaustive" if p ** (d + 1) <= EXHAUSTIVE_LIMIT else "subsets"
    if mode == "exhaustive":
        best, best_cw, ties = -1, None, 0
        for _, cw, agr in _exhaustive_scan(y, p, d):
            i = int(np.argmax(agr))
            top = int(agr[i])
            if top > best:
                best, best_cw, ties = top, cw[i], int((agr == top).sum())
            elif top == best:
                ties += int((agr == top).sum())
        if ties != 1:
            return None
        return Decoded(best_cw.copy(), best, "exhaustive")
    valid = y >= 0
    N = int(valid.sum())
    k = d + 1
    if N < k:
        return None
    need = (N + d) // 2 + 1                      # agreement > (N + d) / 2
    rng = rng if rng is not None else np.random.default_rng()
    hp = _hit_probability(need, N, k)
    rounds = math.ceil(math.log(eta) / math.log1p(-hp) / batch) if 0 < hp < 1 else 1
    for _ in range(max(1, rounds)):
        S = _random_subsets(valid[None, :], batch, k, rng)[0]
        cw = _interpolate_codewords(S, y[S], p)
        agr = (cw == y[None, :]).sum(axis=1)
        i = int(np.argmax(agr))
        if agr[i] >= need:
            return Decoded(cw[i], int(agr[i]), "subsets")
    h = berlekamp_welch(np.flatnonzero(valid), y[valid], d, p)
    if h is not None:
        cw = _codewords_of(h[None, :], p, d)[0]
        agr = int((cw == y).sum())
        if agr >= need:
            return Decoded(cw, agr, "berlekamp-welch")
    return None


def unique_decode_line(received, d: int, field, rng: np.random.Generator | None = None, **kw) -> UnivariatePoly | None:
    res = unique_decode_codeword(received, d, field, rng, **kw)
    return None if res is None else res.poly(d)


# ---- reference-point wrapper ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReferenceState:
    """Average-case substate for q plus the stored pair (w, q(w))."""

    sub: object
    w: np.ndarray
    qw: int
    m: int
    d: int
    p: int


@dataclass
class RMStats:
    lists: int = 0
    max_list: int = 0
    list_bound_violations: int = 0
    uncertified: int = 0
    empty_after_trim: int = 0
    subsets: int = 0
    erasures: int = 0
    decode_agreement: list = dc_field(default_factory=list)


def rm_highagreement_preprocess(q, avg, field, rng: np.random.Generator, *, m: int | None = None,
                                d: int | None = None) -> ReferenceState:
    p = _as_field(field).p
    m = q.m if m is None else m
    d = q.d if d is None else d
    coeffs = np.asarray(getattr(q, "coeffs", q), dtype=np.int64) % p
    w = rng.integers(0, p, size=m, dtype=np.int64)
    qw = int(eval_coeffs(coeffs, w, m, d, p))
    return ReferenceState(avg.preprocess(coeffs), w, qw, m, d, p)


def highagreement_batch(ref: ReferenceState, X, alpha: float, rng: np.random.Generator | None = None,
                        stats: RMStats | None = None, **kw) -> np.ndarray:
    """Wrapped answers at each row of X; -1 where the trimmed list is empty."""
    p, d = ref.p, ref.d
    X = np.atleast_2d(np.asarray(X, dtype=np.int64)) % p
    out = np.full(len(X), -1, dtype=np.int64)
    degen = np.all(X == ref.w[None, :], axis=1)
    out[degen] = ref.qw                              # q(x) = q(w) is stored exactly
    idx = np.flatnonzero(~degen)
    if not len(idx):
        return out
    pts = _lines_through(X[idx], ref.w, p)
    received = np.asarray(ref.sub.query_batch(pts.reshape(-1, ref.m)), dtype=np.int64).reshape(len(idx), p) % p
    lists = list_decode_batch(received, d, alpha / 2, p, rng, **kw)
    for j, lst in zip(idx, lists):
        if stats is not None:
            stats.lists += 1
            stats.max_list = max(stats.max_list, len(lst))
            stats.list_bound_violations += not lst.within_bound(alpha)
            stats.uncertified += not lst.certified
            stats.subsets += lst.subsets
        kept = trim_by_reference(lst, 1, ref.qw)
        if len(kept):
            out[j] = kept.codewords[0, 0]              # lowest coefficient tuple, evaluated at r = 0
        elif stats is not None:
            stats.empty_after_trim += 1
    return out


def rm_highagreement_query(sub, reference, x, alpha: float, field, d: int,
                           rng: np.random.Generator | None = None, stats: RMStats | None = None) -> int | None:
    """q(x) through the reference-point wrapper, or None when no candidate survives trimming."""
    p = _as_field(field).p
    x = np.asarray(x, dtype=np.int64) % p
    w, qw = reference
    ref = ReferenceState(sub, np.asarray(w, dtype=np.int64) % p, int(qw) % p, len(x), d, p)
    v = int(highagreement_batch(ref, x[None, :], alpha, rng, stats)[0])
    return None if v < 0 else v


# ---- the good coefficient set Z ------------------------------------------------------

def z_membership_oracle(avg, alpha: float, field, m: int, d: int, rng: np.random.Generator,
                        votes: int = 1, trials: int | None = None) -> MembershipOracle:
    """O_Z over coefficient vectors: accept iff >= alpha/3 of random evaluations are right."""
    F = _as_field(field)
    fast = getattr(avg, "z_oracle", None)
    if fast is not None:
        return fast(alpha, trials=trials, rng=rng, votes=votes)
    p = F.p
    exact = lambda q, X: eval_coeffs(q, X, m, d, p)
    sampler = lambda g, T: g.integers(0, p, size=(T, m), dtype=np.int64)

    def batch(Qs):
        return np.array([membership_oracle_OZ(avg, q, alpha, trials, exact, rng, sampler) for q in Qs])

    return MembershipOracle(batch, num_coeffs(m, d), p, votes=votes, promised=2 / 3)


@dataclass(frozen=True, eq=False)
class ZBasis:
    basis: CorrectionBasis
    density: float
    backend: str
    calls: int


def rm_z_basis(avg, alpha: float, delta: float, field, m: int, d: int, rng: np.random.Generator,
               backend: str = "auto") -> ZBasis:
    """Correction basis for Z at threshold (measured density of Z)^{3/2}."""
    F = _as_field(field)
    p = F.p
    n = num_coeffs(m, d)
    oracle = z_membership_oracle(avg, alpha, F, m, d, rng)
    if backend == "auto":
        backend = "exact" if p**n <= COEFF_EXHAUSTIVE_LIMIT else "gl"
    if backend == "exact":
        ind = oracle.batch(enumerate_space(p, n))
        mu = float(ind.mean())
        if mu == 0:
            raise DecompositionExhausted("O_Z rejected every coefficient vector")
        spec = compute_spectrum_exact(ind, mu**1.5, F, n)
    else:
        m0 = math.ceil(2 * math.log(16 / delta) / (alpha / 4) ** 2)
        mu = float(oracle.batch(F.random(rng, (m0, n))).mean())
        if mu == 0:
            raise DecompositionExhausted("O_Z rejected every sampled coefficient vector")
        spec = compute_spectrum_gl(oracle, min(1.0, mu**1.5), delta / 8, F, rng, density=mu)
    return ZBasis(build_correction_basis(spec), mu, backend, oracle.calls)


# ---- full pipeline -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RMState:
    refs: tuple
    u: SparseVector
    m: int
    d: int
    p: int
    alpha: float
    delta: float
    z_basis: ZBasis
    tries: int
    parts: tuple | None = None       # (q1, q2, q3, q4) for audits

    def u_at(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        if not self.u.nnz:
            return np.zeros(len(X), dtype=np.int64)
        V = monomial_values(X, self.m, self.d, self.p)[:, self.u.indices]
        return (V * self.u.values % self.p).sum(axis=1) % self.p


def feasible_alpha(alpha: float, d: int, p: int) -> bool:
    return alpha > 2 * math.sqrt(d / p)


def rm_preprocess_full(q, avg, alpha: float, delta: float, field, rng: np.random.Generator, *,
                       z_basis: ZBasis | None = None, max_tries: int | None = None,
                       audit: bool = True, strict: bool = True) -> RMState:
    """Split q's coefficients as q1 + q2 - q3 - q4 + u and wrap each q_i with a reference point."""
    F = _as_field(field)
    p = F.p
    if not isinstance(q, MultivariatePoly):
        raise TypeError("q must be a MultivariatePoly")
    if q.p != p:
        raise ValueError("polynomial and field disagree on p")
    if not 0 < alpha <= 1 or not 0 < delta < 1:
        raise ValueError("need alpha in (0, 1] and delta in (0, 1)")
    if strict and not feasible_alpha(alpha, q.d, p):
        raise ValueError(f"alpha = {alpha} must exceed 2 sqrt(d/p) = {2 * math.sqrt(q.d / p):.4f}")
    zb = z_basis or rm_z_basis(avg, alpha, delta, F, q.m, q.d, rng)
    search = z_membership_oracle(avg, alpha, F, q.m, q.d, rng)
    certify = z_membership_oracle(avg, alpha, F, q.m, q.d, rng, votes=votes_for(delta / 32))
    budget = max_tries or default_max_tries(zb.density, delta / 8)
    used = 0
    while True:
        dec = sample_decomposition(q.coeffs, zb.basis, search, budget - used, rng, F)
        used += dec.tries
        if certify.batch(np.stack(dec.x)).all():
            break
        if used >= budget:
            raise DecompositionExhausted(f"no certified decomposition within {budget} tries")
    refs = tuple(rm_highagreement_preprocess(qi, avg, F, rng, m=q.m, d=q.d) for qi in dec.x)
    return RMState(refs, dec.s, q.m, q.d, p, alpha, delta, zb, used, dec.x if audit else None)


def rm_query_full(state: RMState, x, rng: np.random.Generator, *, min_agreement: float = 0.75,
                  stats: RMStats | None = None) -> int:
    """q(x); raises RMDecodeFailure instead of guessing."""
    p, m = state.p, state.m
    x = np.asarray(x, dtype=np.int64) % p
    if x.shape != (m,):
        raise ValueError(f"query has shape {x.shape}, expected ({m},)")
    y = x
    while np.array_equal(y, x):
        y = rng.integers(0, p, size=m, dtype=np.int64)
    outer = line_points(x, y, p)
    vals = state.u_at(outer)
    erased = np.zeros(p, dtype=bool)
    for sgn, ref in zip(SIGNS, state.refs):
        v = highagreement_batch(ref, outer, state.alpha, rng, stats)
        erased |= v < 0
        vals = vals + sgn * v
    vals %= p
    vals[erased] = -1
    if stats is not None:
        stats.erasures += int(erased.sum())
    res = unique_decode_codeword(vals, state.d, p, rng)
    if stats is not None:
        stats.decode_agreement.append(-1 if res is None else res.agreement)
    if res is None:
        raise RMDecodeFailure("outer line did not decode")
    if res.agreement < min_agreement * p:
        raise RMDecodeFailure(f"outer agreement {res.agreement}/{p} below {min_agreement}")
    return int(res.codeword[0])


class WorstCaseRM:
    """Caches the Z basis across polynomials for one average-case structure."""

    def __init__(self, avg, alpha: float, delta: float, field, m: int, d: int, rng: np.random.Generator,
                 backend: str = "auto"):
        self.avg, self.alpha, self.delta = avg, alpha, delta
        self.F = _as_field(field)
        self.m, self.d = m, d
        self.rng = rng
        self.backend = backend
        self._zb = None

    @property
    def z_basis(self) -> ZBasis:
        if self._zb is None:
            self._zb = rm_z_basis(self.avg, self.alpha, self.delta, self.F, self.m, self.d, self.rng, self.backend)
        return self._zb

    def preprocess(self, q, rng=None) -> RMState:
        return rm_preprocess_full(q, self.avg, self.alpha, self.delta, self.F, rng or self.rng, z_basis=self.z_basis)

    def query(self, state: RMState, x, rng=None, stats: RMStats | None = None) -> int:
        return rm_query_full(state, x, rng or self.rng, stats=stats)


# ---- audits --------------------------------------------------------------------------

def reference_line_audit(sub, q: MultivariatePoly, alpha: float, rng: np.random.Generator,
                         n_w: int = 50, n_x: int = 200) -> np.ndarray:
    """Per random w: fraction of random x whose line to w carries the truth with agreement >= alpha/2.

    The truth belongs to the list exactly when its own agreement clears the
    threshold, so no decoding is needed.  Returns the n_w per-w rates.
    """
    p, m = q.p, q.m
    K = _threshold(alpha / 2, p)
    rates = np.empty(n_w)
    for i in range(n_w):
        w = rng.integers(0, p, size=m, dtype=np.int64)
        X = rng.integers(0, p, size=(n_x, m), dtype=np.int64)
        same = np.all(X == w, axis=1)
        X[same, 0] = (X[same, 0] + 1) % p
        pts = _lines_through(X, w, p).reshape(-1, m)
        got = np.asarray(sub.query_batch(pts), dtype=np.int64).reshape(n_x, p) % p
        truth = q(pts).reshape(n_x, p)
        rates[i] = ((got == truth).sum(axis=1) >= K).mean()
    return rates
