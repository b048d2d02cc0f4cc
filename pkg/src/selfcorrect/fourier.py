"""Fourier spectra of dense sets and the local-correction machinery built on them.

Conventions
-----------
* Points of F_p^n are enumerated in C order (index = sum_i x_i p^(n-1-i)),
  so an indicator is a flat boolean array of length p^n.
* 1^_X(r) = E_x[1_X(x) w^(-<x,r>)] with w = exp(2 pi i / p).
* Decompositions use the 2X - 2X form: y = x1 + x2 - x3 - x4 + s with every
  x_i in X.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .ff import (PrimeField, _as_field, _dot_mod, enumerate_space, index_to_vectors,
                 rref_with_pivots, vectors_to_index)

MAG_TOL = 1e-9
EXHAUSTIVE_LIMIT = 2**22


class OracleBudgetExceeded(RuntimeError):
    pass


class DecompositionExhausted(RuntimeError):
    pass


class DomainTooLarge(ValueError):
    pass


# ---- membership oracles ------------------------------------------------------

class MembershipOracle:
    """Batched membership queries to a set X inside F_p^n.

    ``batch_fn`` maps a (B, n) array to a boolean array of length B and may
    be randomized.  With ``votes > 1`` every answer is a majority over that
    many independent calls.  ``calls`` counts underlying evaluations.
    """

    def __init__(self, batch_fn: Callable[[np.ndarray], np.ndarray], n: int, p: int,
                 votes: int = 1, promised: float = 1.0, serial: bool = False):
        if votes < 1 or votes % 2 == 0:
            raise ValueError("votes must be a positive odd integer")
        self._fn = batch_fn
        self.n, self.p = n, p
        self.votes = votes
        self.promised = promised
        self.serial = serial
        self.calls = 0

    def batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        if len(X) == 0:
            return np.zeros(0, dtype=bool)
        self.calls += len(X) * self.votes
        if self.votes == 1:
            return np.asarray(self._fn(X), dtype=bool)
        tally = sum(np.asarray(self._fn(X), dtype=np.int64) for _ in range(self.votes))
        return tally * 2 > self.votes

    def __call__(self, x) -> bool:
        return bool(self.batch(np.asarray(x)[None, :])[0])

    @classmethod
    def from_indicator(cls, indicator, p: int, n: int | None = None) -> "MembershipOracle":
        ind = np.asarray(indicator, dtype=bool).ravel()
        n = n if n is not None else _dim_of(len(ind), p)
        return cls(lambda X: ind[vectors_to_index(X, p)], n, p)


def votes_for(eta: float, promised: float = 2 / 3) -> int:
    """Odd vote count making a majority of ``promised``-correct calls err w.p. <= eta (Hoeffding)."""
    gap = promised - 0.5
    v = math.ceil(math.log(1 / eta) / (2 * gap * gap))
    return v if v % 2 else v + 1


def indicator_from_predicate(pred: Callable[[np.ndarray], np.ndarray], p: int, n: int) -> np.ndarray:
    _check_exhaustive(p, n)
    return np.asarray(pred(enumerate_space(p, n)), dtype=bool)


def _dim_of(size: int, p: int) -> int:
    n = round(math.log(size, p)) if size > 1 else 0
    if p**n != size:
        raise ValueError(f"indicator length {size} is not a power of {p}")
    return n


def _check_exhaustive(p: int, n: int, limit: int = EXHAUSTIVE_LIMIT):
    if p**n > limit:
        raise DomainTooLarge(f"p^n = {p}^{n} exceeds the exhaustive limit {limit}")


# ---- spectra -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Spectrum:
    r: np.ndarray            # k x n, nonzero frequencies
    magnitudes: np.ndarray   # k
    threshold: float
    alpha: float             # density of the underlying set
    p: int
    normalized: bool = False  # magnitudes of phi_X = 1_X / alpha instead of 1_X
    info: dict = dc_field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.r)

    @property
    def n(self) -> int:
        return self.r.shape[1]

    @property
    def parseval_bound(self) -> float:
        if self.normalized:
            return 1.0 / (self.alpha * self.threshold**2)
        return self.alpha / self.threshold**2


def fourier_coefficients(indicator, p: int, n: int | None = None) -> np.ndarray:
    """All coefficients 1^_X(r), as an array of shape (p,)*n indexed by r."""
    ind = np.asarray(indicator, dtype=np.float64).ravel()
    n = n if n is not None else _dim_of(len(ind), p)
    _check_exhaustive(p, n)
    if n == 0:
        return ind.astype(np.complex128)
    return np.fft.fftn(ind.reshape((p,) * n)) / p**n


def direct_coefficient(indicator, r, p: int) -> complex:
    """Character sum for a single r; slow reference implementation."""
    ind = np.asarray(indicator, dtype=bool).ravel()
    n = len(r)
    pts = enumerate_space(p, n)[ind]
    phase = _dot_mod(pts, np.asarray(r, dtype=np.int64)[:, None], p)[:, 0]
    return complex(np.exp(-2j * np.pi * phase / p).sum() / p**n)


def compute_spectrum_exact(indicator, threshold: float, field, n: int | None = None) -> Spectrum:
    F = _as_field(field)
    ind = np.asarray(indicator, dtype=bool).ravel()
    n = n if n is not None else _dim_of(len(ind), F.p)
    coeffs = fourier_coefficients(ind, F.p, n).ravel()
    mags = np.abs(coeffs)
    idx = np.flatnonzero(mags >= threshold - MAG_TOL)
    idx = idx[idx != 0]
    alpha = float(ind.mean())
    return Spectrum(index_to_vectors(idx, F.p, n), mags[idx], float(threshold), alpha, F.p,
                    info={"parseval": float((mags**2).sum())})


def parseval_sum(indicator, p: int) -> float:
    return float((np.abs(fourier_coefficients(indicator, p)) ** 2).sum())


def _block_size(p: int, target: int = 256) -> int:
    return max(1, int(math.floor(math.log(target) / math.log(p) + 1e-12)))


def compute_spectrum_gl(oracle: MembershipOracle, threshold: float, delta: float, field,
                        rng: np.random.Generator, *, density: float | None = None,
                        slices: int | None = None, per_slice: int = 4,
                        final_samples: int | None = None, max_calls: int | None = None) -> Spectrum:
    """Goldreich-Levin / Kushilevitz-Mansour search for heavy coefficients.

    Works on the centered function g = 1_X - mu so the r = 0 mass does not
    swamp the buckets.  Coordinates are fixed a block at a time; a bucket is a
    prefix a of frequencies and its weight
        W(a) = E_z |E_x g(x, z) w^(-<a, x>)|^2
    is estimated from ``slices`` random suffixes z with ``per_slice`` prefixes
    x each (pairs within a slice give an unbiased estimate).  All children of
    a bucket share one sample set, and a small FFT over the block evaluates
    them at once.  Buckets of estimated weight >= gamma^2/2 survive; final
    candidates are re-estimated directly and kept when >= 3 gamma / 4.
    """
    F = _as_field(field)
    p, n = F.p, oracle.n
    gamma = float(threshold)
    if not 0 < gamma <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    start_calls = oracle.calls

    def query(X):
        if max_calls is not None and oracle.calls - start_calls + len(X) * oracle.votes > max_calls:
            raise OracleBudgetExceeded(f"Goldreich-Levin exceeded {max_calls} oracle calls")
        return oracle.batch(X).astype(np.float64)

    log_term = math.log(8 * n * p / delta)
    if density is None:
        m0 = math.ceil(8 * log_term / gamma**2)
        mu = float(query(F.random(rng, (m0, n))).mean())
    else:
        mu = float(density)
    if mu <= 0:
        return Spectrum(np.zeros((0, n), np.int64), np.zeros(0), gamma, 0.0, p,
                        info={"calls": oracle.calls - start_calls, "backend": "gl"})

    J = slices if slices is not None else math.ceil(4 * log_term / gamma**2)
    m = per_slice
    keep_at = gamma**2 / 2
    cap = math.ceil(4 / gamma**2)
    b = _block_size(p)
    prefixes = np.zeros((1, 0), dtype=np.int64)
    k = 0
    while k < n:
        width = min(b, n - k)
        k_new = k + width
        X = F.random(rng, (J, m, k_new))
        Z = F.random(rng, (J, 1, n - k_new))
        pts = np.concatenate([X, np.broadcast_to(Z, (J, m, n - k_new))], axis=2)
        g = query(pts.reshape(J * m, n)).reshape(J, m) - mu
        block_idx = vectors_to_index(X[:, :, k:k_new], p)           # J x m
        diag = (g**2).sum(axis=1)                                    # sum_i |c_i|^2
        scores, children = [], []
        for a in prefixes:
            pre = _dot_mod(X[:, :, :k].reshape(J * m, k), a[:, None], p).reshape(J, m) if k else 0
            c = g * np.exp(-2j * np.pi * pre / p)
            hist = np.zeros((J, p**width), dtype=np.complex128)
            np.add.at(hist, (np.repeat(np.arange(J), m), block_idx.ravel()), c.ravel())
            S = np.fft.fftn(hist.reshape((J,) + (p,) * width), axes=tuple(range(1, width + 1)))
            S = S.reshape(J, p**width)
            est = ((np.abs(S) ** 2 - diag[:, None]) / (m * (m - 1))).mean(axis=0)
            good = np.flatnonzero(est >= keep_at)
            if good.size:
                ext = index_to_vectors(good, p, width)
                children.append(np.hstack([np.broadcast_to(a, (len(good), k)), ext]))
                scores.append(est[good])
        if not children:
            prefixes = np.zeros((0, k_new), dtype=np.int64)
            break
        prefixes = np.vstack(children)
        sc = np.concatenate(scores)
        if len(prefixes) > cap:
            order = np.argsort(-sc, kind="stable")[:cap]
            prefixes = prefixes[np.sort(order)]
        k = k_new

    if len(prefixes) == 0 or prefixes.shape[1] < n:
        cands = np.zeros((0, n), dtype=np.int64)
    else:
        cands = prefixes[prefixes.any(axis=1)]
    mags = np.zeros(0)
    if len(cands):
        N = final_samples or math.ceil(32 * math.log(4 * len(cands) / delta) / gamma**2)
        Xf = F.random(rng, (N, n))
        fx = query(Xf)
        phase = _dot_mod(Xf, cands.T, p)                            # N x C
        est = (fx[:, None] * np.exp(-2j * np.pi * phase / p)).mean(axis=0)
        mags = np.abs(est)
        keep = mags >= 0.75 * gamma
        cands, mags = cands[keep], mags[keep]
        limit = math.floor(4 / (mu * gamma**2))
        if len(cands) > limit:
            order = np.argsort(-mags, kind="stable")[:limit]
            cands, mags = cands[order], mags[order]
    return Spectrum(cands, mags, gamma, mu, p,
                    info={"calls": oracle.calls - start_calls, "backend": "gl",
                          "slices": J, "per_slice": m, "block": b})


# ---- correction basis and sparse shifts -----------------------------------------

@dataclass(frozen=True, eq=False)
class SparseVector:
    indices: np.ndarray   # sorted, distinct
    values: np.ndarray    # nonzero residues
    n: int
    p: int

    @classmethod
    def from_dense(cls, v, p: int) -> "SparseVector":
        v = np.asarray(v, dtype=np.int64) % p
        idx = np.flatnonzero(v)
        return cls(idx, v[idx], len(v), p)

    @classmethod
    def zero(cls, n: int, p: int) -> "SparseVector":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), n, p)

    def to_dense(self) -> np.ndarray:
        v = np.zeros(self.n, dtype=np.int64)
        v[self.indices] = self.values
        return v

    def dot(self, x) -> int:
        x = np.asarray(x, dtype=np.int64)
        return int((x[self.indices] * self.values % self.p).sum() % self.p)

    @property
    def nnz(self) -> int:
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class CorrectionBasis:
    """Diagonalized constraints b_j with pivots k_j; V = {v : <v, b_j> = 0 for all j}."""

    b: np.ndarray          # t x n
    k: tuple[int, ...]
    n: int
    p: int
    alpha: float = float("nan")

    @property
    def t(self) -> int:
        return len(self.k)

    def syndromes(self, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=np.int64))
        if self.t == 0:
            return np.zeros((len(Y), 0), dtype=np.int64)
        return _dot_mod(Y, self.b.T, self.p)

    def contains(self, y) -> bool:
        return not self.syndromes(y).any()


def build_correction_basis(R, field=None, n: int | None = None) -> CorrectionBasis:
    """Row-reduce the frequencies of R; the pivots give the shift coordinates."""
    if isinstance(R, Spectrum):
        rows, p, alpha = R.r, R.p, R.alpha
        n = R.r.shape[1]
    else:
        p = _as_field(field).p
        rows = np.atleast_2d(np.asarray(R, dtype=np.int64)) % p
        alpha = float("nan")
        if rows.size == 0:
            if n is None:
                raise ValueError("n required for an empty constraint set")
            rows = np.zeros((0, n), dtype=np.int64)
        n = rows.shape[1]
    if len(rows) == 0:
        return CorrectionBasis(np.zeros((0, n), np.int64), (), n, p, alpha)
    red = rref_with_pivots(rows, p)
    return CorrectionBasis(red.rows, red.pivots, n, p, alpha)


def sparse_shift(y, basis: CorrectionBasis) -> SparseVector:
    """s = sum_j <y, b_j> e_{k_j}; then y - s lies in V."""
    y = np.asarray(y, dtype=np.int64) % basis.p
    if len(y) != basis.n:
        raise ValueError("length mismatch")
    if basis.t == 0:
        return SparseVector.zero(basis.n, basis.p)
    coef = basis.syndromes(y)[0]
    k = np.asarray(basis.k, dtype=np.int64)
    nz = coef != 0
    return SparseVector(k[nz], coef[nz], basis.n, basis.p)


def shift_dense(Y, basis: CorrectionBasis) -> np.ndarray:
    """Dense sparse-shift vectors for every row of Y."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.int64))
    S = np.zeros_like(Y)
    if basis.t:
        S[:, list(basis.k)] = basis.syndromes(Y)
    return S


# ---- decomposition sampling --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Decomposition:
    x: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    s: SparseVector
    tries: int

    def combine(self, p: int) -> np.ndarray:
        x1, x2, x3, x4 = self.x
        return (x1 + x2 - x3 - x4 + self.s.to_dense()) % p


def default_max_tries(alpha: float, delta: float, c: float = 8.0) -> int:
    return math.ceil(c * math.log(1 / delta) / alpha**5)


def sample_decomposition(y, basis: CorrectionBasis, oracle: MembershipOracle, max_tries: int,
                         rng: np.random.Generator, field=None, batch: int = 256) -> Decomposition:
    """Find y = x1 + x2 - x3 - x4 + s with all x_i in X.

    x1, x2, x3 are uniform and x4 is forced; memberships are checked in order
    with short-circuiting, ``batch`` tries at a time.
    """
    p = basis.p if field is None else _as_field(field).p
    y = np.asarray(y, dtype=np.int64) % p
    n = len(y)
    s = sparse_shift(y, basis)
    target = (y - s.to_dense()) % p
    used = 0
    while used < max_tries:
        B = min(batch, max_tries - used)
        X = rng.integers(0, p, size=(3, B, n), dtype=np.int64)
        x4 = (X[0] + X[1] - X[2] - target) % p
        alive = np.arange(B)
        for cand in (X[0], X[1], X[2], x4):
            if alive.size == 0:
                break
            alive = alive[oracle.batch(cand[alive])]
        if alive.size:
            i = int(alive.min())
            return Decomposition((X[0, i], X[1, i], X[2, i], x4[i]), s, used + i + 1)
        used += B
    raise DecompositionExhausted(f"no decomposition within {max_tries} tries")


def decomposition_success_rate(y, basis: CorrectionBasis, member: Callable[[np.ndarray], np.ndarray],
                               tries: int, rng: np.random.Generator, chunk: int = 200_000) -> float:
    """Fraction of independent tries whose four points all land in X."""
    p = basis.p
    y = np.asarray(y, dtype=np.int64) % p
    target = (y - sparse_shift(y, basis).to_dense()) % p
    hits = 0
    done = 0
    while done < tries:
        B = min(chunk, tries - done)
        X = rng.integers(0, p, size=(3, B, len(y)), dtype=np.int64)
        x4 = (X[0] + X[1] - X[2] - target) % p
        ok = member(X[0]) & member(X[1]) & member(X[2]) & member(x4)
        hits += int(ok.sum())
        done += B
    return hits / tries


# ---- popular differences and the Croot-Sisask set -------------------------------------

@dataclass(frozen=True, eq=False)
class PopularDifferenceSet:
    member: np.ndarray     # bool over F_p^n (C order)
    conv: np.ndarray       # 1_A * 1_{-A}
    delta_pop: float
    alpha: float
    p: int
    n: int

    def __contains__(self, d) -> bool:
        return bool(self.member[vectors_to_index(np.asarray(d), self.p)])

    @property
    def density(self) -> float:
        return float(self.member.mean())


def _convolve(f, g, p: int, n: int) -> np.ndarray:
    """(f * g)(y) = E_a f(a) g(y - a), exhaustively via FFT."""
    shape = (p,) * n
    N = p**n
    Ff = np.fft.fftn(np.asarray(f, np.float64).reshape(shape))
    Fg = np.fft.fftn(np.asarray(g, np.float64).reshape(shape))
    return (np.fft.ifftn(Ff * Fg).real / N).ravel() if n else np.asarray(f) * np.asarray(g)


def _negate_index(p: int, n: int) -> np.ndarray:
    pts = enumerate_space(p, n)
    return vectors_to_index((-pts) % p, p)


def compute_popular_differences(indicator, field, n: int | None = None,
                                limit: int = 2**18) -> PopularDifferenceSet:
    """D = {d : 1_A * 1_{-A}(d) >= alpha^2 / 20}, exhaustively."""
    F = _as_field(field)
    ind = np.asarray(indicator, dtype=bool).ravel()
    n = n if n is not None else _dim_of(len(ind), F.p)
    _check_exhaustive(F.p, n, limit)
    alpha = float(ind.mean())
    neg = ind[_negate_index(F.p, n)]
    conv = _convolve(ind, neg, F.p, n)
    delta_pop = alpha**2 / 20
    return PopularDifferenceSet(conv >= delta_pop - 1e-12, conv, delta_pop, alpha, F.p, n)


def popular_difference_sampled(d, oracle: MembershipOracle, alpha: float, samples: int,
                               rng: np.random.Generator) -> bool:
    """Sampled test of Pr_a[a in A, a - d in A] >= alpha^2 / 20."""
    d = np.asarray(d, dtype=np.int64)
    a = rng.integers(0, oracle.p, size=(samples, len(d)), dtype=np.int64)
    hit = oracle.batch(a) & oracle.batch((a - d) % oracle.p)
    return hit.mean() >= alpha**2 / 20


@dataclass(frozen=True, eq=False)
class CrootSisaskParams:
    p_norm: float
    t_cs: int
    eps: float

    @classmethod
    def for_alpha(cls, alpha: float, t_const: float = 4.0) -> "CrootSisaskParams":
        lg = math.log2(1 / alpha) if alpha < 1 else 0.0
        t_cs = max(1, math.ceil(t_const * lg))
        return cls(max(1.0, lg), t_cs, 1 / (40 * t_cs))


class CrootSisask:
    """Translation stability of g = phi_A * 1_D, the quantity behind X_cs."""

    def __init__(self, indicator, D: PopularDifferenceSet, params: CrootSisaskParams):
        ind = np.asarray(indicator, dtype=bool).ravel()
        self.p, self.n = D.p, D.n
        self.alpha = float(ind.mean())
        self.params = params
        phi = ind / self.alpha if self.alpha > 0 else ind.astype(float)
        self.g = _convolve(phi, D.member, self.p, self.n)
        self._pts = enumerate_space(self.p, self.n)

    def norm(self, x, trials: int | None = None, rng: np.random.Generator | None = None) -> float:
        """(E_y |g(y - x) - g(y)|^q)^(1/q); exact, or over ``trials`` random y."""
        x = np.asarray(x, dtype=np.int64)
        if trials is None:
            ys = self._pts
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            ys = rng.integers(0, self.p, size=(trials, self.n), dtype=np.int64)
        q = self.params.p_norm
        a = self.g[vectors_to_index((ys - x) % self.p, self.p)]
        b = self.g[vectors_to_index(ys, self.p)]
        return float((np.abs(a - b) ** q).mean() ** (1 / q))

    def contains(self, x, trials: int | None = None, rng=None) -> bool:
        return self.norm(x, trials, rng) <= self.params.eps + 1e-12

    def member_indicator(self, trials: int | None = None, rng=None) -> np.ndarray:
        return np.array([self.contains(x, trials, rng) for x in self._pts])


def croot_sisask_membership(x, indicator, D: PopularDifferenceSet, p_norm: float, eps: float,
                            trials: int | None = None, rng: np.random.Generator | None = None) -> bool:
    cs = CrootSisask(indicator, D, CrootSisaskParams(p_norm, 0, eps))
    return cs.contains(x, trials, rng)


@dataclass(frozen=True, eq=False)
class QuasipolyConfig:
    t_const: float = 4.0
    codim_const: float = 1.0
    chang_const: float = 1.0
    trials: int | None = None      # None: exact norms
    limit: int = 2**18


def quasipoly_subspace(indicator, alpha: float, field, config: QuasipolyConfig = QuasipolyConfig(),
                       rng: np.random.Generator | None = None) -> Spectrum:
    """Constraint set Spec_{1/2}(X_cs) \\ {0}, with X_cs the Croot-Sisask set of X.

    Pipeline: popular differences D, g = phi_X * 1_D, X_cs = translations
    moving g by at most eps in L_q, then the normalized spectrum of X_cs at
    1/2.  Audit numbers (densities, codimension, Chang bound) go in ``info``.
    """
    F = _as_field(field)
    ind = np.asarray(indicator, dtype=bool).ravel()
    n = _dim_of(len(ind), F.p)
    _check_exhaustive(F.p, n, config.limit)
    D = compute_popular_differences(ind, F, n, config.limit)
    params = CrootSisaskParams.for_alpha(alpha, config.t_const)
    cs = CrootSisask(ind, D, params)
    X_cs = cs.member_indicator(config.trials, rng)
    beta = float(X_cs.mean())
    coeffs = fourier_coefficients(X_cs, F.p, n).ravel()
    mags = np.abs(coeffs) / beta
    idx = np.flatnonzero(mags >= 0.5 - MAG_TOL)
    idx = idx[idx != 0]
    R = index_to_vectors(idx, F.p, n)
    codim = rref_with_pivots(R, F).rank if len(R) else 0
    lg = math.log2(1 / alpha) if alpha < 1 else 0.0
    chang_bound = config.chang_const * 4 * math.log2(1 / beta) if beta < 1 else 0.0
    info = {
        "popular_density": D.density,
        "cs_density": beta,
        "p_norm": params.p_norm, "t_cs": params.t_cs, "eps": params.eps,
        "codim": codim,
        "codim_bound": config.codim_const * lg**4,
        "chang_rank": codim,
        "chang_bound": chang_bound,
        "chang_ok": codim <= chang_bound + 1e-9,
        "popular": D,
        "cs_indicator": X_cs,
    }
    return Spectrum(R, mags[idx], 0.5, beta, F.p, normalized=True, info=info)
