"""Worst-case online matrix-vector multiplication from a weak average-case structure.

Two levels of local correction.  The matrix is split once, at preprocessing,
as M = M1 + M2 - M3 - M4 + U with every M_i in the good-matrix set Z (as
judged by the sampling oracle O_Z) and U sparse.  Each query x is then split
per component as x = u_i + x1 + x2 - x3 - x4 with every x_j in X_{M_i}; the
average-case answers are verified against a small-bias pair table (e, e M_i)
before they are trusted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .ff import _as_field, _dot_mod, enumerate_space
from .fourier import (
    CorrectionBasis, DecompositionExhausted, MembershipOracle, SparseVector, build_correction_basis,
    compute_spectrum_exact, compute_spectrum_gl, default_max_tries, sample_decomposition, sparse_shift,
    votes_for,
)
from .planted import membership_oracle_OZ, oz_trials
from .verify import SmallBiasSet, generate_small_bias_set, verification_checks

SIGNS = (1, 1, -1, -1)
EXHAUSTIVE_LIMIT = 2**18
MATRIX_EXHAUSTIVE_LIMIT = 2**12


class OmvQueryFailed(RuntimeError):
    """No verified decomposition of the query within the resampling budget."""


def _matvec_exact(M_flat, X, n: int, p: int) -> np.ndarray:
    M = np.asarray(M_flat, dtype=np.int64).reshape(n, n)
    return _dot_mod(np.atleast_2d(X), M.T, p)


def z_membership_oracle(avg, alpha: float, field, n: int, rng: np.random.Generator,
                        votes: int = 1, trials: int | None = None) -> MembershipOracle:
    """O_Z over flattened n x n matrices: accept iff >= alpha/3 of random queries are right."""
    F = _as_field(field)
    fast = getattr(avg, "z_oracle", None)
    if fast is not None:
        return fast(alpha, trials=trials, rng=rng, votes=votes)
    p = F.p
    exact = lambda M, X: _matvec_exact(M, X, n, p)

    def batch(Ms):
        return np.array([membership_oracle_OZ(avg, M.reshape(n, n), alpha, trials, exact, rng) for M in Ms])

    return MembershipOracle(batch, n * n, p, votes=votes, promised=2 / 3)


@dataclass(frozen=True, eq=False)
class MatrixBasis:
    basis: CorrectionBasis
    density: float          # measured density of Z (through O_Z)
    backend: str
    calls: int


def omv_matrix_basis(avg, alpha: float, delta: float, field, n: int, rng: np.random.Generator,
                     backend: str = "auto") -> MatrixBasis:
    """Correction basis for Z in F^(n^2), at threshold (measured density of Z)^{3/2}."""
    F = _as_field(field)
    p = F.p
    N = n * n
    oracle = z_membership_oracle(avg, alpha, F, n, rng)
    if backend == "auto":
        backend = "exact" if p**N <= MATRIX_EXHAUSTIVE_LIMIT else "gl"
    if backend == "exact":
        ind = oracle.batch(enumerate_space(p, N))
        mu = float(ind.mean())
        if mu == 0:
            raise DecompositionExhausted("O_Z rejected every matrix")
        spec = compute_spectrum_exact(ind, mu**1.5, F, N)
    else:
        eps = alpha / 4
        m0 = math.ceil(2 * math.log(16 / delta) / eps**2)
        mu = float(oracle.batch(F.random(rng, (m0, N))).mean())
        if mu == 0:
            raise DecompositionExhausted("O_Z rejected every sampled matrix")
        spec = compute_spectrum_gl(oracle, min(1.0, mu**1.5), delta / 8, F, rng, density=mu)
    return MatrixBasis(build_correction_basis(spec), mu, backend, oracle.calls)


def _component_basis(sub, M: np.ndarray, field, rng, delta: float) -> tuple[CorrectionBasis, float]:
    """Basis for X_M = {x : DS_M(x) = Mx}; membership is exact since M is known here."""
    F = _as_field(field)
    p, n = F.p, M.shape[0]
    member = lambda X: np.all(np.asarray(sub.query_batch(X)) % p == _dot_mod(X, M.T, p), axis=1)
    if p**n <= EXHAUSTIVE_LIMIT:
        ind = member(enumerate_space(p, n))
        a = float(ind.mean())
        if a == 0:
            return build_correction_basis(np.zeros((0, n)), F, n=n), 0.0
        return build_correction_basis(compute_spectrum_exact(ind, a**1.5, F, n)), a
    oracle = MembershipOracle(member, n, p)
    m0 = math.ceil(64 * math.log(8 / delta))
    a = float(oracle.batch(F.random(rng, (m0, n))).mean())
    if a == 0:
        return build_correction_basis(np.zeros((0, n)), F, n=n), 0.0
    return build_correction_basis(compute_spectrum_gl(oracle, a**1.5, delta / 8, F, rng, density=a)), a


@dataclass(frozen=True, eq=False)
class OmvComponent:
    M: np.ndarray
    sub: object
    basis: CorrectionBasis
    density: float
    EM: np.ndarray                 # rows e M for e in S


@dataclass(frozen=True, eq=False)
class OmvState:
    components: tuple
    U: SparseVector                # over flattened n x n, row-major
    S: SmallBiasSet
    n: int
    p: int
    alpha: float
    delta: float
    matrix_basis: MatrixBasis
    tries: int
    M: np.ndarray | None = None    # audit copy

    def Ux(self, x) -> np.ndarray:
        out = np.zeros(self.n, dtype=np.int64)
        if self.U.nnz:
            r, c = np.divmod(self.U.indices, self.n)
            np.add.at(out, r, self.U.values * np.asarray(x, dtype=np.int64)[c])
        return out % self.p

    def U_dense(self) -> np.ndarray:
        return self.U.to_dense().reshape(self.n, self.n)


def omv_preprocess(M, avg, alpha: float, delta: float, field, rng: np.random.Generator, *,
                   matrix_basis: MatrixBasis | None = None, bias_c: float | None = None,
                   max_tries: int | None = None, audit: bool = True) -> OmvState:
    F = _as_field(field)
    p = F.p
    M = F.asarray(M)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError(f"M must be square, got {M.shape}")
    if not 0 < alpha <= 1 or not 0 < delta < 1:
        raise ValueError("need alpha in (0, 1] and delta in (0, 1)")
    mb = matrix_basis or omv_matrix_basis(avg, alpha, delta, F, n, rng)
    search = z_membership_oracle(avg, alpha, F, n, rng)
    certify = z_membership_oracle(avg, alpha, F, n, rng, votes=votes_for(delta / 32))
    budget = max_tries or default_max_tries(mb.density, delta / 8)
    used = 0
    while True:
        dec = sample_decomposition(M.ravel(), mb.basis, search, budget - used, rng, F)
        used += dec.tries
        if certify.batch(np.stack(dec.x)).all():
            break
        if used >= budget:
            raise DecompositionExhausted(f"no certified matrix decomposition within {budget} tries")
    kw = {} if bias_c is None else {"c": bias_c}
    S = generate_small_bias_set(n, F, rng=rng, **kw)
    comps = []
    for Mi_flat in dec.x:
        Mi = Mi_flat.reshape(n, n)
        sub = avg.preprocess(Mi)
        basis, a = _component_basis(sub, Mi, F, rng, delta)
        comps.append(OmvComponent(Mi, sub, basis, a, _dot_mod(S.vectors, Mi, p)))
    return OmvState(tuple(comps), dec.s, S, n, p, alpha, delta, mb, used, M if audit else None)


@dataclass
class QueryStats:
    resamples: list = dc_field(default_factory=list)      # per component
    checks: int = 0
    substate_calls: int = 0
    rejected: int = 0
    rejected_wrong: int = 0        # rejected answers that were indeed wrong (audit)


def component_budget(alpha: float, delta: float, c: float = 8.0) -> int:
    return math.ceil(c * math.log(8 / delta) / alpha**5)


def omv_query(state: OmvState, x, rng: np.random.Generator, *, delta: float | None = None,
              batch: int = 16, stats: QueryStats | None = None, budget: int | None = None) -> np.ndarray:
    """Mx with probability >= 1 - delta; raises OmvQueryFailed when a component runs out of tries."""
    p, n = state.p, state.n
    x = np.asarray(x, dtype=np.int64) % p
    if x.shape != (n,):
        raise ValueError(f"query has shape {x.shape}, expected ({n},)")
    delta = delta or state.delta
    T = component_budget(state.alpha, delta) if budget is None else budget
    checks = verification_checks(max(T, 1), delta)
    E = state.S.vectors
    stats = stats if stats is not None else QueryStats()
    total = np.zeros(n, dtype=np.int64)
    for sgn, comp in zip(SIGNS, state.components):
        u = sparse_shift(x, comp.basis)
        target = (x - u.to_dense()) % p
        Miu = (comp.M[:, u.indices] * u.values).sum(axis=1) % p if u.nnz else np.zeros(n, dtype=np.int64)
        used = 0
        found = None
        while used < T and found is None:
            B = min(batch, T - used)
            X = rng.integers(0, p, size=(B, 3, n), dtype=np.int64)
            X4 = (X[:, 0] + X[:, 1] - X[:, 2] - target) % p
            pts = np.concatenate([X, X4[:, None]], axis=1)                 # B x 4 x n
            ys = np.asarray(comp.sub.query_batch(pts.reshape(4 * B, n)), dtype=np.int64).reshape(B, 4, n) % p
            stats.substate_calls += 4 * B
            pick = rng.integers(0, len(E), size=(B, 4, checks))
            lhs = np.einsum("bjcn,bjn->bjc", E[pick], ys) % p
            rhs = np.einsum("bjcn,bjn->bjc", comp.EM[pick], pts) % p
            ok = np.all(lhs == rhs, axis=2)                                 # B x 4
            stats.checks += 4 * B * checks
            good = ok.all(axis=1)
            wrong = ~ok
            stats.rejected += int(wrong.sum())
            truth = _dot_mod(pts.reshape(4 * B, n), comp.M.T, p).reshape(B, 4, n)
            stats.rejected_wrong += int((wrong & np.any(truth != ys, axis=2)).sum())
            if good.any():
                i = int(np.argmax(good))
                found = ys[i]
                used += i + 1
            else:
                used += B
        stats.resamples.append(used)
        if found is None:
            raise OmvQueryFailed(f"component exhausted {T} resamples")
        Mi_x = (found[0] + found[1] - found[2] - found[3] + Miu) % p
        total = total + sgn * Mi_x
    return (total + state.Ux(x)) % p


def catch_rate(S: SmallBiasSet, diffs) -> np.ndarray:
    """Per wrong claim y != Mx with diff = y - Mx: fraction of e in S with <e, diff> != 0."""
    D = np.atleast_2d(np.asarray(diffs, dtype=np.int64))
    return (_dot_mod(S.vectors, D.T, S.p) != 0).mean(axis=0)


class WorstCaseOMV:
    """Caches the matrix-level basis across inputs for one average-case structure."""

    def __init__(self, avg, alpha: float, delta: float, field, n: int, rng: np.random.Generator,
                 backend: str = "auto"):
        self.avg, self.alpha, self.delta = avg, alpha, delta
        self.F = _as_field(field)
        self.n = n
        self.rng = rng
        self.backend = backend
        self._mb = None

    @property
    def matrix_basis(self) -> MatrixBasis:
        if self._mb is None:
            self._mb = omv_matrix_basis(self.avg, self.alpha, self.delta, self.F, self.n, self.rng, self.backend)
        return self._mb

    def preprocess(self, M, rng=None) -> OmvState:
        return omv_preprocess(M, self.avg, self.alpha, self.delta, self.F, rng or self.rng,
                              matrix_basis=self.matrix_basis)

    def query(self, state: OmvState, x, rng=None, stats: QueryStats | None = None) -> np.ndarray:
        return omv_query(state, x, rng or self.rng, stats=stats)
