"""Worst-case data structures for a linear problem x -> Ax from an average-case one.

Preprocessing writes x = x1 + x2 - x3 - x4 + v with every x_i inside the good
set X of the average-case structure and v sparse; the state is the four
average-case substates plus v.  A query i returns

    DS_{x1}(i) + DS_{x2}(i) - DS_{x3}(i) - DS_{x4}(i) + <A_i, v>,

which is exact whenever preprocessing succeeded.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .ff import _as_field, enumerate_space
from .fourier import (
    CorrectionBasis, MembershipOracle, SparseVector, build_correction_basis, compute_spectrum_exact,
    compute_spectrum_gl, default_max_tries, sample_decomposition,
)

SIGNS = (1, 1, -1, -1)
MAGIC = b"LDS1"
HEADER = struct.Struct("<4sIIII")      # magic, p, n, m, t
ENTRY = struct.Struct("<II")           # index, value
EXHAUSTIVE_LIMIT = 2**18


def exact_membership(avg, A, X, p: int) -> np.ndarray:
    """x in X iff DS_x answers every query i with <A_i, x>; uses avg.member_batch when offered."""
    X = np.atleast_2d(np.asarray(X, dtype=np.int64))
    fast = getattr(avg, "member_batch", None)
    if fast is not None:
        return np.asarray(fast(X), dtype=bool)
    A = np.asarray(A, dtype=np.int64)
    truth = (X @ A.T) % p
    out = np.empty(len(X), dtype=bool)
    for j, x in enumerate(X):
        st = avg.preprocess(x)
        out[j] = all(int(st.query(i)) % p == truth[j, i] for i in range(A.shape[0]))
    return out


def linear_problem_basis(A, avg, alpha: float, field, rng: np.random.Generator | None = None,
                         delta: float = 0.01, backend: str = "auto") -> CorrectionBasis:
    """Correction basis for X from its spectrum at threshold alpha^{3/2}.

    Exhaustive DFT when the domain has at most 2^18 points, otherwise the
    Goldreich-Levin search over the exact membership oracle.
    """
    F = _as_field(field)
    p = F.p
    n = np.asarray(A).shape[1]
    gamma = alpha**1.5
    if backend == "auto":
        backend = "exact" if p**n <= EXHAUSTIVE_LIMIT else "gl"
    if backend == "exact":
        ind = exact_membership(avg, A, enumerate_space(p, n), p)
        return build_correction_basis(compute_spectrum_exact(ind, gamma, F, n))
    oracle = MembershipOracle(lambda X: exact_membership(avg, A, X, p), n, p)
    rng = rng if rng is not None else np.random.default_rng()
    return build_correction_basis(compute_spectrum_gl(oracle, gamma, delta, F, rng))


@dataclass(frozen=True, eq=False)
class WorstCaseLinearState:
    substates: tuple
    v: SparseVector
    A: np.ndarray
    p: int
    signs: tuple = SIGNS
    parts: tuple | None = None       # (x1, x2, x3, x4), kept for audits
    tries: int = 0

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


def lds_preprocess(A, x, avg, basis: CorrectionBasis, delta: float, field, rng: np.random.Generator, *,
                   alpha: float | None = None, max_tries: int | None = None, audit: bool = True) -> WorstCaseLinearState:
    """Decompose x and preprocess the four parts; raises DecompositionExhausted on budget."""
    F = _as_field(field)
    p = F.p
    A = F.asarray(A)
    x = F.asarray(x)
    if x.shape != (A.shape[1],):
        raise ValueError(f"x has shape {x.shape}, expected ({A.shape[1]},)")
    if max_tries is None:
        a = alpha if alpha is not None else basis.alpha
        if not a or math.isnan(a):
            raise ValueError("alpha needed to size the decomposition budget")
        max_tries = default_max_tries(a, delta)
    oracle = MembershipOracle(lambda X: exact_membership(avg, A, X, p), basis.n, p)
    dec = sample_decomposition(x, basis, oracle, max_tries, rng, F)
    subs = tuple(avg.preprocess(xi) for xi in dec.x)
    return WorstCaseLinearState(subs, dec.s, A, p, SIGNS, dec.x if audit else None, dec.tries)


def lds_query(state: WorstCaseLinearState, i: int) -> int:
    if not 0 <= i < state.m:
        raise IndexError(f"query {i} outside [0, {state.m})")
    p = state.p
    acc = sum(sg * int(st.query(i)) for sg, st in zip(state.signs, state.substates))
    v = state.v
    acc += int((state.A[i, v.indices] * v.values % p).sum()) if v.nnz else 0
    return acc % p


def serialize_state(state: WorstCaseLinearState) -> bytes:
    """Header, the four substate blobs in order, then t (index, value) pairs."""
    v = state.v
    out = [HEADER.pack(MAGIC, state.p, state.n, state.m, v.nnz)]
    out += [st.serialize() for st in state.substates]
    out += [ENTRY.pack(int(i), int(val)) for i, val in zip(v.indices, v.values)]
    return b"".join(out)


def deserialize_state(blob: bytes, avg, A) -> WorstCaseLinearState:
    magic, p, n, m, t = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ValueError("not a linear-DS state")
    s = avg.substate_size
    off = HEADER.size
    subs = []
    for _ in range(4):
        subs.append(avg.restore(blob[off:off + s]))
        off += s
    pairs = [ENTRY.unpack_from(blob, off + j * ENTRY.size) for j in range(t)]
    if off + t * ENTRY.size != len(blob):
        raise ValueError("trailing or missing bytes in state blob")
    idx = np.array([a for a, _ in pairs], dtype=np.int64)
    val = np.array([b for _, b in pairs], dtype=np.int64)
    return WorstCaseLinearState(tuple(subs), SparseVector(idx, val, n, p), np.asarray(A, dtype=np.int64) % p, p)


def expected_state_size(substate_size: int, t: int) -> int:
    return HEADER.size + 4 * substate_size + t * ENTRY.size


class WorstCaseLinearDS:
    """Convenience wrapper: the basis is computed once per (A, avg) and reused for every input."""

    def __init__(self, A, avg, alpha: float, delta: float, field, rng: np.random.Generator, backend: str = "auto"):
        self.F = _as_field(field)
        self.A = self.F.asarray(A)
        self.avg = avg
        self.alpha = alpha
        self.delta = delta
        self.rng = rng
        self._basis = None
        self.backend = backend

    @property
    def basis(self) -> CorrectionBasis:
        if self._basis is None:
            self._basis = linear_problem_basis(self.A, self.avg, self.alpha, self.F, self.rng, backend=self.backend)
        return self._basis

    def preprocess(self, x, rng: np.random.Generator | None = None) -> WorstCaseLinearState:
        return lds_preprocess(self.A, x, self.avg, self.basis, self.delta, self.F, rng or self.rng, alpha=self.alpha)

    @staticmethod
    def query(state: WorstCaseLinearState, i: int) -> int:
        return lds_query(state, i)
