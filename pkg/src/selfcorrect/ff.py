"""Prime-field arithmetic and exact linear algebra over F_p.

Field elements are numpy int64 residues in [0, p).  Every routine here is
exact; nothing touches floating point.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

_INT64_MAX = np.iinfo(np.int64).max


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p % 2 == 0:
        return p == 2
    f = 3
    while f * f <= p:
        if p % f == 0:
            return False
        f += 2
    return True


@dataclass(frozen=True)
class PrimeField:
    """The field F_p for a prime 2 <= p < 2^31."""

    p: int

    def __post_init__(self):
        p = int(self.p)
        if not 2 <= p < 2**31:
            raise ValueError(f"modulus must satisfy 2 <= p < 2^31, got {p}")
        if not is_prime(p):
            raise ValueError(f"{p} is not prime")
        object.__setattr__(self, "p", p)

    def inv(self, a: int) -> int:
        a = int(a) % self.p
        if a == 0:
            raise ZeroDivisionError("0 has no inverse")
        # extended Euclid
        r0, r1, s0, s1 = self.p, a, 0, 1
        while r1:
            q = r0 // r1
            r0, r1 = r1, r0 - q * r1
            s0, s1 = s1, s0 - q * s1
        return s0 % self.p

    @cached_property
    def inv_table(self) -> np.ndarray:
        """inv_table[a] = a^{-1} (entry 0 is 0).  Only for p <= 2^20."""
        if self.p > 2**20:
            raise ValueError("inverse table only built for p <= 2^20")
        t = np.zeros(self.p, dtype=np.int64)
        for a in range(1, self.p):
            t[a] = pow(a, -1, self.p)
        return t

    def inv_array(self, a) -> np.ndarray:
        a = self.asarray(a)
        if np.any(a == 0):
            raise ZeroDivisionError("0 has no inverse")
        if self.p <= 2**20:
            return self.inv_table[a]
        return np.vectorize(lambda v: pow(int(v), -1, self.p), otypes=[np.int64])(a)

    def asarray(self, x) -> np.ndarray:
        return np.mod(np.asarray(x, dtype=np.int64), self.p)

    def random(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.integers(0, self.p, size=shape, dtype=np.int64)

    def random_nonzero(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.integers(1, self.p, size=shape, dtype=np.int64)

    @property
    def bits(self) -> float:
        return float(np.log2(self.p))


def _as_field(field) -> PrimeField:
    return field if isinstance(field, PrimeField) else PrimeField(int(field))


def inner_product(x, y, field) -> int:
    F = _as_field(field)
    x = F.asarray(x)
    y = F.asarray(y)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return int(_dot_mod(x[None, :], y[:, None], F.p)[0, 0])


def _dot_mod(A: np.ndarray, B: np.ndarray, p: int) -> np.ndarray:
    """(A @ B) mod p for residue arrays, overflow-free for any p < 2^31."""
    inner = A.shape[-1]
    if inner == 0:
        return np.zeros(A.shape[:-1] + B.shape[-1:], dtype=np.int64)
    bound = (p - 1) ** 2 * inner
    if bound < 2**53 and A.size * B.shape[-1] > 4096:
        # float64 products are exact below 2^53 and go through BLAS
        return np.matmul(A.astype(np.float64), B.astype(np.float64)).astype(np.int64) % p
    if bound <= _INT64_MAX:
        return np.matmul(A, B) % p
    # accumulate one rank-1 term at a time; each term < p^2 < 2^62
    out = np.zeros(A.shape[:-1] + B.shape[-1:], dtype=np.int64)
    for j in range(inner):
        out = (out + (A[..., j, None] * B[..., j, :]) % p) % p
    return out


def mat_mul(A, B, field) -> np.ndarray:
    F = _as_field(field)
    A = F.asarray(A)
    B = F.asarray(B)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {B.shape}")
    return _dot_mod(A, B, F.p)


def mat_vec(A, x, field) -> np.ndarray:
    F = _as_field(field)
    A = F.asarray(A)
    x = F.asarray(x)
    if A.ndim != 2 or x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return _dot_mod(A, x[:, None], F.p)[:, 0]


@dataclass(frozen=True)
class RrefResult:
    rows: np.ndarray          # rank x ncols, reduced
    pivots: tuple[int, ...]   # 0-based pivot columns, strictly increasing
    rank: int


def rref_with_pivots(rows, field) -> RrefResult:
    F = _as_field(field)
    p = F.p
    M = F.asarray(rows)
    if M.ndim == 1:
        M = M[None, :]
    if M.ndim != 2 or M.shape[1] == 0:
        raise ValueError("rows must be a nonempty 2-d array")
    M = M.copy()
    nrows, ncols = M.shape
    r = 0
    pivots = []
    for c in range(ncols):
        if r == nrows:
            break
        nz = np.flatnonzero(M[r:, c])
        if nz.size == 0:
            continue
        i = r + nz[0]
        if i != r:
            M[[r, i]] = M[[i, r]]
        M[r] = (M[r] * F.inv(M[r, c])) % p
        col = M[:, c].copy()
        col[r] = 0
        if col.any():
            M = (M - (col[:, None] * M[r][None, :]) % p) % p
        pivots.append(c)
        r += 1
    return RrefResult(M[:r].copy(), tuple(pivots), r)


def rank(rows, field) -> int:
    M = np.asarray(rows)
    if M.size == 0:
        return 0
    return rref_with_pivots(M, field).rank


def solve(A, b, field) -> np.ndarray | None:
    """One solution x of A x = b, or None if inconsistent."""
    F = _as_field(field)
    A = F.asarray(A)
    b = F.asarray(b)
    ncols = A.shape[1]
    res = rref_with_pivots(np.hstack([A, b[:, None]]), F)
    if res.pivots and res.pivots[-1] == ncols:
        return None
    x = np.zeros(ncols, dtype=np.int64)
    for row, c in zip(res.rows, res.pivots):
        x[c] = row[ncols]
    return x


def in_span(rows, v, field) -> bool:
    rows = np.asarray(rows)
    if rows.size == 0:
        return not np.any(_as_field(field).asarray(v))
    return solve(rows.T, v, field) is not None


@dataclass(frozen=True)
class UnivariatePoly:
    """Coefficients c_0..c_d of a polynomial of degree <= d."""

    coeffs: np.ndarray
    p: int

    @property
    def d(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, r):
        r = np.asarray(r, dtype=np.int64) % self.p
        out = np.zeros_like(r)
        for c in self.coeffs[::-1]:
            out = (out * r + int(c)) % self.p
        return int(out) if out.ndim == 0 else out

    def key(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self.coeffs)

    def __eq__(self, other):
        return (isinstance(other, UnivariatePoly) and self.p == other.p
                and self.key() == other.key())

    def __hash__(self):
        return hash((self.p, self.key()))


def interpolate_univariate(points: Sequence[tuple[int, int]], d: int, field) -> UnivariatePoly:
    F = _as_field(field)
    p = F.p
    if d + 1 > p:
        raise ValueError(f"degree bound {d} needs d+1 <= p = {p}")
    if len(points) < d + 1:
        raise ValueError(f"need {d + 1} points, got {len(points)}")
    pts = [(int(a) % p, int(b) % p) for a, b in points[: d + 1]]
    xs = [a for a, _ in pts]
    if len(set(xs)) != len(xs):
        raise ValueError("duplicate abscissa")
    coeffs = np.zeros(d + 1, dtype=np.int64)
    for j, (xj, yj) in enumerate(pts):
        # basis polynomial prod_{k != j} (X - x_k) / (x_j - x_k)
        basis = np.array([1], dtype=np.int64)
        denom = 1
        for k, xk in enumerate(xs):
            if k == j:
                continue
            basis = (np.concatenate([[0], basis]) - np.concatenate([basis * xk % p, [0]])) % p
            denom = denom * (xj - xk) % p
        scale = yj * F.inv(denom) % p
        coeffs[: len(basis)] = (coeffs[: len(basis)] + basis * scale) % p
    return UnivariatePoly(coeffs, p)


def enumerate_space(p: int, n: int) -> np.ndarray:
    """All p^n vectors in C order: row index = sum_i x_i p^(n-1-i)."""
    idx = np.arange(p**n, dtype=np.int64)
    return index_to_vectors(idx, p, n)


def index_to_vectors(idx, p: int, n: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    out = np.empty(idx.shape + (n,), dtype=np.int64)
    rest = idx.copy()
    for i in range(n - 1, -1, -1):
        out[..., i] = rest % p
        rest //= p
    return out


def vectors_to_index(X, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.int64)
    n = X.shape[-1]
    weights = p ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return X @ weights


# ---- text format -----------------------------------------------------------

def format_matrix(M, p: int) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=np.int64))
    lines = [f"{p} {M.shape[0]} {M.shape[1]}"]
    lines += [" ".join(str(int(v)) for v in row) for row in M]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> tuple[int, np.ndarray]:
    tokens = text.split()
    if len(tokens) < 3:
        raise ValueError("missing header 'p n_rows n_cols'")
    p, r, c = (int(t) for t in tokens[:3])
    PrimeField(p)
    body = tokens[3:]
    if len(body) != r * c:
        raise ValueError(f"expected {r * c} entries, found {len(body)}")
    M = np.array([int(t) for t in body], dtype=np.int64).reshape(r, c)
    if np.any((M < 0) | (M >= p)):
        raise ValueError("entries must be canonical residues in [0, p)")
    return p, M

