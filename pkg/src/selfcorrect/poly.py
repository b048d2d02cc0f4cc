"""Multivariate polynomials of bounded total degree, as coefficient vectors.

Monomial order (graded lex): total degree ascending; within one degree,
exponent tuples in descending lexicographic order.  For m = 2, d = 2 that is
1, x1, x2, x1^2, x1 x2, x2^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def monomials(m: int, d: int) -> tuple[tuple[int, ...], ...]:
    out = []
    for deg in range(d + 1):
        out.extend(sorted(_compositions(deg, m), reverse=True))
    return tuple(out)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def num_coeffs(m: int, d: int) -> int:
    return math.comb(m + d, d)


@lru_cache(maxsize=None)
def _exponents(m: int, d: int) -> np.ndarray:
    return np.array(monomials(m, d), dtype=np.int64).reshape(-1, m)


def monomial_values(X, m: int, d: int, p: int) -> np.ndarray:
    """Matrix of monomial values: (..., m) points -> (..., n) residues."""
    X = np.asarray(X, dtype=np.int64) % p
    powers = np.ones(X.shape + (d + 1,), dtype=np.int64)
    for e in range(1, d + 1):
        powers[..., e] = powers[..., e - 1] * X % p
    E = _exponents(m, d)
    out = np.ones(X.shape[:-1] + (len(E),), dtype=np.int64)
    for i in range(m):
        out = out * powers[..., i, :][..., E[:, i]] % p
    return out


def eval_coeffs(coeffs, X, m: int, d: int, p: int) -> np.ndarray:
    """q(x) for coefficient vectors broadcast against points.

    ``coeffs`` has shape (..., n) and ``X`` shape (..., m); leading axes
    broadcast (e.g. coeffs (B, 1, n) with X (B, T, m)).
    """
    V = monomial_values(X, m, d, p)
    C = np.asarray(coeffs, dtype=np.int64) % p
    return (V * C % p).sum(axis=-1) % p


@dataclass(frozen=True)
class MultivariatePoly:
    coeffs: np.ndarray
    m: int
    d: int
    p: int

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.int64) % self.p
        if c.shape != (num_coeffs(self.m, self.d),):
            raise ValueError(f"expected {num_coeffs(self.m, self.d)} coefficients, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return len(self.coeffs)

    @classmethod
    def from_terms(cls, terms: dict, m: int, d: int, p: int) -> "MultivariatePoly":
        mons = monomials(m, d)
        c = np.zeros(len(mons), dtype=np.int64)
        pos = {e: i for i, e in enumerate(mons)}
        for e, v in terms.items():
            if tuple(e) not in pos:
                raise ValueError(f"monomial {e} exceeds degree {d} in {m} variables")
            c[pos[tuple(e)]] = (c[pos[tuple(e)]] + v) % p
        return cls(c, m, d, p)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.int64)
        if x.shape[-1] != self.m:
            raise ValueError(f"point has arity {x.shape[-1]}, expected {self.m}")
        out = eval_coeffs(self.coeffs, x, self.m, self.d, self.p)
        return int(out) if np.ndim(out) == 0 else out


def eval_multivariate(q: MultivariatePoly, x):
    return q(x)


def format_poly(q: MultivariatePoly) -> str:
    return f"{q.p} {q.m} {q.d}\n" + " ".join(str(int(c)) for c in q.coeffs) + "\n"


def parse_poly(text: str) -> MultivariatePoly:
    tok = text.split()
    if len(tok) < 3:
        raise ValueError("missing header 'p m d'")
    p, m, d = (int(t) for t in tok[:3])
    body = [int(t) for t in tok[3:]]
    if len(body) != num_coeffs(m, d):
        raise ValueError(f"expected {num_coeffs(m, d)} coefficients, found {len(body)}")
    if any(not 0 <= v < p for v in body):
        raise ValueError("coefficients must be canonical residues in [0, p)")
    return MultivariatePoly(np.array(body, dtype=np.int64), m, d, p)
