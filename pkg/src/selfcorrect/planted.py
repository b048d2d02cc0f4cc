"""Faulty average-case solvers with planted good sets.

Every oracle here answers exactly on a known set of inputs and returns
"correct answer + nonzero perturbation" elsewhere.  The perturbation is a
keyed hash of the input, so wrong answers are reproducible and never
accidentally right.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .ff import _as_field, _dot_mod, enumerate_space, rank, vectors_to_index
from .fourier import MembershipOracle
from .poly import eval_coeffs, num_coeffs
from .seeding import hash_rows, hash_uniform, mix64

KINDS = ("subspace_coset_union", "random_dense_enumerable", "predicate")


class UnachievableDensity(ValueError):
    pass


# ---- good sets -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PlantedGoodSet:
    """A subset of F_p^n with exact (or, for predicates, estimated) density.

    subspace_coset_union: x is a member iff rows @ x is one of ``syndromes``,
    i.e. x + shift lies in W = ker(rows) for one of the stored shifts.
    """

    kind: str
    p: int
    n: int
    density: float
    rows: np.ndarray | None = None
    syndromes: np.ndarray | None = None
    members: np.ndarray | None = None      # sorted flat indices
    predicate: Callable | None = dc_field(default=None, compare=False)
    seed: int | None = None

    @property
    def codim(self) -> int:
        return 0 if self.rows is None else len(self.rows)

    def contains_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        if self.kind == "subspace_coset_union":
            if self.codim == 0:
                return np.ones(len(X), dtype=bool)
            syn = _dot_mod(X, self.rows.T, self.p)
            codes = vectors_to_index(syn, self.p)
            return np.isin(codes, vectors_to_index(self.syndromes, self.p))
        if self.kind == "random_dense_enumerable":
            idx = vectors_to_index(X, self.p)
            pos = np.searchsorted(self.members, idx)
            pos = np.minimum(pos, len(self.members) - 1)
            return self.members[pos] == idx if len(self.members) else np.zeros(len(X), bool)
        return np.asarray(self.predicate(X), dtype=bool)

    def contains(self, x) -> bool:
        return bool(self.contains_batch(np.asarray(x)[None, :])[0])

    def indicator(self) -> np.ndarray:
        return self.contains_batch(enumerate_space(self.p, self.n))

    def oracle(self) -> MembershipOracle:
        return MembershipOracle(self.contains_batch, self.n, self.p)

    def manifest(self) -> str:
        lines = [f"kind {self.kind}", f"p {self.p}", f"n {self.n}",
                 f"seed {self.seed if self.seed is not None else '-'}",
                 f"density {self.density!r}"]
        if self.kind == "subspace_coset_union":
            lines.append(f"rows {self.codim}")
            lines += [" ".join(map(str, r)) for r in (self.rows if self.codim else [])]
            lines.append(f"syndromes {0 if self.syndromes is None else len(self.syndromes)}")
            lines += [" ".join(map(str, s)) for s in (self.syndromes if self.codim else [])]
        elif self.kind == "random_dense_enumerable":
            lines.append(f"members {len(self.members)}")
            lines.append(" ".join(map(str, self.members)))
        return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> PlantedGoodSet:
    lines = text.strip().splitlines()
    head = dict(line.split(" ", 1) for line in lines[:5])
    kind, p, n = head["kind"], int(head["p"]), int(head["n"])
    seed = None if head["seed"] == "-" else int(head["seed"])
    density = float(head["density"])
    rest = lines[5:]
    if kind == "subspace_coset_union":
        c = int(rest[0].split()[1])
        rows = np.array([[int(v) for v in r.split()] for r in rest[1:1 + c]], dtype=np.int64).reshape(c, n)
        k = int(rest[1 + c].split()[1])
        syn = np.array([[int(v) for v in s.split()] for s in rest[2 + c:2 + c + k]], dtype=np.int64).reshape(k, c)
        return PlantedGoodSet(kind, p, n, density, rows if c else None, syn if c else None, seed=seed)
    if kind == "random_dense_enumerable":
        members = np.array([int(v) for v in rest[1].split()], dtype=np.int64)
        return PlantedGoodSet(kind, p, n, density, members=members, seed=seed)
    raise ValueError("predicate sets carry code and cannot be restored from a manifest")


def full_space(p: int, n: int) -> PlantedGoodSet:
    return PlantedGoodSet("subspace_coset_union", p, n, 1.0)


def _random_full_rank(rng, codim: int, n: int, p: int, attempts: int = 64) -> np.ndarray:
    for _ in range(attempts):
        rows = rng.integers(0, p, size=(codim, n), dtype=np.int64)
        if rank(rows, p) == codim:
            return rows
    raise RuntimeError("could not draw full-rank constraint rows")


def make_planted_good_set(kind: str, field, n: int, rng: np.random.Generator | None = None, *,
                          codim: int | None = None, cosets: int | None = None,
                          alpha: float | None = None, predicate: Callable | None = None,
                          include_zero: bool = False, seed: int | None = None,
                          density_samples: int = 100_000) -> PlantedGoodSet:
    """Build a good set; for coset unions give ``codim`` plus ``cosets`` or ``alpha``."""
    F = _as_field(field)
    p = F.p
    if rng is None:
        rng = np.random.default_rng(seed)
    if kind == "subspace_coset_union":
        if codim is None:
            raise ValueError("codim required")
        if codim > n:
            raise UnachievableDensity("codimension exceeds dimension")
        total = p**codim
        if cosets is None:
            if alpha is None:
                raise ValueError("give cosets or alpha")
            exact = alpha * total
            cosets = round(exact)
            if abs(exact - cosets) > 1e-9:
                raise UnachievableDensity(f"alpha*p^codim = {exact} is not an integer")
        if not 1 <= cosets <= total:
            raise UnachievableDensity(f"need 1 <= cosets <= {total}")
        if codim == 0:
            return PlantedGoodSet(kind, p, n, 1.0, seed=seed)
        rows = _random_full_rank(rng, codim, n, p)
        if include_zero:
            pick = np.concatenate([[0], 1 + rng.choice(total - 1, cosets - 1, replace=False)])
        else:
            pick = rng.choice(total, cosets, replace=False)
        syn = np.stack([np.array([(int(c) // p**(codim - 1 - i)) % p for i in range(codim)])
                        for c in np.sort(pick)])
        return PlantedGoodSet(kind, p, n, cosets / total, rows, syn.astype(np.int64), seed=seed)
    if kind == "random_dense_enumerable":
        if alpha is None or not 0 < alpha <= 1:
            raise UnachievableDensity("alpha in (0, 1] required")
        N = p**n
        if N > 2**22:
            raise UnachievableDensity("domain too large to enumerate")
        size = math.ceil(alpha * N - 1e-9)
        members = np.sort(rng.choice(N, size, replace=False)).astype(np.int64)
        return PlantedGoodSet(kind, p, n, size / N, members=members, seed=seed)
    if kind == "predicate":
        if predicate is None:
            raise ValueError("predicate required")
        dens = alpha
        if dens is None:
            X = F.random(rng, (density_samples, n))
            dens = float(np.asarray(predicate(X), bool).mean())
        return PlantedGoodSet(kind, p, n, dens, predicate=predicate, seed=seed)
    raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")


# ---- corruption -------------------------------------------------------------------

def perturbation(keys: np.ndarray, key: int, p: int, width: int) -> np.ndarray:
    """Nonzero perturbation vectors (B, width) determined by hashing ``keys`` rows."""
    keys = np.atleast_2d(np.asarray(keys, dtype=np.int64))
    h = hash_rows(keys, key)
    out = np.empty((len(keys), width), dtype=np.int64)
    with np.errstate(over="ignore"):
        for j in range(width):
            out[:, j] = (mix64(h + np.uint64(0x9E3779B97F4A7C15) * np.uint64(j + 1)) % np.uint64(p)).astype(np.int64)
    zero = ~out.any(axis=1)
    if zero.any():
        out[zero, 0] = 1 + (h[zero] % np.uint64(p - 1)).astype(np.int64) if p > 2 else 1
    return out


def _input_keys(inputs: np.ndarray, Xs: np.ndarray, key: int) -> np.ndarray:
    """Hash keys (B, T, 1 + width) for (input, query) pairs: input digest then query."""
    B, T = Xs.shape[:2]
    h = hash_rows(inputs, key).astype(np.int64)
    return np.concatenate([np.broadcast_to(h[:, None, None], (B, T, 1)), Xs], axis=2)


def _full_rank_mask(rows: np.ndarray, p: int) -> np.ndarray:
    """Vectorized rank test for (B, c, w) stacks; exact for c <= 2, conservative above."""
    B, c, w = rows.shape
    if c == 1:
        return rows[:, 0].any(axis=1)
    if c == 2:
        # rank 2 iff row0 != 0 and row1 is not a multiple of row0
        r0, r1 = rows[:, 0], rows[:, 1]
        nz = r0.any(axis=1)
        j = np.argmax(r0 != 0, axis=1)
        a = r0[np.arange(B), j]
        lam = r1[np.arange(B), j] * np.array([pow(int(v), p - 2, p) if v else 0 for v in a]) % p
        return nz & (r1 != (lam[:, None] * r0) % p).any(axis=1)
    return np.zeros(B, dtype=bool)


# ---- rules giving a per-input good set of queries ----------------------------------

@dataclass(frozen=True, eq=False)
class HashedCosetRule:
    """Per-input good set: a coset union in F_p^width whose rows and cosets come from a hash.

    With codim 1 the membership test is fully vectorized across inputs.
    """

    p: int
    width: int
    codim: int
    cosets: int
    key: int

    @property
    def density(self) -> float:
        return self.cosets / self.p**self.codim

    def _params(self, inputs: np.ndarray):
        B = len(inputs)
        h = hash_rows(inputs, self.key)
        c, w, p = self.codim, self.width, self.p
        rows = np.empty((B, c, w), dtype=np.int64)
        with np.errstate(over="ignore"):
            for j in range(c * w):
                v = mix64(h + np.uint64(2 * j + 1) * np.uint64(0xD6E8FEB86659FD93)) % np.uint64(p)
                rows[:, j // w, j % w] = v.astype(np.int64)
            if c == 1:
                zero = ~rows[:, 0].any(axis=1)
                rows[zero, 0, 0] = 1
            else:
                for b in np.flatnonzero(~_full_rank_mask(rows, p)):
                    salt = 0
                    while rank(rows[b], p) < c:
                        salt += 1
                        g = np.random.default_rng([int(h[b] & np.uint64(2**63 - 1)), salt])
                        rows[b] = g.integers(0, p, (c, w))
            # allowed syndrome codes: hash-ranked codes, lowest `cosets` kept
            total = p**c
            codes = np.arange(total, dtype=np.uint64)
            ranks = mix64(h[:, None] ^ mix64(codes[None, :] + np.uint64(0x632BE59BD9B4E019)))
        allowed = np.argsort(ranks, axis=1, kind="stable")[:, : self.cosets]
        return rows, allowed

    def contains(self, inputs: np.ndarray, X: np.ndarray) -> np.ndarray:
        """inputs (B, k), X (B, T, width) -> (B, T) membership."""
        inputs = np.atleast_2d(inputs)
        rows, allowed = self._params(inputs)
        syn = np.einsum("btw,bcw->btc", X, rows) % self.p
        code = vectors_to_index(syn, self.p)
        return (code[:, :, None] == allowed[:, None, :]).any(axis=2)

    def good_set(self, inp) -> PlantedGoodSet:
        rows, allowed = self._params(np.asarray(inp, dtype=np.int64)[None, :])
        c = self.codim
        syn = np.array([[(int(a) // self.p**(c - 1 - i)) % self.p for i in range(c)] for a in np.sort(allowed[0])])
        return PlantedGoodSet("subspace_coset_union", self.p, self.width, self.density, rows[0], syn)


@dataclass(frozen=True, eq=False)
class HashedDensityRule:
    """Per-input good set {x : hash(input, x) < rho}; density rho in expectation."""

    rho: float
    key: int

    @property
    def density(self) -> float:
        return self.rho

    def contains(self, inputs: np.ndarray, X: np.ndarray) -> np.ndarray:
        inputs = np.atleast_2d(inputs)
        B, T = X.shape[:2]
        h = hash_rows(inputs, self.key)
        joined = np.concatenate([np.broadcast_to(h.astype(np.int64)[:, None, None], (B, T, 1)), X], axis=2)
        return hash_uniform(joined, self.key ^ 0x5BD1E995) < self.rho


# ---- matrix multiplication ------------------------------------------------------------

class MatMulOracle:
    """ALG(A, B) = AB iff A in good_A and B in Y_A, else AB + hashed garbage."""

    def __init__(self, field, n: int, good_A: PlantedGoodSet | None = None,
                 good_B: PlantedGoodSet | HashedCosetRule | None = None, key: int = 0):
        self.F = _as_field(field)
        self.n = n
        self.good_A = good_A or full_space(self.F.p, n * n)
        self.good_B = good_B
        self.key = key
        self.calls = 0

    def in_Y(self, A, B) -> bool:
        if self.good_B is None:
            return True
        if isinstance(self.good_B, PlantedGoodSet):
            return self.good_B.contains(np.ravel(B))
        return bool(self.good_B.contains(np.ravel(A)[None, :], np.ravel(B)[None, None, :])[0, 0])

    def is_good(self, A, B) -> bool:
        return self.good_A.contains(np.ravel(A)) and self.in_Y(A, B)

    def __call__(self, A, B) -> np.ndarray:
        self.calls += 1
        p = self.F.p
        A = np.asarray(A, dtype=np.int64)
        B = np.asarray(B, dtype=np.int64)
        C = _dot_mod(A, B, p)
        if self.is_good(A, B):
            return C
        e = perturbation(np.concatenate([A.ravel(), B.ravel()])[None, :], self.key, p, self.n * self.n)
        return (C + e.reshape(self.n, self.n)) % p

    def batch(self, As, Bs) -> np.ndarray:
        """ALG on a stack of pairs (T, n, n) x (T, n, n); same answers as repeated calls."""
        p = self.F.p
        As = np.asarray(As, dtype=np.int64)
        Bs = np.asarray(Bs, dtype=np.int64)
        self.calls += len(As)
        C = _dot_mod(As, Bs, p)
        bad = ~self.good_batch(As, Bs)
        if bad.any():
            keys = np.concatenate([As[bad].reshape(-1, self.n * self.n), Bs[bad].reshape(-1, self.n * self.n)], axis=1)
            e = perturbation(keys, self.key, p, self.n * self.n)
            C[bad] = (C[bad] + e.reshape(-1, self.n, self.n)) % p
        return C

    def good_batch(self, As: np.ndarray, Bs: np.ndarray) -> np.ndarray:
        """Membership of many (A, B) pairs, for density audits."""
        fa = As.reshape(len(As), -1)
        fb = Bs.reshape(len(Bs), -1)
        ok = self.good_A.contains_batch(fa)
        if self.good_B is None:
            return ok
        if isinstance(self.good_B, PlantedGoodSet):
            return ok & self.good_B.contains_batch(fb)
        return ok & self.good_B.contains(fa, fb[:, None, :])[:, 0]

    @property
    def declared_density(self) -> float:
        yb = 1.0 if self.good_B is None else self.good_B.density
        return self.good_A.density * yb


def make_matmul_oracle(good_A: PlantedGoodSet | None, good_B_given_A, field, n: int,
                       key: int = 0) -> MatMulOracle:
    return MatMulOracle(field, n, good_A, good_B_given_A, key)


# ---- linear data structures -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearSubstate:
    oracle: "LinearDSOracle"
    x: np.ndarray

    def query(self, i: int) -> int:
        return int(self.oracle._answer(self.x[None, :], np.array([i]))[0, 0])

    def query_all(self) -> np.ndarray:
        return self.oracle._answer(self.x[None, :], np.arange(self.oracle.m))[0]

    def serialize(self) -> bytes:
        return self.x.astype("<u4").tobytes()

    @property
    def size_bytes(self) -> int:
        return 4 * len(self.x)


class LinearDSOracle:
    """DS_x(i) = <A_i, x> for x in the good set; every query corrupted otherwise."""

    def __init__(self, A, good: PlantedGoodSet, field, key: int = 0):
        self.F = _as_field(field)
        self.A = self.F.asarray(A)
        self.m, self.n = self.A.shape
        if good.n != self.n:
            raise ValueError("good set lives in the wrong dimension")
        self.good = good
        self.key = key

    def preprocess(self, x) -> LinearSubstate:
        return LinearSubstate(self, self.F.asarray(x).copy())

    def restore(self, blob: bytes) -> LinearSubstate:
        return LinearSubstate(self, np.frombuffer(blob, dtype="<u4").astype(np.int64))

    @property
    def substate_size(self) -> int:
        return 4 * self.n

    def _answer(self, X: np.ndarray, idx: np.ndarray) -> np.ndarray:
        p = self.F.p
        vals = _dot_mod(X, self.A[idx].T, p)                      # B x len(idx)
        bad = ~self.good.contains_batch(X)
        if bad.any():
            keys = np.concatenate([np.repeat(X[bad], len(idx), axis=0),
                                   np.tile(idx, bad.sum())[:, None]], axis=1)
            e = perturbation(keys, self.key, p, 1).reshape(bad.sum(), len(idx))
            vals[bad] = (vals[bad] + e) % p
        return vals

    def member_batch(self, X) -> np.ndarray:
        """Exact membership in X = {x : all m answers correct}, by full comparison."""
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        got = self._answer(X, np.arange(self.m))
        return np.all(got == _dot_mod(X, self.A.T, self.F.p), axis=1)


def make_linear_ds_oracle(A, good: PlantedGoodSet, field, key: int = 0) -> LinearDSOracle:
    return LinearDSOracle(A, good, field, key)


# ---- online matrix-vector ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OMVSubstate:
    oracle: "OMVOracle"
    M: np.ndarray

    def query_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        return self.oracle.batch_query(self.M[None], X[None])[0]

    def query(self, x) -> np.ndarray:
        return self.query_batch(np.asarray(x)[None, :])[0]


class OMVOracle:
    """DS_M(x) = Mx iff M in Z and x in X_M (a per-matrix hashed coset union)."""

    def __init__(self, field, n: int, Z: PlantedGoodSet, x_rule: HashedCosetRule | None, key: int = 0):
        self.F = _as_field(field)
        self.n = n
        if Z.n != n * n:
            raise ValueError("Z must live in F^(n*n)")
        self.Z = Z
        self.x_rule = x_rule
        self.key = key
        self.calls = 0

    def preprocess(self, M) -> OMVSubstate:
        return OMVSubstate(self, self.F.asarray(M).reshape(self.n, self.n).copy())

    def good_mask(self, Ms: np.ndarray, Xs: np.ndarray) -> np.ndarray:
        B = len(Ms)
        flat = Ms.reshape(B, -1)
        inZ = self.Z.contains_batch(flat)
        if self.x_rule is None:
            return np.broadcast_to(inZ[:, None], Xs.shape[:2]).copy()
        return inZ[:, None] & self.x_rule.contains(flat, Xs)

    def batch_query(self, Ms: np.ndarray, Xs: np.ndarray) -> np.ndarray:
        """Ms (B, n, n), Xs (B, T, n) -> answers (B, T, n)."""
        p = self.F.p
        Ms = np.asarray(Ms, dtype=np.int64)
        Xs = np.asarray(Xs, dtype=np.int64)
        self.calls += Xs.shape[0] * Xs.shape[1]
        out = self.exact(Ms, Xs, p)
        bad = ~self.good_mask(Ms, Xs)
        if bad.any():
            out[bad] = (out[bad] + perturbation(_input_keys(Ms.reshape(len(Ms), -1), Xs, self.key)[bad],
                                                self.key, p, self.n)) % p
        return out

    @staticmethod
    def exact(Ms, Xs, p):
        return _dot_mod(Xs, np.swapaxes(Ms, 1, 2), p)

    def z_oracle(self, alpha: float, trials: int | None = None, rng: np.random.Generator | None = None,
                 votes: int = 1, chunk: int = 1 << 18) -> MembershipOracle:
        trials = trials or oz_trials(alpha)
        rng = rng if rng is not None else np.random.default_rng(0)
        n, p = self.n, self.F.p

        def batch(flat):
            res = np.empty(len(flat), dtype=bool)
            step = max(1, chunk // (trials * n))
            for s in range(0, len(flat), step):
                Ms = flat[s:s + step].reshape(-1, n, n)
                Xs = rng.integers(0, p, size=(len(Ms), trials, n), dtype=np.int64)
                ok = np.all(self.batch_query(Ms, Xs) == self.exact(Ms, Xs, p), axis=2)
                res[s:s + step] = ok.mean(axis=1) >= alpha / 3
            return res

        return MembershipOracle(batch, n * n, p, votes=votes, promised=2 / 3)


def make_omv_oracle(Z: PlantedGoodSet, x_rule, field, n: int, key: int = 0) -> OMVOracle:
    return OMVOracle(field, n, Z, x_rule, key)


# ---- Reed-Muller evaluation --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RMSubstate:
    oracle: "RMOracle"
    q: np.ndarray

    def query_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        return self.oracle.batch_query(self.q[None], X[None])[0]

    def query(self, x) -> int:
        return int(self.query_batch(np.asarray(x)[None, :])[0])


class RMOracle:
    """DS_q(x) = q(x) iff q in Z and x in X_q; garbage otherwise."""

    def __init__(self, field, m: int, d: int, Z: PlantedGoodSet, x_rule=None, key: int = 0):
        self.F = _as_field(field)
        self.m, self.d = m, d
        self.n = num_coeffs(m, d)
        if Z.n != self.n:
            raise ValueError(f"Z must live in F^{self.n}")
        self.Z = Z
        self.x_rule = x_rule
        self.key = key
        self.calls = 0

    def preprocess(self, q) -> RMSubstate:
        coeffs = getattr(q, "coeffs", q)
        return RMSubstate(self, self.F.asarray(coeffs).copy())

    def exact(self, Qs, Xs) -> np.ndarray:
        return eval_coeffs(np.asarray(Qs)[:, None, :], Xs, self.m, self.d, self.F.p)

    def good_mask(self, Qs, Xs) -> np.ndarray:
        inZ = self.Z.contains_batch(Qs)
        if self.x_rule is None:
            return np.broadcast_to(inZ[:, None], Xs.shape[:2]).copy()
        return inZ[:, None] & self.x_rule.contains(Qs, Xs)

    def batch_query(self, Qs, Xs) -> np.ndarray:
        """Qs (B, n), Xs (B, T, m) -> (B, T)."""
        p = self.F.p
        Qs = np.asarray(Qs, dtype=np.int64)
        Xs = np.asarray(Xs, dtype=np.int64)
        self.calls += Xs.shape[0] * Xs.shape[1]
        out = self.exact(Qs, Xs)
        bad = ~self.good_mask(Qs, Xs)
        if bad.any():
            out[bad] = (out[bad] + perturbation(_input_keys(Qs, Xs, self.key)[bad], self.key, p, 1)[:, 0]) % p
        return out

    def z_oracle(self, alpha: float, trials: int | None = None, rng: np.random.Generator | None = None,
                 votes: int = 1, chunk: int = 1 << 18) -> MembershipOracle:
        trials = trials or oz_trials(alpha)
        rng = rng if rng is not None else np.random.default_rng(0)
        p, m = self.F.p, self.m

        def batch(Qs):
            res = np.empty(len(Qs), dtype=bool)
            step = max(1, chunk // (trials * self.n))
            for s in range(0, len(Qs), step):
                Q = Qs[s:s + step]
                Xs = rng.integers(0, p, size=(len(Q), trials, m), dtype=np.int64)
                # an answer is right exactly on the good mask (perturbations are nonzero)
                self.calls += Xs.shape[0] * Xs.shape[1]
                ok = self.good_mask(Q, Xs)
                res[s:s + step] = ok.mean(axis=1) >= alpha / 3
            return res

        return MembershipOracle(batch, self.n, p, votes=votes, promised=2 / 3)


def make_rm_oracle(Z: PlantedGoodSet, x_rule, m: int, d: int, field, key: int = 0) -> RMOracle:
    return RMOracle(field, m, d, Z, x_rule, key)


# ---- the sampling membership oracle O_Z ---------------------------------------------------

def oz_trials(alpha: float, c: float = 64.0) -> int:
    return math.ceil(c / alpha**2)


def membership_oracle_OZ(ds, candidate, alpha: float, trials: int | None,
                         exact: Callable, rng: np.random.Generator,
                         sampler: Callable | None = None) -> bool:
    """Accept iff at least alpha/3 of ``trials`` random queries to DS_candidate are right.

    ``ds.preprocess(candidate)`` must return a substate with ``query_batch``;
    ``exact(candidate, X)`` gives the true answers; ``sampler(rng, T)`` draws
    query points (default: uniform vectors of the substate's query width).
    """
    trials = trials or oz_trials(alpha)
    sub = ds.preprocess(candidate)
    if sampler is None:
        width = getattr(ds, "m", None) if isinstance(ds, RMOracle) else ds.n
        X = rng.integers(0, ds.F.p, size=(trials, width), dtype=np.int64)
    else:
        X = sampler(rng, trials)
    got = np.asarray(sub.query_batch(X))
    want = np.asarray(exact(candidate, X))
    ok = got == want
    if ok.ndim > 1:
        ok = ok.all(axis=tuple(range(1, ok.ndim)))
    return bool(ok.mean() >= alpha / 3)
