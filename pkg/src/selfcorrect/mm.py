"""Worst-case matrix multiplication from an oracle that is right on a fraction of inputs.

Two boosters share one contract: every returned product has passed a
20-round Freivalds check, and running out of trials raises instead of
guessing.

* small fields: shift both inputs by random low-rank matrices, split each
  shifted matrix into R1+R2-R3-R4 and query all sixteen cross products, then
  remove the shift terms explicitly;
* large fields: evaluate the oracle at three points of a random matrix line
  through (A, B) and interpolate the quadratic at r = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .ff import _as_field, _dot_mod, rank

FREIVALDS_ROUNDS = 20
MAX_SHIFT_ATTEMPTS = 64
DEFAULT_C_K = 1.0
DEFAULT_C_R = 3.5
# small-field sign of ALG(R_t, S_s): product of the signs of R_t and S_s in R1+R2-R3-R4
_EPS = np.array([1, 1, -1, -1], dtype=np.int64)
SIGNS = np.outer(_EPS, _EPS)


class BoostBudgetExhausted(RuntimeError):
    """No Freivalds-verified product within the trial budget."""

    def __init__(self, msg: str, trials: int):
        super().__init__(msg)
        self.trials = trials


@dataclass
class OpCounter:
    """Scalar multiply-adds spent in rank-decomposed products."""

    ops: int = 0


@dataclass(frozen=True, eq=False)
class LowRankShift:
    """L = coeffs @ rows with rows = L[S] independent and coeffs[S] = I."""

    L: np.ndarray
    S: np.ndarray
    coeffs: np.ndarray
    p: int
    attempts: int = 1

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def k(self) -> int:
        return len(self.S)

    @property
    def rows(self) -> np.ndarray:
        return self.L[self.S]

    def reconstruct(self) -> np.ndarray:
        return _dot_mod(self.coeffs, self.rows, self.p)


def sample_low_rank_shift(n: int, k: int, field, rng: np.random.Generator,
                          max_attempts: int = MAX_SHIFT_ATTEMPTS) -> LowRankShift:
    F = _as_field(field)
    p = F.p
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    S = np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64)
    for attempt in range(1, max_attempts + 1):
        rows = F.random(rng, (k, n))
        if rank(rows, p) == k:
            break
    else:
        raise RuntimeError(f"{max_attempts} draws of {k} rows in F_{p}^{n} were all dependent")
    coeffs = F.random(rng, (n, k))
    coeffs[S] = np.eye(k, dtype=np.int64)
    L = _dot_mod(coeffs, rows, p) if k else np.zeros((n, n), dtype=np.int64)
    return LowRankShift(L, S, coeffs, p, attempt)


def multiply_with_rank_decomposition(A, shift: LowRankShift, counter: OpCounter | None = None) -> np.ndarray:
    """A @ L in O(k n^2) via (A @ coeffs) @ rows."""
    A = np.asarray(A, dtype=np.int64)
    n, k, p = shift.n, shift.k, shift.p
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError(f"dimension mismatch: A is {A.shape}, shift is {n}x{n}")
    if counter is not None:
        counter.ops += 2 * A.shape[0] * n * k
    if k == 0:
        return np.zeros((A.shape[0], n), dtype=np.int64)
    return _dot_mod(_dot_mod(A, shift.coeffs, p), shift.rows, p)


def left_multiply_with_rank_decomposition(shift: LowRankShift, B, counter: OpCounter | None = None) -> np.ndarray:
    """L @ B in O(k n^2) via coeffs @ (rows @ B)."""
    B = np.asarray(B, dtype=np.int64)
    n, k, p = shift.n, shift.k, shift.p
    if B.ndim != 2 or B.shape[0] != n:
        raise ValueError(f"dimension mismatch: B is {B.shape}, shift is {n}x{n}")
    if counter is not None:
        counter.ops += 2 * n * k * B.shape[1]
    if k == 0:
        return np.zeros((n, B.shape[1]), dtype=np.int64)
    return _dot_mod(shift.coeffs, _dot_mod(shift.rows, B, p), p)


def shift_product(sa: LowRankShift, sb: LowRankShift, counter: OpCounter | None = None) -> np.ndarray:
    """L_A @ L_B = coeffs_A (rows_A coeffs_B) rows_B."""
    n, ka, kb, p = sa.n, sa.k, sb.k, sa.p
    if counter is not None:
        counter.ops += ka * n * kb + n * ka * kb + n * kb * n
    if ka == 0 or kb == 0:
        return np.zeros((n, n), dtype=np.int64)
    mid = _dot_mod(sa.rows, sb.coeffs, p)
    return _dot_mod(_dot_mod(sa.coeffs, mid, p), sb.rows, p)


# ---- oracle plumbing --------------------------------------------------------------

def _query(oracle, As: np.ndarray, Bs: np.ndarray, p: int) -> np.ndarray:
    batch = getattr(oracle, "batch", None)
    if batch is not None:
        return np.asarray(batch(As, Bs), dtype=np.int64) % p
    return np.stack([np.asarray(oracle(a, b), dtype=np.int64) % p for a, b in zip(As, Bs)])


def freivalds_batch(As, Bs, Cs, k: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Independent k-round Freivalds checks on a stack of triples; returns accept flags."""
    T, n, _ = Cs.shape
    V = rng.integers(0, p, (T, n, k), dtype=np.int64)
    left = _dot_mod(As, _dot_mod(Bs, V, p), p)
    return np.all(left == _dot_mod(Cs, V, p), axis=(1, 2))


@dataclass
class BoostResult:
    product: np.ndarray
    path: str
    trials: int
    budget: int
    oracle_calls: int
    k: int = 0
    extra: dict = dc_field(default_factory=dict)


def small_field_k(alpha: float, c_k: float = DEFAULT_C_K) -> int:
    return math.ceil(c_k * math.log(1 / alpha) ** 4 - 1e-12)


def small_field_budget(alpha: float, delta: float, c_r: float = DEFAULT_C_R) -> int:
    return math.ceil(math.exp(c_r * math.log(1 / alpha) ** 5) / delta)


def large_field_budget(alpha: float, delta: float) -> int:
    return math.ceil(16 / (delta * alpha**4))


def _check_args(alpha, delta):
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


# ---- small-field boosting ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SmallFieldTrial:
    """One sampled instance of the small-field decomposition, before the oracle is asked."""

    shift_A: LowRankShift
    shift_B: LowRankShift
    R: np.ndarray          # (4, n, n), R1 + R2 - R3 - R4 = A + L_A
    S: np.ndarray          # (4, 4, n, n), S[t] sums the same way to B + L_B

    def queries(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.R.shape[-1]
        As = np.repeat(self.R, 4, axis=0)
        return As, self.S.reshape(16, n, n)


def sample_small_field_trial(A, B, k2: int, field, rng) -> SmallFieldTrial:
    F = _as_field(field)
    p = F.p
    n = A.shape[0]
    sa = sample_low_rank_shift(n, k2, F, rng)
    sb = sample_low_rank_shift(n, k2, F, rng)
    MA = (A + sa.L) % p
    MB = (B + sb.L) % p
    R = F.random(rng, (4, n, n))
    R[3] = (R[0] + R[1] - R[2] - MA) % p
    S = F.random(rng, (4, 4, n, n))
    S[:, 3] = (S[:, 0] + S[:, 1] - S[:, 2] - MB[None]) % p
    return SmallFieldTrial(sa, sb, R, S)


def combine_small_field(trial: SmallFieldTrial, answers: np.ndarray, A, B, p: int,
                        counter: OpCounter | None = None) -> np.ndarray:
    """O = sum sign ALG(R_t, S_s) - A L_B - L_A B - L_A L_B."""
    n = A.shape[0]
    O_L = np.tensordot(SIGNS.ravel(), answers.reshape(16, n, n), axes=1) % p
    corr = (multiply_with_rank_decomposition(A, trial.shift_B, counter)
            + left_multiply_with_rank_decomposition(trial.shift_A, B, counter)
            + shift_product(trial.shift_A, trial.shift_B, counter))
    return (O_L - corr) % p


def boost_mm_small_field(oracle, A, B, alpha: float, delta: float, field, rng: np.random.Generator, *,
                         c_k: float = DEFAULT_C_K, c_r: float = DEFAULT_C_R, budget: int | None = None,
                         chunk: int = 32, return_info: bool = False):
    _check_args(alpha, delta)
    F = _as_field(field)
    p = F.p
    A, B = F.asarray(A), F.asarray(B)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape != (n, n):
        raise ValueError(f"need square matrices of equal size, got {A.shape} and {B.shape}")
    k = small_field_k(alpha, c_k)
    k2 = min(2 * k, n)
    budget = budget or small_field_budget(alpha, delta, c_r)
    calls = 0
    done = 0
    while done < budget:
        T = min(chunk, budget - done)
        trials = [sample_small_field_trial(A, B, k2, F, rng) for _ in range(T)]
        qa, qb = zip(*(t.queries() for t in trials))
        answers = _query(oracle, np.concatenate(qa), np.concatenate(qb), p).reshape(T, 16, n, n)
        calls += 16 * T
        Os = np.stack([combine_small_field(t, a, A, B, p) for t, a in zip(trials, answers)])
        ok = freivalds_batch(np.broadcast_to(A, Os.shape), np.broadcast_to(B, Os.shape), Os,
                             FREIVALDS_ROUNDS, p, rng)
        if ok.any():
            i = int(np.argmax(ok))
            res = BoostResult(Os[i], "small", done + i + 1, budget, calls, k2)
            return res if return_info else res.product
        done += T
    raise BoostBudgetExhausted(
        f"no verified product in {budget} trials (alpha={alpha} may be below the oracle's true rate)", budget)


# ---- large-field boosting ----------------------------------------------------------

def lagrange_at_zero(r, p: int) -> np.ndarray:
    """Weights w_i with P(0) = sum w_i P(r_i) for polynomials of degree < len(r)."""
    r = [int(v) % p for v in r]
    if len(set(r)) != len(r) or 0 in r:
        raise ValueError("interpolation nodes must be distinct and nonzero")
    w = []
    for i, ri in enumerate(r):
        num, den = 1, 1
        for j, rj in enumerate(r):
            if j != i:
                num = num * rj % p
                den = den * (rj - ri) % p
        w.append(num * pow(den, p - 2, p) % p)
    return np.array(w, dtype=np.int64)


def interpolate_line_product(products, r, p: int) -> np.ndarray:
    w = lagrange_at_zero(r, p)
    return np.tensordot(w, np.asarray(products, dtype=np.int64), axes=1) % p


def sample_line(A, B, field, rng):
    F = _as_field(field)
    p = F.p
    if p < 5:
        raise ValueError(f"F_{p} has fewer than three nonzero scalars")
    X = F.random(rng, A.shape)
    Y = F.random(rng, B.shape)
    r = rng.choice(np.arange(1, p), size=3, replace=False).astype(np.int64)
    As = (A[None] + r[:, None, None] * X[None]) % p
    Bs = (B[None] + r[:, None, None] * Y[None]) % p
    return r, As, Bs


def boost_mm_large_field(oracle, A, B, alpha: float, delta: float, field, rng: np.random.Generator, *,
                         budget: int | None = None, chunk: int = 64, return_info: bool = False):
    _check_args(alpha, delta)
    F = _as_field(field)
    p = F.p
    A, B = F.asarray(A), F.asarray(B)
    n = A.shape[0]
    budget = budget or large_field_budget(alpha, delta)
    calls = 0
    done = 0
    while done < budget:
        T = min(chunk, budget - done)
        lines = [sample_line(A, B, F, rng) for _ in range(T)]
        As = np.concatenate([l[1] for l in lines])
        Bs = np.concatenate([l[2] for l in lines])
        Cs = _query(oracle, As, Bs, p)
        calls += 3 * T
        ok = freivalds_batch(As, Bs, Cs, FREIVALDS_ROUNDS, p, rng).reshape(T, 3).all(axis=1)
        if ok.any():
            i = int(np.argmax(ok))
            prod = interpolate_line_product(Cs.reshape(T, 3, n, n)[i], lines[i][0], p)
            res = BoostResult(prod, "large", done + i + 1, budget, calls, extra={"r": lines[i][0].tolist()})
            return res if return_info else res.product
        done += T
    raise BoostBudgetExhausted(f"no verified line in {budget} trials", budget)


def uses_large_field(p: int, alpha: float) -> bool:
    """Large-field path iff |F| >= 2/alpha (ties included) and F has three nonzero scalars."""
    return p * alpha >= 2 - 1e-12 and p >= 5


def boost_mm(oracle, A, B, alpha: float, delta: float, field, rng: np.random.Generator, **kw):
    F = _as_field(field)
    if uses_large_field(F.p, alpha):
        kw.pop("c_k", None), kw.pop("c_r", None)
        return boost_mm_large_field(oracle, A, B, alpha, delta, F, rng, **kw)
    return boost_mm_small_field(oracle, A, B, alpha, delta, F, rng, **kw)


def trial_success_rate(oracle, A, B, alpha: float, field, rng, trials: int, kind: str = "small",
                       c_k: float = DEFAULT_C_K) -> float:
    """Fraction of independent trials whose combined output passes verification (no early stop)."""
    F = _as_field(field)
    p = F.p
    A, B = F.asarray(A), F.asarray(B)
    n = A.shape[0]
    hits = 0
    if kind == "small":
        k2 = min(2 * small_field_k(alpha, c_k), n)
        for _ in range(trials):
            t = sample_small_field_trial(A, B, k2, F, rng)
            O = combine_small_field(t, _query(oracle, *t.queries(), p), A, B, p)
            hits += bool(np.array_equal(O, _dot_mod(A, B, p)))
    else:
        for _ in range(trials):
            r, As, Bs = sample_line(A, B, F, rng)
            hits += bool(np.array_equal(_query(oracle, As, Bs, p), _dot_mod(As, Bs, p)))
    return hits / trials
