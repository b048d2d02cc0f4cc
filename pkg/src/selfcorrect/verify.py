"""Randomized verification: Freivalds product checks and small-bias sets."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ff import _as_field, _dot_mod, enumerate_space, index_to_vectors

DEFAULT_BIAS_C = 48
TARGET_BIAS = 0.1
EXHAUSTIVE_BITS = 24


def freivalds_verify(A, B, C, k: int, field, rng: np.random.Generator) -> bool:
    """Accept iff A(Bv) = Cv for k independent uniform v.

    A correct triple is always accepted; a wrong one slips through with
    probability at most 2^-k (at most p^-k per round, in fact).
    """
    F = _as_field(field)
    A, B, C = F.asarray(A), F.asarray(B), F.asarray(C)
    n = A.shape[0]
    if k < 1:
        raise ValueError("need at least one round")
    if not (A.shape == B.shape == C.shape == (n, n)):
        raise ValueError(f"dimension mismatch: {A.shape}, {B.shape}, {C.shape}")
    V = F.random(rng, (n, k))
    left = _dot_mod(A, _dot_mod(B, V, F.p), F.p)
    return bool(np.array_equal(left, _dot_mod(C, V, F.p)))


def small_bias_size(n: int, p: int, c: float = DEFAULT_BIAS_C) -> int:
    return math.ceil(c * n * math.log2(p))


@dataclass(frozen=True, eq=False)
class SmallBiasSet:
    vectors: np.ndarray          # size x n
    p: int
    c: float
    target_bias: float
    measured_bias: float | None = None
    attempts: int = 1

    @property
    def size(self) -> int:
        return len(self.vectors)

    @property
    def n(self) -> int:
        return self.vectors.shape[1]


def generate_small_bias_set(n: int, field, c: float = DEFAULT_BIAS_C,
                            rng: np.random.Generator | None = None,
                            target_bias: float = TARGET_BIAS,
                            measure: bool = True, max_attempts: int = 10) -> SmallBiasSet:
    """Draw ceil(c n log2 p) uniform vectors.

    With ``measure`` the set's bias is computed and the draw repeated (up to
    ``max_attempts`` times) while it exceeds ``target_bias``; the last draw is
    returned either way with its measured bias recorded.
    """
    if n < 1:
        raise ValueError("n must be positive")
    F = _as_field(field)
    rng = rng if rng is not None else np.random.default_rng()
    size = small_bias_size(n, F.p, c)
    S = None
    for attempt in range(1, max_attempts + 1):
        vecs = F.random(rng, (size, n))
        S = SmallBiasSet(vecs, F.p, c, target_bias, None, attempt)
        if not measure:
            return S
        eps = measure_bias(S, F, rng=rng)
        S = SmallBiasSet(vecs, F.p, c, target_bias, eps, attempt)
        if eps <= target_bias:
            break
    return S


def _bias_of_tests(vectors: np.ndarray, R: np.ndarray, p: int) -> float:
    vals = _dot_mod(vectors, R.T, p)               # size x |R|
    worst = 0.0
    for b in range(p):
        freq = (vals == b).mean(axis=0)
        worst = max(worst, float(np.abs(freq - 1.0 / p).max()))
    return worst


def measure_bias(S: SmallBiasSet | np.ndarray, field, rng: np.random.Generator | None = None,
                 samples: int | None = None, chunk: int = 4096) -> float:
    """max over r != 0 and b of |Pr_{s in S}[<s,r> = b] - 1/p|.

    Exhaustive when n log2 p <= 24 and ``samples`` is None; otherwise the
    maximum over ``samples`` random nonzero r (a lower estimate).
    """
    F = _as_field(field)
    vectors = S.vectors if isinstance(S, SmallBiasSet) else F.asarray(S)
    n = vectors.shape[1]
    exhaustive = samples is None and n * math.log2(F.p) <= EXHAUSTIVE_BITS
    worst = 0.0
    if exhaustive:
        total = F.p**n
        for start in range(1, total, chunk):
            idx = np.arange(start, min(start + chunk, total))
            R = index_to_vectors(idx, F.p, n)
            worst = max(worst, _bias_of_tests(vectors, R, F.p))
        return worst
    rng = rng if rng is not None else np.random.default_rng(0)
    samples = samples or 4096
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        R = F.random(rng, (m, n))
        zero = ~R.any(axis=1)
        R[zero, 0] = 1
        worst = max(worst, _bias_of_tests(vectors, R, F.p))
        done += m
    return worst


def full_space_set(n: int, p: int) -> SmallBiasSet:
    return SmallBiasSet(enumerate_space(p, n), p, float("nan"), 0.0, 0.0)


def verify_matvec_claim(E: np.ndarray, EM: np.ndarray, x, y_claim, samples: int,
                        field, rng: np.random.Generator) -> bool:
    """Check <e, y_claim> == <eM, x> for ``samples`` random rows of the pair table.

    ``E`` holds small-bias vectors e (rows) and ``EM`` the matching rows eM.
    A true claim y_claim = Mx always passes.
    """
    F = _as_field(field)
    E = np.asarray(E)
    EM = np.asarray(EM)
    x = F.asarray(x)
    y_claim = F.asarray(y_claim)
    if E.shape[0] != EM.shape[0] or E.shape[1] != len(y_claim) or EM.shape[1] != len(x):
        raise ValueError("pair table does not match claim dimensions")
    pick = rng.integers(0, E.shape[0], size=samples)
    lhs = _dot_mod(E[pick], y_claim[:, None], F.p)
    rhs = _dot_mod(EM[pick], x[:, None], F.p)
    return bool(np.array_equal(lhs, rhs))


def verification_checks(budget: int, delta: float, miss: float = 0.6) -> int:
    """Small-bias samples per claim: ceil(log_{1/miss}(32 * budget / delta)).

    32 = 8 components-and-slack times 4 claims per try; with ``miss`` the
    per-sample false-accept bound 1/p + eps this keeps the union over all
    verified claims below delta / 2.
    """
    return math.ceil(math.log(32 * budget / delta) / math.log(1.0 / miss))
