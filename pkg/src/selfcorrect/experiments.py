"""Seeded experiment runners behind the command line.

Every experiment has a setup (planted structure plus anything cached across
trials, built from ``derive_rng(seed, name, "setup")``) and a trial function
that sees only ``derive_rng(seed, name, "trial", i)``.  Trials therefore give
the same rows whether they run serially or in worker processes.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .ff import PrimeField, is_prime, mat_mul, mat_vec
from .fourier import (
    DecompositionExhausted, build_correction_basis, compute_spectrum_exact, decomposition_success_rate,
    parseval_sum, quasipoly_subspace,
)
from .linear_ds import WorstCaseLinearDS, expected_state_size, lds_query, serialize_state
from .mm import (
    DEFAULT_C_K, DEFAULT_C_R, BoostBudgetExhausted, boost_mm_large_field, boost_mm_small_field,
    large_field_budget, small_field_budget, small_field_k, uses_large_field,
)
from .omv import OmvQueryFailed, QueryStats, WorstCaseOMV
from .planted import (
    HashedCosetRule, HashedDensityRule, LinearDSOracle, MatMulOracle, OMVOracle, RMOracle,
    make_planted_good_set,
)
from .poly import MultivariatePoly, num_coeffs
from .rm import RMDecodeFailure, RMStats, WorstCaseRM, feasible_alpha
from .seeding import derive_rng
from .verify import generate_small_bias_set

SCHEMA_VERSION = 1


class Infeasible(ValueError):
    """Parameters violate a precondition of the requested reduction."""


def check_common(p: int, alpha: float | None = None, delta: float | None = None):
    if not is_prime(p):
        raise Infeasible(f"p = {p} is not prime")
    if alpha is not None and not 0 < alpha <= 1:
        raise Infeasible(f"alpha = {alpha} must lie in (0, 1]")
    if delta is not None and not 0 < delta < 1:
        raise Infeasible(f"delta = {delta} must lie in (0, 1)")


@dataclass
class TrialResult:
    rows: list
    violations: int = 0
    extra: dict = dc_field(default_factory=dict)


def _timed(f):
    t = time.perf_counter()
    out = f()
    return out, time.perf_counter() - t


# ---- planted designs -----------------------------------------------------------------

def plan_matmul(p: int, alpha: float) -> dict:
    """Smallest planted density >= alpha.

    p < 5: A in a codim-1 coset union, B|A in a hashed codim-2 coset union.
    p >= 5: A in a codim-1 coset union, B unrestricted.
    """
    if p >= 5:
        cA = math.ceil(alpha * p - 1e-9)
        return {"a_codim": 1, "a_cosets": cA, "b_codim": 0, "b_cosets": 1, "density": cA / p}
    best = None
    for cA in range(1, p + 1):
        cB = math.ceil(alpha * p**3 / cA - 1e-9)
        if cB <= p * p:
            dens = cA * cB / p**3
            if best is None or dens < best["density"] - 1e-12:
                best = {"a_codim": 1, "a_cosets": cA, "b_codim": 2, "b_cosets": cB, "density": dens}
    return best


def plan_two_level(p: int, alpha: float, inner: float | None = None) -> tuple[int, float]:
    """Cosets of a codim-1 outer set and the inner density with product >= alpha."""
    if inner is None:
        c = math.ceil(math.sqrt(alpha) * p - 1e-9)
        c_in = math.ceil(alpha * p * p / c - 1e-9)
        return c, c_in / p
    c = math.ceil(alpha / inner * p - 1e-9)
    if c > p:
        raise Infeasible(f"alpha = {alpha} above what an inner density of {inner} can reach")
    return c, inner


def plan_linear(p: int, alpha: float) -> tuple[int, int]:
    codim = max(0, math.ceil(math.log(1 / alpha) / math.log(p) - 1e-12))
    return codim, math.ceil(alpha * p**codim - 1e-9)


# ---- matrix multiplication -----------------------------------------------------------

def mm_setup(cfg: dict) -> dict:
    p, n, alpha = cfg["p"], cfg["n"], cfg["alpha"]
    check_common(p, alpha, cfg["delta"])
    kind = cfg.get("kind", "auto")
    large = uses_large_field(p, alpha) if kind == "auto" else kind == "large"
    if large and p < 5:
        raise Infeasible("large-field path needs p >= 5 (three distinct nonzero interpolation points)")
    plan = plan_matmul(p, alpha)
    rng = derive_rng(cfg["seed"], "mm", "setup")
    gA = make_planted_good_set("subspace_coset_union", p, n * n, rng, codim=plan["a_codim"], cosets=plan["a_cosets"])
    gB = None
    if plan["b_codim"]:
        gB = HashedCosetRule(p, n * n, plan["b_codim"], plan["b_cosets"], key=int(rng.integers(2**31)))
    oracle = MatMulOracle(p, n, gA, gB, key=int(rng.integers(2**31)))
    k = small_field_k(alpha, cfg.get("c_k", DEFAULT_C_K))
    bounds = {
        "planted_density": plan["density"],
        "large_field": large,
        "k": k,
        "per_trial_bound_large (alpha^4/16)": alpha**4 / 16,
        "per_trial_bound_small (exp(-ln^5(1/alpha)))": math.exp(-math.log(1 / alpha) ** 5),
        "budget": large_field_budget(alpha, cfg["delta"]) if large
        else small_field_budget(alpha, cfg["delta"], cfg.get("c_r", DEFAULT_C_R)),
    }
    return {"cfg": cfg, "oracle": oracle, "large": large, "bounds": bounds}


def mm_trial(setup: dict, i: int) -> TrialResult:
    cfg = setup["cfg"]
    p, n, alpha, delta = cfg["p"], cfg["n"], cfg["alpha"], cfg["delta"]
    rng = derive_rng(cfg["seed"], "mm", "trial", i)
    A, B = rng.integers(0, p, (2, n, n))
    kw = {"return_info": True}
    if cfg.get("budget"):
        kw["budget"] = cfg["budget"]
    if setup["large"]:
        run = lambda: boost_mm_large_field(setup["oracle"], A, B, alpha, delta, p, rng, **kw)
    else:
        run = lambda: boost_mm_small_field(setup["oracle"], A, B, alpha, delta, p, rng,
                                           c_k=cfg.get("c_k", DEFAULT_C_K), c_r=cfg.get("c_r", DEFAULT_C_R), **kw)
    try:
        res, dt = _timed(run)
    except BoostBudgetExhausted as e:
        return TrialResult([{"trial": i, "success": 0, "repetitions_used": e.trials, "wall_time": None}])
    right = np.array_equal(res.product, mat_mul(A, B, p))
    return TrialResult([{"trial": i, "success": int(right), "repetitions_used": res.trials, "wall_time": dt}],
                       violations=int(not right))


def mm_summary(setup, rows) -> dict:
    reps = [r["repetitions_used"] for r in rows if r["success"]]
    return {"success_rate": float(np.mean([r["success"] for r in rows])),
            "median_repetitions": float(np.median(reps)) if reps else None}


# ---- linear data structures ----------------------------------------------------------

def linear_setup(cfg: dict) -> dict:
    p, n, m, alpha = cfg["p"], cfg["n"], cfg["m"], cfg["alpha"]
    check_common(p, alpha, cfg["delta"])
    codim, cosets = plan_linear(p, alpha)
    if codim > n:
        raise Infeasible(f"alpha = {alpha} needs codimension {codim} > n = {n}")
    rng = derive_rng(cfg["seed"], "linear-ds", "setup")
    A = rng.integers(0, p, (m, n))
    good = make_planted_good_set("subspace_coset_union", p, n, rng, codim=codim, cosets=cosets)
    ds = LinearDSOracle(A, good, p, key=int(rng.integers(2**31)))
    wc = WorstCaseLinearDS(A, ds, alpha, cfg["delta"], p, rng)
    _ = wc.basis
    bounds = {"planted_density": good.density, "basis_t": wc.basis.t,
              "decomposition_bound (alpha^5)": alpha**5, "spectrum_bound (1/alpha^2)": 1 / alpha**2}
    return {"cfg": cfg, "wc": wc, "ds": ds, "A": A, "bounds": bounds}


def linear_trial(setup: dict, i: int) -> TrialResult:
    cfg = setup["cfg"]
    p, A, wc, ds = cfg["p"], setup["A"], setup["wc"], setup["ds"]
    rng = derive_rng(cfg["seed"], "linear-ds", "trial", i)
    x = rng.integers(0, p, A.shape[1])
    try:
        st, dt = _timed(lambda: wc.preprocess(x, rng))
    except DecompositionExhausted:
        return TrialResult([{"trial": i, "preprocess_ok": 0, "tries": None, "correct_queries": 0,
                             "wrong_queries": 0, "v_nnz": None, "state_bytes": None, "expected_bytes": None,
                             "wall_time": None}])
    truth = mat_vec(A, x, p)
    got = np.array([lds_query(st, j) for j in range(A.shape[0])])
    wrong = int((got != truth).sum())
    blob = serialize_state(st)
    row = {"trial": i, "preprocess_ok": 1, "tries": st.tries, "correct_queries": int(len(got) - wrong),
           "wrong_queries": wrong, "v_nnz": st.v.nnz, "state_bytes": len(blob),
           "expected_bytes": expected_state_size(ds.substate_size, st.v.nnz), "wall_time": dt}
    return TrialResult([row], violations=int(wrong > 0 or len(blob) != row["expected_bytes"]))


def linear_summary(setup, rows) -> dict:
    ok = [r for r in rows if r["preprocess_ok"]]
    return {"preprocess_success_rate": len(ok) / len(rows),
            "query_exact_rate": (sum(r["correct_queries"] for r in ok) /
                                 max(1, sum(r["correct_queries"] + r["wrong_queries"] for r in ok)))}


# ---- online matrix-vector ------------------------------------------------------------

def omv_setup(cfg: dict) -> dict:
    p, n, alpha = cfg["p"], cfg["n"], cfg["alpha"]
    check_common(p, alpha, cfg["delta"])
    cZ, inner = plan_two_level(p, alpha)
    cX = round(inner * p)
    rng = derive_rng(cfg["seed"], "omv", "setup")
    Z = make_planted_good_set("subspace_coset_union", p, n * n, rng, codim=1, cosets=cZ, include_zero=True)
    avg = OMVOracle(p, n, Z, HashedCosetRule(p, n, 1, cX, key=int(rng.integers(2**31))), key=int(rng.integers(2**31)))
    W = WorstCaseOMV(avg, alpha, cfg["delta"], p, n, rng)
    mb = W.matrix_basis
    bounds = {"planted_density": Z.density * cX / p, "z_density_measured": mb.density, "matrix_basis_t": mb.basis.t,
              "decomposition_bound (alpha^5)": alpha**5, "small_bias_miss_bound (1/p + 0.1)": 1 / p + 0.1}
    return {"cfg": cfg, "W": W, "bounds": bounds}


def omv_trial(setup: dict, i: int) -> TrialResult:
    cfg = setup["cfg"]
    p, n, W = cfg["p"], cfg["n"], setup["W"]
    rng = derive_rng(cfg["seed"], "omv", "trial", i)
    M = rng.integers(0, p, (n, n))
    rows, bad = [], 0
    try:
        st = W.preprocess(M, rng)
    except DecompositionExhausted:
        return TrialResult([{"trial": i, "query": q, "success": 0, "failed": 1, "resamples": None,
                             "checks": None, "wall_time": None} for q in range(cfg["queries"])])
    for q in range(cfg["queries"]):
        x = rng.integers(0, p, n)
        stats = QueryStats()
        try:
            y, dt = _timed(lambda: W.query(st, x, rng, stats))
        except OmvQueryFailed:
            rows.append({"trial": i, "query": q, "success": 0, "failed": 1, "resamples": sum(stats.resamples),
                         "checks": stats.checks, "wall_time": None})
            continue
        right = np.array_equal(y, mat_vec(M, x, p))
        bad += not right
        rows.append({"trial": i, "query": q, "success": int(right), "failed": 0, "resamples": sum(stats.resamples),
                     "checks": stats.checks, "wall_time": dt})
    return TrialResult(rows, violations=bad, extra={"bias": st.S.measured_bias})


def omv_summary(setup, rows) -> dict:
    return {"success_rate": float(np.mean([r["success"] for r in rows])),
            "failure_rate": float(np.mean([r["failed"] for r in rows]))}


# ---- Reed-Muller ---------------------------------------------------------------------

RM_INNER_DENSITY = 0.9


def rm_setup(cfg: dict) -> dict:
    p, m, d, alpha = cfg["p"], cfg["m"], cfg["d"], cfg["alpha"]
    check_common(p, alpha, cfg["delta"])
    if d + 1 > p:
        raise Infeasible(f"degree {d} needs d + 1 <= p")
    if not feasible_alpha(alpha, d, p):
        raise Infeasible(f"alpha = {alpha} must exceed 2 sqrt(d/p) = {2 * math.sqrt(d / p):.4f}")
    n = num_coeffs(m, d)
    cZ, inner = plan_two_level(p, alpha, RM_INNER_DENSITY)
    rng = derive_rng(cfg["seed"], "rm", "setup")
    if cfg.get("perfect"):
        from .planted import full_space
        avg = RMOracle(p, m, d, full_space(p, n))
        dens = 1.0
    else:
        Z = make_planted_good_set("subspace_coset_union", p, n, rng, codim=1, cosets=cZ, include_zero=True)
        avg = RMOracle(p, m, d, Z, HashedDensityRule(inner, key=int(rng.integers(2**31))), key=int(rng.integers(2**31)))
        dens = Z.density * inner
    W = WorstCaseRM(avg, alpha, cfg["delta"], p, m, d, rng)
    zb = W.z_basis
    bounds = {"planted_density": dens, "z_density_measured": zb.density, "z_basis_t": zb.basis.t,
              "wrapper_error_scale sqrt(d/(alpha p))": math.sqrt(d / (alpha * p)),
              "query_error_scale sqrt(d/p)": math.sqrt(d / p),
              "claim61_bound 1-4/(p alpha)": 1 - 4 / (p * alpha)}
    return {"cfg": cfg, "W": W, "bounds": bounds}


def rm_trial(setup: dict, i: int) -> TrialResult:
    cfg = setup["cfg"]
    p, m, d, W = cfg["p"], cfg["m"], cfg["d"], setup["W"]
    rng = derive_rng(cfg["seed"], "rm", "trial", i)
    q = MultivariatePoly(rng.integers(0, p, num_coeffs(m, d)), m, d, p)
    try:
        st = W.preprocess(q, rng)
    except DecompositionExhausted:
        return TrialResult([{"trial": i, "query": j, "success": 0, "decode_failure": 0, "preprocess_failure": 1,
                             "agreement": None, "wall_time": None} for j in range(cfg["queries"])])
    rows = []
    for j in range(cfg["queries"]):
        x = rng.integers(0, p, m)
        stats = RMStats()
        try:
            y, dt = _timed(lambda: W.query(st, x, rng, stats))
            ok, fail = int(y == q(x)), 0
        except RMDecodeFailure:
            ok, fail, dt = 0, 1, None
        rows.append({"trial": i, "query": j, "success": ok, "decode_failure": fail, "preprocess_failure": 0,
                     "agreement": stats.decode_agreement[-1] if stats.decode_agreement else None,
                     "max_list": stats.max_list, "wall_time": dt})
    # evaluations are Monte Carlo, not verified: wrong values are statistics, not soundness violations
    return TrialResult(rows)


def rm_summary(setup, rows) -> dict:
    return {"success_rate": float(np.mean([r["success"] for r in rows])),
            "decode_failure_rate": float(np.mean([r["decode_failure"] for r in rows])),
            "max_list_size": max((r.get("max_list") or 0) for r in rows)}


EXPERIMENTS = {
    "mm": (mm_setup, mm_trial, mm_summary),
    "linear-ds": (linear_setup, linear_trial, linear_summary),
    "omv": (omv_setup, omv_trial, omv_summary),
    "rm": (rm_setup, rm_trial, rm_summary),
}


# ---- single-shot reports -------------------------------------------------------------

def bogolyubov_report(p: int, n: int, density: float, seed: int, samples: int = 20_000, points: int = 5,
                      quasipoly: bool = False) -> dict:
    check_common(p, density)
    if p**n > 2**22:
        raise Infeasible(f"p^n = {p**n} exceeds the exhaustive limit 2^22")
    codim, cosets = plan_linear(p, density)
    if codim > n:
        raise Infeasible(f"density {density} needs codimension {codim} > n = {n}")
    rng = derive_rng(seed, "bogolyubov", "setup")
    X = make_planted_good_set("subspace_coset_union", p, n, rng, codim=codim, cosets=cosets)
    ind = X.indicator()
    alpha = float(ind.mean())
    F = PrimeField(p)
    spec = compute_spectrum_exact(ind, alpha**1.5, F, n)
    basis = build_correction_basis(spec)
    parseval = parseval_sum(ind, p)
    member = X.contains_batch
    rates = []
    for j in range(points):
        r = derive_rng(seed, "bogolyubov", "point", j)
        y = r.integers(0, p, n)
        rates.append(decomposition_success_rate(y, basis, member, samples, r))
    out = {
        "p": p, "n": n, "density": alpha, "spectrum_size": len(spec), "spectrum_bound": 1 / alpha**2,
        "spectrum_ok": len(spec) <= 1 / alpha**2 + 1e-9, "codim_V": basis.t,
        "parseval": parseval, "parseval_error": abs(parseval - alpha), "parseval_ok": abs(parseval - alpha) <= 1e-6,
        "decomposition_rates": rates, "decomposition_bound": alpha**5,
        "decomposition_ok": min(rates) >= alpha**5 - 3 * math.sqrt(alpha**5 * (1 - alpha**5) / samples),
    }
    if quasipoly:
        qs = quasipoly_subspace(ind, alpha, F, rng=rng)
        out["quasipoly"] = {k: v for k, v in qs.info.items() if isinstance(v, (int, float, bool))}
    return out


def bias_report(n: int, p: int, c: float, seed: int) -> dict:
    check_common(p)
    if n * math.log2(p) > 24:
        raise Infeasible("exhaustive bias measurement needs n log2 p <= 24")
    S = generate_small_bias_set(n, p, c, rng=derive_rng(seed, "bias"), max_attempts=1)
    return {"n": n, "p": p, "c": c, "size": S.size, "bias": S.measured_bias, "target": S.target_bias,
            "ok": S.measured_bias <= S.target_bias}
