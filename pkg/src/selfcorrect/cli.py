"""Command line: seeded experiments and audits with JSON + CSV reports.

Exit codes: 0 ok, 1 soundness violation (a verified output was wrong or an
audit failed), 2 infeasible parameters.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .experiments import EXPERIMENTS, SCHEMA_VERSION, Infeasible, bias_report, bogolyubov_report

OUT_ENV = "SELFCORRECT_OUT"
_SETUP = None


def _init_worker(setup):
    global _SETUP
    _SETUP = setup


def _run_trial(args):
    name, i = args
    return EXPERIMENTS[name][1](_SETUP, i)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)


def _csv_text(rows: list[dict], timing: bool) -> str:
    cols = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow(["" if (c == "wall_time" and not timing) else _fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, floats rounded for stable bytes."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float):
        return round(obj, 9)
    return obj


def _out_paths(args, name: str) -> tuple[Path, Path]:
    if getattr(args, "out", None):
        csv_path = Path(args.out)
    else:
        base = Path(os.environ.get(OUT_ENV, "."))
        csv_path = base / f"{name}-seed{args.seed}.csv"
    return csv_path, csv_path.with_suffix(".json")


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def run_experiment(args) -> int:
    name = args.experiment
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "command", "experiment", "out", "jobs", "timing")}
    setup_fn, trial_fn, summary_fn = EXPERIMENTS[name]
    setup = setup_fn(cfg)
    n = args.trials
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs, initializer=_init_worker, initargs=(setup,)) as ex:
            results = list(ex.map(_run_trial, [(name, i) for i in range(n)]))
    else:
        results = [trial_fn(setup, i) for i in range(n)]
    rows = [r for res in results for r in res.rows]
    violations = sum(res.violations for res in results)
    wall = sum(r.get("wall_time") or 0.0 for r in rows)
    report = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "command": f"experiment {name}",
        "config": cfg,
        "bounds": setup["bounds"],
        "measured": summary_fn(setup, rows),
        "trials": n,
        "rows": len(rows),
        "soundness_violations": violations,
    }
    if args.timing:
        report["wall_time_total"] = wall
    csv_path, json_path = _out_paths(args, name)
    _write(csv_path, _csv_text(rows, args.timing))
    text = json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"
    _write(json_path, text)
    print(json.dumps(_clean({"measured": report["measured"], "bounds": report["bounds"],
                             "soundness_violations": violations}), sort_keys=True))
    print(f"wrote {csv_path} and {json_path}")
    return 1 if violations else 0


def run_bogolyubov(args) -> int:
    rep = bogolyubov_report(args.p, args.n, args.density, args.seed, args.samples, args.points, args.quasipoly)
    print(f"|R| = {rep['spectrum_size']} (bound 1/alpha^2 = {rep['spectrum_bound']:.4g}): "
          f"{'ok' if rep['spectrum_ok'] else 'VIOLATED'}")
    print(f"codim(V) = {rep['codim_V']}")
    print(f"Parseval: sum |1_X^(r)|^2 = {rep['parseval']:.9f} vs alpha = {rep['density']:.9f} "
          f"(error {rep['parseval_error']:.2e}): {'ok' if rep['parseval_ok'] else 'VIOLATED'}")
    print("decomposition success rates: " + ", ".join(f"{r:.5f}" for r in rep["decomposition_rates"])
          + f" vs alpha^5 = {rep['decomposition_bound']:.6f}: {'ok' if rep['decomposition_ok'] else 'LOW'}")
    if "quasipoly" in rep:
        print("quasi-polynomial path: " + json.dumps(_clean(rep["quasipoly"]), sort_keys=True))
    if args.out:
        _write(Path(args.out), json.dumps(_clean({"schema_version": SCHEMA_VERSION, **rep}), indent=2, sort_keys=True) + "\n")
    return 0 if rep["spectrum_ok"] and rep["parseval_ok"] and rep["decomposition_ok"] else 1


def run_bias(args) -> int:
    rep = bias_report(args.n, args.p, args.c, args.seed)
    print(f"|S| = {rep['size']}  exhaustive bias = {rep['bias']:.6f}  (target {rep['target']})")
    if args.out:
        _write(Path(args.out), json.dumps(_clean({"schema_version": SCHEMA_VERSION, **rep}), indent=2, sort_keys=True) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="selfcorrect", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("experiment", help="run a seeded reduction experiment")
    exs = ex.add_subparsers(dest="experiment", required=True)

    def common(sp, trials, **defaults):
        sp.add_argument("--p", type=int, default=defaults.get("p", 2))
        sp.add_argument("--alpha", type=float, default=defaults.get("alpha", 0.25))
        sp.add_argument("--delta", type=float, default=0.1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--trials", type=int, default=trials)
        sp.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
        sp.add_argument("--out", help=f"CSV path; JSON goes next to it (default ${OUT_ENV} or .)")
        sp.add_argument("--timing", action="store_true", help="fill wall_time columns (breaks byte-identity)")
        sp.set_defaults(func=run_experiment)

    mm = exs.add_parser("mm", help="worst-case matrix multiplication from a planted multiplier")
    common(mm, 10, alpha=0.3)
    mm.add_argument("--n", type=int, default=8)
    mm.add_argument("--kind", choices=["small", "large", "auto"], default="auto")
    mm.add_argument("--c-k", dest="c_k", type=float, default=1.0)
    mm.add_argument("--c-r", dest="c_r", type=float, default=3.5)
    mm.add_argument("--budget", type=int, default=None)

    ld = exs.add_parser("linear-ds", help="worst-case linear data structure")
    common(ld, 20)
    ld.add_argument("--n", type=int, default=10)
    ld.add_argument("--m", type=int, default=16)

    om = exs.add_parser("omv", help="worst-case online matrix-vector multiplication")
    common(om, 5)
    om.add_argument("--n", type=int, default=8)
    om.add_argument("--queries", type=int, default=4, help="queries per matrix")

    rm = exs.add_parser("rm", help="worst-case Reed-Muller evaluation")
    common(rm, 10, p=101, alpha=0.5)
    rm.add_argument("--m", type=int, default=2)
    rm.add_argument("--d", type=int, default=5)
    rm.add_argument("--queries", type=int, default=5, help="queries per polynomial")
    rm.add_argument("--perfect", action="store_true", help="use an oracle that is always right")

    bg = sub.add_parser("bogolyubov", help="probabilistic Bogolyubov audit")
    bgs = bg.add_subparsers(dest="action", required=True)
    bv = bgs.add_parser("verify")
    bv.add_argument("--p", type=int, default=2)
    bv.add_argument("--n", type=int, default=12)
    bv.add_argument("--density", type=float, default=0.25)
    bv.add_argument("--seed", type=int, default=0)
    bv.add_argument("--samples", type=int, default=20_000)
    bv.add_argument("--points", type=int, default=5)
    bv.add_argument("--quasipoly", action="store_true")
    bv.add_argument("--out")
    bv.set_defaults(func=run_bogolyubov)

    bi = sub.add_parser("bias", help="small-bias sets")
    bis = bi.add_subparsers(dest="action", required=True)
    bm = bis.add_parser("measure")
    bm.add_argument("--n", type=int, default=8)
    bm.add_argument("--p", type=int, default=2)
    bm.add_argument("--c", type=float, default=48.0)
    bm.add_argument("--seed", type=int, default=0)
    bm.add_argument("--out")
    bm.set_defaults(func=run_bias)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Infeasible as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
