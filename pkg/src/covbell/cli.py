"""``covbell`` command line: evaluation, certification, optimization and reproduction.

Exit codes: 0 success, 1 reproduction or certification mismatch, 2 input
error, 3 domain violation (signalling data), 4 optimizer non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .correlations import DistributionError, SignallingError, correlators, load_distribution
from .exact import format_rational
from .expressions import PRESETS, get_expression, load_expression
from .kkt import D_MAX, CertificationError, certify, table1, write_report_csv, write_solutions_json
from .localset import DeterministicStrategy, localset_scan, numeric_local_bound
from .quantum import (
    Observable,
    QuantumError,
    QuantumStrategy,
    activation_curve,
    mixed_reference_strategy,
    optimize_measurements,
    phi_plus,
    phi_theta,
    psi_theta,
    pure_reference_strategy,
    quantum_correlators,
    rho_theta,
)
from .reproduce import TARGETS, reproduce
from .witness import InfeasibleError, entropy_curve, min_shannon_entropy, write_curve_csv

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT = 2
EXIT_DOMAIN = 3
EXIT_NONCONVERGED = 4


class InputError(Exception):
    pass


# rendering -------------------------------------------------------------------


def fmt(x) -> str:
    if isinstance(x, (Fraction, int)) and not isinstance(x, bool):
        return format_rational(x)
    return f"{float(x):.12g}"


def show(x) -> str:
    """Exact values as ``p/q ≈ decimal``, floats at 12 significant digits."""
    if isinstance(x, Fraction) and x.denominator != 1:
        return f"{format_rational(x)} ≈ {float(x):.6f}"
    return fmt(x)


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, bool) or x is None or isinstance(x, str):
        return x
    if isinstance(x, Fraction):
        return format_rational(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(f"{float(x):.12g}")
    return str(x)


def emit(args, payload: dict, text: str, rows=None) -> None:
    """Write ``payload`` as JSON, ``rows`` as CSV, or ``text`` for the terminal."""
    if args.format == "json":
        out = json.dumps(jsonable(payload), indent=2, ensure_ascii=False) + "\n"
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for r in rows if rows is not None else [[k, v] for k, v in jsonable(payload).items()]:
            w.writerow(r)
        out = buf.getvalue()
    else:
        out = text.rstrip("\n") + "\n"
    if args.out and not getattr(args, "out_is_dir", False):
        Path(args.out).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)


def write_manifest(args, started: float, status: int, extra=None) -> None:
    if not args.out:
        return
    out = Path(args.out)
    path = out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")
    if not path.parent.is_dir():
        return  # the run already failed on the missing directory
    config = {k: v for k, v in vars(args).items() if k not in ("func", "out_is_dir")}
    doc = {
        "command": args.command,
        "config": jsonable(config),
        "exit_code": status,
        "versions": {
            "covbell": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "elapsed_seconds": round(time.perf_counter() - started, 3),
    }
    if extra:
        doc.update(jsonable(extra))
    path.write_text(json.dumps(doc, indent=2) + "\n")


# commands ----------------------------------------------------------------------


def cmd_eval(args) -> int:
    try:
        dist = load_distribution(args.file)
    except SignallingError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {args.file}: {exc}") from None
    corr = correlators(dist)
    if args.expression_file:
        exprs = [load_expression(args.expression_file)]
    elif args.expression:
        exprs = [get_expression(n) for n in args.expression]
    else:
        exprs = [e for e in PRESETS.values() if e.shape == corr.shape]
    if not exprs:
        raise InputError(f"no preset expression applies to a {corr.shape[0]}x{corr.shape[1]} scenario")

    cov = corr.covariances()
    pear = corr.pearsons()
    values, flags = {}, {}
    for e in exprs:
        v = e(corr)
        values[e.name] = v
        if e.local_bound is not None and float(v) > e.local_bound + args.tol:
            flags[e.name] = f"exceeds local bound {_bound_text(e)}"
    lines = []
    n_x, n_y = corr.shape
    for x in range(n_x):
        for y in range(n_y):
            lines.append(
                f"<A{x}B{y}> = {show(corr.exy[x, y])}   cov = {show(cov[x, y])}   r = {fmt(pear[x, y])}"
            )
    lines += [f"<A{x}> = {show(corr.ex[x])}" for x in range(n_x)]
    lines += [f"<B{y}> = {show(corr.ey[y])}" for y in range(n_y)]
    for name, v in values.items():
        note = f"   [{flags[name]}]" if name in flags else ""
        lines.append(f"{name} = {show(v)}{note}")
    payload = {
        "exy": corr.exy,
        "ex": corr.ex,
        "ey": corr.ey,
        "covariances": cov,
        "pearson": pear,
        "expressions": values,
        "flags": flags,
    }
    rows = [["quantity", "value"]] + [[k, jsonable(v)] for k, v in values.items()]
    emit(args, payload, "\n".join(lines), rows)
    return EXIT_OK


def _bound_text(expr) -> str:
    known = {"covchsh": "16/7", "cov3322": "9/2", "rchsh": "5/2"}
    return known.get(expr.name, fmt(expr.local_bound))


def cmd_certify(args) -> int:
    try:
        cert = certify(args.method, args.d_min, args.d_max, args.jobs)
    except CertificationError as exc:
        print(f"certification mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    if args.report and cert.weights_report is not None:
        write_report_csv(cert.weights_report, args.report)
    if args.solutions and cert.weights_cases:
        write_solutions_json(cert.weights_cases, args.solutions)
    lines = [f"covCHSH local bound = {show(cert.bound)}"]
    payload = {"bound": cert.bound, "method": args.method}
    if cert.weights_report is not None:
        lines.append("weights enumeration:")
        lines.append(cert.weights_report.to_csv().rstrip())
        payload["weights_maximum"] = cert.weights_report.maximum
        payload["table1"] = table1(cert.weights_cases)
    if cert.expectations_report is not None:
        er = cert.expectations_report
        lines.append(
            f"expectations enumeration: {er.cases} systems, {er.consistent_eq} consistent, "
            f"{er.consistent_full} feasible, maximum {show(er.maximum)}"
        )
        payload["expectations_maximum"] = er.maximum
    emit(args, payload, "\n".join(lines))
    return EXIT_OK


def cmd_local_bound(args) -> int:
    expr = load_expression(args.expression_file) if args.expression_file else get_expression(args.expression)
    res = numeric_local_bound(expr, args.restarts, args.tol, args.seed, args.jobs)
    payload = {
        "expression": expr.name,
        "bound": res.bound,
        "converged": res.converged,
        "restarts": res.restarts,
        "successes": res.successes,
        "decomposition": res.best.to_json_dict(),
    }
    text = f"{expr.name} local bound ≈ {fmt(res.bound)}  ({res.successes}/{res.restarts} restarts converged)"
    emit(args, payload, text)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _state(args):
    if args.state == "phi+":
        return phi_plus()
    if args.theta is None:
        raise InputError("--theta is required for this state")
    return {"phi": phi_theta, "psi": psi_theta, "rho": rho_theta}[args.state](args.theta)


def _reference_strategy(args, state) -> QuantumStrategy:
    if args.state == "rho":
        return mixed_reference_strategy(args.theta)
    if args.state == "phi+":
        z, x = Observable.from_pauli(z=1), Observable.from_pauli(x=1)
        return QuantumStrategy(state, (z, x), (Observable.from_pauli(z=1, x=1), Observable.from_pauli(z=1, x=-1)))
    ref = pure_reference_strategy(args.theta)
    return QuantumStrategy(state, ref.a_obs, ref.b_obs)


def cmd_quantum(args) -> int:
    if args.curve:
        try:
            lo, hi, steps = args.curve.split(",")
            thetas = np.linspace(float(lo), float(hi), int(steps))
        except ValueError:
            raise InputError("--curve expects from,to,steps") from None
        pts = activation_curve(thetas, args.restarts, args.seed, args.jobs)
        rows = [["theta", "pure_opt", "mixed_opt", "pure_ref", "mixed_ref"]]
        rows += [[fmt(p.theta), fmt(p.pure_opt), fmt(p.mixed_opt), fmt(p.pure_ref), fmt(p.mixed_ref)] for p in pts]
        args.format = "csv"
        emit(args, {}, "", rows)
        return EXIT_OK
    expr = get_expression(args.expression)
    state = _state(args)
    converged = True
    if args.optimize:
        res = optimize_measurements(state, expr, args.restarts, args.seed, args.povm, jobs=args.jobs)
        strat, value, converged = res.strategy, res.value, res.converged
    else:
        if expr.shape != (2, 2):
            raise InputError(f"no reference settings for {expr.name}; pass --optimize")
        strat = _reference_strategy(args, state)
        value = expr(quantum_correlators(strat))
    payload = {
        "state": args.state,
        "theta": args.theta,
        "expression": expr.name,
        "value": value,
        "optimized": args.optimize,
        "alice": [{"bloch": o.bloch, "bias": o.bias} for o in strat.a_obs],
        "bob": [{"bloch": o.bloch, "bias": o.bias} for o in strat.b_obs],
    }
    lines = [f"{expr.name} = {fmt(value)}"]
    for name, obs in (("A", strat.a_obs), ("B", strat.b_obs)):
        for i, o in enumerate(obs):
            lines.append(f"  {name}{i}: n = ({', '.join(fmt(v) for v in o.bloch)}), bias {fmt(o.bias)}")
    emit(args, payload, "\n".join(lines))
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_witness(args) -> int:
    p = min_shannon_entropy(args.value, args.tol, exhaustive=args.exhaustive, seed=args.seed)
    terms = sorted(((p.decomposition.weights[k], k) for k in p.decomposition.support), reverse=True)
    payload = {
        "c": p.c,
        "min_shannon": p.min_shannon,
        "min_max_entropy": p.min_max_entropy,
        "decomposition": {DeterministicStrategy.from_index(k, 2, 2).label: w for w, k in terms},
        "constraint_error": p.constraint_error,
    }
    lines = [
        f"covCHSH = {fmt(p.c)}",
        f"minimal Shannon entropy H = {fmt(p.min_shannon)} bits",
        f"minimal max-entropy log2 d = {fmt(p.min_max_entropy)} bits (d >= {round(2 ** p.min_max_entropy)})",
        "witness decomposition: "
        + " + ".join(f"{fmt(w)} ({DeterministicStrategy.from_index(k, 2, 2).label})" for w, k in terms),
    ]
    emit(args, payload, "\n".join(lines))
    return EXIT_NONCONVERGED if p.flagged else EXIT_OK


def cmd_witness_curve(args) -> int:
    pts = entropy_curve(getattr(args, "from"), args.to, args.steps, args.tol, args.jobs)
    if args.out:
        write_curve_csv(pts, args.out)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["c", "min_shannon", "min_max_entropy"])
        w.writerows([fmt(p.c), fmt(p.min_shannon), fmt(p.min_max_entropy)] for p in pts)
        sys.stdout.write(buf.getvalue())
    return EXIT_NONCONVERGED if any(p.flagged for p in pts) else EXIT_OK


def cmd_localset_scan(args) -> int:
    pts = localset_scan(args.directions, args.restarts, args.seed, args.jobs)
    rows = [["theta", "covchsh", "covchsh_prime"]]
    rows += [[fmt(p.theta), fmt(p.covchsh), fmt(p.covchsh_prime)] for p in pts]
    args.format = "csv"
    emit(args, {}, "", rows)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    targets = TARGETS if args.target == "all" else (args.target,)
    outdir = Path(args.out) if args.out else None
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    summary = {}
    for t in targets:
        res = reproduce(t, seed=args.seed, jobs=args.jobs)
        if outdir:
            for name, content in res.artifacts.items():
                (outdir / name).write_text(content)
        for c in res.checks:
            print(f"[{'PASS' if c.passed else 'FAIL'}] {t}: {c.name}: {c.actual}")
        if not res.passed:
            print(res.diff_report(), file=sys.stderr)
            status = EXIT_MISMATCH
        summary[t] = {"passed": res.passed, "checks": [vars(c) for c in res.checks]}
    args.reproduce_summary = summary
    return status


# parser ------------------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, defaults: bool) -> None:
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=d(42), help="base RNG seed (default 42)")
    p.add_argument("--jobs", type=int, default=d(os.cpu_count() or 1), help="worker processes")
    p.add_argument("--tol", type=float, default=d(1e-9), help="numerical tolerance")
    p.add_argument("--out", default=d(None), help="output file (directory for reproduce)")
    p.add_argument("--format", choices=("text", "json", "csv"), default=d("text"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covbell", description="Covariance Bell inequalities toolkit.")
    parser.add_argument("--version", action="version", version=f"covbell {__version__}")
    _global_flags(parser, True)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, False)
        p.set_defaults(func=func)
        return p

    p = add("eval", cmd_eval, "evaluate expressions on a distribution file")
    p.add_argument("file")
    p.add_argument("--expression", action="append", help="preset name (repeatable)")
    p.add_argument("--expression-file", help="custom expression JSON")

    p = add("certify", cmd_certify, "exact covCHSH local bound via KKT enumeration")
    p.add_argument("--method", choices=("weights", "expectations", "both"), default="both")
    p.add_argument("--d-min", type=int, default=2)
    p.add_argument("--d-max", type=int, default=D_MAX)
    p.add_argument("--report", help="write the per-d enumeration table as CSV")
    p.add_argument("--solutions", help="write the maximal decompositions as JSON")

    p = add("local-bound", cmd_local_bound, "numeric local bound by multi-start optimization")
    p.add_argument("--expression", default="covchsh")
    p.add_argument("--expression-file")
    p.add_argument("--restarts", type=int)

    p = add("quantum", cmd_quantum, "two-qubit values, optimization and activation curves")
    p.add_argument("--state", choices=("phi", "psi", "rho", "phi+"), default="phi+")
    p.add_argument("--theta", type=float)
    p.add_argument("--expression", default="covchsh")
    p.add_argument("--optimize", action="store_true")
    p.add_argument("--povm", action="store_true", help="allow unsharp, biased observables")
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--curve", help="from,to,steps: activation curve CSV")

    p = add("witness", cmd_witness, "minimal shared randomness for a covCHSH value")
    p.add_argument("--value", type=float, required=True)
    p.add_argument("--exhaustive", action="store_true", help="also run SLSQP over all 16 weights")

    p = add("witness-curve", cmd_witness_curve, "entropy curves over a covCHSH range")
    p.add_argument("--from", type=float, default=0.0)
    p.add_argument("--to", type=float, default=16 / 7)
    p.add_argument("--steps", type=int, default=200)

    p = add("localset-scan", cmd_localset_scan, "boundary of the local set in the covCHSH/covCHSH' plane")
    p.add_argument("--directions", type=int, default=360)
    p.add_argument("--restarts", type=int, default=20)

    p = add("reproduce", cmd_reproduce, "regenerate tables, figures and bounds")
    p.add_argument("target", choices=TARGETS + ("all",))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    args.out_is_dir = args.command == "reproduce"
    try:
        if args.out and not args.out_is_dir and not Path(args.out).resolve().parent.is_dir():
            raise InputError(f"output directory for {args.out} does not exist")
        status = args.func(args)
    except SignallingError as exc:
        print(f"domain violation: {exc}", file=sys.stderr)
        status = EXIT_DOMAIN
    except (InputError, DistributionError, InfeasibleError, QuantumError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_INPUT
    write_manifest(args, started, status, {"reproduce": getattr(args, "reproduce_summary", None)})
    return status


if __name__ == "__main__":
    sys.exit(main())
