"""Command-line front end: ``bperc <command> [options]``.

Results go to stdout (or ``--out``) as JSON by default; a run manifest with a
SHA-256 digest of the payload goes to ``--manifest`` or, failing that, to stderr.

Exit codes: 0 success, 2 usage or input error, 3 resource cap, 4 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import io
import json
import math
import platform
import sys
from importlib import metadata

import numpy as np

from . import bounds, mechanisms, oracle
from .errors import BpercError, ConvergenceError, ResourceCapError
from .estimator import default_threads, estimate_I, estimate_L_window, estimate_p_alpha, sweep
from .lattice import Rect, Stream, closure, format_grid, is_internally_spanned, parse_grid
from .verify import SUITES, run_suites

EXIT_OK, EXIT_USAGE, EXIT_CAP, EXIT_VERIFY = 0, 2, 3, 4


class _UsageError(Exception):
    pass


# ---------------------------------------------------------------- parsing helpers


def _ints(text):
    return [int(x) for x in text.replace(",", " ").split()]


def _floats(text):
    return [float(x) for x in text.replace(",", " ").split()]


def _pairs(text):
    """``"a1,b1;a2,b2"`` -> ((a1, b1), (a2, b2)); empty string -> ()."""
    out = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        a, b = _ints(chunk)
        out.append((a, b))
    return tuple(out)


def _log_L(args):
    if args.lnL is not None:
        return args.lnL
    if args.log10L is not None:
        return args.log10L * math.log(10.0)
    if args.L is not None:
        return math.log(args.L)
    raise _UsageError("give one of --L, --lnL or --log10L")


def _read_grid(path):
    text = sys.stdin.read() if path in (None, "-") else open(path, encoding="utf-8").read()
    return parse_grid(text)


def _spec_from(args):
    if args.spec:
        return mechanisms.MechanismSpec.from_json(args.spec)
    if args.B is None:
        raise _UsageError("give --spec JSON or --B (with optional --pairs)")
    return mechanisms.MechanismSpec(args.B, _pairs(args.pairs or ""))


def _records_csv(records):
    if not records:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(records[0]), lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})
    return buf.getvalue()


def _render(obj, fmt):
    """Payload text for a dict (or list of flat dicts for CSV)."""
    if fmt == "csv":
        records = obj if isinstance(obj, list) else [obj]
        flat = [{k: v for k, v in r.items() if not isinstance(v, (list, dict))} for r in records]
        return _records_csv(flat)
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- commands


def cmd_closure(args):
    cfg = _read_grid(args.input)
    closed = closure(cfg, args.model)
    if args.format == "json":
        return _render({
            "model": args.model,
            "spanned": bool(closed.is_full()),
            "occupied": len(cfg),
            "infected": len(closed),
            "grid": format_grid(closed),
        }, "json")
    return format_grid(closed)


def cmd_simulate(args):
    est = estimate_I(args.L, args.p, args.model, args.trials, args.seed, args.threads)
    return _render({"model": args.model, "L": args.L, "p": args.p, **est.as_dict()}, args.format)


def cmd_pc(args):
    res = estimate_p_alpha(
        args.L, args.alpha, args.model, tol=args.tol, trials_per_probe=args.trials,
        seed=args.seed, bracket=(args.lo, args.hi), threads=args.threads,
    )
    out = {"model": args.model, **res.as_dict(), "p_logL": res.value * math.log(args.L)}
    if args.format == "csv":
        return _render([{"model": args.model, "L": args.L, "alpha": args.alpha, **pr} for pr in out["probes"]], "csv")
    return _render(out, "json")


def cmd_lwindow(args):
    res = estimate_L_window(
        args.p, args.eps, args.model, args.trials, args.seed,
        L_min=args.L_min, L_max=args.L_max, ratio=args.ratio, threads=args.threads,
    )
    out = res.as_dict()
    out["model"] = args.model
    if res.L_lower > 0 and res.L_upper > 0:
        out["p_log_ratio"] = args.p * (math.log(res.L_upper) - math.log(res.L_lower))
    if args.format == "csv":
        return _render([{"model": args.model, "p": args.p, **e} for e in out["estimates"]], "csv")
    return _render(out, "json")


def cmd_sweep(args):
    if args.points:
        points = []
        for chunk in args.points.split(";"):
            L, p = chunk.split(":")
            points.append((int(L), float(p)))
    else:
        if not (args.L_list and args.p_list):
            raise _UsageError("give --points or both --Ls and --ps")
        points = [(L, p) for L in _ints(args.L_list) for p in _floats(args.p_list)]
    res = sweep(points, args.model, args.trials, args.seed, args.threads)
    for L, p, msg in res.errors:
        print(f"bperc sweep: skipped L={L} p={p}: {msg}", file=sys.stderr)
    if args.format == "csv":
        return res.to_csv()
    return _render(res.as_dict(), "json")


def cmd_bounds(args):
    f = args.formula
    if f == "comp_lower":
        rep = bounds.comp_lower(args.L, args.ell, args.p, args.I)
    elif f == "comp_upper":
        rep = bounds.comp_upper(args.L, args.ell, args.p, args.I)
    elif f == "diag":
        rep = bounds.diag_lower(args.a, args.p)
    elif f == "growth":
        rep = bounds.growth_lower(args.I, args.a, args.b, args.p)
    elif f == "scan":
        rep = bounds.scan_lower(args.b, args.ell, args.m, args.p, args.I)
    elif f == "modnuc":
        rep = bounds.mod_nuc_lower(args.B, args.p)
    elif f == "explicit":
        ok, rep = bounds.explicit_certificate(args.p, _log_L(args))
        return _render({"certified": ok, **rep.as_dict()}, args.format)
    elif f == "window":
        c_minus, c_plus = bounds.window_constants(args.eps)
        return _render({"eps": args.eps, "C_minus": c_minus, "C_plus": c_plus}, args.format)
    elif f == "constants":
        t = bounds.THRESHOLDS
        return _render({"lambda": t.lam, "lambda_M": t.lam_M}, args.format)
    else:  # pragma: no cover - argparse restricts choices
        raise _UsageError(f"unknown formula {f}")
    return _render(rep.as_dict(), args.format)


def cmd_mech(args):
    action = args.action
    if action == "check":
        cfg = _read_grid(args.input)
        spec = _spec_from(args)
        trace = {f"J({a},{b})": mechanisms.event_J_clauses(cfg, a, b) for a, b in spec.pairs}
        return _render({"spec": json.loads(spec.to_json()), "E": mechanisms.check_event_E(cfg, spec),
                        "jogs": trace}, "json")
    if action == "prob":
        if args.event == "D":
            value = mechanisms.prob_event_D(args.a, args.b, args.p)
        elif args.event == "J":
            value = mechanisms.prob_event_J(args.a, args.b, args.p)
        else:
            value = mechanisms.prob_event_E(_spec_from(args), args.p)
        return _render({"event": args.event, "p": args.p, "probability": value}, args.format)
    if action == "sample":
        spec = _spec_from(args)
        cfg = mechanisms.sample_conditioned_on_E(spec, args.p, Stream(args.seed))
        if args.format == "json":
            return _render({"spec": json.loads(spec.to_json()), "seed": args.seed,
                            "spanned": is_internally_spanned(cfg, "standard"), "grid": format_grid(cfg)}, "json")
        return format_grid(cfg)
    if action == "decode":
        cfg = _read_grid(args.input)
        B = args.B if args.B is not None else cfg.domain.width
        return _render(json.loads(mechanisms.decode_mechanism(cfg, B).to_json()), "json")
    if action == "lower":
        if args.m is not None:
            rep = mechanisms.possibility_family_lower(args.B, args.p, args.m)
        else:
            rep = mechanisms.mechanism_family_lower(args.B, args.p, mechanisms.all_specs(args.B, args.max_pairs))
        return _render(rep.as_dict(), args.format)
    raise _UsageError(f"unknown mech action {action}")  # pragma: no cover


def cmd_oracle(args):
    if args.action == "poly":
        width = args.width if args.width is not None else args.L
        height = args.height if args.height is not None else width
        if width is None:
            raise _UsageError("give --L or --width/--height")
        poly = oracle.exact_span_polynomial(Rect.of_size(width, height), args.model, workers=args.threads)
        out = json.loads(poly.to_json())
        if args.p is not None:
            out["I"] = poly(args.p)
        return json.dumps(out, sort_keys=True) + "\n"
    if args.action == "dgap":
        value = oracle.double_gap_exact(_floats(args.u or ""))
        return _render({"u": _floats(args.u or ""), "probability": value}, args.format)
    raise _UsageError(f"unknown oracle action {args.action}")  # pragma: no cover


def cmd_verify(args):
    results = run_suites(args.suite, seed=args.seed)
    payload = _render({"seed": args.seed, "passed": all(r.passed for r in results),
                       "checks": [r.as_dict() for r in results]}, "json")
    return payload, (EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY)


# ---------------------------------------------------------------- parser


def _common(p, seed=True, model=True, fmt=("json", "csv")):
    if model:
        p.add_argument("--model", choices=["standard", "modified"], default="standard")
    if seed:
        p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $BPERC_THREADS or CPU count)")
    p.add_argument("--format", choices=list(fmt), default=fmt[0])
    p.add_argument("--out", default=None, help="write the payload here instead of stdout")
    p.add_argument("--manifest", default=None, help="write the run manifest here instead of stderr")


def build_parser():
    parser = argparse.ArgumentParser(prog="bperc", description="Bootstrap percolation laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("closure", help="close a grid read from --in (grid text format)")
    p.add_argument("--in", dest="input", default="-")
    _common(p, seed=False, fmt=("grid", "json"))

    p = sub.add_parser("simulate", help="Monte Carlo estimate of I(L, p)")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--trials", type=int, default=10_000)
    _common(p)

    p = sub.add_parser("pc", help="stochastic bisection for p_alpha(L)")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--trials", type=int, default=1000, help="trials per probe")
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=1.0)
    _common(p)

    p = sub.add_parser("lwindow", help="estimate the L-window at fixed p")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--L-min", dest="L_min", type=int, default=1)
    p.add_argument("--L-max", dest="L_max", type=int, default=1 << 16)
    p.add_argument("--ratio", type=float, default=1.05)
    _common(p)

    p = sub.add_parser("sweep", help="estimates of I over a list or grid of (L, p)")
    p.add_argument("--points", default=None, help='"L:p;L:p;..."')
    p.add_argument("--Ls", dest="L_list", default=None, help="comma-separated L values (grid with --ps)")
    p.add_argument("--ps", dest="p_list", default=None, help="comma-separated p values")
    p.add_argument("--trials", type=int, default=10_000)
    _common(p)

    p = sub.add_parser("bounds", help="evaluate a rigorous bound")
    p.add_argument("formula", choices=["comp_lower", "comp_upper", "diag", "growth", "scan", "modnuc",
                                       "explicit", "window", "constants"])
    for name, typ in (("--L", int), ("--ell", int), ("--a", int), ("--b", int), ("--m", int), ("--B", int),
                      ("--p", float), ("--I", float), ("--eps", float), ("--lnL", float), ("--log10L", float)):
        p.add_argument(name, type=typ, default=None)
    _common(p, seed=False, model=False)

    p = sub.add_parser("mech", help="growth mechanisms: check, prob, sample, decode, lower")
    p.add_argument("action", choices=["check", "prob", "sample", "decode", "lower"])
    p.add_argument("--in", dest="input", default="-")
    p.add_argument("--spec", default=None, help='JSON, e.g. {"B": 20, "pairs": [[5, 10]]}')
    p.add_argument("--B", type=int, default=None)
    p.add_argument("--pairs", default=None, help='"a1,b1;a2,b2"')
    p.add_argument("--event", choices=["D", "J", "E"], default="E")
    p.add_argument("--a", type=int, default=None)
    p.add_argument("--b", type=int, default=None)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--m", type=int, default=None, help="lower: sum over the m-jog possibility family")
    p.add_argument("--max-pairs", dest="max_pairs", type=int, default=None)
    _common(p, model=False, fmt=("json", "csv", "grid"))

    p = sub.add_parser("oracle", help="exact span polynomial or double-gap probability")
    p.add_argument("action", choices=["poly", "dgap"])
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--u", default=None, help="comma-separated probabilities")
    _common(p, seed=False)

    p = sub.add_parser("verify", help="run the invariant suites")
    p.add_argument("--suite", action="append", choices=["all", *SUITES], default=None)
    _common(p, model=False, fmt=("json",))
    return parser


COMMANDS = {
    "closure": cmd_closure,
    "simulate": cmd_simulate,
    "pc": cmd_pc,
    "lwindow": cmd_lwindow,
    "sweep": cmd_sweep,
    "bounds": cmd_bounds,
    "mech": cmd_mech,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
}


def _versions():
    out = {"python": platform.python_version(), "numpy": np.__version__}
    for pkg in ("artifact", "numba", "scipy"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _manifest(argv, args, payload: bytes):
    return {
        "argv": ["bperc", *argv],
        "seed": getattr(args, "seed", None),
        "threads": getattr(args, "threads", None) or default_threads(),
        "versions": _versions(),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "sha256": hashlib.sha256(payload).hexdigest(),
        "bytes": len(payload),
    }


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "verify" and args.suite is None:
        args.suite = ["all"]
    code = EXIT_OK
    try:
        result = COMMANDS[args.command](args)
        if isinstance(result, tuple):
            result, code = result
    except ResourceCapError as exc:
        print(f"bperc {args.command}: resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (BpercError, ConvergenceError, _UsageError, OSError, ValueError, TypeError) as exc:
        print(f"bperc {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    payload = result.encode("utf-8")
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(payload)
    else:
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()
    manifest = json.dumps(_manifest(argv, args, payload), sort_keys=True)
    if args.manifest:
        with open(args.manifest, "w", encoding="utf-8") as fh:
            fh.write(manifest + "\n")
    else:
        print(manifest, file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
