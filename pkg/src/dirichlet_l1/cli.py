"""Command-line entry point: ``dirichlet-l1 {solve,verify,heat,sweep,report}``.

Exit codes: 0 success; 1 an explicit-constant check failed (or a sweep left
its golden envelope); 2 usage, input/output, parse or validation errors; 3
any other module error; 4 an unexpected internal error. Errors are written
to standard error as a single JSON object.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, gallery, jsonio
from .errors import DirichletError, InputOutputError, UsageError
from .geometry import rasterize, resolve_domain
from .heat import check_e59, check_e510_ratio, check_lemma52, heat_series
from .reports import FAILING
from .spectral import EigenData, solve_domain

USAGE_KINDS = ("usage", "io", "parse", "validation")
DEFAULT_OUT = "out"
HEAT_EXACT_TMAX = (200 * math.pi) ** 2
HEAT_ORACLE_H_1D = 1 / 512


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text, what):
    try:
        vals = [float(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad {what} list {text!r}") from None
    if not vals:
        raise UsageError(f"empty {what} list")
    return vals


def _int_list(text, what):
    vals = _float_list(text, what)
    if any(v != int(v) or v < 1 for v in vals):
        raise UsageError(f"{what} values must be positive integers")
    return [int(v) for v in vals]


def _h_value(text):
    try:
        if "/" in text:
            a, b = text.split("/")
            return float(a) / float(b)
        return float(text)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"bad grid spacing {text!r}") from None


def build_parser():
    common = _Parser(add_help=False)
    g = common.add_argument_group("domain and solve")
    g.add_argument("--spec", help="domain spec file")
    g.add_argument("--preset", help="preset call such as 'dumbbell(2,0.2)'")
    g.add_argument("--h", type=_h_value, help="grid spacing (accepts 1/128)")
    g.add_argument("--exact", action="store_true", help="closed-form 1D spectrum")
    g.add_argument("--count", type=int, help="number of eigenpairs")
    g.add_argument("--tmax", type=float, help="all eigenvalues up to this level")
    g.add_argument("--eig", help="eig JSON written by 'solve'")
    o = common.add_argument_group("output")
    o.add_argument("--out", help=f"output directory (default $OUTPUT_DIR or ./{DEFAULT_OUT})")
    o.add_argument("--format", choices=("json", "csv", "table"), default="table")
    o.add_argument("--checks", help="comma-separated check ids, or 'all'")
    o.add_argument("--update-golden", action="store_true",
                   help="rewrite the stored golden envelope from this run")

    p = _Parser(prog="dirichlet-l1", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("solve", parents=[common], help="compute eigenpairs and write eig JSON")
    s.add_argument("--functions", action="store_true", help="also dump binary eigenfunctions")
    sub.add_parser("verify", parents=[common], help="run checks (whole gallery by default)")
    hp = sub.add_parser("heat", parents=[common], help="heat trace and content series")
    hp.add_argument("--t", default=",".join(str(t) for t in gallery.HEAT_TIMES),
                    help="comma-separated times")
    hp.add_argument("--oracle", action="store_true", help="add the time-stepping Q column")
    sw = sub.add_parser("sweep", parents=[common], help="run a preset family")
    sw.add_argument("--family", required=True)
    sw.add_argument("--m", default=None, help="comma-separated m values")
    sw.add_argument("--eps", default="0.4,0.2,0.1", help="comma-separated neck widths")
    rp = sub.add_parser("report", parents=[common], help="re-render a verdict JSON")
    rp.add_argument("input", help="verdict JSON written by verify or sweep")
    return p


# ---------------------------------------------------------------------------
# helpers

def out_dir(args):
    path = Path(args.out or os.environ.get("OUTPUT_DIR") or DEFAULT_OUT)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputOutputError(f"cannot create output directory {path}: {exc}") from None
    return path


def _read(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputOutputError(f"cannot read {path}: {exc.strerror or exc}", path=str(path)) from None


def _write(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise InputOutputError(f"cannot write {path}: {exc.strerror or exc}", path=str(path)) from None


def domain_text(args):
    if args.spec and args.preset:
        raise UsageError("give either --spec or --preset, not both")
    if args.spec:
        return _read(args.spec)
    return args.preset


def make_case(args, text, default_count=30):
    spec = resolve_domain(text)
    if args.exact:
        if spec.dimension != 1:
            raise UsageError("--exact needs a 1D interval domain")
        h = None
    else:
        if args.h is None:
            raise UsageError("grid solves need --h (or --exact for 1D)")
        if not args.h > 0:
            raise UsageError("--h must be positive")
        h = args.h
    count = default_count if args.count is None else args.count
    if count < 1:
        raise UsageError("--count must be positive")
    return gallery.Case(spec.label, text.strip(), h=h, exact=args.exact, count=count,
                        local_h=gallery.LOCAL_H_1D if args.exact else None)


def solve_from_args(args, default_count=30, default_tmax=None):
    text = domain_text(args)
    if text is None:
        raise UsageError("need --spec or --preset")
    case = make_case(args, text, default_count)
    spec = case.spec()
    tmax = args.tmax if args.tmax is not None else (default_tmax if args.count is None else None)
    if tmax is not None:
        eig = solve_domain(spec, case.h, threshold=tmax, exact=case.exact)
    else:
        eig = solve_domain(spec, case.h, count=case.count, exact=case.exact)
    eig.label = spec.label
    return case, eig


def load_eig(path):
    try:
        data = jsonio.loads(_read(path))
        data = data.get("eig", data)
        eig = EigenData.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputOutputError(f"{path} is not an eig file: {exc}", path=str(path)) from None
    if not eig.label:
        eig.label = Path(path).stem
    return eig


def metadata(argv):
    return {"tool": "dirichlet-l1", "version": __version__,
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "python": platform.python_version(), "numpy": np.__version__,
            "argv": list(argv)}


REPORT_COLUMNS = ("case", "check", "lhs", "rhs", "ratio", "constant_mode", "verdict", "inputs")


def _brief_inputs(inputs):
    keys = ("k", "t", "T", "n", "member", "vector", "envelope")
    return " ".join(f"{k}={inputs[k]:.6g}" if isinstance(inputs[k], float) else f"{k}={inputs[k]}"
                    for k in keys if k in inputs)


def reports_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        w.writerow([r["case"], r["check"], format(r["lhs"], ".17g"), format(r["rhs"], ".17g"),
                    format(r["ratio"], ".17g"), r["constant_mode"], r["verdict"],
                    _brief_inputs(r["inputs"])])
    return buf.getvalue()


def reports_table(reports):
    rows = [[r["case"], r["check"], f"{r['lhs']:.6g}", f"{r['rhs']:.6g}", f"{r['ratio']:.4g}",
             r["verdict"], _brief_inputs(r["inputs"])] for r in reports]
    head = ["case", "check", "lhs", "rhs", "ratio", "verdict", "inputs"]
    widths = [max(len(x) for x in col) for col in zip(head, *rows)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*head), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*row).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


def summarize(reports):
    counts = {}
    for r in reports:
        counts[r["verdict"]] = counts.get(r["verdict"], 0) + 1
    return dict(sorted(counts.items()))


def render(doc, fmt):
    if fmt == "json":
        return jsonio.dumps(doc)
    reports = doc.get("reports", [])
    if fmt == "csv":
        return reports_csv(reports)
    tail = "summary: " + ", ".join(f"{k}={v}" for k, v in doc.get("summary", {}).items()) + "\n"
    return reports_table(reports) + tail


def _verdict_doc(argv, config, reports, extra=None):
    dicts = [r.to_dict() for r in reports]
    doc = {"metadata": metadata(argv), "config": config, "summary": summarize(dicts)}
    if extra:
        doc.update(extra)
    doc["reports"] = dicts
    return doc


# ---------------------------------------------------------------------------
# commands

def cmd_solve(args, argv):
    case, eig = solve_from_args(args)
    out = out_dir(args)
    stem = out / "eig"
    doc = {"metadata": metadata(argv), "domain": case.domain, "eig": eig.to_dict()}
    _write(stem.with_suffix(".json"), jsonio.dumps(doc))
    if args.functions:
        if eig.vectors is None:
            raise UsageError("--functions needs a grid solve")
        eig.dump_functions(stem.with_name("eig_functions"))
    if args.format == "json":
        sys.stdout.write(jsonio.dumps(doc["eig"]))
    else:
        sep = "," if args.format == "csv" else "  "
        sys.stdout.write(sep.join(("k", "lambda", "l1", "l2", "linf")) + "\n")
        for k, (lam, a, b, c) in enumerate(zip(eig.eigenvalues, eig.l1, eig.l2, eig.linf), 1):
            vals = [format(v, ".17g" if args.format == "csv" else ".10g") for v in (lam, a, b, c)]
            sys.stdout.write(sep.join([str(k)] + vals) + "\n")
    return 0


def cmd_verify(args, argv):
    checks = gallery.parse_checks(args.checks)
    text = domain_text(args)
    if args.eig:
        eig = load_eig(args.eig)
        case = gallery.Case(eig.label, "", h=eig.h, exact=eig.source == "exact1d")
        reports = gallery.run_case(case, checks, eig=eig)
        config = {"eig": eig.to_dict(), "checks": list(checks)}
        golden_name = None
    elif text is not None:
        case = make_case(args, text, 60 if args.exact else 30)
        reports = gallery.run_case(case, checks)
        if "cor26" in checks:
            reports.extend(gallery.run_cor26_synthetic())
        config = {"case": case.to_dict(), "checks": list(checks)}
        golden_name = None
    else:
        reports = gallery.run_gallery(checks)
        config = {"gallery": [c.to_dict() for c in gallery.GALLERY], "checks": list(checks)}
        golden_name = "gallery"
    extra = {}
    if golden_name:
        if args.update_golden:
            gallery.write_golden(golden_name, reports)
        exceeded = gallery.compare_envelope(reports, gallery.load_golden(golden_name))
        extra["envelope"] = {"name": golden_name, "slack": gallery.ENVELOPE_SLACK,
                             "exceeded": exceeded}
    doc = _verdict_doc(argv, config, reports, extra)
    _write(out_dir(args) / "verdict.json", jsonio.dumps(doc))
    sys.stdout.write(render(doc, args.format))
    return 1 if any(r.verdict in FAILING for r in reports) else 0


def cmd_heat(args, argv):
    times = _float_list(args.t, "time")
    if any(not t > 0 for t in times):
        raise UsageError("times must be positive")
    if args.eig:
        eig = load_eig(args.eig)
        mask = None
        if args.oracle:
            raise UsageError("--oracle needs a domain (--spec or --preset), not --eig")
    else:
        case, eig = solve_from_args(args, default_count=40,
                                    default_tmax=HEAT_EXACT_TMAX if args.exact else None)
        mask = None
        if args.oracle:
            mask = (rasterize(case.spec(), args.h or HEAT_ORACLE_H_1D) if case.exact
                    else eig.mask)
    series = heat_series(eig, times, mask=mask)
    label = eig.label
    reports = check_e59(series, case=label) + check_e510_ratio(series, case=label)
    ks = [k for k in range(1, min(10, len(eig)) + 1)
          if 2 * eig.eigenvalues[k - 1] < eig.complete_below]
    for T in sorted({t / 6 for t in times}):
        reports.extend(check_lemma52(eig, T, ks=ks, case=label))
    out = out_dir(args)
    doc = _verdict_doc(argv, {"times": times, "oracle": bool(args.oracle)}, reports,
                       {"series": series.to_dict()})
    _write(out / "heat.csv", series.to_csv())
    _write(out / "heat.json", jsonio.dumps(doc))
    if args.format == "csv":
        sys.stdout.write(series.to_csv())
    else:
        sys.stdout.write(render(doc, args.format))
    return 1 if any(r.verdict in FAILING for r in reports) else 0


def cmd_sweep(args, argv):
    if args.family not in gallery.FAMILIES:
        raise UsageError(f"unknown family '{args.family}'", known=list(gallery.FAMILIES))
    checks = gallery.parse_checks(args.checks or "thm01")
    if checks != ("thm01",):
        raise UsageError("sweeps run the ratio_thm01 check only")
    default_m = "2" if args.family == "dumbbell" else "1,2,4,8"
    ms = _int_list(args.m or default_m, "m")
    epss = tuple(_float_list(args.eps, "eps"))
    h = args.h or (gallery.SWEEP_H if args.family == "dumbbell" else 1 / 32)
    rows, reports = gallery.sweep(args.family, ms=tuple(ms), epss=epss, h=h)
    name = f"sweep_{args.family}"
    if args.update_golden:
        gallery.write_golden(name, reports)
    exceeded = gallery.compare_envelope(reports, gallery.load_golden(name))
    for row, rep in zip(rows, reports):
        row["envelope"] = rep.inputs.get("envelope")
    config = {"family": args.family, "m": ms, "eps": list(epss), "h": h, "checks": list(checks)}
    doc = _verdict_doc(argv, config, reports,
                       {"rows": rows, "envelope": {"name": name, "slack": gallery.ENVELOPE_SLACK,
                                                   "exceeded": exceeded}})
    _write(out_dir(args) / f"{name}.json", jsonio.dumps(doc))
    if args.format == "json":
        sys.stdout.write(jsonio.dumps(doc))
    else:
        cols = list(rows[0])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n", delimiter="," if args.format == "csv" else "\t")
        w.writerow(cols)
        for row in rows:
            w.writerow([format(v, ".17g" if args.format == "csv" else ".8g")
                        if isinstance(v, float) else v for v in row.values()])
        sys.stdout.write(buf.getvalue())
    return 1 if exceeded else 0


def cmd_report(args, argv):
    try:
        doc = jsonio.loads(_read(args.input))
    except ValueError as exc:
        raise InputOutputError(f"{args.input} is not JSON: {exc}") from None
    if "reports" not in doc:
        raise InputOutputError(f"{args.input} has no reports")
    sys.stdout.write(render(doc, args.format))
    return 1 if any(r["verdict"] in FAILING for r in doc["reports"]) else 0


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "heat": cmd_heat, "sweep": cmd_sweep,
            "report": cmd_report}


def _emit_error(payload):
    sys.stderr.write(jsonio.dumps({"error": payload}))


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, argv)
    except DirichletError as exc:
        _emit_error(exc.to_dict())
        return 2 if exc.kind in USAGE_KINDS else 3
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except Exception as exc:  # pragma: no cover - last-resort guard
        _emit_error({"kind": "internal", "message": f"{type(exc).__name__}: {exc}"})
        return 4


if __name__ == "__main__":
    sys.exit(main())
