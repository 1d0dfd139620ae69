"""Command line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 verification mismatch.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from importlib import metadata
from pathlib import Path

from . import convergence as conv
from . import experiments as ex
from .engine import measured_factor, run, sequential_fine_reference
from .errors import ConfigError, InsufficientData, NoThreshold, NumericalError, VerificationError
from .schemes import BUILTIN_NAMES, builtin, scheme_report

log = logging.getLogger("parareal_rk")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4
CSV_VERSION = "1"


def build_id() -> str:
    """Short hash of the package sources, stamped into run summaries."""
    h = hashlib.sha1()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.read_bytes())
    return h.hexdigest()[:12]


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _int_list(text: str) -> list[int]:
    """'2,3,10' or '2:10' (inclusive range)."""
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected '2,3,10' or '2:10', got {text!r}") from None


def _schemes(text: str) -> list[str]:
    names = list(BUILTIN_NAMES) if text == "all" else text.split(",")
    for n in names:
        builtin(n)  # raises UnknownScheme
    return names


# ---------------------------------------------------------------- verify


def cmd_verify(args) -> int:
    status = EXIT_OK
    for name in _schemes(args.scheme):
        rep = scheme_report(builtin(name))
        verdict = "pass" if rep["passed"] else "FAIL"
        print(f"{name}: order {rep['measured_order']} (declared {rep['declared_order']}), "
              f"{rep['stability']}, |r(-inf)| = {abs(rep['r_at_minus_inf']):.6g}, "
              f"P1 {'ok' if rep['p1'] else 'violated'}, P3 {'ok' if rep['p3'] else 'violated'}, "
              f"strictly accurate of order {rep['strict_accuracy_order']}, "
              f"stage quadrature order {rep['quadrature_order']}: {verdict}")
        if args.json:
            print(json.dumps(rep))
        if not rep["passed"]:
            status = EXIT_VERIFY
    return status


# --------------------------------------------------------------- analyze


def _write_rows(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_kappa_curve(path: Path, n: int) -> list[conv.KappaValue]:
    curve = conv.kappa_curve(n)
    _write_rows(path, ["alpha", "kappa", "argsup_s", "bound"],
                [(repr(k.alpha), repr(k.kappa), repr(k.argsup_s), repr(conv.kappa_bound(k.alpha)))
                 for k in curve])
    return curve


def cmd_analyze(args) -> int:
    out = Path(args.out)
    status = EXIT_OK
    for name in _schemes(args.scheme):
        r = builtin(name).r
        reports = [conv.parareal_factor(r, J, scheme=name) for J in args.J]
        path = out / f"factor_{name}.csv"
        _write_rows(path, ["J", "phi", "argmax_s", "tail_bound_used"],
                    [(f.J, repr(f.phi), repr(f.argmax_s), int(f.tail_bound_used)) for f in reports])
        for f in reports:
            print(f"{name} J={f.J}: phi = {f.phi:.6f}")
        try:
            th = conv.find_threshold(r, args.gamma, J_max=args.J_max)
            print(f"{name}: J_* = {th.J_star} for gamma = {args.gamma}")
        except NoThreshold as exc:
            print(f"{name}: {exc}", file=sys.stderr)
            status = EXIT_NUMERIC
        print(f"wrote {path}")
    if args.kappa_curve:
        path = out / "kappa_curve.csv"
        write_kappa_curve(path, args.points)
        print(f"wrote {path}")
    return status


def cmd_kappa_curve(args) -> int:
    path = Path(args.out) / "kappa_curve.csv"
    curve = write_kappa_curve(path, args.points)
    if args.gnuplot:
        (path.with_suffix(".gp")).write_text(
            "set datafile separator ','\nset xlabel 'alpha'\nset ylabel 'kappa'\n"
            f"plot '{path.name}' using 1:2 skip 1 with lines title 'kappa', "
            f"'' using 1:4 skip 1 with lines dt 2 title 'bound'\n")
    print(f"kappa_0 = {curve[0].kappa:.6f}, kappa_2 = {curve[-1].kappa:.6f}; wrote {path}")
    return EXIT_OK


# ------------------------------------------------------------------- run


def _run_one(cfg: ex.ExperimentConfig, out: Path, gnuplot: bool) -> dict:
    setup = ex.build(cfg)
    t0 = time.perf_counter()
    ref = sequential_fine_reference(setup.fine, setup.u0, setup.parareal)
    hist = run(setup.coarse, setup.fine, setup.u0, setup.parareal, norm=setup.norm, reference=ref)
    wall = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{cfg.stem}.csv"
    hist.write_csv(csv_path)
    try:
        factor = measured_factor(hist)
    except InsufficientData:
        factor = None
    summary = {
        "config": ex.emit(cfg),
        "csv": csv_path.name,
        "csv_version": CSV_VERSION,
        "measured_factor": factor,
        "iterations": hist.iterations,
        "final_error": hist.errors[-1],
        "budget_exceeded": hist.budget_exceeded,
        "wall_time_s": wall,
        "scheme": cfg.scheme,
        "version": _version(),
        "build_id": build_id(),
    }
    if cfg.problem == "allen-cahn":
        summary["newton_max_iterations"] = setup.fine.stats.max_iterations
    (out / f"{cfg.stem}.summary.json").write_text(json.dumps(summary, indent=2))
    if gnuplot:
        (out / f"{cfg.stem}.gp").write_text(
            "set datafile separator ','\nset logscale y\nset xlabel 'k'\nset ylabel 'error'\n"
            f"plot '{csv_path.name}' using 1:2 skip 1 with linespoints title '{cfg.scheme} J={cfg.J}'\n")
    fstr = "n/a" if factor is None else f"{factor:.4f}"
    print(f"{cfg.stem}: {hist.iterations} iterations, final error {hist.errors[-1]:.3e}, "
          f"measured factor {fstr}, {wall:.1f} s -> {csv_path}")
    return summary


def cmd_run(args) -> int:
    if args.config:
        configs = ex.load(args.config)
    else:
        configs = [ex.preset(args.preset)]
    over = dict(M=args.M, K_max=args.K_max, threads=args.threads, output=args.out)
    if args.initial_guess:
        over["initial_guess"] = args.initial_guess
    expanded = []
    for cfg in configs:
        cfg = ex.with_overrides(cfg, **over)
        schemes = _schemes(args.scheme) if args.scheme else [cfg.scheme]
        Js = args.J if args.J else [cfg.J]
        for s in schemes:
            for J in Js:
                expanded.append(ex.with_overrides(cfg, scheme=s, J=J))
    for cfg in expanded:
        _run_one(cfg, Path(cfg.output), args.gnuplot)
    return EXIT_OK


# ------------------------------------------------------------------ main


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parareal-rk", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="accepted for compatibility; all algorithms are deterministic")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="check stability, order and strict accuracy of schemes")
    v.add_argument("--scheme", default="all", help="scheme name, comma list or 'all'")
    v.add_argument("--json", action="store_true", help="also print the raw report as JSON")
    v.set_defaults(func=cmd_verify)

    a = sub.add_parser("analyze", help="convergence-factor table and threshold J_*")
    a.add_argument("--scheme", default="lobatto3c-2")
    a.add_argument("--J", type=_int_list, default=_int_list("2:10"), help="'2:10' or '2,3,10'")
    a.add_argument("--J-max", type=int, default=64, help="upper end of the threshold search")
    a.add_argument("--gamma", type=float, default=0.31)
    a.add_argument("--kappa-curve", action="store_true", help="also write the kappa_alpha curve")
    a.add_argument("--points", type=int, default=201)
    a.add_argument("--out", default=".")
    a.set_defaults(func=cmd_analyze)

    k = sub.add_parser("kappa-curve", help="kappa_alpha on a uniform alpha grid over [0, 2]")
    k.add_argument("--points", type=int, default=201)
    k.add_argument("--out", default=".")
    k.add_argument("--gnuplot", action="store_true")
    k.set_defaults(func=cmd_kappa_curve)

    r = sub.add_parser("run", help="run parareal experiments, one CSV per (scheme, J)")
    r.add_argument("--preset", choices=ex.PRESETS, default="ex1b")
    r.add_argument("--config", help="INI file with one section per run")
    r.add_argument("--scheme", help="scheme name, comma list or 'all'")
    r.add_argument("--J", type=_int_list, help="step ratios, '2,3,10' or '2:10'")
    r.add_argument("--M", type=int)
    r.add_argument("--K-max", type=int)
    r.add_argument("--initial-guess", choices=("coarse", "constant"))
    r.add_argument("--threads", type=int)
    r.add_argument("--out")
    r.add_argument("--gnuplot", action="store_true", help="write a gnuplot script next to each CSV")
    r.set_defaults(func=cmd_run)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
