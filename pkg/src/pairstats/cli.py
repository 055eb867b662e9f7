"""Command-line front end.

Exit codes: 0 success, 1 usage, 2 parse, 3 numerical or solver failure,
4 model-consistency problem (warnings count only with ``--strict``).
"""
from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from . import __version__
from .characterization import (
    brightness_upper_bound,
    g2_low_brightness_approx,
    g_curve,
    multipair_ratio,
    predict_at_heralding,
    propagate_uncertainty,
    solve_transmissions,
)
from .errors import ModelConsistencyWarning, PairStatsError, ParseError, ScanRangeWarning
from .io import (
    WindowSpec,
    dump_report,
    exact,
    ingest_click_records,
    ingest_timetags,
    measured,
    outcomes_to_timetags,
    read_setup_file,
    write_click_records,
    write_curve,
    write_timetags,
)
from .model import (
    OUTCOME_LABELS,
    ChannelTransmissions,
    DarkCountRates,
    DistributionKind,
    PairDistribution,
    SetupModel,
)
from .montecarlo import BACKEND, estimate_probabilities, simulate_outcomes

REFERENCE_DARKS = {"d_h": 2.5e-7, "d_a": 2.87e-4, "d_b": 3.84e-4}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class _StrictFailure(PairStatsError):
    exit_code = 4


# ---------------------------------------------------------------------------
# option groups


def _add_setup_options(p, need_eta=True):
    p.add_argument("--setup", help="key = value file with eta_h, eta_a, eta_b, d_h, d_a, d_b, c")
    for key in ("eta_h", "eta_a", "eta_b"):
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=float)
    _add_dark_options(p)
    p.add_argument("--c", dest="c", type=float, help="coincidence factor in (0, 1]")


def _add_dark_options(p):
    p.add_argument("--darks", help="key = value file holding d_h, d_a, d_b")
    p.add_argument("--reference-darks", action="store_true",
                   help="use d_h=2.5e-7, d_a=2.87e-4, d_b=3.84e-4")
    for key in ("d_h", "d_a", "d_b"):
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=float)


def _add_dist_option(p):
    p.add_argument("--dist", choices=[k.value for k in DistributionKind], default="poisson")


def _setup_values(args) -> dict:
    values = {}
    if getattr(args, "setup", None):
        values.update(read_setup_file(args.setup))
    if args.reference_darks:
        values.update(REFERENCE_DARKS)
    if args.darks:
        darks = read_setup_file(args.darks)
        values.update({k: v for k, v in darks.items() if k.startswith("d_")})
    for key in ("eta_h", "eta_a", "eta_b", "d_h", "d_a", "d_b", "c"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def _darks(values) -> DarkCountRates:
    return DarkCountRates(values.get("d_h", 0.0), values.get("d_a", 0.0), values.get("d_b", 0.0))


def _setup(values) -> SetupModel:
    missing = [k for k in ("eta_h", "eta_a", "eta_b") if k not in values]
    if missing:
        raise UsageError(f"missing setup values: {', '.join(missing)} (use --setup or flags)")
    t = ChannelTransmissions(values["eta_h"], values["eta_a"], values["eta_b"])
    return SetupModel(t, _darks(values), values.get("c", 1.0))


def _setup_echo(setup: SetupModel) -> dict:
    t, d = setup.transmissions, setup.darks
    return {"eta_h": t.eta_h, "eta_a": t.eta_a, "eta_b": t.eta_b,
            "d_h": d.d_h, "d_a": d.d_a, "d_b": d.d_b, "c": setup.c}


def _out(args):
    return args.output if args.output and args.output != "-" else sys.stdout


# ---------------------------------------------------------------------------
# subcommands


def _sniff_format(path):
    with open(path) as fh:
        for line in fh:
            fields = [f.strip().upper() for f in line.split(",")]
            if fields != [""]:
                timetag = len(fields) == 2 and fields[0] in ("CHANNEL", "CLOCK", "H", "A", "B")
                return "timetags" if timetag else "clicks"
    raise ParseError("input file is empty")


def cmd_characterize(args, report):
    values = _setup_values(args)
    darks = _darks(values)
    fmt = args.format or _sniff_format(args.input)
    if fmt == "timetags":
        if args.period is None:
            raise UsageError("--period is required for timetag input")
        spec = WindowSpec(args.period, args.width, args.offset)
        counts = ingest_timetags(args.input, spec, args.dead_time_a, args.dead_time_b, args.dead_time_h)
    else:
        counts = ingest_click_records(args.input)
    kind = DistributionKind(args.dist)
    report["settings"].update({"input": str(args.input), "format": fmt, "dist": kind.value,
                               "darks": {"d_h": darks.d_h, "d_a": darks.d_a, "d_b": darks.d_b},
                               "bootstrap": args.bootstrap, "seed": args.seed,
                               "refine": not args.no_refine})
    report["counts"] = {
        "n_windows": exact(counts.n_windows),
        "discarded_windows": exact(counts.discarded),
        "multi_tag_windows": exact(counts.multi_tag_windows),
        "outcomes": {label: exact(int(n)) for label, n in zip(OUTCOME_LABELS, counts.outcome_counts)},
    }
    m = estimate_probabilities(counts)
    report["measured"] = {k: measured(getattr(m, k), m.stderr(k)) for k in m.stderrs}

    if args.bootstrap:
        src = propagate_uncertainty(counts, darks, kind, args.bootstrap, args.seed, refine=not args.no_refine)
    else:
        src = solve_transmissions(m, darks, kind, refine=not args.no_refine, on_inconsistency="warn")
    err = src.stderr
    report["source"] = {k: measured(getattr(src, k), err.get(k)) for k in ("eta_h", "eta_a", "eta_b", "p1", "mu", "r")}
    dr = src.direct
    report["consistency"] = {
        "p1_via_a": exact(dr.p1_via_a),
        "p1_via_b": exact(dr.p1_via_b),
        "p1_discrepancy": measured(dr.p1_discrepancy, dr.p1_discrepancy_sigma),
    }
    if src.fit_chi2 is not None:
        report["consistency"]["fit_chi2"] = exact(src.fit_chi2)
    if args.ph:
        setup = src.setup(darks)
        report["predictions"] = [_prediction(setup, kind, ph) for ph in args.ph]


def _prediction(setup, kind, ph):
    mu, g2 = predict_at_heralding(setup, kind, ph)
    return {"p_h": exact(ph), "mu": exact(mu), "g2": exact(g2),
            "g2_approx": exact(g2_low_brightness_approx(mu, setup.transmissions.eta_h))}


def cmd_bound_mu(args, report):
    values = _setup_values(args)
    darks = _darks(values)
    assumed = ChannelTransmissions(args.eta_h, args.eta_a, args.eta_b)
    kind = DistributionKind(args.dist)
    report["settings"].update({"g": args.g, "g_err": args.g_err, "eta_h": args.eta_h, "eta_a": args.eta_a,
                               "eta_b": args.eta_b, "dist": kind.value,
                               "darks": {"d_h": darks.d_h, "d_a": darks.d_a, "d_b": darks.d_b}})
    mu = brightness_upper_bound(args.g, assumed, darks, kind)
    r = multipair_ratio(PairDistribution(kind, mu))
    mu_err = r_err = None
    if args.g_err:
        # larger G -> smaller bound on the decreasing branch
        mu_lo = brightness_upper_bound(args.g + args.g_err, assumed, darks, kind)
        mu_hi = brightness_upper_bound(args.g - args.g_err, assumed, darks, kind)
        mu_err = (mu_hi - mu_lo) / 2
        r_err = abs(multipair_ratio(PairDistribution(kind, mu_lo)) - multipair_ratio(PairDistribution(kind, mu_hi))) / 2
    report["result"] = {"mu_max": measured(mu, mu_err), "r_min": measured(r, r_err)}


def cmd_g_curve(args, report):
    setup = _setup(_setup_values(args))
    mus = np.logspace(np.log10(args.mu_min), np.log10(args.mu_max), args.points)
    g = g_curve(mus, setup, args.dist)
    write_curve(("mu", "G"), zip(mus, g), _out(args))
    return False


def cmd_g2_curve(args, report):
    setup = _setup(_setup_values(args))
    kind = DistributionKind.THERMAL if args.thermal else DistributionKind(args.dist)
    phs = np.logspace(np.log10(args.ph_min), np.log10(args.ph_max), args.points)
    rows = []
    for ph in phs:
        mu, g2 = predict_at_heralding(setup, kind, float(ph))
        rows.append((ph, mu, g2, g2_low_brightness_approx(mu, setup.transmissions.eta_h)))
    write_curve(("p_H", "mu", "g2", "g2_approx"), rows, _out(args))
    return False


def cmd_simulate(args, report):
    setup = _setup(_setup_values(args))
    dist = PairDistribution(args.dist, args.mu)
    outcomes = simulate_outcomes(setup, dist, args.windows, args.seed)
    if args.emit_timetags:
        spec = WindowSpec(args.period, args.width, args.offset)
        write_timetags(outcomes_to_timetags(outcomes, spec), _out(args))
    else:
        write_click_records(outcomes, _out(args))
    return False


def cmd_predict(args, report):
    setup = _setup(_setup_values(args))
    kind = DistributionKind(args.dist)
    report["settings"].update({"setup": _setup_echo(setup), "dist": kind.value})
    report["predictions"] = [_prediction(setup, kind, ph) for ph in args.ph]


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pairstats", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernel)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("characterize", help="recover transmissions and brightness from click data")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["clicks", "timetags"])
    p.add_argument("--setup", help="setup file (only dark counts are used)")
    _add_dark_options(p)
    _add_dist_option(p)
    p.add_argument("--bootstrap", type=int, default=200, metavar="N", help="resamples; 0 disables")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-refine", action="store_true", help="closed-form estimates only")
    p.add_argument("--ph", type=float, action="append", help="predict g2 at this heralding probability")
    p.add_argument("--period", type=float, help="clock period (ps), timetag input")
    p.add_argument("--width", type=float, default=5000.0, help="window width (ps)")
    p.add_argument("--offset", type=float, default=0.0, help="window centre after clock (ps)")
    p.add_argument("--dead-time-a", type=float, default=0.0)
    p.add_argument("--dead-time-b", type=float, default=0.0)
    p.add_argument("--dead-time-h", type=float, default=0.0)
    p.add_argument("--output", "-o")
    p.add_argument("--strict", action="store_true", help="exit 4 on model-consistency warnings")
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("bound-mu", help="upper bound on brightness from a measured G")
    p.add_argument("--g", type=float, required=True)
    p.add_argument("--g-err", type=float, default=0.0)
    p.add_argument("--eta-h", type=float, required=True)
    p.add_argument("--eta-a", type=float, required=True)
    p.add_argument("--eta-b", type=float, default=0.0, help="does not enter G")
    _add_dark_options(p)
    _add_dist_option(p)
    p.add_argument("--output", "-o")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_bound_mu)

    p = sub.add_parser("g-curve", help="CSV of correlation strength versus brightness")
    _add_setup_options(p)
    _add_dist_option(p)
    p.add_argument("--mu-min", type=float, default=1e-6)
    p.add_argument("--mu-max", type=float, default=1.0)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--output", "-o")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_g_curve)

    p = sub.add_parser("g2-curve", help="CSV of predicted heralded g2 versus heralding probability")
    _add_setup_options(p)
    _add_dist_option(p)
    p.add_argument("--thermal", action="store_true")
    p.add_argument("--ph-min", type=float, default=1e-4)
    p.add_argument("--ph-max", type=float, default=0.05)
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--output", "-o")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_g2_curve)

    p = sub.add_parser("simulate", help="Monte Carlo click records or timetags")
    _add_setup_options(p)
    _add_dist_option(p)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--windows", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emit-timetags", action="store_true")
    p.add_argument("--period", type=float, default=200_000.0, help="clock period (ps)")
    p.add_argument("--width", type=float, default=5000.0)
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--output", "-o")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("predict", help="brightness and g2 at given heralding probabilities")
    _add_setup_options(p)
    _add_dist_option(p)
    p.add_argument("--ph", type=float, action="append", required=True)
    p.add_argument("--output", "-o")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help, --version
        return exc.code
    report = {"command": args.command, "settings": {}, "warnings": [], "error": None}
    code = 0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ModelConsistencyWarning)
        warnings.simplefilter("always", ScanRangeWarning)
        try:
            wrote = args.func(args, report)
        except UsageError as exc:
            parser.print_usage(sys.stderr)
            print(f"pairstats: error: {exc}", file=sys.stderr)
            return 1
        except PairStatsError as exc:
            code = exc.exit_code
            report["error"] = {"class": type(exc).__name__, "message": str(exc), "exit_code": code}
            wrote = None
        except OSError as exc:
            code = 2
            report["error"] = {"class": "OSError", "message": str(exc), "exit_code": code}
            wrote = None
    ours = (ModelConsistencyWarning, ScanRangeWarning)
    report["warnings"] = sorted({str(w.message) for w in caught if issubclass(w.category, ours)})
    escalate = sorted({str(w.message) for w in caught if issubclass(w.category, ModelConsistencyWarning)})
    if code == 0 and args.strict and escalate:
        code = _StrictFailure.exit_code
        report["error"] = {"class": "ModelConsistencyWarning", "message": "; ".join(escalate),
                           "exit_code": code}
    if report["error"]:
        print(f"pairstats: error: {report['error']['message']}", file=sys.stderr)
    if wrote is None or report["error"]:
        dump_report(report, _out(args) if wrote is None else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
