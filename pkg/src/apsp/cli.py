"""Command-line entry point: ``apsp mse``, ``apsp rate`` and ``apsp schedule``.

The worker count for Monte Carlo trials comes from ``$APSP_WORKERS``.
"""

import argparse
from dataclasses import replace
import sys

from .experiments import (
    MSE_HEADER,
    RATE_HEADER,
    ExperimentSpec,
    build_schedule,
    evaluate_spectral_efficiency,
    load_experiment,
    rate_rows,
    run_mse_experiment,
    write_results,
)
from .pilots import write_schedule
from .scenarios import DESK_CONFIG, FULL_CONFIG, make_adcpms
from .scheduling import evaluate_schedule, schedule_apsp, write_diagnostics

__all__ = ["main", "build_parser", "spec_from_args"]


def _float_list(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _int_list(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


def build_parser():
    parser = argparse.ArgumentParser(prog="apsp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("mse", "analytic and Monte Carlo MSE sweep"),
        ("rate", "average spectral efficiency over a frame"),
        ("schedule", "compute a pilot phase shift schedule"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment file; command-line flags override it")
        p.add_argument("--scenario", choices=["SU", "UMa", "UMi", "custom"])
        p.add_argument("--scheme", type=str.upper, choices=["APSP", "PSOP"])
        p.add_argument("--q", type=int, help="pilot segment length (PSOP derives it if omitted)")
        p.add_argument("--snr", type=_float_list, help="SNR list in dB, e.g. 0,10,20,30")
        p.add_argument("--delta", type=_int_list, help="lag list in OFDM symbols, e.g. 1,2,3")
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--frame", choices=["type-A", "type-B"])
        p.add_argument("--gamma", type=float, help="scheduler overlap threshold")
        p.add_argument("--scale", choices=["desk", "full"],
                       help="system preset when no config file is given (default desk)")
        p.add_argument("--k", type=int, help="number of UTs")
        p.add_argument("--analytic-only", action="store_true",
                       help="skip Monte Carlo trials (mse only)")
        p.add_argument("--out", required=True, help="output path")
        if name == "schedule":
            p.add_argument("--diagnostics", help="per-UT overlap CSV")
    return parser


def spec_from_args(args):
    """Build an :class:`ExperimentSpec` from a config file and flag overrides."""
    spec = load_experiment(args.config) if args.config else ExperimentSpec()
    system = spec.system
    if args.scale or not args.config:
        system = FULL_CONFIG if args.scale == "full" else DESK_CONFIG
    if args.k is not None:
        system = replace(system, K=args.k)
    changes = {"system": system}
    for attr, key in (("scenario", "scenario"), ("scheme", "scheme"), ("trials", "trials"),
                      ("seed", "seed"), ("frame", "frame"), ("gamma", "gamma"),
                      ("snr", "snr_db_list"), ("delta", "delta_ell_list")):
        value = getattr(args, attr)
        if value is not None:
            changes[key] = value
    scheme = changes.get("scheme", spec.scheme)
    if args.q is not None:
        changes["Q"] = args.q
    elif scheme.upper() == "PSOP":
        changes["Q"] = -(-system.K // (system.Nc // system.Ng))
    elif args.scheme is not None:
        changes["Q"] = 1
    if args.analytic_only:
        changes["empirical"] = False
    # validate the combined spec in one go
    fields = {f: getattr(spec, f) for f in spec.__dataclass_fields__}
    fields.update(changes)
    return ExperimentSpec(**fields)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        if args.command == "mse":
            write_results(run_mse_experiment(spec), args.out, MSE_HEADER)
        elif args.command == "rate":
            report = evaluate_spectral_efficiency(spec)
            write_results(rate_rows(spec, report), args.out, RATE_HEADER)
        else:
            adcpms = make_adcpms(spec.get_profiles(), spec.system)
            if spec.scheme == "APSP":
                result = schedule_apsp(adcpms, spec.system, spec.Q, spec.gamma,
                                       spec.order, spec.grouping)
            else:
                result = evaluate_schedule(build_schedule(spec, adcpms), adcpms, spec.system)
            write_schedule(result.schedule, args.out)
            if args.diagnostics:
                write_diagnostics(result, args.diagnostics)
    except (ValueError, OSError) as exc:
        print(f"apsp: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
