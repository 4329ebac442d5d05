"""Operator command line.

Subcommands: ``simulate``, ``estimate``, ``scan-loss``, ``hbt``, ``car``,
``calibrate``, ``reproduce``.  Every subcommand is deterministic given
(config, overrides, seed); ``--workers`` only parallelizes batches and never
changes any output byte.

Exit codes: 0 success, 1 usage, 2 data/parse, 3 numeric/degenerate.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import dataio, event_sim
from .decoy_estimator import ObservedStats, key_rate, scan_loss
from .errors import (ConfigError, DataFormatError, DegenerateStatisticsError,
                     EstimatorError, ParameterError, TruncationError,
                     UndefinedRatioError)
from .photon_source import (calibrate_eta_a, calibrate_mu0_from_car,
                            multimode_thermal_pmf, poisson_pmf, thermal_pmf)
from .presets import PRESET_NAMES, REFERENCE_RUNS, preset_manifest

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

CONFIG_DIR_ENV = "PDQKD_CONFIG_DIR"


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the documented usage code is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(_fail(EXIT_USAGE, message))


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _config_keys_epilog() -> str:
    lines = ["config keys (flat 'key = value' files; losses always in dB):"]
    for key, (kind, _, default) in dataio._SCHEMA.items():
        doc = dataio.KEY_DOCS[key]
        lines.append(f"  {key:<14} {doc} [default: {dataio._fmt(default)}]")
    lines.append(f"presets: {', '.join(PRESET_NAMES)} "
                 f"(or a path; ${CONFIG_DIR_ENV} sets the search directory)")
    return "\n".join(lines)


def load_manifest(name_or_path: str | None, overrides: list[str]) -> dataio.RunManifest:
    if name_or_path is None:
        manifest = dataio.RunManifest(values={})
    elif name_or_path in PRESET_NAMES:
        manifest = preset_manifest(name_or_path)
    else:
        path = Path(name_or_path)
        if not path.exists():
            base = os.environ.get(CONFIG_DIR_ENV)
            if base and (Path(base) / name_or_path).exists():
                path = Path(base) / name_or_path
            else:
                raise ConfigError(f"config {name_or_path!r} is neither a preset "
                                  f"({', '.join(PRESET_NAMES)}) nor an existing file")
        manifest = dataio.read_config(path)
    parsed = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, _, value = item.partition("=")
        parsed[key.strip()] = value.strip()
    return manifest.with_overrides(parsed)


def _vacuum_credit(spec: str, manifest: dataio.RunManifest) -> float:
    if spec == "calibrated":
        return manifest["y0_bob"]
    if spec == "zero":
        return 0.0
    try:
        return float(spec)
    except ValueError:
        raise ConfigError(f"--vacuum-credit must be 'calibrated', 'zero' or a number, got {spec!r}")


def _print_keyrate(result, protocol) -> None:
    print(f"mode           : {result.mode} (u_alpha={protocol.u_alpha:g}, "
          f"N={protocol.n_pulses})")
    print(f"y1_lower       : {result.y1_low:.6e}")
    print(f"e1_upper (N/T) : {result.branch_n.e1_up:.6e} / {result.branch_t.e1_up:.6e}")
    print(f"R_N, R_T       : {result.r_n:.6e}, {result.r_t:.6e} bit/pulse")
    print(f"R              : {result.r:.6e} bit/pulse")
    print(f"key length     : {result.key_bits:.6e} bit")
    if result.clamps:
        print(f"clamps         : {', '.join(result.clamps)}")


def cmd_simulate(args) -> int:
    manifest = load_manifest(args.config, args.set)
    if args.pulses is not None:
        manifest = manifest.with_overrides({"n_pulses": str(args.pulses)})
    if args.seed is not None:
        manifest = manifest.with_overrides({"seed": str(args.seed)})
    config = manifest.to_sim_config(record_events=bool(args.events) or manifest["record_events"])
    source = manifest.to_source_params()
    link = manifest.to_link_params()
    tally, events = event_sim.simulate_run(source, link, config, workers=args.workers)
    obs = tally.to_observed_stats()
    print(f"pulses         : {tally.n_pulses}")
    print(f"triggers       : {tally.n_triggers} "
          f"(fraction {tally.n_triggers / tally.n_pulses:.6e})")
    print(f"detections N/T : {tally.detections_n} / {tally.detections_t}")
    print(f"Q_N, Q_T       : {obs.q_n:.6e}, {obs.q_t:.6e}")
    print(f"E_N, E_T       : {obs.e_n:.6e}, {obs.e_t:.6e}")
    if args.out:
        dataio.write_tally(tally, args.out)
        print(f"tally written  : {args.out}")
    if args.events:
        dataio.write_events(events, args.events, fmt=args.events_format)
        print(f"events written : {args.events}")
    return EXIT_OK


def _observed_from_args(args, manifest) -> ObservedStats:
    given_direct = args.q_n is not None or args.q_t is not None
    sources = sum([args.tally is not None, args.events is not None, given_direct])
    if sources != 1:
        raise ConfigError("provide exactly one input: --tally, --events, "
                          "or the direct --q-n/--q-t/--e-n/--e-t rates")
    if args.tally:
        return dataio.read_tally(args.tally).to_observed_stats()
    if args.events:
        return dataio.tally_from_events(dataio.read_events(args.events)).to_observed_stats()
    missing = [name for name, v in (("--q-n", args.q_n), ("--q-t", args.q_t),
                                    ("--e-n", args.e_n), ("--e-t", args.e_t)) if v is None]
    if missing:
        raise ConfigError(f"direct input needs all four rates; missing {', '.join(missing)}")
    n_pulses = int(args.pulses) if args.pulses is not None else manifest["n_pulses"]
    n_triggers = int(args.triggers) if args.triggers is not None else 0
    return ObservedStats(q_n=args.q_n, q_t=args.q_t, e_n=args.e_n, e_t=args.e_t,
                         n_pulses=n_pulses, n_triggers=n_triggers)


def cmd_estimate(args) -> int:
    manifest = load_manifest(args.config, args.set)
    obs = _observed_from_args(args, manifest)
    if args.calibrate_eta_a:
        if not obs.n_triggers:
            raise ConfigError("--calibrate-eta-a needs a trigger count "
                              "(tally/events input, or --triggers)")
        eta_a = calibrate_eta_a(obs.n_triggers / obs.n_pulses, manifest["mu0"])
        manifest = manifest.with_overrides({"eta_a": repr(eta_a)})
    source = manifest.to_source_params()
    protocol = replace(manifest.to_protocol_params(), n_pulses=obs.n_pulses)
    if args.u_alpha is not None:
        protocol = replace(protocol, u_alpha=args.u_alpha)
    mode = args.mode
    credit = _vacuum_credit(args.vacuum_credit, manifest)
    try:
        result = key_rate(obs, protocol, source, mode, vacuum_credit=credit,
                          e0=manifest["e0"])
    except DegenerateStatisticsError as exc:
        _warn(f"degenerate statistics ({exc.observable}); no key can be claimed")
        print("R              : 0.0 bit/pulse")
        print("key length     : 0.0 bit")
        return EXIT_OK
    _print_keyrate(result, protocol)
    if args.out:
        row = dataio.ResultsRow.from_result(manifest["eta_db"], obs, result)
        dataio.write_results([row], args.out)
        print(f"results written: {args.out}")
    return EXIT_OK


def _grid(start: float, stop: float, step: float) -> list[float]:
    if step <= 0 or stop < start:
        raise ConfigError("need --to >= --from and --step > 0")
    n = int(round((stop - start) / step))
    return [start + i * step for i in range(n + 1)]


def cmd_scan_loss(args) -> int:
    manifest = load_manifest(args.config, args.set)
    source = manifest.to_source_params()
    link = manifest.to_link_params()
    protocol = manifest.to_protocol_params()
    credit = _vacuum_credit(args.vacuum_credit, manifest)
    scan = scan_loss(source, link, protocol, _grid(args.loss_from, args.loss_to, args.step),
                     mode=args.mode, vacuum_credit=credit)
    rows = [dataio.ResultsRow.from_scan_point(p) for p in scan.points]
    print(f"grid           : {args.loss_from:g}..{args.loss_to:g} dB, "
          f"step {args.step:g} ({len(rows)} points)")
    print(f"R_N reaches 0  : {_fmt_cutoff(scan.r_n_cutoff_db)}")
    print(f"R   reaches 0  : {_fmt_cutoff(scan.r_cutoff_db)}")
    if args.out:
        dataio.write_results(rows, args.out)
        print(f"results written: {args.out}")
    return EXIT_OK


def _fmt_cutoff(value) -> str:
    if value is None:
        return "below the grid (rate zero everywhere)"
    if value == float("inf"):
        return "beyond the grid (rate still positive at its end)"
    return f"{value:.3f} dB"


def _hbt_pmf(args, manifest):
    mu0 = args.mu0 if args.mu0 is not None else manifest["mu0"]
    if args.source == "poisson":
        return poisson_pmf(mu0)
    if args.source == "thermal":
        return thermal_pmf(mu0)
    return multimode_thermal_pmf(mu0, args.k_modes)


def cmd_hbt(args) -> int:
    manifest = load_manifest(args.config, args.set)
    if args.mu0 is not None:
        manifest = manifest.with_overrides({"mu0": repr(args.mu0)})
    source = manifest.to_source_params()
    config = manifest.to_sim_config(record_events=False)
    if args.pulses is not None:
        config = replace(config, n_pulses=int(args.pulses))
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    hist = event_sim.simulate_hbt(source, args.detector_eff, config,
                                  pmf=_hbt_pmf(args, manifest), workers=args.workers)
    print(f"pulses         : {hist.n_pulses}")
    print(f"singles        : {hist.singles_1} / {hist.singles_2}")
    print(f"g2(0)          : {hist.g2_zero:.4f} +/- {hist.g2_zero_sigma:.4f}")
    print(f"zero/off ratio : {hist.car:.4f}")
    print("delay bins     : " + " ".join(str(d) for d in hist.delays))
    print("coincidences   : " + " ".join(str(c) for c in hist.coincidences))
    return EXIT_OK


def cmd_car(args) -> int:
    manifest = load_manifest(args.config, args.set)
    if args.mu0 is not None:
        manifest = manifest.with_overrides({"mu0": repr(args.mu0)})
    source = manifest.to_source_params()
    config = manifest.to_sim_config(record_events=False)
    if args.pulses is not None:
        config = replace(config, n_pulses=int(args.pulses))
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    res = event_sim.simulate_car(source, args.signal_eff, config, workers=args.workers)
    bound = " (lower bound: no accidentals recorded)" if res.is_lower_bound else ""
    print(f"coincidences   : {res.coincidences}")
    print(f"accidentals    : {res.accidentals}")
    print(f"CAR            : {res.car:.4f}{bound}")
    if not res.is_lower_bound and res.car > 1.0:
        print(f"mu0 (inverted) : {calibrate_mu0_from_car(res.car):.6f}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if (args.trigger_rate is None) == (args.car is None):
        raise ConfigError("provide either --trigger-rate with --mu0, or --car")
    if args.trigger_rate is not None:
        if args.mu0 is None:
            raise ConfigError("--trigger-rate needs --mu0")
        eta_a = calibrate_eta_a(args.trigger_rate, args.mu0)
        print(f"eta_a          : {eta_a:.6f}")
    else:
        mu0 = calibrate_mu0_from_car(args.car)
        print(f"mu0            : {mu0:.6f}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    if args.target == "table1":
        return _reproduce_table(args)
    return _reproduce_fig(args)


def _reproduce_table(args) -> int:
    from .link_model import gains_analytic

    print(f"{'run':<10} {'quantity':<5} {'model':>12} {'published':>12} {'rel.dev':>9}")
    worst = 0.0
    for name, run in REFERENCE_RUNS.items():
        manifest = run.manifest()
        ao = gains_analytic(manifest.to_source_params(), manifest.to_link_params())
        for label, model, published in (("Q_N", ao.q_n, run.q_n), ("Q_T", ao.q_t, run.q_t),
                                        ("E_N", ao.e_n, run.e_n), ("E_T", ao.e_t, run.e_t)):
            dev = model / published - 1.0
            worst = max(worst, abs(dev))
            print(f"{name:<10} {label:<5} {model:>12.4e} {published:>12.4e} {dev:>+8.1%}")
    print(f"largest relative deviation: {worst:.1%}")
    return EXIT_OK


def _reproduce_fig(args) -> int:
    manifest = preset_manifest("paper50km")
    source = manifest.to_source_params()
    link = manifest.to_link_params()
    protocol = manifest.to_protocol_params()
    credit = _vacuum_credit(args.vacuum_credit, manifest)
    scan = scan_loss(source, link, protocol, _grid(0.0, 35.0, args.step),
                     mode="finite", vacuum_credit=credit)
    print(f"R_N reaches 0  : {_fmt_cutoff(scan.r_n_cutoff_db)}")
    print(f"R   reaches 0  : {_fmt_cutoff(scan.r_cutoff_db)}")
    out = args.out or "fig4.csv"
    dataio.write_results([dataio.ResultsRow.from_scan_point(p) for p in scan.points], out)
    print(f"results written: {out}")
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", help="preset name or config file path")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (validated against the schema)")
    p.add_argument("--workers", type=int, default=1,
                   help="worker threads; never changes numeric output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pdqkd",
                     description="Passive decoy-state BB84 simulator and estimator",
                     epilog=_config_keys_epilog(),
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the pulse-level Monte Carlo engine",
                       epilog=_config_keys_epilog(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    p.add_argument("--pulses", type=float, help="override n_pulses")
    p.add_argument("--seed", type=int, help="override seed")
    p.add_argument("--out", help="write the tally summary here")
    p.add_argument("--events", help="write the per-pulse event log here")
    p.add_argument("--events-format", choices=("csv", "npy"), default="csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="key rate from a tally, event log, or direct rates")
    _add_common(p)
    p.add_argument("--tally", help="tally summary file")
    p.add_argument("--events", help="event log file")
    p.add_argument("--q-n", type=float, help="direct non-trigger gain")
    p.add_argument("--q-t", type=float, help="direct trigger gain")
    p.add_argument("--e-n", type=float, help="direct non-trigger QBER")
    p.add_argument("--e-t", type=float, help="direct trigger QBER")
    p.add_argument("--pulses", type=float, help="N for direct input")
    p.add_argument("--triggers", type=float, help="N_A for direct input")
    p.add_argument("--u-alpha", type=float, help="override the deviation count")
    p.add_argument("--mode", choices=("finite", "asymptotic"), default="finite")
    p.add_argument("--vacuum-credit", default="calibrated",
                   help="'calibrated' (device y0_bob), 'zero', or a rate")
    p.add_argument("--calibrate-eta-a", action="store_true",
                   help="recalibrate eta_a from the input's trigger fraction")
    p.add_argument("--out", help="write a one-row results CSV here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("scan-loss", help="key rate over a loss grid (analytic observables)")
    _add_common(p)
    p.add_argument("--from", dest="loss_from", type=float, default=0.0, help="grid start, dB")
    p.add_argument("--to", dest="loss_to", type=float, default=35.0, help="grid end, dB")
    p.add_argument("--step", type=float, default=0.1, help="grid step, dB")
    p.add_argument("--mode", choices=("finite", "asymptotic"), default="finite")
    p.add_argument("--vacuum-credit", default="zero",
                   help="'calibrated', 'zero' (default: matches published curves), or a rate")
    p.add_argument("--out", help="write the results CSV here")
    p.set_defaults(func=cmd_scan_loss)

    p = sub.add_parser("hbt", help="virtual beam-splitter correlation experiment")
    _add_common(p)
    p.add_argument("--pulses", type=float, help="override n_pulses")
    p.add_argument("--seed", type=int, help="override seed")
    p.add_argument("--mu0", type=float, help="override the mean pair number")
    p.add_argument("--detector-eff", type=float, default=0.15)
    p.add_argument("--source", choices=("poisson", "thermal", "multimode"),
                   default="poisson")
    p.add_argument("--k-modes", type=int, default=10, help="modes for --source multimode")
    p.set_defaults(func=cmd_hbt)

    p = sub.add_parser("car", help="virtual signal/idler coincidence experiment")
    _add_common(p)
    p.add_argument("--pulses", type=float, help="override n_pulses")
    p.add_argument("--seed", type=int, help="override seed")
    p.add_argument("--mu0", type=float, help="override the mean pair number")
    p.add_argument("--signal-eff", type=float, default=0.15)
    p.set_defaults(func=cmd_car)

    p = sub.add_parser("calibrate", help="invert trigger fraction or CAR into source parameters")
    p.add_argument("--trigger-rate", type=float, help="measured N_A / N")
    p.add_argument("--mu0", type=float, help="mean pair number for --trigger-rate")
    p.add_argument("--car", type=float, help="measured coincidence-to-accidental ratio")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("reproduce", help="rebuild the published comparison tables/curves")
    p.add_argument("target", choices=("table1", "fig4"))
    p.add_argument("--step", type=float, default=0.1, help="loss grid step for fig4, dB")
    p.add_argument("--vacuum-credit", default="zero")
    p.add_argument("--out", help="results CSV path for fig4")
    _add_common(p, config=False)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, DataFormatError) as exc:
        return _fail(EXIT_DATA, str(exc))
    except (EstimatorError, TruncationError, UndefinedRatioError) as exc:
        return _fail(EXIT_NUMERIC, str(exc))
    except ParameterError as exc:
        return _fail(EXIT_USAGE, str(exc))


if __name__ == "__main__":
    sys.exit(main())
