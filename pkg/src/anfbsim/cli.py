"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error,
3 verification failed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .errors import AnfbError, ConfigError, SchemaError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _report_error("UsageError", message)
        raise SystemExit(EXIT_CONFIG)


def _report_error(kind: str, message: str) -> None:
    print("error: " + json.dumps({"kind": kind, "message": message}), file=sys.stderr)


def _fault(text: str):
    idx, _, mode = text.partition("=")
    if not idx.isdigit() or mode not in ("honest", "always_reject", "random_vote"):
        raise argparse.ArgumentTypeError("expected INDEX=honest|always_reject|random_vote")
    return int(idx), mode


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=["S1", "S2", "S3", "custom"])
    p.add_argument("--n-tx", type=int, dest="n_tx")
    p.add_argument("--fraud-rate", type=float, dest="fraud_rate")
    p.add_argument("--n-users", type=int, dest="n_users")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="anfbsim", description="Fraud-gated permissioned ledger simulator.")
    parser.add_argument("--version", action="version", version=f"anfbsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="generate a scenario, process it and write artifacts")
    run.add_argument("--config", help="JSON config file or a previous run's manifest.json")
    _scenario_flags(run)
    run.add_argument("--nodes", type=int)
    run.add_argument("--theta", type=int)
    run.add_argument("--lambda", type=float, dest="lam")
    run.add_argument("--eta1", type=float)
    run.add_argument("--eta2", type=float)
    run.add_argument("--block-size", type=int, dest="block_size")
    run.add_argument("--block-interval", type=int, dest="block_interval",
                     help="virtual ms between proposals")
    run.add_argument("--allow-out-of-range", action="store_true", default=None,
                     dest="allow_out_of_range")
    run.add_argument("--warm-start", type=float, dest="warm_start",
                     help="labeled prefix fraction used for warm start")
    run.add_argument("--rules", help="rule base JSON file")
    run.add_argument("--include-monitor", action="store_true", default=None,
                     dest="include_monitor", help="count Monitor as a positive prediction")
    run.add_argument("--no-online-learning", action="store_false", default=None,
                     dest="online_learning")
    run.add_argument("--fault", type=_fault, action="append", metavar="INDEX=MODE")
    run.add_argument("--out")
    run.add_argument("--format", action="append", choices=["json", "csv"], dest="formats")
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("gen", help="write a labeled synthetic dataset as CSV")
    _scenario_flags(gen)
    gen.add_argument("--out", required=True, help="output directory")
    gen.set_defaults(func=cmd_gen)

    ver = sub.add_parser("verify", help="verify a ledger export")
    ver.add_argument("ledger")
    ver.add_argument("--validators", help="validators.json (default: beside the ledger)")
    ver.add_argument("--max-block-size", type=int, default=100, dest="max_block_size")
    ver.set_defaults(func=cmd_verify)

    tam = sub.add_parser("tamper", help="write a copy of a ledger export with one bit flipped")
    tam.add_argument("ledger")
    tam.add_argument("--block", type=int, required=True, help="block position (genesis = 0)")
    tam.add_argument("--field", default="amount")
    tam.add_argument("--entry", type=int, default=0)
    tam.add_argument("--bit", type=int, default=0)
    tam.add_argument("--out", required=True)
    tam.set_defaults(func=cmd_tamper)

    met = sub.add_parser("metrics", help="recompute metrics from a run directory")
    met.add_argument("rundir")
    met.add_argument("--include-monitor", action="store_true", default=None,
                     dest="include_monitor")
    met.add_argument("--out", help="directory for recomputed metrics (default: print JSON)")
    met.add_argument("--format", action="append", choices=["json", "csv"], dest="formats")
    met.set_defaults(func=cmd_metrics)

    suite = sub.add_parser("suite", help="run the desk-scale benchmark suite")
    suite.add_argument("--scenarios", nargs="+", default=["S1", "S2", "S3"])
    suite.add_argument("--seeds", nargs="+", type=int, default=[1, 2, 3])
    suite.add_argument("--n-tx", type=int, default=10_000, dest="n_tx")
    suite.add_argument("--thresholds")
    suite.add_argument("--workers", type=int, default=1)
    suite.add_argument("--out")
    suite.set_defaults(func=cmd_suite)
    return parser


_RUN_KEYS = ("scenario", "n_tx", "fraud_rate", "n_users", "seed", "nodes", "theta", "lam",
             "eta1", "eta2", "block_size", "block_interval", "allow_out_of_range", "warm_start",
             "rules", "include_monitor", "online_learning", "out", "formats")


def _load_config_file(path: str):
    from .config import RunConfig
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError):
        return RunConfig.load(path)  # produces the structured error
    if isinstance(raw, dict) and "config" in raw and "dataset" in raw:
        return RunConfig.load_dict(raw["config"], source=path)
    return RunConfig.load(path)


def cmd_run(args) -> int:
    from .config import RunConfig
    from .runner import run_experiment, summary_lines, write_result
    cfg = _load_config_file(args.config) if args.config else RunConfig()
    flags = {k: getattr(args, k) for k in _RUN_KEYS}
    flags["lambda"] = flags.pop("lam")
    if args.fault:
        flags["faults"] = {str(i): m for i, m in args.fault}
    cfg = cfg.merged(flags).validate()
    res = run_experiment(cfg)
    paths = write_result(res)
    if not args.quiet:
        print("\n".join(summary_lines(res)))
        print(f"artifacts in {cfg.out}")
    return EXIT_OK if paths else EXIT_RUNTIME


def cmd_gen(args) -> int:
    from .config import RunConfig
    from .datagen import PRESET_N_TX, generate, write_csv
    flags = {k: getattr(args, k) for k in ("scenario", "n_tx", "fraud_rate", "n_users", "seed")}
    if flags["n_tx"] is None:
        flags["n_tx"] = PRESET_N_TX
    cfg = RunConfig().merged(flags).validate()
    stream = generate(cfg.scenario_spec())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(stream, out / "dataset.csv")
    (out / "manifest.json").write_text(json.dumps(stream.manifest, indent=2) + "\n")
    print(f"wrote {len(stream)} transactions ({stream.fraud_count} fraudulent) to "
          f"{out / 'dataset.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .ledger import Ledger, ValidatorRegistry
    path = Path(args.ledger)
    reg_path = Path(args.validators) if args.validators else path.with_name("validators.json")
    try:
        registry = ValidatorRegistry.load(reg_path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load validator registry {reg_path}: {exc}") from None
    try:
        ledger = Ledger.load_jsonl(path, registry, args.max_block_size)
    except SchemaError as exc:
        block = "" if exc.line is None else f" (block {exc.line - 1})"
        print(f"INVALID: {path}: {exc}{block}")
        return EXIT_VERIFY
    result = ledger.verify()
    if result.ok:
        print(f"OK: {len(ledger)} blocks verified")
        return EXIT_OK
    print(f"INVALID: first invalid block {result.first_invalid}: {result.reason}")
    return EXIT_VERIFY


def cmd_tamper(args) -> int:
    from .tamper import tamper_file
    dst = tamper_file(args.ledger, args.out, args.block, args.field, args.entry, args.bit)
    print(f"wrote tampered copy to {dst} (block {args.block}, field {args.field}, "
          f"entry {args.entry}, bit {args.bit})")
    return EXIT_OK


def recompute_metrics(rundir, include_monitor=None):
    """Rebuild the metrics report of a run from its exported artifacts only."""
    from .consensus import EventLog
    from .metrics import build_report, positive_rule
    from .pipeline import read_lifecycles
    d = Path(rundir)
    manifest = json.loads((d / "manifest.json").read_text())
    cfg = manifest["config"]
    lifecycles = read_lifecycles(d / "lifecycles.csv")
    events = EventLog.load_jsonl(d / "events.jsonl")
    inc = cfg["include_monitor"] if include_monitor is None else include_monitor
    extra = {"warm_start_count": manifest["warm_start_count"],
             "failed": sum(lc.status == "failed" for lc in lifecycles),
             "incidents": sum(lc.status == "rejected" for lc in lifecycles),
             "ledger_blocks": len(events.of_kind("commit")),
             "fraud_rate": manifest["dataset"]["spec"]["fraud_rate"]}
    return build_report(lifecycles, events, scenario=manifest["dataset"]["spec"]["name"],
                        seed=cfg["seed"], l_edge=cfg["l_edge"], l_ai=cfg["l_ai"],
                        positive=positive_rule(inc), extra=extra)


def cmd_metrics(args) -> int:
    try:
        report = recompute_metrics(args.rundir, args.include_monitor)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read run artifacts in {args.rundir}: {exc}") from None
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        for p in report.write(args.out, args.formats or ("json", "csv")):
            print(f"wrote {p}")
    else:
        sys.stdout.write(report.to_json())
    return EXIT_OK


def cmd_suite(args) -> int:
    from .bench import BenchSuite, run_suite
    suite = BenchSuite(scenarios=args.scenarios, n_tx=args.n_tx, seeds=args.seeds,
                       thresholds=args.thresholds)
    report = run_suite(suite, args.out, workers=args.workers)
    print(report.table())
    return EXIT_OK if report.passed else EXIT_VERIFY


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        _report_error(type(exc).__name__, str(exc))
        return EXIT_CONFIG
    except (AnfbError, OSError, ValueError) as exc:
        _report_error(type(exc).__name__, str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
