"""Desk-scale benchmark suite: scenarios x seeds, aggregated and checked.

Thresholds file (JSON, ``schema_version`` 1)::

    {"checks": [{"name": str, "scenario": "S2" | "*", "metric": str,
                 "stat": "min" | "max" | "mean", "op": ">=" | "<=", "value": number}],
     "suite": {"tc_mean_relative_spread_max": number, "runtime_seconds_max": number}}

``metric`` names a field of the per-run metrics report (or of its ``extra``
block). ``stat`` reduces that metric over the scenario's seeds before comparing.
"""
from __future__ import annotations

import csv
import json
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .config import RunConfig
from .errors import ConfigError
from .runner import run_experiment, write_result

AGGREGATED = ("accuracy", "precision", "recall", "f1", "tc_mean", "tc_median", "tc_p95",
              "db_mean", "db_max", "db_min", "l_total_mean", "l_blockchain_mean")
_OPS = {">=": lambda a, b: a >= b, "<=": lambda a, b: a <= b}
_STATS = {"min": min, "max": max, "mean": statistics.fmean}


def load_thresholds(path=None) -> dict:
    if path is None:
        text = resources.files("anfbsim").joinpath("data/thresholds.json").read_text()
    else:
        text = Path(path).read_text()
    d = json.loads(text)
    if d.get("schema_version") != 1:
        raise ConfigError("thresholds file must declare schema_version 1")
    for c in d.get("checks", []):
        missing = {"name", "scenario", "metric", "stat", "op", "value"} - set(c)
        if missing:
            raise ConfigError(f"threshold check missing {sorted(missing)}")
        if c["op"] not in _OPS or c["stat"] not in _STATS:
            raise ConfigError(f"bad op/stat in threshold {c['name']!r}")
    return d


@dataclass
class BenchSuite:
    scenarios: Sequence[str] = ("S1", "S2", "S3")
    n_tx: int = 10_000
    seeds: Sequence[int] = (1, 2, 3)
    thresholds: Optional[str] = None  # path; None = packaged file
    base: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        if len(self.seeds) < 3:
            raise ConfigError("a suite needs at least 3 seeds per scenario")

    def cells(self) -> list[RunConfig]:
        return [self.base.merged({"scenario": s, "n_tx": self.n_tx, "seed": seed})
                for s in self.scenarios for seed in self.seeds]


@dataclass
class CheckResult:
    name: str
    scenario: str
    observed: Optional[float]
    op: str
    bound: float
    passed: bool


@dataclass
class SuiteReport:
    runs: list  # per-cell metrics report dicts (None for a failed cell)
    errors: list  # (scenario, seed, message)
    aggregate: dict  # scenario -> metric -> {"n", "mean", "stdev"}
    checks: list
    runtime_seconds: float

    @property
    def passed(self) -> bool:
        return not self.errors and all(c.passed for c in self.checks)

    def table(self) -> str:
        lines = [f"{'scenario':<9}{'metric':<19}{'n':>3}{'mean':>14}{'stdev':>12}"]
        for scen, metrics in self.aggregate.items():
            for m, a in metrics.items():
                mean = "n/a" if a["mean"] is None else f"{a['mean']:.4f}"
                sd = "n/a" if a["stdev"] is None else f"{a['stdev']:.4f}"
                lines.append(f"{scen:<9}{m:<19}{a['n']:>3}{mean:>14}{sd:>12}")
        lines.append("")
        lines.append(f"{'check':<40}{'observed':>12}  bound      result")
        for c in self.checks:
            obs = "n/a" if c.observed is None else f"{c.observed:.4f}"
            lines.append(f"{c.name:<40}{obs:>12}  {c.op} {c.bound:<7} "
                         f"{'PASS' if c.passed else 'FAIL'}")
        for scen, seed, msg in self.errors:
            lines.append(f"cell {scen} seed {seed} FAILED: {msg}")
        lines.append(f"runtime {self.runtime_seconds:.1f} s  suite "
                     f"{'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)

    def write(self, outdir) -> list[Path]:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "suite_aggregate.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("scenario", "metric", "n", "mean", "stdev"))
            for scen, metrics in self.aggregate.items():
                for m, a in metrics.items():
                    w.writerow((scen, m, a["n"], "" if a["mean"] is None else a["mean"],
                                "" if a["stdev"] is None else a["stdev"]))
        with (out / "suite_checks.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("check", "scenario", "observed", "op", "bound", "passed"))
            for c in self.checks:
                w.writerow((c.name, c.scenario, "" if c.observed is None else c.observed,
                            c.op, c.bound, c.passed))
        with (out / "suite_runs.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("scenario", "seed", "accuracy", "precision", "tc_mean", "db_mean",
                        "db_max", "l_total_mean"))
            for r in self.runs:
                if r is not None:
                    w.writerow([r["scenario"], r["seed"]] + [
                        "" if r[k] is None else r[k]
                        for k in ("accuracy", "precision", "tc_mean", "db_mean", "db_max",
                                  "l_total_mean")])
        (out / "suite_report.txt").write_text(self.table() + "\n")
        return [out / n for n in ("suite_aggregate.csv", "suite_checks.csv", "suite_runs.csv",
                                  "suite_report.txt")]


def _run_cell(cfg: RunConfig, outdir: Optional[str]) -> dict:
    res = run_experiment(cfg)
    if outdir is not None:
        write_result(res, Path(outdir) / f"{cfg.scenario}_seed{cfg.seed}")
    return res.report.to_dict()


def _metric(run: dict, name: str):
    if name in run:
        return run[name]
    return run.get("extra", {}).get(name)


def aggregate(runs: Sequence[Optional[dict]]) -> dict:
    """Per scenario and metric: count of defined values, mean and sample stdev."""
    out: dict = {}
    for scen in dict.fromkeys(r["scenario"] for r in runs if r is not None):
        rows = [r for r in runs if r is not None and r["scenario"] == scen]
        out[scen] = {}
        for m in AGGREGATED:
            vals = [float(v) for v in (_metric(r, m) for r in rows) if v is not None]
            out[scen][m] = {"n": len(vals),
                            "mean": statistics.fmean(vals) if vals else None,
                            "stdev": statistics.stdev(vals) if len(vals) >= 2 else None}
    return out


def tc_spread(agg: dict) -> Optional[float]:
    """(max - min) / mean of the per-scenario mean confirmation times."""
    means = [m["tc_mean"]["mean"] for m in agg.values() if m["tc_mean"]["mean"] is not None]
    if len(means) < 2:
        return None
    return (max(means) - min(means)) / statistics.fmean(means)


def evaluate(runs: Sequence[Optional[dict]], thresholds: dict, runtime: float) -> list[CheckResult]:
    agg = aggregate(runs)
    results = []
    for c in thresholds.get("checks", []):
        scens = list(agg) if c["scenario"] == "*" else [c["scenario"]]
        for scen in scens:
            vals = [_metric(r, c["metric"]) for r in runs
                    if r is not None and r["scenario"] == scen]
            vals = [float(v) for v in vals if v is not None]
            obs = _STATS[c["stat"]](vals) if vals else None
            ok = obs is not None and _OPS[c["op"]](obs, c["value"])
            label = c["name"] if c["scenario"] != "*" else f"{c['name']} [{scen}]"
            results.append(CheckResult(label, scen, obs, c["op"], c["value"], ok))
    suite = thresholds.get("suite", {})
    if "tc_mean_relative_spread_max" in suite:
        s = tc_spread(agg)
        bound = suite["tc_mean_relative_spread_max"]
        results.append(CheckResult("T_c mean spread across scenarios", "*", s, "<", bound,
                                   s is not None and s < bound))
    if "runtime_seconds_max" in suite:
        bound = suite["runtime_seconds_max"]
        results.append(CheckResult("suite runtime (s)", "*", runtime, "<", bound, runtime < bound))
    return results


def run_suite(suite: BenchSuite, outdir=None, workers: int = 1) -> SuiteReport:
    thresholds = load_thresholds(suite.thresholds)
    cells = suite.cells()
    t0 = time.perf_counter()
    runs: list = []
    errors: list = []
    cell_dir = None if outdir is None else str(Path(outdir) / "runs")
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_run_cell, cfg, cell_dir) for cfg in cells]
            outcomes = []
            for f in futures:
                try:
                    outcomes.append((f.result(), None))
                except Exception as exc:  # a failed cell never aborts the suite
                    outcomes.append((None, exc))
    else:
        outcomes = []
        for cfg in cells:
            try:
                outcomes.append((_run_cell(cfg, cell_dir), None))
            except Exception as exc:
                outcomes.append((None, exc))
    for cfg, (rep, exc) in zip(cells, outcomes):
        runs.append(rep)
        if exc is not None:
            errors.append((cfg.scenario, cfg.seed, f"{type(exc).__name__}: {exc}"))
    runtime = time.perf_counter() - t0
    report = SuiteReport(runs, errors, aggregate(runs), evaluate(runs, thresholds, runtime), runtime)
    if outdir is not None:
        report.write(outdir)
    return report
