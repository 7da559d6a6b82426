"""One complete experiment: generate, warm start, process, measure, persist."""
from __future__ import annotations

import json
import platform
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, _kernels
from .config import RunConfig
from .datagen import GENERATOR_VERSION, LabeledStream, generate
from .features import FEATURE_LAYOUT_VERSION
from .metrics import MetricsReport, build_report, positive_rule, timing_metrics, write_series
from .pipeline import RunArtifacts, process_stream


@dataclass
class RunResult:
    config: RunConfig
    stream: LabeledStream
    warm_count: int
    artifacts: RunArtifacts
    report: MetricsReport
    manifest: dict


def split_warm(n: int, fraction: float) -> int:
    return int(n * fraction)


def run_experiment(cfg: RunConfig, stream: Optional[LabeledStream] = None) -> RunResult:
    cfg.validate()
    t0 = time.perf_counter()
    stream = stream if stream is not None else generate(cfg.scenario_spec())
    txs = stream.transactions
    k = split_warm(len(txs), cfg.warm_start)
    engine = cfg.engine()
    engine.warm_start(txs[:k])
    art = process_stream(txs[k:], cfg.pipeline_config(), engine, cfg.network())
    report = build_report(art.lifecycles, art.events, scenario=stream.manifest["spec"]["name"],
                          seed=cfg.seed, l_edge=cfg.l_edge, l_ai=cfg.l_ai,
                          positive=positive_rule(cfg.include_monitor),
                          extra={"warm_start_count": k, "failed": len(art.failed),
                                 "incidents": len(art.incidents),
                                 "ledger_blocks": len(art.ledger) - 1,
                                 "fraud_rate": stream.manifest["spec"]["fraud_rate"]})
    manifest = {
        "schema_version": 1,
        "config": cfg.to_dict(),
        "seeds": {"data": cfg.seed, "network": [cfg.seed, 0x6E6574]},
        "versions": {"anfbsim": __version__, "generator": GENERATOR_VERSION,
                     "feature_layout": FEATURE_LAYOUT_VERSION, "kernel_backend": _kernels.BACKEND,
                     "python": platform.python_version(), "numpy": np.__version__},
        "dataset": stream.manifest,
        "warm_start_count": k,
        "evaluated": len(txs) - k,
        "ledger_tip": art.ledger.tip.hash.hex(),
        "info": {"wall_seconds_total": round(time.perf_counter() - t0, 3),
                 "wall_seconds_engine": round(art.wall_seconds, 3)},
    }
    return RunResult(cfg, stream, k, art, report, manifest)


def write_result(res: RunResult, outdir=None) -> dict:
    out = Path(outdir if outdir is not None else res.config.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = res.artifacts.write(out)
    for p in res.report.write(out, res.config.formats):
        paths[p.stem + p.suffix.replace(".", "_")] = str(p)
    stats = timing_metrics(res.artifacts.lifecycles, res.artifacts.events.events,
                           res.config.l_edge, res.config.l_ai)
    for p in write_series(out, stats, res.artifacts.lifecycles):
        paths[p.stem] = str(p)
    (out / "manifest.json").write_text(json.dumps(res.manifest, indent=2) + "\n")
    paths["manifest"] = str(out / "manifest.json")
    return paths


def summary_lines(res: RunResult) -> list[str]:
    r = res.report

    def fmt(v, spec=".4f", unit=""):
        return "n/a" if v is None else f"{v:{spec}}{unit}"

    return [
        f"scenario {r.scenario}  seed {r.seed}  n_tx {res.config.n_tx}  "
        f"evaluated {r.n_evaluated}  backend {_kernels.BACKEND}",
        f"decisions  Accept {r.decisions['Accept']}  Monitor {r.decisions['Monitor']}  "
        f"Reject {r.decisions['Reject']}",
        f"accuracy {fmt(r.accuracy)}  precision {fmt(r.precision)}",
        f"mean T_c {fmt(r.tc_mean, '.1f', ' ms')}  mean D_b {fmt(r.db_mean, '.1f', ' ms')}  "
        f"mean L_total {fmt(r.l_total_mean, '.1f', ' ms')}",
        f"blocks {r.n_blocks}  incidents {r.extra['incidents']}  failed {r.extra['failed']}",
    ]
