import dataclasses

import pytest

from anfbsim.config import RunConfig
from anfbsim.consensus import NetworkModel, consensus_floor_ms
from anfbsim.errors import ConfigError
from anfbsim.metrics import accuracy, confusion
from anfbsim.pipeline import IncidentLog, PipelineConfig, process_stream, read_lifecycles
from anfbsim.risk import Decision, FusionConfig, LogisticClassifier, RiskEngine
from anfbsim.runner import run_experiment, write_result
from anfbsim.transactions import BehaviorVector, Transaction


_CALM = BehaviorVector(1.0, 0.0, 1.0, 0.0, 1.0)


def _legit(n, spacing=3):
    return [Transaction(i, f"u{i % 7}", f"u{(i + 1) % 7}", 20.0 + i % 5, i * spacing,
                        device=f"d{i % 7}", behavior=_CALM, label=0) for i in range(n)]


def _accepting_engine():
    clf = LogisticClassifier(weights=[0.0] * 7, bias=-1000.0)
    return RiskEngine(clf, fusion=FusionConfig(lam=1.0), online_learning=False)


def _rejecting_engine():
    clf = LogisticClassifier(weights=[0.0] * 7, bias=1000.0)
    return RiskEngine(clf, fusion=FusionConfig(lam=1.0), online_learning=False)


def test_config_ranges():
    with pytest.raises(ConfigError):
        PipelineConfig(block_size=10)
    with pytest.raises(ConfigError):
        PipelineConfig(block_interval=20_000)
    assert PipelineConfig(block_size=10, allow_out_of_range=True).block_size == 10
    with pytest.raises(ConfigError):
        PipelineConfig(block_size=0, allow_out_of_range=True)


def test_theta_above_committee():
    with pytest.raises(ConfigError):
        process_stream(_legit(5), PipelineConfig(theta=6), _accepting_engine(),
                       NetworkModel.build(5))


def test_unordered_stream_rejected():
    txs = _legit(5)
    txs[2] = dataclasses.replace(txs[2], timestamp=10_000)
    with pytest.raises(ConfigError):
        process_stream(txs, PipelineConfig(), _accepting_engine(), NetworkModel.build(5))


def test_full_blocks_by_size():
    art = process_stream(_legit(100), PipelineConfig(block_size=50), _accepting_engine(),
                         NetworkModel.build(5))
    assert len(art.ledger) == 3
    assert [len(b.entries) for b in art.ledger.blocks[1:]] == [50, 50]
    assert all(lc.status == "confirmed" for lc in art.lifecycles)
    assert art.ledger.verify().ok


def test_partial_block_waits_for_interval():
    art = process_stream(_legit(30), PipelineConfig(block_size=50, block_interval=5000),
                         _accepting_engine(), NetworkModel.build(5))
    assert len(art.ledger) == 2
    (prop,) = art.events.of_kind("propose")
    assert prop["t"] == 5000


def test_everything_rejected():
    art = process_stream(_legit(40), PipelineConfig(), _rejecting_engine(), NetworkModel.build(5))
    assert len(art.ledger) == 1
    assert len(art.incidents) == 40
    assert all(lc.status == "rejected" for lc in art.lifecycles)
    assert art.incidents.verify().ok


def test_edge_server_queueing():
    txs = [dataclasses.replace(t, timestamp=0) for t in _legit(4)]
    art = process_stream(txs, PipelineConfig(), _accepting_engine(), NetworkModel.build(5))
    assert [lc.t_assessed for lc in art.lifecycles] == [7, 14, 21, 28]


def test_discard_then_fail():
    net = NetworkModel.build(5, 0, faults={j: "always_reject" for j in range(5)})
    cfg = PipelineConfig(block_size=50, max_retries=1)
    art = process_stream(_legit(50), cfg, _accepting_engine(), net)
    assert len(art.ledger) == 1
    assert len(art.events.of_kind("discard")) == 2
    assert sorted(art.failed) == list(range(50))
    assert all(lc.status == "failed" and lc.retries == 2 for lc in art.lifecycles)


def test_partial_faults_still_commit():
    net = NetworkModel.build(5, 0, faults={0: "always_reject", 1: "always_reject"})
    art = process_stream(_legit(100), PipelineConfig(block_size=50, theta=3),
                         _accepting_engine(), net)
    assert len(art.ledger) == 3 and not art.failed


class TestScenarioRun:
    def test_conservation(self, s2_run):
        art = s2_run.artifacts
        n = len(s2_run.stream) - s2_run.warm_count
        assert len(art.lifecycles) == n
        committed = [t for b in art.ledger.blocks for t in b.tx_ids]
        assert len(committed) == len(set(committed))
        rejected = {r.tx.tx_id for r in art.incidents}
        assert not rejected & set(committed)
        assert len(committed) + len(rejected) + len(art.failed) == n
        assert sum(art.counts().values()) == n

    def test_ledger_respects_gate(self, s2_run):
        eta2 = s2_run.config.eta2
        for b in s2_run.artifacts.ledger.blocks:
            for e in b.entries:
                assert e.risk < eta2
        for r in s2_run.artifacts.incidents:
            assert r.assessment.r >= eta2

    def test_monitor_flag(self, s2_run):
        decisions = {lc.tx_id: lc.decision for lc in s2_run.artifacts.lifecycles}
        for b in s2_run.artifacts.ledger.blocks:
            for e in b.entries:
                assert e.flagged == (decisions[e.tx.tx_id] is Decision.MONITOR)

    def test_timing_floor(self, s2_run):
        cfg = s2_run.config
        floor = cfg.l_edge + cfg.l_ai + consensus_floor_ms(cfg.nodes, cfg.theta)
        confirmed = [lc for lc in s2_run.artifacts.lifecycles if lc.t_confirmed is not None]
        assert confirmed
        for lc in confirmed:
            assert lc.t_assessed - lc.t_submitted >= cfg.l_edge + cfg.l_ai
            assert lc.t_confirmed - lc.t_submitted >= floor

    def test_blocks_bounded(self, s2_run):
        for b in s2_run.artifacts.ledger.blocks[1:]:
            assert 1 <= len(b.entries) <= s2_run.config.block_size
        assert s2_run.artifacts.ledger.verify().ok
        assert s2_run.artifacts.incidents.verify().ok

    def test_one_round_at_a_time(self, s2_run):
        ev = s2_run.artifacts.events.events
        open_round = False
        for e in ev:
            if e["event"] == "propose":
                assert not open_round
                open_round = True
            elif e["event"] == "broadcast" or e["event"] == "discard":
                open_round = False

    def test_artifacts_round_trip(self, s2_run, tmp_path):
        write_result(s2_run, tmp_path)
        back = read_lifecycles(tmp_path / "lifecycles.csv")
        assert back == s2_run.artifacts.lifecycles


def test_incident_log_tamper_detected(s2_run):
    log = IncidentLog()
    log.records = list(s2_run.artifacts.incidents.records)
    assert len(log) > 3
    r = log.records[2]
    a = dataclasses.replace(r.assessment, r=r.assessment.r - 1e-6)
    log.records[2] = dataclasses.replace(r, assessment=a)
    res = log.verify()
    assert not res.ok and res.first_invalid == 2


def test_deterministic(s2_stream, tmp_path):
    cfg = RunConfig(scenario="S2", n_tx=3000, seed=7)
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    write_result(a, tmp_path / "a")
    write_result(b, tmp_path / "b")
    for name in ("ledger.jsonl", "metrics.json", "events.jsonl", "lifecycles.csv",
                 "incidents.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_warm_start_helps(s2_stream):
    warm = run_experiment(RunConfig(scenario="S2", n_tx=10_000, seed=42), s2_stream)
    cold = run_experiment(RunConfig(scenario="S2", n_tx=10_000, seed=42, warm_start=0.0,
                                    online_learning=False), s2_stream)
    warm_acc = accuracy(confusion(warm.artifacts.lifecycles))
    cold_acc = accuracy(confusion(cold.artifacts.lifecycles[warm.warm_count:]))
    assert warm_acc >= cold_acc
