"""Acceptance suite: one recorded PASS/FAIL line per criterion.

Tolerances are pinned here as literals so a change to a packaged default cannot
silently loosen a criterion.
"""
import dataclasses
import itertools
import json
import math
import random
import time
from fractions import Fraction

import pytest

from anfbsim.bench import BenchSuite, load_thresholds, run_suite
from anfbsim.config import RunConfig
from anfbsim.consensus import NetworkModel, consensus_floor_ms, quorum_reached, run_consensus
from anfbsim.errors import CoverageError, UndefinedMetricError
from anfbsim.ledger import Block, BlockEntry, Ledger, block_from_dict, block_to_dict, verify_chain
from anfbsim.metrics import (ConfusionMatrix, accuracy, confusion_from_pairs, f1, positive_rule,
                             precision, recall, timing_metrics)
from anfbsim.risk import (Decision, FusionConfig, FuzzyRuleBase, LogisticClassifier, RiskEngine,
                          fuzzy_score)
from anfbsim.runner import run_experiment, write_result
from anfbsim.tamper import BLOCK_FIELDS, ENTRY_FIELDS, tamper_block_dict

from test_risk_engine import enumerate_r_f, random_rule_base

TAMPER_CASES = 500
TAMPER_SECONDS = 10.0
ORACLE_CASES = 1000
ORACLE_ABS_TOL = 1e-9
GRAD_CASES = 100
GRAD_REL_TOL = 1e-6
FUSION_TX = 10_000
METRIC_PAIRS = 5000
DB_RANGE = (10, 50)
TC_SPREAD_MAX = 0.10
MIN_ACCURACY = 0.98
MIN_PRECISION = 0.90
SUITE_SECONDS = 300.0
N_TX = 10_000


@pytest.fixture(scope="module")
def s3_run(s3_stream):
    return run_experiment(RunConfig(scenario="S3", n_tx=N_TX, seed=42), s3_stream)


def test_c01_tamper_evidence(ledger100, criterion):
    assert len(ledger100) - 1 == 100
    dicts = [block_to_dict(b) for b in ledger100]
    rng = random.Random(2025)
    fields = sorted(BLOCK_FIELDS) + sorted(ENTRY_FIELDS)
    t0 = time.perf_counter()
    detected = 0
    for _ in range(TAMPER_CASES):
        k = rng.randrange(1, len(dicts))
        field = rng.choice(fields)
        mutated = tamper_block_dict(dicts[k], field, rng.randrange(len(dicts[k]["entries"])),
                                    rng.randrange(64))
        blocks = list(ledger100.blocks)
        blocks[k] = block_from_dict(mutated)
        r = verify_chain(Ledger(ledger100.registry, ledger100.max_block_size, blocks))
        detected += (not r.ok) and r.first_invalid <= k
    elapsed = time.perf_counter() - t0
    criterion(1, "tamper evidence", detected == TAMPER_CASES and elapsed < TAMPER_SECONDS,
              f"{detected}/{TAMPER_CASES} detected in {elapsed:.2f} s (< {TAMPER_SECONDS} s)")


def test_c02_consensus_correctness(s1_stream, criterion):
    entries = tuple(BlockEntry(t, 0.1, 0) for t in s1_stream.transactions[:5])
    block = Block(1, entries, bytes(32), 0).sealed()
    exact = 0
    for pattern in itertools.product([False, True], repeat=5):
        faults = {j: "always_reject" for j, ok in enumerate(pattern) if not ok}
        for theta in range(1, 6):
            rec = run_consensus(block, NetworkModel.build(5, theta, faults=faults), theta,
                                eta2=0.7, max_block_size=100)
            expected = sum(pattern) >= theta
            exact += rec.verdict == expected and quorum_reached(pattern, theta) == expected
    criterion(2, "consensus verdict equals popcount >= theta", exact == 160, f"{exact}/160 exact")


def test_c03_fuzzy_oracle(criterion):
    rng = random.Random(31)
    matched = uncovered_ok = 0
    worst = 0.0
    while matched < ORACLE_CASES:
        rb = random_rule_base(rng)
        inputs = {name: rng.random() for name in rb.var_order}
        expected = enumerate_r_f(rb.variables, rb.rules, rb.weights, inputs)
        if expected is None:
            with pytest.raises(CoverageError):
                fuzzy_score(rb, inputs)
            uncovered_ok += 1
            continue
        err = abs(fuzzy_score(rb, inputs) - expected)
        worst = max(worst, err)
        matched += err <= ORACLE_ABS_TOL
        if err > ORACLE_ABS_TOL:
            break
    criterion(3, "fuzzy score matches enumeration oracle", matched == ORACLE_CASES,
              f"{matched}/{ORACLE_CASES} within {ORACLE_ABS_TOL:g}, worst {worst:.1e}, "
              f"{uncovered_ok} uncovered inputs raised")


def _rel_ok(a, b):
    return abs(a - b) <= GRAD_REL_TOL * max(abs(a), abs(b), 1e-300)


def test_c04_gradients(criterion):
    rng = random.Random(404)
    clf_ok = 0
    for _ in range(GRAD_CASES):
        clf = LogisticClassifier(weights=[rng.uniform(-2, 2) for _ in range(7)],
                                 bias=rng.uniform(-1, 1))
        x = [rng.uniform(0.05, 1.0) for _ in range(7)]
        y = rng.randint(0, 1)
        gw, gb = clf.gradient(x, y)
        ok = True
        for i, g in enumerate(list(gw) + [gb]):
            up, dn = clf.copy(), clf.copy()
            if i < 7:
                up.weights[i] += 1e-6
                dn.weights[i] -= 1e-6
            else:
                up.bias += 1e-6
                dn.bias -= 1e-6
            ok &= _rel_ok((up.log_loss(x, y) - dn.log_loss(x, y)) / 2e-6, g)
        clf_ok += ok
    fz_ok = 0
    lr, h = 1e-3, 1e-4
    for _ in range(GRAD_CASES):
        rb = FuzzyRuleBase.default()
        rb.set_weights([rng.uniform(0.1, 0.9) for _ in rb.weights])
        z = [rng.random() for _ in range(3)]
        c = rng.randint(0, 1)
        w0 = list(rb.weights)
        _, betas = rb.score(z)
        den = sum(betas)
        rb.adapt(z, c, lr=lr)
        ok = True
        for k in range(len(w0)):
            if betas[k] == 0.0:
                ok &= rb.weights[k] == w0[k]
                continue
            up, dn = list(w0), list(w0)
            up[k] += h
            dn[k] -= h
            loss = [0.5 * (sum(w * b for w, b in zip(ws, betas)) / den - c) ** 2 for ws in (up, dn)]
            ok &= _rel_ok((loss[0] - loss[1]) / (2 * h), (w0[k] - rb.weights[k]) / lr)
        fz_ok += ok
    criterion(4, "gradient checks against central differences",
              clf_ok == GRAD_CASES and fz_ok == GRAD_CASES,
              f"classifier {clf_ok}/{GRAD_CASES}, rule weights {fz_ok}/{GRAD_CASES} "
              f"within {GRAD_REL_TOL:g} relative")


def test_c05_fusion_endpoints(s2_stream, criterion):
    txs = s2_stream.transactions[:FUSION_TX]
    e1 = RiskEngine(fusion=FusionConfig(lam=1.0))
    e0 = RiskEngine(fusion=FusionConfig(lam=0.0))
    ml = sum(a.r == a.r_ml for a in map(e1.assess, txs))
    fz = sum(a.r == a.r_f for a in map(e0.assess, txs))
    criterion(5, "fusion endpoints bit-exact", ml == len(txs) == FUSION_TX and fz == FUSION_TX,
              f"lambda=1 {ml}/{FUSION_TX}, lambda=0 {fz}/{FUSION_TX}")


def test_c06_decision_partition(s1_stream, s2_stream, s3_stream, criterion):
    details, ok = [], True
    for stream in (s1_stream, s2_stream, s3_stream):
        res = run_experiment(RunConfig(scenario=stream.manifest["spec"]["name"], n_tx=N_TX,
                                       seed=42, warm_start=0.0), stream)
        counts = res.report.decisions
        total = counts["Accept"] + counts["Monitor"] + counts["Reject"]
        eta2 = res.config.eta2
        gate = all((a.decision is Decision.REJECT) == (a.r >= eta2)
                   for a in res.artifacts.assessments)
        ok &= total == N_TX and gate and len(res.artifacts.assessments) == N_TX
        details.append(f"{res.report.scenario} {total}/{N_TX}")
    criterion(6, "decision partition and inclusive reject gate", ok, ", ".join(details))


def test_c07_metric_formulas(criterion):
    rng = random.Random(7)
    labels = [rng.randint(0, 1) for _ in range(METRIC_PAIRS)]
    decisions = [rng.choice(list(Decision)) for _ in range(METRIC_PAIRS)]
    cm = confusion_from_pairs(labels, decisions, positive_rule(False))
    tp = sum(y == 1 and d is Decision.REJECT for y, d in zip(labels, decisions))
    fp = sum(y == 0 and d is Decision.REJECT for y, d in zip(labels, decisions))
    fn = sum(y == 1 and d is not Decision.REJECT for y, d in zip(labels, decisions))
    tn = METRIC_PAIRS - tp - fp - fn
    exact = ((cm.tp, cm.tn, cm.fp, cm.fn) == (tp, tn, fp, fn)
             and accuracy(cm) == (tp + tn) / METRIC_PAIRS and precision(cm) == tp / (tp + fp))
    surfaced = 0
    for fn_, empty in ((accuracy, ConfusionMatrix()), (precision, ConfusionMatrix(tn=3, fn=1)),
                       (recall, ConfusionMatrix(tn=3)), (f1, ConfusionMatrix(tn=3))):
        try:
            fn_(empty)
        except UndefinedMetricError:
            surfaced += 1
    criterion(7, "metric formulas match brute-force tallies", exact and surfaced == 4,
              f"{METRIC_PAIRS} pairs exact, {surfaced}/4 undefined cases raised")


def test_c08_timing_bounds(s1_run, criterion):
    cfg = s1_run.config
    ts = timing_metrics(s1_run.artifacts.lifecycles, s1_run.artifacts.events, cfg.l_edge, cfg.l_ai)
    floor = consensus_floor_ms(cfg.nodes, cfg.theta)
    db_ok = bool(ts.db) and all(DB_RANGE[0] <= d <= DB_RANGE[1] for d in ts.db)
    tc_ok = bool(ts.tc) and all(t >= floor for t in ts.tc)
    dec = ts.decomposition()
    exact = dec["l_total"] == dec["l_edge"] + dec["l_ai"] + dec["l_blockchain"]
    exact &= dec["l_total"] == Fraction(sum(ts.tc), len(ts.tc))
    criterion(8, "timing bounds on S1", db_ok and tc_ok and exact,
              f"D_b in [{min(ts.db)}, {max(ts.db)}] ms over {len(ts.db)} blocks, "
              f"min T_c {min(ts.tc)} >= floor {floor} ms, decomposition exact")


def test_c09_confirmation_stability(s1_run, s2_run, s3_run, criterion):
    means = {r.report.scenario: r.report.tc_mean for r in (s1_run, s2_run, s3_run)}
    vals = list(means.values())
    spread = (max(vals) - min(vals)) / (sum(vals) / len(vals))
    criterion(9, "mean T_c stable across scenarios", spread < TC_SPREAD_MAX,
              ", ".join(f"{k} {v:.1f} ms" for k, v in means.items())
              + f"; relative spread {spread:.4f} < {TC_SPREAD_MAX}")


def test_c10_detection_quality(s2_run, criterion):
    frozen = {c["metric"]: c["value"] for c in load_thresholds()["checks"] if c["scenario"] == "S2"}
    assert frozen == {"accuracy": MIN_ACCURACY, "precision": MIN_PRECISION}
    rep = s2_run.report
    assert s2_run.warm_count == N_TX // 5
    ok = (rep.accuracy is not None and rep.precision is not None
          and rep.accuracy >= MIN_ACCURACY and rep.precision >= MIN_PRECISION)
    criterion(10, "S2 held-out detection quality", ok,
              f"accuracy {rep.accuracy} >= {MIN_ACCURACY}, precision {rep.precision} "
              f">= {MIN_PRECISION}")


def test_c11_determinism(s2_stream, tmp_path, criterion):
    cfg = RunConfig(scenario="S2", n_tx=N_TX, seed=42)
    write_result(run_experiment(cfg), tmp_path / "a")
    write_result(run_experiment(cfg), tmp_path / "b")
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
               for n in ("ledger.jsonl", "metrics.json"))
    criterion(11, "byte-identical reruns", same, "ledger.jsonl and metrics.json identical")


def test_c12_suite_runtime(tmp_path, criterion):
    suite = BenchSuite(scenarios=("S1", "S2", "S3"), n_tx=N_TX, seeds=(1, 2, 3))
    t0 = time.perf_counter()
    rep = run_suite(suite, tmp_path, workers=1)
    elapsed = time.perf_counter() - t0
    failed = [c.name for c in rep.checks if not c.passed]
    criterion(12, "full suite runtime", elapsed < SUITE_SECONDS and rep.passed,
              f"{len(rep.runs)} runs in {elapsed:.1f} s (< {SUITE_SECONDS:.0f} s), "
              f"suite checks {'all pass' if not failed else 'failed: ' + ', '.join(failed)}")
