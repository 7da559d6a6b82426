import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from anfbsim.errors import UndefinedMetricError
from anfbsim.metrics import (ConfusionMatrix, TimingStats, accuracy, block_delays, build_report,
                             confusion_from_pairs, exact_mean, f1, nearest_rank, positive_rule,
                             precision, recall, timing_metrics)
from anfbsim.pipeline import TxLifecycle
from anfbsim.risk import Decision

A, M, R = Decision.ACCEPT, Decision.MONITOR, Decision.REJECT


def test_worked_example():
    cm = ConfusionMatrix(tp=8, tn=85, fp=2, fn=5)
    assert accuracy(cm) == 93 / 100
    assert precision(cm) == 8 / 10
    assert recall(cm) == 8 / 13
    assert f1(cm) == 16 / 23


def test_tally_rules():
    labels = [1, 1, 0, 0, 1, 0]
    decisions = [R, M, M, A, A, R]
    assert confusion_from_pairs(labels, decisions) == ConfusionMatrix(1, 2, 1, 2)
    assert confusion_from_pairs(labels, decisions, positive_rule(True)) == ConfusionMatrix(2, 1, 2, 1)


def test_brute_force_agreement():
    rng = random.Random(13)
    labels = [rng.randint(0, 1) for _ in range(5000)]
    decisions = [rng.choice([A, M, R]) for _ in range(5000)]
    for inc in (False, True):
        pos = {R, M} if inc else {R}
        tp = sum(1 for y, d in zip(labels, decisions) if y == 1 and d in pos)
        tn = sum(1 for y, d in zip(labels, decisions) if y == 0 and d not in pos)
        fp = sum(1 for y, d in zip(labels, decisions) if y == 0 and d in pos)
        fn = sum(1 for y, d in zip(labels, decisions) if y == 1 and d not in pos)
        cm = confusion_from_pairs(labels, decisions, positive_rule(inc))
        assert (cm.tp, cm.tn, cm.fp, cm.fn) == (tp, tn, fp, fn)
        assert accuracy(cm) == (tp + tn) / 5000
        assert precision(cm) == tp / (tp + fp)


def test_undefined_surfaced():
    with pytest.raises(UndefinedMetricError):
        accuracy(ConfusionMatrix())
    with pytest.raises(UndefinedMetricError):
        precision(ConfusionMatrix(tn=5, fn=2))
    with pytest.raises(UndefinedMetricError):
        recall(ConfusionMatrix(tn=5))


def test_report_lists_undefined():
    lcs = [TxLifecycle(i, 0, i, i + 7, A, 0.1, "confirmed", i + 100) for i in range(5)]
    rep = build_report(lcs, [], scenario="S1", seed=0, l_edge=2, l_ai=5)
    assert rep.precision is None and rep.recall is None
    assert set(rep.undefined) == {"precision", "recall", "f1"}
    assert rep.accuracy == 1.0
    assert rep.db_mean is None and rep.n_blocks == 0


def test_bad_label():
    with pytest.raises(ValueError):
        confusion_from_pairs([2], [A])
    with pytest.raises(ValueError):
        confusion_from_pairs([1, 0], [A])


@given(st.lists(st.tuples(st.integers(0, 1), st.sampled_from([A, M, R])), min_size=1,
                max_size=60), st.integers(0, 59))
def test_fixing_a_false_negative_never_lowers_accuracy(pairs, k):
    labels = [y for y, _ in pairs]
    decisions = [d for _, d in pairs]
    before = accuracy(confusion_from_pairs(labels, decisions))
    k %= len(pairs)
    if labels[k] == 1 and decisions[k] is not R:
        decisions[k] = R
        assert accuracy(confusion_from_pairs(labels, decisions)) > before


def test_nearest_rank():
    assert nearest_rank(list(range(1, 21)), 0.95) == 19
    assert nearest_rank([5], 0.95) == 5
    assert nearest_rank(list(range(1, 101)), 0.95) == 95
    with pytest.raises(UndefinedMetricError):
        nearest_rank([], 0.5)


def test_exact_mean():
    assert exact_mean([1, 2]) == Fraction(3, 2)
    with pytest.raises(UndefinedMetricError):
        exact_mean([])


def test_block_delays():
    events = [{"event": "broadcast", "t_broadcast": 100, "receive": {"v1": 120, "v2": 145}},
              {"event": "commit"},
              {"event": "broadcast", "t_broadcast": 300, "receive": {}}]
    assert block_delays(events) == [45, 0]


def test_timing_decomposition_exact():
    lcs = [TxLifecycle(1, 0, 0, 7, A, 0.1, "confirmed", 90),
           TxLifecycle(2, 0, 10, 17, A, 0.1, "confirmed", 95),
           TxLifecycle(3, 0, 20, 27, A, 0.1, "failed")]
    ts = timing_metrics(lcs, [], 2, 5)
    assert ts.tc == (90, 85) and ts.unconfirmed == 1
    d = ts.decomposition()
    assert d["l_total"] == d["l_edge"] + d["l_ai"] + d["l_blockchain"]
    assert d["l_total"] == Fraction(175, 2)


@given(st.lists(st.integers(7, 100_000), min_size=1, max_size=200))
def test_decomposition_identity(tc):
    ts = TimingStats(tuple(tc), (), 0, 2, 5)
    d = ts.decomposition()
    assert d["l_total"] == d["l_edge"] + d["l_ai"] + d["l_blockchain"]


def test_report_matches_artifacts(s2_run):
    rep = s2_run.report
    assert sum(rep.decisions.values()) == rep.n_tx == len(s2_run.artifacts.lifecycles)
    cm = rep.confusion
    assert cm["tp"] + cm["tn"] + cm["fp"] + cm["fn"] == rep.n_evaluated
    assert rep.n_blocks == len(s2_run.artifacts.ledger) - 1
    assert rep.l_total_mean == rep.tc_mean
    json_back = type(rep).from_dict(rep.to_dict())
    assert json_back == rep


def test_csv_blank_for_undefined(tmp_path):
    lcs = [TxLifecycle(i, 0, i, i + 7, A, 0.1, "confirmed", i + 100) for i in range(3)]
    rep = build_report(lcs, [], scenario="S1", seed=0, l_edge=2, l_ai=5)
    rep.write(tmp_path)
    header, row = (tmp_path / "metrics.csv").read_text().splitlines()
    fields = dict(zip(header.split(","), row.split(",")))
    assert fields["precision"] == "" and fields["accuracy"] == "1.0"
