import pytest
from hypothesis import HealthCheck, settings

from anfbsim.config import RunConfig
from anfbsim.consensus import NetworkModel
from anfbsim.datagen import generate, scenario_preset
from anfbsim.ledger import Block, BlockEntry, Ledger, sign_block
from anfbsim.runner import run_experiment

settings.register_profile("repo", deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def build_ledger(txs, n_blocks, per_block=5, quorum=3, n_nodes=5, seed=0):
    """A committed chain signed by every validator of a seeded committee."""
    net = NetworkModel.build(n_nodes, seed)
    ledger = Ledger(net.registry(quorum), max_block_size=max(per_block, 1))
    it = iter(txs)
    for k in range(1, n_blocks + 1):
        entries = tuple(BlockEntry(next(it), 0.01 * (j + 1), 1000 * k + j, j % 2 == 0)
                        for j in range(per_block))
        b = Block(k, entries, ledger.tip.hash, created_at=5000 * k).sealed()
        b = b.with_signatures((n.id, sign_block(n.secret, b.hash)) for n in net.nodes)
        ledger.append(b)
    return ledger


@pytest.fixture(scope="session")
def s1_stream():
    return generate(scenario_preset("S1", n_tx=10_000, seed=42))


@pytest.fixture(scope="session")
def s2_stream():
    return generate(scenario_preset("S2", n_tx=10_000, seed=42))


@pytest.fixture(scope="session")
def s3_stream():
    return generate(scenario_preset("S3", n_tx=10_000, seed=42))


@pytest.fixture(scope="session")
def s2_run(s2_stream):
    return run_experiment(RunConfig(scenario="S2", n_tx=10_000, seed=42), s2_stream)


@pytest.fixture(scope="session")
def s1_run(s1_stream):
    return run_experiment(RunConfig(scenario="S1", n_tx=10_000, seed=42), s1_stream)


@pytest.fixture(scope="session")
def ledger100(s1_stream):
    return build_ledger(s1_stream.transactions, 100, per_block=5)


_ACCEPTANCE: list = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the line is printed whether the check passes or not."""
    def record(number, title, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}  {detail}".rstrip()
        _ACCEPTANCE.append((number, line))
        print(line)
        assert passed, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
