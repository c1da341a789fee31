import pytest

from xmodal.forge import hygiene

# Every label request made while a training stage is active, across the whole
# session. Tests marked ``label_probe`` provoke such requests on purpose to
# check the guard itself; theirs are kept apart.
TRAINING_REQUESTS: list = []
PROBE_REQUESTS: list = []
TESTS_WATCHED = [0]
ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "label_probe: test deliberately requests labels inside a training stage")
    config.addinivalue_line("markers", "acceptance: acceptance criterion (runs last)")


def pytest_collection_modifyitems(config, items):
    # acceptance runs last so its split-hygiene check covers the rest of the suite
    items.sort(key=lambda it: it.get_closest_marker("acceptance") is not None)


@pytest.fixture(autouse=True)
def _no_training_label_reads(request):
    before = len(hygiene.access_log())
    yield
    new = [a for a in hygiene.access_log()[before:] if a.stage is not None]
    TESTS_WATCHED[0] += 1
    if request.node.get_closest_marker("label_probe"):
        PROBE_REQUESTS.extend(new)
        return
    TRAINING_REQUESTS.extend(new)
    assert not new, f"held-out labels requested during training: {new}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    terminalreporter.write_line(
        f"split hygiene: {len(TRAINING_REQUESTS)} held-out label requests inside training stages "
        f"over {TESTS_WATCHED[0]} tests ({len(PROBE_REQUESTS)} deliberate probes excluded)")


TINY_GEN = {"n_s": 60, "n_t": 48, "n_ti": 48}


@pytest.fixture(scope="session")
def tiny_data():
    from xmodal.forge import GenConfig, generate

    return generate(5, GenConfig(**TINY_GEN))


def tiny_config(method: str = "tgkt", seed: int = 5):
    """Full pipeline at a few iterations per stage; seconds, not minutes."""
    from dataclasses import replace

    from xmodal.bench import ExperimentConfig
    from xmodal.forge import GenConfig

    cfg = ExperimentConfig(method=method, seed=seed, gen=GenConfig(**TINY_GEN))
    cfg = cfg.with_stage("source", iterations=30, accuracy_floor=0.0, batch_size=16)
    cfg = cfg.with_stage("tgmb", iterations=6, batch_size=8)
    return replace(cfg.with_stage("tgkt", iterations=8, batch_size=8))
