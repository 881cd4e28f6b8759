import dataclasses
from pathlib import Path

import pytest

from creditxai.config import load_config
from creditxai.harness import build_backend, load_corpus


def pytest_configure(config):
    config.acceptance_results = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "acceptance_results", [])
    if results:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name, elapsed, budget in results:
            terminalreporter.write_line(f"  PASS {name} ({elapsed:.2f}s < {budget:.0f}s)")


@pytest.fixture()
def acceptance_log(request):
    def record(name: str, elapsed: float, budget: float):
        request.config.acceptance_results.append((name, elapsed, budget))
        print(f"ACCEPTANCE {name}: PASS ({elapsed:.2f}s < {budget:.0f}s)")

    return record

CORPUS_ROOT = Path(__file__).parent / "data" / "corpus"
GOLDEN_ROOT = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def corpus_root() -> Path:
    return CORPUS_ROOT


@pytest.fixture(scope="session")
def golden_root() -> Path:
    return GOLDEN_ROOT


@pytest.fixture(scope="session")
def fixture_config():
    config = load_config(CORPUS_ROOT / "config.json")
    return dataclasses.replace(
        config,
        backend=dataclasses.replace(
            config.backend, rules_file=str(CORPUS_ROOT / "mock_rules.json")
        ),
    )


@pytest.fixture(scope="session")
def fixture_corpus(fixture_config):
    return load_corpus(CORPUS_ROOT, store_name=fixture_config.features.store)


@pytest.fixture()
def mock_backend(fixture_config):
    return build_backend(fixture_config)
