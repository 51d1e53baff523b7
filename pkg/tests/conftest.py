import sys
from pathlib import Path

import pytest

from phlab.datasets import SyntheticSpec, generate_synthetic
from phlab.pipeline import Pipeline, PipelineConfig

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def small_ds():
    return generate_synthetic(SyntheticSpec(class_count=4, per_class=6, rng_seed=3))


@pytest.fixture(scope="session")
def linear_pipe():
    return Pipeline(PipelineConfig(embedder="linear-surrogate"))


@pytest.fixture(scope="session")
def tanh_pipe():
    return Pipeline(PipelineConfig(embedder="tanh-surrogate"))


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(label, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
