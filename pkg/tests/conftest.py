import contextlib
import os
import time

import numpy as np
import pytest

from sivsaw.cli import main
from sivsaw.config import OUTPUT_ENV, bundled_configs
from sivsaw.experiments import ExperimentContext

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


@contextlib.contextmanager
def output_dir(path):
    old = os.environ.get(OUTPUT_ENV)
    os.environ[OUTPUT_ENV] = str(path)
    try:
        yield path
    finally:
        if old is None:
            del os.environ[OUTPUT_ENV]
        else:
            os.environ[OUTPUT_ENV] = old


def run_bundled(out):
    """Run every bundled config into ``out``; returns ``{stem: (exit code, seconds)}``."""
    runs = {}
    with output_dir(out):
        for path in bundled_configs():
            t0 = time.perf_counter()
            code = main(["run", str(path)])
            runs[path.stem] = (code, time.perf_counter() - t0)
    return runs


@pytest.fixture(scope="session")
def bundled(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundled")
    return out, run_bundled(out)


@pytest.fixture(scope="session")
def ctx():
    """Default context: field tuned to 3.43 GHz, shaped envelopes, T2* = 33 ns."""
    return ExperimentContext.create()


@pytest.fixture(scope="session")
def ideal_ctx():
    """No decoherence, rectangular envelopes and near-perfect optical pumping."""
    return ExperimentContext.create(envelope="rect", t2_star=None, pump_rate=1e9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
