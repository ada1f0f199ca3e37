import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mrd.montecarlo import ExperimentConfig, run_experiment  # noqa: E402

MC_SEED = 20240601


@pytest.fixture(scope="session")
def cautious_experiment():
    """Cautious operator, axis D, r=100 and n=2,000: shared by several checks."""
    cfg = ExperimentConfig(seed=MC_SEED, r=100, n_lots=2000, policy="cautious", axes=("D",))
    workers = int(os.environ.get("MRD_THREADS", "1") or 1)
    return run_experiment(cfg, workers=workers)


# acceptance criteria record one verdict each; printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
