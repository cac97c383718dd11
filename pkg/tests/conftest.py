import os

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")  # the timing criteria are stated for one core

import time
from pathlib import Path

import pytest

from cost_st import pipeline
from cost_st.config import load_config
from cost_st.metrics import parse_report

ACCEPTANCE_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "acceptance.yaml"
RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[RESULTS] = []


@pytest.fixture
def criterion(request):
    """``criterion(label, ok, detail)`` records one acceptance line and returns ``ok``."""
    results = request.config.stash[RESULTS]

    def record(label, ok, detail=""):
        results.append((label, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = sorted(config.stash[RESULTS], key=lambda r: (int(r[0].split()[0].rstrip("abcd")), r[0]))
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in results:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {label}  {detail}")


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    """The acceptance configuration trained end to end, plus its ``mean.enabled=false`` ablation."""
    base = tmp_path_factory.mktemp("acceptance")
    out = {}
    for name, extra in (("cost", []), ("ablation", ["mean.enabled=false"])):
        wd = base / name
        cfg = load_config(ACCEPTANCE_CONFIG, [f"workdir={wd}", *extra])
        t0 = time.perf_counter()
        pipeline.run_pipeline(cfg)
        out[name] = {"cfg": cfg, "dir": wd, "seconds": time.perf_counter() - t0}
        out[name]["report"] = parse_report((wd / "report.txt").read_text())
    return out
