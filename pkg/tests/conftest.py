import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from dyadgest.config import RunConfig  # noqa: E402

SMALL = dict(hidden=16, depth=1, time_dim=8, seed_summary_dim=8, T=20, batch_size=4, steps=5,
             checkpoint_every=3, toy_seconds=6, toy_dialogs=3)


def small_config(root, **kw) -> RunConfig:
    root = str(root)
    values = dict(SMALL, data_root=os.path.join(root, "data"), cache_dir=os.path.join(root, "cache"),
                  checkpoint=os.path.join(root, "model.gdck"), log_path=os.path.join(root, "log.csv"),
                  output=os.path.join(root, "out.bvh"), report=os.path.join(root, "eval.csv"))
    values.update(kw)
    return RunConfig(**values)


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """A tiny trained pipeline shared by the data, sampling and metrics tests."""
    from dyadgest.data import ingest
    from dyadgest.toy import gen_toy
    from dyadgest.train import train

    root = tmp_path_factory.mktemp("toy_run")
    cfg = small_config(root)
    gen_toy(cfg.data_root, 3, cfg.toy_seconds, rng_seed=0)
    gen_toy(cfg.data_root, 3, cfg.toy_seconds, rng_seed=1, split="test", prefix="heldout",
            intensities=[0.0, 0.5, 0.9])
    ingest(cfg)
    rows = []
    params = train(cfg, log_rows=rows)
    return cfg, params, rows


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def check(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
