import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sketchvid.synthdata import GeneratorConfig, generate_dataset  # noqa: E402

SMALL = dict(n_clips=6, appearance_twin_pairs=1, motion_twin_pairs=1, split_train=0.5, split_val=0.0,
             split_test=0.5)


@pytest.fixture(scope="session")
def small_config():
    return GeneratorConfig(**SMALL)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory, small_config):
    """A 6-clip dataset on disk (one twin pair of each kind plus two random clips)."""
    root = tmp_path_factory.mktemp("small")
    generate_dataset(small_config, 3, root)
    return root


@pytest.fixture(scope="session")
def small_data(small_dataset):
    """All clips of the small dataset with cached flows."""
    from sketchvid.optflow import FlowCache
    from sketchvid.synthdata import load_dataset
    from sketchvid.training import StreamData
    return StreamData(load_dataset(small_dataset), None, FlowCache(small_dataset / "flows"))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
