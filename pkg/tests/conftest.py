import pytest

from oreal.model import TrainConfig
from oreal.synthgen import DatasetConfig, SceneConfig, generate_dataset

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def toy_config(seed=0):
    """Ten 32x32 scenes with 16 superpixels each."""
    scene = SceneConfig(height=32, width=32, min_size=8, max_size=16, seed=seed)
    return DatasetConfig(scene=scene, n_train=6, n_val=2, n_test=2, superpixels=16)


FAST_TRAIN = TrainConfig(lr=1.0, max_epochs=40, patience=5)


@pytest.fixture(scope="session")
def toy_dataset():
    return generate_dataset(toy_config())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
