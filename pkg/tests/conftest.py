import numpy as np
import pytest

from nerfsynth.columns import ColumnImage, flatten
from nerfsynth.field import EMPTY_DENSITY, ColorHead, VoxelField
from nerfsynth.procedural import ProcExemplarSpec, generate_field

UNIT_BOX = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])


def make_field(density, feature=None, bbox=UNIT_BOX, n_features=3, shift_b=0.0):
    density = np.asarray(density, dtype=np.float32)
    if feature is None:
        feature = np.zeros((n_features,) + density.shape, np.float32)
    head = ColorHead.linear_rgb(feature.shape[0])
    return VoxelField(density, feature, bbox, head, shift_b)


def empty_field(shape=(5, 5, 5), bbox=UNIT_BOX):
    return make_field(np.full(shape, EMPTY_DENSITY), bbox=bbox)


def random_columns(shape=(32, 32), n_z=3, n_features=2, seed=0):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=shape + (n_z * (1 + n_features),)).astype(np.float32)
    return ColumnImage(data, n_z, n_features)


@pytest.fixture(scope="session")
def pebbles_small():
    return generate_field(ProcExemplarSpec("pebbles", shape=(45, 45, 16), n_features=4, seed=2))


@pytest.fixture(scope="session")
def pebbles_columns(pebbles_small):
    return flatten(pebbles_small)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
