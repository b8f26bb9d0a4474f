import numpy as np
import pytest

from config import load_config
from pharmonic.lattice import Lattice
from pharmonic.presets import constant_map, radial_map
from pharmonic.symmetry import Quadrature
from pharmonic.target import Target


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for key in ("PHARM_M", "PHARM_P", "PHARM_H", "PHARM_STRICT", "PHARM_OUTPUT_DIR"):
        monkeypatch.delenv(key, raising=False)


@pytest.fixture
def sphere3():
    return Target("sphere", 3)


@pytest.fixture
def lattice3():
    return Lattice(3, 16)


@pytest.fixture
def lattice2():
    return Lattice(2, 32)


@pytest.fixture
def radial3(lattice3):
    return radial_map(lattice3)


@pytest.fixture
def constant3(lattice3, sphere3):
    return constant_map(lattice3, sphere3)


@pytest.fixture
def quad():
    return Quadrature(n_directions=32, n_radial=8, n_candidates=40, refine_passes=1)


@pytest.fixture
def origin3():
    return np.zeros(3)


@pytest.fixture
def small_config(tmp_path):
    return load_config(m=3, h="1/16", output_dir=str(tmp_path / "out"))
