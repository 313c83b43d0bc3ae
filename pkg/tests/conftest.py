from pathlib import Path

import numpy as np
import pytest

from conformal_ruler.experiments import build_context, load_config
from conformal_ruler.gaussian import GaussianBackend, product_covariance
from conformal_ruler.lattice import build_square_lattice

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def pip_desk():
    """p+ip ground state on the 28 x 14 desk lattice, with named regions and rulers."""
    return build_context(load_config(CONFIGS / "pip_desk.toml"), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)


@pytest.fixture(scope="session")
def product_lattice_backend():
    lat = build_square_lattice(12, 8)
    occ = [(s * 7) % 3 == 0 for s in range(lat.n_sites)]
    return lat, GaussianBackend(product_covariance(occ))
