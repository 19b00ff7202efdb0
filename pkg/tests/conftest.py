import numpy as np
import pytest

from kfmetric.synthetic import make_synthetic


@pytest.fixture
def separable_ds():
    """Well-separated identities, no cross-view confound: every method aces it."""
    return make_synthetic(identities=12, views=2, dim=6, noise=0.02, view_offset=0.0, seed=11)


@pytest.fixture
def confounded_ds():
    """Strong shared cross-view offset that defeats raw-feature matching."""
    return make_synthetic(identities=20, views=2, dim=12, noise=0.05, view_offset=25.0, seed=4)


@pytest.fixture
def rng():
    return np.random.default_rng(123)


def write_csv(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path
