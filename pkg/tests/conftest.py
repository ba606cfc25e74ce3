import numpy as np
import pytest

from d2nn.fields import GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def grid16():
    return GridSpec(16, 16)


@pytest.fixture
def grid32():
    return GridSpec(32, 32)


@pytest.fixture
def grid64():
    return GridSpec(64, 64)


@pytest.fixture(scope="session")
def synthetic_idx(tmp_path_factory):
    """Small rendered-digit IDX fixture shared across tests that ingest files."""
    from d2nn.synthetic import write_idx_dataset

    out = tmp_path_factory.mktemp("idx")
    paths = write_idx_dataset(out, n_train=300, n_test=60, seed=7)
    return paths


@pytest.fixture(scope="session")
def full_idx(tmp_path_factory):
    """Full-size rendered-digit dataset for the config-driven pipeline."""
    from d2nn.synthetic import write_idx_dataset

    out = tmp_path_factory.mktemp("idx_full")
    return write_idx_dataset(out, n_train=60000, n_test=10000, seed=1234)


@pytest.fixture(scope="session")
def data_cfg_kw(full_idx):
    (ip, lp), (tip, tlp) = full_idx["train"], full_idx["t10k"]
    return dict(train_images=str(ip), train_labels=str(lp),
                test_images=str(tip), test_labels=str(tlp))
