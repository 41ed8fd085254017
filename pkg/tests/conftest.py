import numpy as np
import pytest

from nonmember.baseline import ConditionKey
from nonmember.synthetic import independent_dataset, parity_dataset


@pytest.fixture(scope="session")
def parity():
    return parity_dataset(2000, seed=0)


@pytest.fixture(scope="session")
def independent():
    return independent_dataset(2000, seed=0)


@pytest.fixture
def parity_condition():
    return ConditionKey(("k", "noise_cat", "noise_num"), "parity")


@pytest.fixture
def independent_condition():
    return ConditionKey(("a", "x1", "x2"), "secret")


def modal_frequency(values) -> float:
    _, counts = np.unique(np.asarray(values, dtype=object).astype(str), return_counts=True)
    return counts.max() / counts.sum()


@pytest.fixture
def write_text(tmp_path):
    def _write(name: str, text: str):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
