"""Small synthetic datasets and attack fixtures with known ground truth."""
from __future__ import annotations

import numpy as np

from .data import CATEGORICAL, CONTINUOUS, ColumnSpec, Dataset
from .learners import Prediction


def parity_dataset(n: int = 2000, seed: int = 0, levels: int = 4) -> Dataset:
    """``parity`` is a deterministic function (even/odd) of categorical ``k``.

    Two further columns are independent noise.
    """
    rng = np.random.default_rng(seed)
    k = rng.integers(0, levels, size=n)
    cols = [
        ColumnSpec("k", CATEGORICAL, pii=True),
        ColumnSpec("noise_cat", CATEGORICAL),
        ColumnSpec("noise_num", CONTINUOUS),
        ColumnSpec("parity", CATEGORICAL),
    ]
    data = {
        "k": [f"k{v}" for v in k],
        "noise_cat": rng.choice(["u", "v", "w"], size=n),
        "noise_num": rng.normal(size=n),
        "parity": np.where(k % 2 == 0, "even", "odd"),
    }
    return Dataset.build(cols, data)


def independent_dataset(n: int = 2000, seed: int = 0, labels: int = 4) -> Dataset:
    """``secret`` is uniform over ``labels`` values and independent of the rest."""
    rng = np.random.default_rng(seed)
    cols = [
        ColumnSpec("a", CATEGORICAL, pii=True),
        ColumnSpec("x1", CONTINUOUS),
        ColumnSpec("x2", CONTINUOUS),
        ColumnSpec("secret", CATEGORICAL),
    ]
    data = {
        "a": rng.choice(["p", "q", "r", "s", "t"], size=n),
        "x1": rng.normal(size=n),
        "x2": rng.uniform(0, 10, size=n),
        "secret": [f"s{v}" for v in rng.integers(0, labels, size=n)],
    }
    return Dataset.build(cols, data)


def constant_secret_dataset(n: int = 200, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    cols = [ColumnSpec("x", CONTINUOUS), ColumnSpec("c", CATEGORICAL), ColumnSpec("secret", CATEGORICAL)]
    data = {"x": rng.normal(size=n), "c": rng.choice(["a", "b"], size=n), "secret": ["same"] * n}
    return Dataset.build(cols, data)


def linear_dataset(n: int = 2000, seed: int = 0, noise: float = 0.5) -> Dataset:
    """Continuous ``y = 50 + 3*x1 - 2*x2 + noise``, well inside a 5% band."""
    rng = np.random.default_rng(seed)
    x1, x2 = rng.normal(size=n), rng.normal(size=n)
    cols = [ColumnSpec("x1", CONTINUOUS), ColumnSpec("x2", CONTINUOUS), ColumnSpec("g", CATEGORICAL), ColumnSpec("y", CONTINUOUS)]
    data = {
        "x1": x1,
        "x2": x2,
        "g": rng.choice(["a", "b"], size=n),
        "y": 50 + 3 * x1 - 2 * x2 + rng.normal(scale=noise, size=n),
    }
    return Dataset.build(cols, data)


def oracle_attack(d: Dataset, secret: str, target_ids) -> list[Prediction]:
    """Predicts every target's true secret."""
    pos = d.positions(target_ids)
    col = d.column(secret)
    return [Prediction(int(d.row_ids[i]), _py(col[i])) for i in pos]


def random_guess_attack(d: Dataset, secret: str, target_ids, seed: int = 0) -> list[Prediction]:
    """Guesses uniformly among the secret column's observed values."""
    rng = np.random.default_rng(seed)
    alphabet = sorted(set(d.column(secret).tolist()))
    ids = list(target_ids)
    guesses = rng.choice(len(alphabet), size=len(ids))
    return [Prediction(int(t), alphabet[g]) for t, g in zip(ids, guesses)]


def _py(v):
    return v.item() if isinstance(v, np.generic) else v
