"""Shared fixtures: trained target models reused across the suite."""

import numpy as np
import pytest

from able.data import Dataset, FeatureSchema, Standardizer, split_dataset
from able.mlp import MlpClassifier, TrainConfig, train_mlp
from able.synthetic import make_blobs, make_moons


def continuous_schema(d: int, label: str = "label") -> FeatureSchema:
    cols = tuple((f"f{i}", "continuous") for i in range(d)) + ((label, "continuous"),)
    return FeatureSchema(cols, label, {})


def dataset_from_arrays(x, y, num_classes) -> tuple[Dataset, Standardizer]:
    st = Standardizer.fit(x)
    return Dataset(st.transform(x), np.asarray(y, int), continuous_schema(x.shape[1]), num_classes), st


def linear_model(w, b: float = 0.0) -> MlpClassifier:
    """Planted linear classifier with logits [w.x + b, 0]; class 0 wins on
    the positive side of the hyperplane (and on ties)."""
    w = np.asarray(w, dtype=float)
    return MlpClassifier([np.column_stack([w, np.zeros_like(w)])], [np.array([b, 0.0])])


@pytest.fixture(scope="session")
def moons_model():
    """MLP trained on 1000-point two-moons data; (model, test split)."""
    x, y = make_moons(1000, noise=0.15, seed=1)
    ds, _ = dataset_from_arrays(x, y, 2)
    train, val, test = split_dataset(ds, seed=0)
    model = train_mlp(train, val, TrainConfig(epochs=300, seed=0))
    return model, test


@pytest.fixture(scope="session")
def cancer_model():
    """MLP trained on the bundled 569x30 breast-cancer data; (model, test)."""
    sklearn_datasets = pytest.importorskip("sklearn.datasets")
    raw = sklearn_datasets.load_breast_cancer()
    ds, _ = dataset_from_arrays(raw.data, raw.target, 2)
    train, val, test = split_dataset(ds, seed=0)
    model = train_mlp(train, val, TrainConfig(epochs=400, seed=0))
    return model, test


@pytest.fixture(scope="session")
def blobs3_model():
    """MLP trained on 3-class Gaussian blobs; (model, test split)."""
    x, y = make_blobs(900, n_classes=3, n_features=2, cluster_std=0.9, seed=4)
    ds, _ = dataset_from_arrays(x, y, 3)
    train, val, test = split_dataset(ds, seed=0)
    model = train_mlp(train, val, TrainConfig(epochs=200, seed=0))
    return model, test
