"""Shared fixtures.

The benchmark fixtures (default synthgen config: 5000 subscribers, seed 42)
are expensive, so they are built once per session and shared by the module
tests and the acceptance suite.
"""

from __future__ import annotations

import numpy as np
import pytest

from litmap import features as feat
from litmap.cli import main as cli_main
from litmap.ingest import parse_labels
from litmap.learn import Hyperparams, SplitSpec, split_indices, train, upsample_minority
from litmap.learn.metrics import accuracy_at, evaluate


def run_cli(*args) -> int:
    return cli_main([str(a) for a in args])


@pytest.fixture(scope="session")
def small_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.cfg"
    path.write_text(
        "n_subscribers = 400\n"
        "n_towers = 40\n"
        "n_zones = 4\n"
        "observation_days = 30\n"
        "min_samples_leaf = 10\n"
        "n_trees = 40\n"
        "seed = 7\n"
    )
    return path


@pytest.fixture(scope="session")
def small_data(small_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("small") / "data"
    assert run_cli("--config", small_config, "synth", "--out", out) == 0
    return out


@pytest.fixture(scope="session")
def small_features(small_config, small_data, tmp_path_factory):
    out = tmp_path_factory.mktemp("small") / "feats"
    assert run_cli("--config", small_config, "featurize", "--data", small_data,
                   "--out", out) == 0
    return out


@pytest.fixture(scope="session")
def benchmark_data(tmp_path_factory):
    """Default synthgen config: 5000 subscribers, prevalence 0.068, seed 42."""
    out = tmp_path_factory.mktemp("benchmark") / "data"
    assert run_cli("synth", "--out", out) == 0
    return out


@pytest.fixture(scope="session")
def benchmark_features(benchmark_data, tmp_path_factory):
    out = tmp_path_factory.mktemp("benchmark") / "feats"
    assert run_cli("featurize", "--data", benchmark_data, "--out", out) == 0
    return out


@pytest.fixture(scope="session")
def benchmark_matrix(benchmark_data, benchmark_features):
    ids, x, names = feat.read_matrix_csv(benchmark_features / "features.csv")
    catalog = feat.read_catalog_csv(benchmark_features / "catalog.csv")
    with open(benchmark_data / "labels.csv", newline="", encoding="utf-8") as fh:
        labels = {lb.subscriber_id: not lb.literate for lb in parse_labels(fh)}
    y = np.array([1.0 if labels[s] else 0.0 for s in ids])
    return {
        "ids": ids,
        "x": x,
        "y": y,
        "catalog": catalog,
        "names": feat.catalog_names(catalog),
        "kinds": feat.catalog_kinds(catalog),
    }


@pytest.fixture(scope="session")
def benchmark_model(benchmark_matrix):
    """The acceptance pipeline: 75/25 split, up-sample, train at defaults."""
    x, y = benchmark_matrix["x"], benchmark_matrix["y"]
    train_idx, test_idx = split_indices(y, SplitSpec(seed=42))
    xb, yb = upsample_minority(x[train_idx], y[train_idx], seed=42)
    model = train(
        xb, yb,
        kinds=benchmark_matrix["kinds"],
        hp=Hyperparams(),
        seed=42,
        feature_names=benchmark_matrix["names"],
    )
    train_accuracy = accuracy_at(model, x[train_idx], y[train_idx])
    report = evaluate(model, x[test_idx], y[test_idx], train_accuracy=train_accuracy)
    return {
        "model": model,
        "report": report,
        "train_idx": train_idx,
        "test_idx": test_idx,
    }
