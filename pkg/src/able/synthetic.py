"""Bundled synthetic datasets so experiments need no downloads."""

from __future__ import annotations

import numpy as np


def make_blobs(
    n_samples: int,
    n_classes: int = 2,
    n_features: int = 2,
    cluster_std: float = 1.0,
    curvature: float = 0.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian clusters with centers on a circle in the first two features.

    `curvature` warps the first coordinate by curvature * x1^2, bending the
    otherwise piecewise-linear class boundaries.
    """
    if not 2 <= n_classes <= 4:
        raise ValueError("n_classes must be in [2, 4]")
    if n_features < 2:
        raise ValueError("need at least 2 features")
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(n_classes) / n_classes
    centers = np.zeros((n_classes, n_features))
    centers[:, 0] = 3.0 * np.cos(angles)
    centers[:, 1] = 3.0 * np.sin(angles)
    y = rng.integers(0, n_classes, size=n_samples)
    x = centers[y] + cluster_std * rng.standard_normal((n_samples, n_features))
    if curvature:
        x[:, 0] = x[:, 0] + curvature * x[:, 1] ** 2
    return x, y


def make_moons(n_samples: int, noise: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Two interleaving half-circles in 2-D with Gaussian noise."""
    rng = np.random.default_rng(seed)
    n_out = n_samples // 2
    n_in = n_samples - n_out
    t_out = np.linspace(0.0, np.pi, n_out)
    t_in = np.linspace(0.0, np.pi, n_in)
    outer = np.column_stack([np.cos(t_out), np.sin(t_out)])
    inner = np.column_stack([1.0 - np.cos(t_in), 1.0 - np.sin(t_in) - 0.5])
    x = np.vstack([outer, inner]) + noise * rng.standard_normal((n_samples, 2))
    y = np.concatenate([np.zeros(n_out, dtype=int), np.ones(n_in, dtype=int)])
    perm = rng.permutation(n_samples)
    return x[perm], y[perm]


def write_csv(
    path: str,
    x: np.ndarray,
    y: np.ndarray,
    label_column: str = "label",
    feature_names: list[str] | None = None,
) -> None:
    """Dump features + label as a plain comma-separated file with header."""
    x = np.asarray(x, dtype=float)
    names = feature_names or [f"f{i}" for i in range(x.shape[1])]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join([*names, label_column]) + "\n")
        for row, label in zip(x, y):
            fh.write(",".join(f"{v:.10g}" for v in row) + f",{int(label)}\n")
