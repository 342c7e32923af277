"""Classical LIME baseline for tabular data, continuous features only.

Gaussian perturbations around the test point, exponential distance kernel,
weighted ridge regression of the model's class probability. The ridge
system is solved in closed form; an independent conjugate-gradient solver
is provided for cross-checking.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from math import sqrt

import numpy as np

from .explainer import Explanation, SurrogateModel, top_k_features
from .metrics import fidelity_r2
from .sampling import tagged_rng

RIDGE_LAMBDA = 1e-4


@dataclass(frozen=True)
class LimeConfig:
    num_samples: int = 5000
    kernel_width: float | None = None  # None: 0.75 * sqrt(d)
    perturb_std: float = 1.0
    k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.num_samples < 10:
            raise ValueError("num_samples must be >= 10")
        if self.kernel_width is not None and self.kernel_width <= 0:
            raise ValueError("kernel_width must be > 0")
        if self.perturb_std <= 0:
            raise ValueError("perturb_std must be > 0")


def lime_sample(x_test: np.ndarray, cfg: LimeConfig) -> np.ndarray:
    """num_samples rows: x_test itself first, then Gaussian perturbations."""
    x_test = np.asarray(x_test, dtype=float)
    rng = tagged_rng(cfg.seed, "lime")
    noise = rng.standard_normal((cfg.num_samples - 1, x_test.size)) * cfg.perturb_std
    return np.vstack([x_test[None, :], x_test[None, :] + noise])


def kernel_weight(x: np.ndarray, x_test: np.ndarray, sigma: float) -> float:
    """exp(-||x - x_test||_2^2 / sigma^2), in (0, 1]."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    d2 = float(np.sum((np.asarray(x, dtype=float) - np.asarray(x_test, dtype=float)) ** 2))
    return float(np.exp(-d2 / sigma**2))


def _kernel_weights(xs: np.ndarray, x_test: np.ndarray, sigma: float) -> np.ndarray:
    d2 = np.sum((xs - x_test[None, :]) ** 2, axis=1)
    return np.exp(-d2 / sigma**2)


def _ridge_system(xs, targets, sample_weights, lam):
    design = np.column_stack([xs, np.ones(len(xs))])
    sw = sample_weights[:, None]
    a = design.T @ (sw * design)
    a[np.arange(xs.shape[1]), np.arange(xs.shape[1])] += lam  # intercept unpenalized
    rhs = design.T @ (sample_weights * targets)
    return a, rhs


def weighted_ridge_closed_form(xs, targets, sample_weights, lam=RIDGE_LAMBDA):
    """Solve the weighted ridge normal equations directly.

    Returns (weights, intercept). The intercept carries no penalty.
    """
    a, rhs = _ridge_system(np.asarray(xs, float), np.asarray(targets, float),
                           np.asarray(sample_weights, float), lam)
    theta = np.linalg.solve(a, rhs)
    return theta[:-1], float(theta[-1])


def weighted_ridge_iterative(xs, targets, sample_weights, lam=RIDGE_LAMBDA,
                             tol=1e-12, max_iters=None):
    """Same system solved by conjugate gradients from a zero start."""
    a, rhs = _ridge_system(np.asarray(xs, float), np.asarray(targets, float),
                           np.asarray(sample_weights, float), lam)
    n = rhs.size
    theta = np.zeros(n)
    r = rhs - a @ theta
    p = r.copy()
    rs = r @ r
    for _ in range(max_iters or 20 * n):
        if np.sqrt(rs) < tol * max(1.0, np.linalg.norm(rhs)):
            break
        ap = a @ p
        alpha = rs / (p @ ap)
        theta += alpha * p
        r -= alpha * ap
        rs_new = r @ r
        p = r + (rs_new / rs) * p
        rs = rs_new
    return theta[:-1], float(theta[-1])


def lime_explain(
    model,
    x_test: np.ndarray,
    cfg: LimeConfig,
    feature_names: list[str] | None = None,
) -> Explanation:
    """Weighted linear regression of the model's predicted-class probability
    on perturbation samples. Fidelity is scored on the last third of the
    samples, which are excluded from the fit."""
    start = time.perf_counter()
    x_test = np.asarray(x_test, dtype=float)
    d = x_test.size
    sigma = cfg.kernel_width if cfg.kernel_width is not None else 0.75 * sqrt(d)
    predicted = int(model.predict_label(x_test))

    xs = lime_sample(x_test, cfg)
    targets = model.predict_proba(xs)[:, predicted]
    n_eval = cfg.num_samples // 3
    n_train = cfg.num_samples - n_eval
    sw = _kernel_weights(xs[:n_train], x_test, sigma)
    w, b = weighted_ridge_closed_form(xs[:n_train], targets[:n_train], sw)

    g_eval = xs[n_train:] @ w + b
    fidelity = fidelity_r2(targets[n_train:], g_eval)

    surrogate = SurrogateModel(
        weights=w[None, :],
        intercepts=np.array([b]),
        classes=(predicted,),
        trained_on=n_train,
        kind="ridge",
    )
    top = top_k_features(w, cfg.k, feature_names)
    runtime_ms = (time.perf_counter() - start) * 1000.0
    return Explanation(
        instance=x_test,
        predicted_class=predicted,
        top_features=top,
        surrogate=surrogate,
        fidelity_r2=float(fidelity),
        pairs_used=0,
        failed_points=0,
        runtime_ms=runtime_ms,
        seed=cfg.seed,
        labeling_queries=cfg.num_samples,
        attack_queries=0,
    )
