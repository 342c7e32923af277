"""Fidelity, stability, and runtime measurement for local explainers."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .sampling import sample_in_ball, tagged_rng

VARIANCE_FLOOR = 1e-12


class DegenerateNeighborhoodError(ValueError):
    """Target probabilities have (near-)zero variance; R^2 is undefined."""


@dataclass(frozen=True)
class FidelityReport:
    r2: float
    n_eval: int
    target_mean: float


@dataclass(frozen=True)
class StabilityReport:
    jaccard: float
    k: int
    features_original: frozenset[int]
    features_perturbed: frozenset[int]


def fidelity_r2(f_probs: np.ndarray, g_probs: np.ndarray) -> float:
    """Coefficient of determination of g against f.

    1 - sum((f - g)^2) / sum((f - mean(f))^2); may be negative when the
    surrogate is worse than predicting the mean. Raises if f has no
    variance, since the denominator would vanish.
    """
    f = np.asarray(f_probs, dtype=float)
    g = np.asarray(g_probs, dtype=float)
    if f.shape != g.shape or f.ndim != 1:
        raise ValueError("f_probs and g_probs must be 1-D and the same length")
    if f.size < 2:
        raise ValueError("need at least 2 evaluation points")
    denom = float(np.sum((f - f.mean()) ** 2))
    if denom < VARIANCE_FLOOR * f.size:
        raise DegenerateNeighborhoodError(
            "target probabilities are constant in this neighborhood; R^2 is undefined"
        )
    return 1.0 - float(np.sum((f - g) ** 2)) / denom


def fidelity_report(f_probs: np.ndarray, g_probs: np.ndarray) -> FidelityReport:
    f = np.asarray(f_probs, dtype=float)
    return FidelityReport(r2=fidelity_r2(f_probs, g_probs), n_eval=f.size, target_mean=float(f.mean()))


def jaccard_top_k(set_a, set_b) -> float:
    """|A n B| / |A u B| over feature index sets."""
    a, b = set(set_a), set(set_b)
    if not a or not b:
        raise ValueError("feature sets must be non-empty")
    return len(a & b) / len(a | b)


def stability_eval(
    explainer: Callable[[object, np.ndarray], object],
    model,
    x_test: np.ndarray,
    k: int,
    perturb_radius: float = 0.1,
    seed: int = 0,
) -> StabilityReport:
    """Explain x_test and a slightly perturbed copy, compare top-k sets.

    The perturbation is a single bounded-Gaussian draw (the same rescaling
    scheme as neighborhood sampling) of the given radius. The explainer is a
    callable (model, x) -> Explanation whose top_features has >= k entries.
    """
    x_test = np.asarray(x_test, dtype=float)
    if k > x_test.size:
        raise ValueError("k must not exceed the feature count")
    rng = tagged_rng(seed, "stability")
    x_pert = sample_in_ball(rng, x_test, perturb_radius, 1)[0]
    exp_orig = explainer(model, x_test)
    exp_pert = explainer(model, x_pert)
    feats_orig = frozenset(int(i) for i, _, _ in exp_orig.top_features[:k])
    feats_pert = frozenset(int(i) for i, _, _ in exp_pert.top_features[:k])
    if len(feats_orig) < k or len(feats_pert) < k:
        raise ValueError("explainer returned fewer than k features")
    return StabilityReport(
        jaccard=jaccard_top_k(feats_orig, feats_pert),
        k=k,
        features_original=feats_orig,
        features_perturbed=feats_pert,
    )


def timed(operation: Callable[[], object]) -> tuple[object, float]:
    """Run a callable and return (result, wall time in ms, monotonic clock)."""
    start = time.perf_counter()
    result = operation()
    return result, (time.perf_counter() - start) * 1000.0
