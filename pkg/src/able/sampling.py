"""Bounded-Gaussian ball sampling shared by the explainer and the metrics."""

from __future__ import annotations

import hashlib

import numpy as np


def tagged_rng(seed: int, tag: str) -> np.random.Generator:
    """Independent named stream for one seed.

    Depends on (seed, tag) only, so two calls that differ in the instance
    but share a seed draw the same offsets (common random numbers); that is
    what makes stability comparisons measure instance sensitivity rather
    than resampling noise.
    """
    digest = hashlib.blake2b(tag.encode(), digest_size=16).digest()
    words = np.frombuffer(digest, dtype=np.uint64)
    return np.random.default_rng([seed & 0x7FFFFFFFFFFFFFFF, *words.tolist()])


def rescale_to_ball(z: np.ndarray, radius: float) -> np.ndarray:
    """Scale Gaussian draws by min(1, radius/||z||_2) per row.

    Draws already inside the ball are returned unchanged; larger draws are
    pulled back exactly onto the sphere of the given radius.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    factors = np.minimum(1.0, radius / np.where(norms == 0.0, 1.0, norms))
    return z * factors


def sample_in_ball(rng: np.random.Generator, center: np.ndarray, radius: float, n: int) -> np.ndarray:
    """n standard-Gaussian offsets around center, rescaled into the L2 ball."""
    center = np.asarray(center, dtype=float)
    offsets = rescale_to_ball(rng.standard_normal((n, center.size)), radius)
    return center + offsets
