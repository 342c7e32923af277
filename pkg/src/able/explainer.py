"""Boundary-bracketing local explanations.

Pipeline: sample a bounded Gaussian neighborhood around the test point,
turn each neighbor into an adversarial pair straddling the model's local
decision boundary (forward attack to flip the label, reverse attack to flip
it back), fit a linear surrogate on the pair points, and rank features by
the surrogate weights. Fidelity is scored on held-out pairs built from a
fresh, disjoint neighborhood sample (offset seed) so the training pairs'
attack geometry never leaks into the evaluation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from math import ceil

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .attacks import AttackConfig, AttackFailed, run_attack
from .metrics import fidelity_r2
from .sampling import sample_in_ball, tagged_rng

DEFAULT_RIDGE = 1e-4
# multi-start grid (log-scale factors) for the probability-scale calibration
CALIBRATION_STARTS = (1.0, 0.3, 0.1, 0.03, 0.01, 0.003)


class ExplanationFailed(Exception):
    """Raised when no adversarial pair survived, so no surrogate exists."""

    def __init__(self, message: str, failed_points: int = 0):
        super().__init__(message)
        self.failed_points = failed_points


@dataclass(frozen=True)
class NeighborhoodConfig:
    radius: float = 0.2
    count: int = 150
    seed: int = 0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be > 0")
        if self.count < 1:
            raise ValueError("count must be >= 1")


@dataclass(frozen=True)
class Neighborhood:
    """Sampled points plus the test point itself (last row), with labels."""

    xs: np.ndarray  # (n + 1, d); row n is the test point
    ys: np.ndarray  # (n + 1,)
    includes_test: bool = True

    @property
    def sampled_xs(self) -> np.ndarray:
        return self.xs[:-1]

    @property
    def sampled_ys(self) -> np.ndarray:
        return self.ys[:-1]


@dataclass(frozen=True)
class AdversarialPair:
    x_adv: np.ndarray
    label_adv: int
    x_rev: np.ndarray
    label_rev: int
    source_index: int
    epsilons: tuple[float, float]  # (forward, reverse)
    attack_queries: int = 0


@dataclass(frozen=True)
class SurrogateModel:
    """Linear surrogate: one weight row for binary/ridge, one per class for
    softmax. `classes` are the original class indices it discriminates."""

    weights: np.ndarray  # (c_local, d)
    intercepts: np.ndarray  # (c_local,)
    classes: tuple[int, ...]
    trained_on: int
    kind: str  # "logistic" | "softmax" | "ridge"

    def __post_init__(self):
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.intercepts))):
            raise ValueError("surrogate parameters must be finite")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "classes": list(self.classes),
            "weights": self.weights.tolist(),
            "intercepts": self.intercepts.tolist(),
            "trained_on": self.trained_on,
        }


@dataclass(frozen=True)
class Explanation:
    instance: np.ndarray
    predicted_class: int
    top_features: list[tuple[int, str, float]]  # (index, name, signed weight)
    surrogate: SurrogateModel
    fidelity_r2: float
    pairs_used: int
    failed_points: int
    runtime_ms: float
    seed: int
    labeling_queries: int = 0
    attack_queries: int = 0
    eval_queries: int = 0
    eps_forward_mean: float = 0.0
    eps_reverse_mean: float = 0.0

    def to_dict(self) -> dict:
        return {
            "instance": [float(v) for v in self.instance],
            "predicted_class": self.predicted_class,
            "top_features": [[int(i), n, float(w)] for i, n, w in self.top_features],
            "surrogate": self.surrogate.to_dict(),
            "fidelity_r2": float(self.fidelity_r2),
            "pairs_used": self.pairs_used,
            "failed_points": self.failed_points,
            "runtime_ms": float(self.runtime_ms),
            "seed": self.seed,
            "labeling_queries": self.labeling_queries,
            "attack_queries": self.attack_queries,
            "eval_queries": self.eval_queries,
            "eps_forward_mean": float(self.eps_forward_mean),
            "eps_reverse_mean": float(self.eps_reverse_mean),
        }


def sample_neighborhood(model, x_test: np.ndarray, cfg: NeighborhoodConfig) -> Neighborhood:
    """Draw cfg.count points within L2 distance cfg.radius of x_test and
    label them with the model; x_test itself is appended as a member."""
    x_test = np.asarray(x_test, dtype=float)
    rng = tagged_rng(cfg.seed, "neighborhood")
    pts = sample_in_ball(rng, x_test, cfg.radius, cfg.count)
    xs = np.vstack([pts, x_test[None, :]])
    ys = np.asarray(model.predict_label(xs), dtype=int)
    return Neighborhood(xs=xs, ys=ys, includes_test=True)


def generate_pair(
    model,
    x_i: np.ndarray,
    y_i: int,
    attack: AttackConfig,
    num_classes: int,
    source_index: int = 0,
) -> AdversarialPair:
    """Forward untargeted attack away from y_i, then a reverse attack back.

    The reverse attack is untargeted for two classes (the only flip is back
    to y_i) and targeted at y_i otherwise. Both labels are verified against
    the model on fresh queries before the pair is returned; any failure
    raises AttackFailed and the caller decides what to do with the point.
    """
    x_i = np.asarray(x_i, dtype=float)
    if int(model.predict_label(x_i)) != int(y_i):
        raise ValueError("y_i must be the model's current label for x_i")
    forward = run_attack(model, x_i, attack, target=None)
    target = None if num_classes == 2 else int(y_i)
    reverse = run_attack(model, forward.x_perturbed, attack, target=target)
    label_adv = int(model.predict_label(forward.x_perturbed))
    label_rev = int(model.predict_label(reverse.x_perturbed))
    if label_adv == int(y_i) or label_rev != int(y_i):
        raise AttackFailed("pair no longer brackets the boundary on re-query")
    return AdversarialPair(
        x_adv=forward.x_perturbed,
        label_adv=label_adv,
        x_rev=reverse.x_perturbed,
        label_rev=label_rev,
        source_index=source_index,
        epsilons=(forward.epsilon_used, reverse.epsilon_used),
        attack_queries=forward.queries + reverse.queries,
    )


def build_pair_dataset(pairs: list[AdversarialPair]) -> tuple[np.ndarray, np.ndarray]:
    """Stack pair points with their verified labels, two rows per pair."""
    if not pairs:
        raise ValueError("no adversarial pairs: cannot build a surrogate training set")
    xs, ys = [], []
    for p in pairs:
        xs.append(p.x_adv)
        ys.append(p.label_adv)
        xs.append(p.x_rev)
        ys.append(p.label_rev)
    return np.vstack(xs), np.asarray(ys, dtype=int)


def _minimize_full_batch(fun_grad, x0: np.ndarray) -> np.ndarray:
    # gradient-only quasi-Newton from a zero start; deterministic
    res = minimize(
        fun_grad, x0, jac=True, method="L-BFGS-B",
        options={"maxiter": 5000, "gtol": 1e-6, "ftol": 1e-15},
    )
    return res.x


def fit_binary_surrogate(x: np.ndarray, y: np.ndarray, reg: float = DEFAULT_RIDGE) -> SurrogateModel:
    """Logistic regression sigma(w.x + b) by full-batch minimization of the
    L2-regularized cross-entropy (zero init). The positive direction of w
    points toward the higher of the two class indices."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    classes = np.unique(y)
    if classes.size != 2:
        raise ValueError(f"binary surrogate needs exactly 2 classes, got {classes.tolist()}")
    t = (y == classes[1]).astype(float)
    m, d = x.shape

    def fun_grad(theta):
        w, b = theta[:d], theta[d]
        z = x @ w + b
        loss = float(np.mean(np.logaddexp(0.0, z) - t * z) + 0.5 * reg * w @ w)
        residual = (expit(z) - t) / m
        return loss, np.concatenate([x.T @ residual + reg * w, [residual.sum()]])

    theta = _minimize_full_batch(fun_grad, np.zeros(d + 1))
    return SurrogateModel(
        weights=theta[:d][None, :],
        intercepts=np.array([theta[d]]),
        classes=tuple(int(c) for c in classes),
        trained_on=m,
        kind="logistic",
    )


def fit_multinomial_surrogate(x: np.ndarray, y: np.ndarray, reg: float = DEFAULT_RIDGE) -> SurrogateModel:
    """Softmax regression over the classes present in the training set,
    with the same optimizer contract as the binary fit."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("softmax surrogate needs at least 2 distinct classes")
    c = classes.size
    m, d = x.shape
    t = np.zeros((m, c))
    t[np.arange(m), np.searchsorted(classes, y)] = 1.0

    def fun_grad(theta):
        w = theta[: c * d].reshape(c, d)
        b = theta[c * d :]
        z = x @ w.T + b
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        loss = float(-np.mean(np.sum(t * np.log(p + 1e-300), axis=1)) + 0.5 * reg * np.sum(w * w))
        residual = (p - t) / m
        gw = residual.T @ x + reg * w
        return loss, np.concatenate([gw.ravel(), residual.sum(axis=0)])

    theta = _minimize_full_batch(fun_grad, np.zeros(c * d + c))
    return SurrogateModel(
        weights=theta[: c * d].reshape(c, d),
        intercepts=theta[c * d :],
        classes=tuple(int(v) for v in classes),
        trained_on=m,
        kind="softmax",
    )


def surrogate_proba(surrogate: SurrogateModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities over surrogate.classes, rows summing to 1."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if surrogate.kind == "logistic":
        p1 = expit(x @ surrogate.weights[0] + surrogate.intercepts[0])
        return np.column_stack([1.0 - p1, p1])
    if surrogate.kind == "softmax":
        z = x @ surrogate.weights.T + surrogate.intercepts
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)
    raise ValueError(f"surrogate kind {surrogate.kind!r} has no class probabilities")


def class_probability(surrogate: SurrogateModel, x: np.ndarray, class_index: int) -> np.ndarray:
    """The surrogate's probability estimate for one original class index."""
    if surrogate.kind == "ridge":
        if class_index != surrogate.classes[0]:
            raise ValueError("ridge surrogate only models its own explained class")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x @ surrogate.weights[0] + surrogate.intercepts[0]
    if class_index not in surrogate.classes:
        raise ValueError(f"class {class_index} not covered by surrogate classes {surrogate.classes}")
    return surrogate_proba(surrogate, x)[:, surrogate.classes.index(class_index)]


def attribution_weights(surrogate: SurrogateModel, class_index: int) -> np.ndarray:
    """Signed per-feature weights attributed to the given class."""
    if surrogate.kind == "ridge":
        return surrogate.weights[0].copy()
    if class_index not in surrogate.classes:
        raise ValueError(f"class {class_index} not covered by surrogate classes {surrogate.classes}")
    pos = surrogate.classes.index(class_index)
    if surrogate.kind == "logistic":
        return surrogate.weights[0] if pos == 1 else -surrogate.weights[0]
    return surrogate.weights[pos].copy()


def top_k_features(
    weights: np.ndarray, k: int, feature_names: list[str] | None = None
) -> list[tuple[int, str, float]]:
    """Top-k by |weight|, ties resolved toward the lower feature index."""
    d = weights.size
    if not 1 <= k <= d:
        raise ValueError(f"K must be in [1, {d}]")
    names = feature_names if feature_names is not None else [f"x{i}" for i in range(d)]
    order = np.lexsort((np.arange(d), -np.abs(weights)))
    return [(int(i), names[int(i)], float(weights[int(i)])) for i in order[:k]]


def _fit_surrogate(x: np.ndarray, y: np.ndarray, num_classes: int, reg: float) -> SurrogateModel:
    if num_classes == 2:
        return fit_binary_surrogate(x, y, reg)
    return fit_multinomial_surrogate(x, y, reg)


def calibrate_probability_scale(model, surrogate: SurrogateModel, x_points: np.ndarray) -> SurrogateModel:
    """Rescale the surrogate's logits so its probabilities track the model's.

    The cross-entropy fit on near-separable pair labels pins the boundary
    but drives the logit slope toward the largest the data allows, however
    sharp the target model actually is. This step fits (a > 0, c) so that
    sigma/softmax(a * z + c) matches the model's probabilities at the pair
    points; multiplying by a positive scalar leaves every weight direction
    unchanged. Deterministic (fixed multi-start grid).
    """
    x_points = np.atleast_2d(np.asarray(x_points, dtype=float))
    z = x_points @ surrogate.weights.T + surrogate.intercepts  # (m, c_local)
    f_cols = model.predict_proba(x_points)[:, list(surrogate.classes)]

    if surrogate.kind == "logistic":
        f1 = f_cols[:, 1]

        def loss(params):
            p = expit(np.exp(params[0]) * z[:, 0] + params[1])
            return float(np.mean((p - f1) ** 2))

        n_offsets = 1
    else:
        def loss(params):
            logits = np.exp(params[0]) * z + params[1:]
            logits = logits - logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            return float(np.mean((p - f_cols) ** 2))

        n_offsets = len(surrogate.classes)

    best = None
    for a0 in CALIBRATION_STARTS:
        x0 = np.concatenate([[np.log(a0)], np.zeros(n_offsets)])
        res = minimize(loss, x0, method="L-BFGS-B", options={"maxiter": 200})
        if best is None or res.fun < best.fun:
            best = res
    scale = float(np.exp(best.x[0]))
    return SurrogateModel(
        weights=scale * surrogate.weights,
        intercepts=scale * surrogate.intercepts + best.x[1:],
        classes=surrogate.classes,
        trained_on=surrogate.trained_on,
        kind=surrogate.kind,
    )


def explain(
    model,
    x_test: np.ndarray,
    neighborhood_cfg: NeighborhoodConfig,
    attack_cfg: AttackConfig,
    k: int = 5,
    feature_names: list[str] | None = None,
    reg: float = DEFAULT_RIDGE,
    calibrate: bool = True,
) -> Explanation:
    """Run the full pipeline for one instance.

    Failed pairs are dropped and counted; if every point fails, raises
    ExplanationFailed. After the cross-entropy fit the surrogate's
    probability scale is calibrated against the model at the pair points
    (direction-preserving; disable with calibrate=False). Fidelity is the
    R^2 between the model's and the surrogate's probability of the
    predicted class, evaluated on held-out pairs generated from
    ceil(count/2) fresh neighborhood points drawn from an offset stream;
    those pairs never enter any fit.
    """
    start = time.perf_counter()
    x_test = np.asarray(x_test, dtype=float)
    predicted = int(model.predict_label(x_test))
    nbhd = sample_neighborhood(model, x_test, neighborhood_cfg)

    pairs: list[AdversarialPair] = []
    failed = 0
    for i, (xi, yi) in enumerate(zip(nbhd.sampled_xs, nbhd.sampled_ys)):
        try:
            pairs.append(
                generate_pair(model, xi, int(yi), attack_cfg, model.num_classes, source_index=i)
            )
        except AttackFailed:
            failed += 1
    if not pairs:
        raise ExplanationFailed(
            f"all {failed} neighborhood points failed to produce adversarial pairs",
            failed_points=failed,
        )

    x_adv, y_adv = build_pair_dataset(pairs)
    surrogate = _fit_surrogate(x_adv, y_adv, model.num_classes, reg)
    if predicted not in surrogate.classes:
        raise ExplanationFailed(
            f"predicted class {predicted} absent from pair labels {surrogate.classes}",
            failed_points=failed,
        )
    selection_queries = 0
    if calibrate:
        surrogate = calibrate_probability_scale(model, surrogate, x_adv)
        selection_queries = len(x_adv)

    n_eval = max(2, ceil(0.5 * neighborhood_cfg.count))
    rng_eval = tagged_rng(neighborhood_cfg.seed, "fidelity-eval")
    eval_pts = sample_in_ball(rng_eval, x_test, neighborhood_cfg.radius, n_eval)
    eval_labels = np.atleast_1d(model.predict_label(eval_pts))
    eval_rows: list[np.ndarray] = []
    eval_queries = n_eval + selection_queries
    for xi, yi in zip(eval_pts, eval_labels):
        try:
            pair = generate_pair(model, xi, int(yi), attack_cfg, model.num_classes)
        except AttackFailed:
            continue
        eval_rows.extend([pair.x_adv, pair.x_rev])
        eval_queries += pair.attack_queries + 2
    if len(eval_rows) < 2:
        raise ExplanationFailed(
            "no held-out pairs survived for fidelity evaluation", failed_points=failed
        )
    x_eval = np.vstack(eval_rows)
    f_probs = model.predict_proba(x_eval)[:, predicted]
    g_probs = class_probability(surrogate, x_eval, predicted)
    fidelity = fidelity_r2(f_probs, g_probs)

    weights = attribution_weights(surrogate, predicted)
    top = top_k_features(weights, k, feature_names)
    runtime_ms = (time.perf_counter() - start) * 1000.0
    return Explanation(
        instance=x_test,
        predicted_class=predicted,
        top_features=top,
        surrogate=surrogate,
        fidelity_r2=float(fidelity),
        pairs_used=len(pairs),
        failed_points=failed,
        runtime_ms=runtime_ms,
        seed=neighborhood_cfg.seed,
        labeling_queries=2 * len(pairs),
        attack_queries=int(sum(p.attack_queries for p in pairs)),
        eval_queries=int(eval_queries),
        eps_forward_mean=float(np.mean([p.epsilons[0] for p in pairs])),
        eps_reverse_mean=float(np.mean([p.epsilons[1] for p in pairs])),
    )
