"""Minimal-perturbation attacks used to bracket a classifier's boundary.

Four interchangeable strategies: FGSM and PGD (fixed L-inf budget with
escalation), DeepFool-style iterative linearization (budget-free), and
HopSkipJump (decision-only black box). All operate in standardized feature
space without box constraints. Attacks are pure given (model, x, cfg):
each draws its randomness from a private stream derived from the config
seed and the point being attacked, so concurrent use is safe.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

KINDS = ("FGSM", "PGD", "DEEPFOOL", "HSJ")


class AttackFailed(Exception):
    """No adversarial point found within the configured budget."""


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "FGSM"
    epsilon0: float = 0.1
    epsilon_step: float = 0.1
    epsilon_max: float = 10.0
    pgd_steps: int = 40
    pgd_alpha_fraction: float = 0.0625  # alpha = fraction * eps; 2.5/steps
    df_overshoot: float = 0.02
    df_max_iters: int = 50
    hsj_max_queries: int = 10000
    hsj_theta: float | None = None  # None: 0.01 / sqrt(d)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}, expected one of {KINDS}")
        if self.epsilon0 <= 0 or self.epsilon_step <= 0:
            raise ValueError("epsilon0 and epsilon_step must be > 0")
        if self.epsilon0 > self.epsilon_max:
            raise ValueError("epsilon0 must not exceed epsilon_max")
        if min(self.pgd_steps, self.df_max_iters, self.hsj_max_queries) < 1:
            raise ValueError("iteration and query counts must be >= 1")


@dataclass(frozen=True)
class AttackResult:
    x_perturbed: np.ndarray
    label_before: int
    label_after: int
    epsilon_used: float  # escalated budget (FGSM/PGD) or achieved L2 norm (DEEPFOOL/HSJ)
    queries: int  # number of points whose label/probability was requested
    iterations: int


def derive_rng(seed: int, x: np.ndarray, extra: str = "") -> np.random.Generator:
    """Private RNG stream for one (seed, point) combination."""
    h = hashlib.blake2b(digest_size=16)
    h.update(str(seed).encode())
    h.update(np.ascontiguousarray(x, dtype=float).tobytes())
    h.update(extra.encode())
    words = np.frombuffer(h.digest(), dtype=np.uint64)
    return np.random.default_rng([seed & 0x7FFFFFFFFFFFFFFF, *words.tolist()])


def _immediate(x: np.ndarray, label: int) -> AttackResult:
    return AttackResult(x.copy(), label, label, 0.0, 1, 0)


def _escalation(cfg: AttackConfig):
    k = 0
    while True:
        eps = cfg.epsilon0 + k * cfg.epsilon_step
        if eps > cfg.epsilon_max + 1e-12:
            return
        yield eps
        k += 1


def fgsm_attack(model, x, target: int | None, cfg: AttackConfig) -> AttackResult:
    """Single gradient-sign step, escalating the budget until the label
    changes (untargeted) or the target class is reached."""
    x = np.asarray(x, dtype=float)
    label_before = model.predict_label(x)
    queries = 1
    if target is not None and label_before == target:
        return _immediate(x, label_before)
    # the sign direction does not depend on eps, so compute it once
    if target is None:
        direction = np.sign(model.input_gradient(x, label_before, mode="loss"))
    else:
        direction = -np.sign(model.input_gradient(x, target, mode="loss"))
    iterations = 0
    for eps in _escalation(cfg):
        xp = x + eps * direction
        label = model.predict_label(xp)
        queries += 1
        iterations += 1
        if (label != label_before) if target is None else (label == target):
            return AttackResult(xp, label_before, label, eps, queries, iterations)
    raise AttackFailed(f"FGSM exhausted epsilon budget {cfg.epsilon_max}")


def pgd_attack(model, x, target: int | None, cfg: AttackConfig) -> AttackResult:
    """Iterative gradient steps projected onto the L-inf ball of radius eps
    around x, with the same budget escalation as FGSM."""
    x = np.asarray(x, dtype=float)
    label_before = model.predict_label(x)
    queries = 1
    if target is not None and label_before == target:
        return _immediate(x, label_before)
    ref = label_before if target is None else target
    sign = 1.0 if target is None else -1.0
    iterations = 0
    for eps in _escalation(cfg):
        alpha = cfg.pgd_alpha_fraction * eps
        xt = x.copy()
        for _ in range(cfg.pgd_steps):
            g = model.input_gradient(xt, ref, mode="loss")
            xt = xt + sign * alpha * np.sign(g)
            xt = x + np.clip(xt - x, -eps, eps)
            label = model.predict_label(xt)
            queries += 1
            iterations += 1
            if (label != label_before) if target is None else (label == target):
                return AttackResult(xt, label_before, label, eps, queries, iterations)
    raise AttackFailed(f"PGD exhausted epsilon budget {cfg.epsilon_max}")


def deepfool_attack(model, x, target: int | None, cfg: AttackConfig) -> AttackResult:
    """Iteratively step to the nearest linearized logit boundary; the final
    perturbation is inflated by (1 + df_overshoot). No preset budget: the
    perturbation size is discovered."""
    x = np.asarray(x, dtype=float)
    label_before = model.predict_label(x)
    queries = 1
    if target is not None and label_before == target:
        return _immediate(x, label_before)
    candidates = [target] if target is not None else [
        k for k in range(model.num_classes) if k != label_before
    ]
    r_total = np.zeros_like(x)
    x_pert = x
    for it in range(1, cfg.df_max_iters + 1):
        z = model.logits(x_pert)
        queries += 1
        g_orig = model.input_gradient(x_pert, label_before, mode="logit")
        best = None
        for k in candidates:
            w_k = model.input_gradient(x_pert, k, mode="logit") - g_orig
            f_k = z[k] - z[label_before]
            norm = np.linalg.norm(w_k)
            if norm < 1e-12:
                continue
            score = abs(f_k) / norm
            if best is None or score < best[0]:
                best = (score, f_k, w_k, norm)
        if best is None:
            raise AttackFailed("DeepFool found no usable boundary direction")
        _, f_k, w_k, norm = best
        r_total = r_total + (abs(f_k) / norm**2) * w_k
        x_pert = x + (1.0 + cfg.df_overshoot) * r_total
        label = model.predict_label(x_pert)
        queries += 1
        if (label != label_before) if target is None else (label == target):
            return AttackResult(
                x_pert, label_before, label, float(np.linalg.norm(x_pert - x)), queries, it
            )
    raise AttackFailed(f"DeepFool did not converge in {cfg.df_max_iters} iterations")


class _BudgetExhausted(Exception):
    pass


class _LabelOracle:
    """Capability object exposing only label queries, with a hard budget.

    HopSkipJump receives the model exclusively through this wrapper, so it
    cannot request gradients. Queries are counted per point labeled.
    """

    def __init__(self, model, max_queries: int):
        self._predict = model.predict_label
        self.max_queries = max_queries
        self.count = 0

    @property
    def remaining(self) -> int:
        return self.max_queries - self.count

    def label(self, x: np.ndarray) -> int:
        if self.remaining < 1:
            raise _BudgetExhausted
        self.count += 1
        return int(self._predict(x))

    def labels(self, xs: np.ndarray) -> np.ndarray:
        n = xs.shape[0]
        if self.remaining < n:
            raise _BudgetExhausted
        self.count += n
        return np.asarray(self._predict(xs))


def _boundary_binary_search(oracle, x_orig, x_adv, adv_label, satisfied, theta):
    """Shrink the bracket between a clean and an adversarial point.

    Walks alpha in [0, 1] along the segment x_orig -> x_adv until the
    bracket width is <= theta, keeping the hi end adversarial. Returns
    (point, label_of_point, alpha_lo, alpha_hi); the midpoint of the final
    bracket is within theta of the returned point in alpha units.
    """
    lo, hi = 0.0, 1.0
    hi_label = adv_label
    seg = x_adv - x_orig
    while hi - lo > theta:
        mid = 0.5 * (lo + hi)
        try:
            label = oracle.label(x_orig + mid * seg)
        except _BudgetExhausted:
            break
        if satisfied(label):
            hi, hi_label = mid, label
        else:
            lo = mid
    return x_orig + hi * seg, hi_label, lo, hi


def hopskipjump_attack(model, x, target: int | None, cfg: AttackConfig) -> AttackResult:
    """Decision-based attack: find any misclassified point by sampling at
    growing radii, binary-search the segment back to x, then alternate
    Monte-Carlo normal estimation, a geometrically decaying step, and
    re-projection onto the boundary."""
    x = np.asarray(x, dtype=float)
    d = x.size
    theta = cfg.hsj_theta if cfg.hsj_theta is not None else 0.01 / np.sqrt(d)
    oracle = _LabelOracle(model, cfg.hsj_max_queries)
    label_before = oracle.label(x)
    if target is not None and label_before == target:
        return AttackResult(x.copy(), label_before, label_before, 0.0, oracle.count, 0)
    if target is None:
        satisfied = lambda lab: np.asarray(lab) != label_before
    else:
        satisfied = lambda lab: np.asarray(lab) == target
    rng = derive_rng(cfg.seed, x, extra="hsj")

    # initial adversarial point: seeded sampling at increasing radii
    init = init_label = None
    radius = 0.5
    while init is None:
        m = min(16, oracle.remaining)
        if m < 1:
            raise AttackFailed(
                f"HopSkipJump found no adversarial point within {cfg.hsj_max_queries} queries"
            )
        cand = x + radius * rng.standard_normal((m, d))
        try:
            labs = oracle.labels(cand)
        except _BudgetExhausted:
            raise AttackFailed(
                f"HopSkipJump found no adversarial point within {cfg.hsj_max_queries} queries"
            )
        hits = np.flatnonzero(satisfied(labs))
        if hits.size:
            init, init_label = cand[hits[0]], int(labs[hits[0]])
        else:
            radius *= 1.5

    cur, cur_label, _, _ = _boundary_binary_search(oracle, x, init, init_label, satisfied, theta)
    iterations = 0
    for it in range(30):
        dist = float(np.linalg.norm(cur - x))
        if dist < 1e-12:
            break
        delta = 0.1 * dist if it == 0 else float(np.sqrt(d)) * theta * dist
        num_eval = int(min(100 * np.sqrt(it + 1), 1000))
        if oracle.remaining < num_eval + 8:
            break
        u = rng.standard_normal((num_eval, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        f = np.where(satisfied(oracle.labels(cur + delta * u)), 1.0, -1.0)
        if np.all(f == 1.0):
            grad = u.mean(axis=0)
        elif np.all(f == -1.0):
            grad = -u.mean(axis=0)
        else:
            grad = ((f - f.mean())[:, None] * u).mean(axis=0)
        norm = np.linalg.norm(grad)
        if norm < 1e-12:
            break
        grad /= norm
        step = dist / np.sqrt(it + 1)
        moved = moved_label = None
        while step > 1e-12:
            candpt = cur + step * grad
            try:
                label = oracle.label(candpt)
            except _BudgetExhausted:
                break
            if satisfied(label):
                moved, moved_label = candpt, label
                break
            step *= 0.5
        iterations += 1
        if moved is None:
            continue
        cur, cur_label, _, _ = _boundary_binary_search(
            oracle, x, moved, moved_label, satisfied, theta
        )

    return AttackResult(
        cur, label_before, int(cur_label), float(np.linalg.norm(cur - x)),
        oracle.count, iterations,
    )


_ATTACKS = {
    "FGSM": fgsm_attack,
    "PGD": pgd_attack,
    "DEEPFOOL": deepfool_attack,
    "HSJ": hopskipjump_attack,
}


def run_attack(model, x, cfg: AttackConfig, target: int | None = None) -> AttackResult:
    """Dispatch to the strategy named by cfg.kind."""
    return _ATTACKS[cfg.kind](model, x, target, cfg)
