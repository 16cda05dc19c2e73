"""Poisoning behaviors mounted by malicious clients.

Data-level attacks (label flipping, backdoor replication) poison a client's
local dataset once at setup; the client then behaves honestly on the
poisoned data. Update-level attacks (Gaussian, gradient deviation, backdoor
scaling, adaptive) transform or replace the update a client would send.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CLASSIFICATION, REGRESSION, Dataset
from .vecmath import l2norm

ATTACK_KINDS = ("none", "label_flip", "gaussian", "gradient_deviation",
                "backdoor", "adaptive")


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "none"
    gauss_sigma: float = 200.0
    gd_scale: float = -10.0
    bd_trigger_period: int = 20
    bd_target_class: int = 0
    bd_replication_fraction: float = 0.25
    bd_scale_factor: float = 5.0
    adaptive_gamma_iters: int = 30
    knowledge: str = "full"  # full | partial

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind: {self.kind!r}")
        if self.gauss_sigma <= 0:
            raise ValueError("gauss_sigma must be positive")
        if self.gd_scale >= 0:
            raise ValueError("gd_scale must be negative")
        if self.bd_trigger_period < 1:
            raise ValueError("bd_trigger_period must be >= 1")
        if not (0.0 < self.bd_replication_fraction <= 1.0):
            raise ValueError("bd_replication_fraction must lie in (0, 1]")
        if self.bd_scale_factor < 1.0:
            raise ValueError("bd_scale_factor must be >= 1")
        if self.adaptive_gamma_iters < 1:
            raise ValueError("adaptive_gamma_iters must be >= 1")
        if self.knowledge not in ("full", "partial"):
            raise ValueError("knowledge must be 'full' or 'partial'")


@dataclass(frozen=True)
class ThreatKnowledge:
    """What the attacker sees when crafting an adaptive update."""

    base_model: np.ndarray
    benign_mean_gradient: np.ndarray
    server_update_estimate: np.ndarray
    lam: float

    def __post_init__(self):
        dims = {self.base_model.shape, self.benign_mean_gradient.shape,
                self.server_update_estimate.shape}
        if len(dims) != 1:
            raise ValueError("threat knowledge vectors must share dimension")


def flip_label(label: int, num_classes: int) -> int:
    """Class-label involution y -> C-1-y."""
    if not (0 <= label < num_classes):
        raise ValueError(f"label {label} out of range [0, {num_classes})")
    return num_classes - 1 - label


def flip_dataset_labels(ds: Dataset) -> Dataset:
    """Label-flip an entire local dataset.

    Classification labels map to C-1-y. Regression labels are reflected
    through zero, the real-valued analogue of the class reflection.
    """
    if ds.kind == CLASSIFICATION:
        flipped = np.array([flip_label(int(y), ds.num_classes) for y in ds.labels])
        return Dataset(ds.features, flipped, CLASSIFICATION, ds.num_classes)
    return Dataset(ds.features, -ds.labels, REGRESSION)


def gaussian_update(dim: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Pure-noise update with each component drawn from N(0, sigma^2)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return rng.normal(0.0, sigma, dim)


def gradient_deviation_update(honest: np.ndarray, scale: float) -> np.ndarray:
    """Reverse and amplify the honest update by a negative constant."""
    if scale >= 0:
        raise ValueError("gradient deviation scale must be negative")
    return scale * honest


def trigger_indices(dim: int, period: int) -> np.ndarray:
    return np.arange(0, dim, period)


def apply_trigger(features: np.ndarray, period: int) -> np.ndarray:
    """Zero every period-th feature (indices 0, period, 2*period, ...)."""
    out = np.array(features, dtype=np.float64, copy=True)
    idx = trigger_indices(out.shape[-1], period)
    if out.ndim == 1:
        out[idx] = 0.0
    else:
        out[:, idx] = 0.0
    return out


def backdoor_poison(local: Dataset, cfg: AttackConfig) -> Dataset:
    """Augment a local dataset with trigger-embedded, target-labeled replicas."""
    if local.kind != CLASSIFICATION:
        raise ValueError("backdoor poisoning requires classification data")
    if not (0 <= cfg.bd_target_class < local.num_classes):
        raise ValueError("bd_target_class out of range")
    num_rep = int(round(cfg.bd_replication_fraction * len(local)))
    rep_features = apply_trigger(local.features[:num_rep], cfg.bd_trigger_period)
    rep_labels = np.full(num_rep, cfg.bd_target_class, dtype=np.int64)
    return Dataset(np.concatenate([local.features, rep_features]),
                   np.concatenate([local.labels, rep_labels]),
                   CLASSIFICATION, local.num_classes)


def backdoor_update(honest_on_poisoned: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    """Scale up the update computed on poisoned data."""
    return cfg.bd_scale_factor * honest_on_poisoned


def _satisfies_acceptance(update: np.ndarray, server_update: np.ndarray, lam: float) -> bool:
    return l2norm(update - server_update) <= lam * l2norm(server_update)


def adaptive_update(knowledge: ThreatKnowledge, cfg: AttackConfig) -> np.ndarray:
    """Craft the largest filter-feasible deviation along the reversed benign mean.

    Returns g_bar - gamma * s with s = g_bar / ||g_bar||, where gamma is the
    largest value in [0, 10 * ||g_s||] keeping the crafted update inside the
    acceptance ball around the attacker's server-update estimate. gamma is
    found by bisection; if even gamma = 0 is infeasible the benign mean is
    sent unchanged.
    """
    g_bar = knowledge.benign_mean_gradient
    g_s = knowledge.server_update_estimate
    norm_gbar = l2norm(g_bar)
    norm_gs = l2norm(g_s)
    if norm_gbar == 0.0 or norm_gs == 0.0:
        raise ValueError("adaptive attack needs nonzero knowledge vectors")
    s = g_bar / norm_gbar
    lam = knowledge.lam

    def feasible(gamma: float) -> bool:
        return _satisfies_acceptance(g_bar - gamma * s, g_s, lam)

    if not feasible(0.0):
        return g_bar.copy()
    gamma_max = 10.0 * norm_gs
    if feasible(gamma_max):
        return g_bar - gamma_max * s
    lo, hi = 0.0, gamma_max
    for _ in range(cfg.adaptive_gamma_iters):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return g_bar - lo * s
