"""Server-side update filters: passthrough, acceptance-ball, Lipschitz
median, buffered median-of-means, and cosine-gated normalization.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .vecmath import cosine, l2norm

ACCEPT = "accept"
REJECT = "reject"
BUFFERED = "buffered"

DEFENSE_KINDS = ("asyncsgd", "kardam", "basgd", "zenopp", "aflguard")


@dataclass(frozen=True)
class Verdict:
    decision: str
    effective_update: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.decision not in (ACCEPT, REJECT, BUFFERED):
            raise ValueError(f"unknown decision: {self.decision!r}")
        if (self.effective_update is None) != (self.decision == REJECT):
            raise ValueError("effective_update present iff decision != reject")


@dataclass(frozen=True)
class AflguardParams:
    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")


def aflguard_accept(client_update: np.ndarray, server_update: np.ndarray,
                    lam: float) -> bool:
    """Accept iff ||g_client - g_server|| <= lambda * ||g_server||."""
    if client_update.shape != server_update.shape:
        raise ValueError("dimension mismatch")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return l2norm(client_update - server_update) <= lam * l2norm(server_update)


class KardamState:
    """Per-client history: last update, last base model, current coefficient."""

    def __init__(self):
        self.prev_update: Dict[int, np.ndarray] = {}
        self.prev_base: Dict[int, np.ndarray] = {}
        self.coefficients: Dict[int, float] = {}


def kardam_step(state: KardamState, client_id: int, update: np.ndarray,
                base_model: np.ndarray) -> Verdict:
    """Empirical-Lipschitz filter against the median coefficient.

    A client with no usable history (first update, or identical consecutive
    base models) is accepted and recorded: with no cold-start rule everything
    would be rejected and training would deadlock. The median is taken over
    the coefficients stored before this update arrives.
    """
    if update.shape != base_model.shape:
        raise ValueError("dimension mismatch")
    prev_u = state.prev_update.get(client_id)
    prev_b = state.prev_base.get(client_id)
    coeff = None
    if prev_u is not None:
        denom = l2norm(base_model - prev_b)
        if denom > 0.0:
            coeff = l2norm(update - prev_u) / denom
    if coeff is None:
        decision = ACCEPT
    else:
        defined = list(state.coefficients.values())
        threshold = float(np.median(defined)) if defined else coeff
        decision = ACCEPT if coeff <= threshold else REJECT
        state.coefficients[client_id] = coeff
    state.prev_update[client_id] = update
    state.prev_base[client_id] = base_model
    if decision == ACCEPT:
        return Verdict(ACCEPT, update)
    return Verdict(REJECT)


@dataclass
class BasgdState:
    num_buffers: int
    buffers: List[List[np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        if self.num_buffers < 1:
            raise ValueError("need at least one buffer")
        self.buffers = [[] for _ in range(self.num_buffers)]


def basgd_step(state: BasgdState, client_id: int, update: np.ndarray) -> Verdict:
    """Buffered aggregation: clients map to buffers by id modulo B.

    Once every buffer is nonempty the step emits the coordinatewise median
    of per-buffer means and clears all buffers; otherwise the update is
    buffered and the model is left unchanged.
    """
    state.buffers[client_id % state.num_buffers].append(update)
    if all(state.buffers):
        buffer_means = [np.mean(buf, axis=0) for buf in state.buffers]
        aggregated = np.median(np.stack(buffer_means), axis=0)
        state.buffers = [[] for _ in range(state.num_buffers)]
        return Verdict(ACCEPT, aggregated)
    return Verdict(BUFFERED, update)


def zeno_step(client_update: np.ndarray, server_update: np.ndarray) -> Verdict:
    """Cosine-gated filter: accept positively aligned updates, renormalized
    to the server update's magnitude."""
    server_norm = l2norm(server_update)
    if server_norm == 0.0:
        raise ValueError("zero server update")
    client_norm = l2norm(client_update)
    if client_norm == 0.0 or cosine(client_update, server_update) <= 0.0:
        return Verdict(REJECT)
    return Verdict(ACCEPT, client_update * (server_norm / client_norm))


def asyncsgd_step(update: np.ndarray) -> Verdict:
    """No filtering: every update is applied as sent."""
    return Verdict(ACCEPT, update)
