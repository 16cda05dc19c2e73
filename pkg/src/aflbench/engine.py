"""Asynchronous training loop: staleness simulation, server-update refresh,
defense dispatch, and the global update rule.

One iteration processes exactly one client update: a uniformly random
client reports an update computed at the global model from ``delay``
iterations ago, with the integer delay drawn uniformly from
[0, min(max_client_delay, t)]. The server applies accepted updates as
theta <- theta - learning_rate * update.

Wire format of updates: a client's model update is the SUM of per-example
gradients over its mini-batch (batch_size times the average gradient), and
the server's reference update is the sum over its trusted dataset. This is
the unit convention under which the stated learning rates reproduce the
benchmark numbers; all filters compare like with like, and the acceptance
ball, cosine, and median tests are unchanged by any common rescaling.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import attacks, defenses, metrics, tasks
from .attacks import AttackConfig, ThreatKnowledge
from .config import ExperimentConfig
from .data import (CLASSIFICATION, REGRESSION, Dataset, PartitionSpec,
                   TrustedSetSpec, gen_synthetic_classification,
                   gen_synthetic_regression, load_csv, minibatch,
                   partition, sample_trusted, split_train_test)
from .defenses import ACCEPT, BUFFERED, REJECT, BasgdState, KardamState, Verdict
from .metrics import MetricRecord

METRIC_CADENCE = 50

# Reporting convention for runs whose error leaves the plotting range:
# any primary metric above this threshold (or a non-finite model) is
# summarized as the divergence marker.
DIVERGENCE_THRESHOLD = 1000.0
DIVERGENCE_MARKER = ">1000"


@dataclass
class PreparedData:
    """Datasets and task description shared by every trial of a config."""

    task: tasks.RegressionTask | tasks.LogisticTask
    train: Dataset
    test: Dataset
    trusted: Dataset
    client_data: List[Dataset]
    client_data_clean: List[Dataset]
    true_model: Optional[np.ndarray]
    malicious: frozenset


@dataclass
class GlobalState:
    """Mutable per-trial server state."""

    theta: np.ndarray
    iteration: int
    history: Dict[int, np.ndarray]
    server_update: np.ndarray
    server_update_iteration: int
    # past reference updates keyed by refresh iteration; an adaptive client
    # crafting at a stale base model sees the estimate that was current then
    server_update_history: Dict[int, np.ndarray] = field(default_factory=dict)

    def server_update_at(self, iteration: int) -> np.ndarray:
        known = [k for k in self.server_update_history if k <= iteration]
        if not known:
            raise ValueError(f"no server update known at iteration {iteration}")
        return self.server_update_history[max(known)]


@dataclass
class TrialResult:
    seed: int
    records: List[MetricRecord] = field(default_factory=list)
    final_model: Optional[np.ndarray] = None
    diverged: bool = False

    @property
    def final_record(self) -> MetricRecord:
        return self.records[-1]

    def is_divergent(self) -> bool:
        """Whether this run reports the divergence marker."""
        if self.diverged:
            return True
        value = self.final_record.primary
        return not np.isfinite(value) or value > DIVERGENCE_THRESHOLD


def prepare_data(config: ExperimentConfig) -> PreparedData:
    """Generate/load, split, partition, poison, and sample per the config."""
    tc = config.task
    true_model = None
    if tc.kind == "synthetic_regression":
        full, true_model = gen_synthetic_regression(config.seeds.data_seed,
                                                    tc.num_samples, tc.dim)
    elif tc.kind == "synthetic_classification":
        full, _ = gen_synthetic_classification(config.seeds.data_seed,
                                               tc.num_samples, tc.dim,
                                               tc.num_classes, tc.class_spread,
                                               tc.feature_offset)
    else:
        full = load_csv(tc.path)

    train, test = split_train_test(full, tc.train_count, config.seeds.data_seed)

    if train.kind == REGRESSION:
        task: tasks.RegressionTask | tasks.LogisticTask = tasks.RegressionTask(
            train.dim, true_model)
        mode = "iid"  # regression datasets only partition iid
    else:
        task = tasks.LogisticTask(train.dim, train.num_classes)
        mode = config.data.partition

    spec = PartitionSpec(config.clients.num_clients, mode,
                         config.data.noniid_degree)
    clean = partition(train, spec, config.seeds.data_seed)
    batch = config.schedule.batch_size
    for i, ds in enumerate(clean):
        if len(ds) < batch:
            raise ValueError(
                f"client {i} holds {len(ds)} examples, fewer than batch size {batch}")

    trusted = sample_trusted(
        train, TrustedSetSpec(config.data.trusted_size,
                              config.data.distribution_shift),
        config.seeds.data_seed)

    malicious = frozenset(config.clients.malicious_ids())
    poisoned = list(clean)
    kind = config.attack.kind
    if kind == "label_flip":
        for cid in malicious:
            poisoned[cid] = attacks.flip_dataset_labels(clean[cid])
    elif kind == "backdoor":
        if train.kind != CLASSIFICATION:
            raise ValueError("backdoor attack requires a classification task")
        for cid in malicious:
            poisoned[cid] = attacks.backdoor_poison(clean[cid], config.attack)

    return PreparedData(task=task, train=train, test=test, trusted=trusted,
                        client_data=poisoned, client_data_clean=clean,
                        true_model=true_model, malicious=malicious)


def _avg_gradient(task, theta: np.ndarray, ds: Dataset) -> np.ndarray:
    if isinstance(task, tasks.RegressionTask):
        return tasks.regression_gradient(theta, ds.features, ds.labels)
    return tasks.logistic_gradient(theta, ds.features, ds.labels, task.num_classes)


def server_update_vector(task, theta: np.ndarray, trusted: Dataset) -> np.ndarray:
    """Reference update: sum of per-example gradients over the trusted set."""
    return len(trusted) * _avg_gradient(task, theta, trusted)


def make_threat_knowledge(state: GlobalState, base_iteration: int,
                          prepared: PreparedData,
                          config: ExperimentConfig) -> ThreatKnowledge:
    """Assemble the attacker's view for the adaptive attack.

    The benign mean is the expected client update at the base model: the
    unweighted mean of per-client full-data gradients over the knowledge
    scope, scaled to wire units (batch_size times the average).

    The server-update estimate is the attacker's reconstruction, not the
    server's private vector: the attacker knows every client's data and the
    filter parameters, but the trusted dataset (and its size) is the
    server's private capability. The attacker therefore mirrors the
    server's sum-over-its-dataset computation on the dataset it does know,
    the joint training data, and the reconstruction inherits that dataset's
    scale. Both the scale gap and the trusted-set sampling noise are
    estimation error the attacker cannot remove.
    """
    if base_iteration not in state.history:
        raise ValueError(f"base model {base_iteration} evicted from history")
    base_model = state.history[base_iteration]
    if config.attack.knowledge == "partial":
        scope = sorted(prepared.malicious)
    else:
        scope = range(len(prepared.client_data_clean))
    client_sets = [prepared.client_data_clean[c] for c in scope]
    grads = [_avg_gradient(prepared.task, base_model, ds) for ds in client_sets]
    benign_mean = config.schedule.batch_size * np.mean(grads, axis=0)
    known_examples = sum(len(ds) for ds in client_sets)
    server_estimate = known_examples * np.mean(grads, axis=0)
    return ThreatKnowledge(base_model=base_model,
                           benign_mean_gradient=benign_mean,
                           server_update_estimate=server_estimate,
                           lam=config.defense.lam)


class _DefenseRunner:
    """Per-trial dispatch wrapper owning any mutable defense state."""

    def __init__(self, config: ExperimentConfig):
        self.kind = config.defense.kind
        self.lam = config.defense.lam
        self.kardam = KardamState() if self.kind == "kardam" else None
        self.basgd = (BasgdState(config.defense.num_buffers)
                      if self.kind == "basgd" else None)

    def step(self, client_id: int, update: np.ndarray, base_model: np.ndarray,
             server_update: np.ndarray) -> Verdict:
        if self.kind == "asyncsgd":
            return defenses.asyncsgd_step(update)
        if self.kind == "aflguard":
            if defenses.aflguard_accept(update, server_update, self.lam):
                return Verdict(ACCEPT, update)
            return Verdict(REJECT)
        if self.kind == "kardam":
            return defenses.kardam_step(self.kardam, client_id, update, base_model)
        if self.kind == "basgd":
            return defenses.basgd_step(self.basgd, client_id, update)
        if self.kind == "zenopp":
            return defenses.zeno_step(update, server_update)
        raise ValueError(f"unknown defense kind: {self.kind!r}")


def _client_update(cid: int, base_iteration: int, rng: np.random.Generator,
                   state: GlobalState, prepared: PreparedData,
                   config: ExperimentConfig) -> np.ndarray:
    """Compute the wire update a client sends from a stale base model."""
    cfg = config.attack
    batch_size = config.schedule.batch_size
    task = prepared.task
    base_model = state.history[base_iteration]

    def honest(ds: Dataset) -> np.ndarray:
        batch = minibatch(ds, batch_size, rng)
        return batch_size * _avg_gradient(task, base_model, batch)

    if cid not in prepared.malicious or cfg.kind == "none":
        return honest(prepared.client_data[cid])
    if cfg.kind in ("label_flip", "backdoor"):
        update = honest(prepared.client_data[cid])  # honest pass on poisoned data
        if cfg.kind == "backdoor":
            update = attacks.backdoor_update(update, cfg)
        return update
    if cfg.kind == "gaussian":
        return attacks.gaussian_update(task.param_dim, cfg.gauss_sigma, rng)
    if cfg.kind == "gradient_deviation":
        return attacks.gradient_deviation_update(honest(prepared.client_data[cid]),
                                                 cfg.gd_scale)
    if cfg.kind == "adaptive":
        knowledge = make_threat_knowledge(state, base_iteration, prepared, config)
        return attacks.adaptive_update(knowledge, cfg)
    raise ValueError(f"unhandled attack kind: {cfg.kind!r}")


def _evaluate(theta: np.ndarray, iteration: int, prepared: PreparedData,
              config: ExperimentConfig, counts: dict,
              diverged: bool = False) -> MetricRecord:
    task = prepared.task
    kwargs = dict(iteration=iteration, accepted=counts["accepted"],
                  rejected=counts["rejected"], buffered=counts["buffered"])
    if isinstance(task, tasks.RegressionTask):
        if diverged:
            kwargs["mse"] = float("inf")
            kwargs["mee"] = float("inf") if task.true_model is not None else None
        else:
            predictions = tasks.regression_predict_batch(theta, prepared.test.features)
            if task.true_model is not None:
                # theta* is known: score against the noiseless ground truth,
                # so the error floor reflects estimation error only.
                truths = prepared.test.features @ task.true_model
                kwargs["mee"] = metrics.mee(theta, task.true_model)
            else:
                truths = prepared.test.labels
            kwargs["mse"] = metrics.mse(predictions, truths)
    else:
        if diverged:
            kwargs["test_error_rate"] = 1.0
        else:
            kwargs["test_error_rate"] = metrics.test_error_rate(theta, prepared.test)
            if config.attack.kind == "backdoor":
                kwargs["attack_success_rate"] = metrics.attack_success_rate(
                    theta, prepared.test, config.attack)
    return MetricRecord(**kwargs)


def run_trial(config: ExperimentConfig, prepared: PreparedData,
              seed: int) -> TrialResult:
    """Execute one seeded trial; fully deterministic given (config, seed)."""
    sched = config.schedule
    rng = np.random.default_rng(seed)
    n = config.clients.num_clients
    theta = np.zeros(prepared.task.param_dim)
    g0 = server_update_vector(prepared.task, theta, prepared.trusted)
    state = GlobalState(theta=theta, iteration=0, history={0: theta},
                        server_update=g0, server_update_iteration=0,
                        server_update_history={0: g0})
    defense = _DefenseRunner(config)
    counts = {"accepted": 0, "rejected": 0, "buffered": 0}
    result = TrialResult(seed=seed)

    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(sched.iterations):
            state.iteration = t
            cid = int(rng.integers(n))
            dmax = min(sched.max_client_delay, t)
            delay = int(rng.integers(0, dmax + 1))
            base_iteration = t - delay
            base_model = state.history[base_iteration]

            update = _client_update(cid, base_iteration, rng, state, prepared, config)

            if t % sched.server_refresh_period == 0 and t > 0:
                state.server_update = server_update_vector(
                    prepared.task, state.theta, prepared.trusted)
                state.server_update_iteration = t
                state.server_update_history[t] = state.server_update
                stale_cutoff = t - sched.max_client_delay - sched.server_refresh_period
                for key in [k for k in state.server_update_history if k < stale_cutoff]:
                    del state.server_update_history[key]

            verdict = defense.step(cid, update, base_model, state.server_update)
            if verdict.decision == ACCEPT:
                state.theta = state.theta - sched.learning_rate * verdict.effective_update
                counts["accepted"] += 1
            elif verdict.decision == REJECT:
                counts["rejected"] += 1
            else:
                counts["buffered"] += 1

            completed = t + 1
            if not np.all(np.isfinite(state.theta)):
                result.records.append(_evaluate(state.theta, completed, prepared,
                                                config, counts, diverged=True))
                result.diverged = True
                result.final_model = state.theta
                return result

            state.history[completed] = state.theta
            oldest_needed = completed - sched.max_client_delay
            if oldest_needed - 1 in state.history:
                del state.history[oldest_needed - 1]

            if completed % METRIC_CADENCE == 0 or completed == sched.iterations:
                result.records.append(_evaluate(state.theta, completed, prepared,
                                                config, counts))

    result.final_model = state.theta
    return result
