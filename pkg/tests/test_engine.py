import dataclasses

import numpy as np
import pytest

from aflbench import engine
from aflbench.config import DefenseConfig, ExperimentConfig
from aflbench.data import minibatch
from aflbench.engine import (GlobalState, make_threat_knowledge, prepare_data,
                             run_trial, server_update_vector)


def base_config(**kwargs):
    cfg = ExperimentConfig()
    defense = kwargs.pop("defense", "aflguard")
    lam = kwargs.pop("lam", 1.5)
    attack = kwargs.pop("attack", "none")
    malicious_fraction = kwargs.pop("malicious_fraction", 0.2)
    cfg = dataclasses.replace(
        cfg,
        clients=dataclasses.replace(cfg.clients,
                                    malicious_fraction=malicious_fraction),
        attack=dataclasses.replace(cfg.attack, kind=attack),
        defense=DefenseConfig(kind=defense, lam=lam),
    )
    if kwargs:
        cfg = dataclasses.replace(cfg,
                                  schedule=dataclasses.replace(cfg.schedule, **kwargs))
    return cfg


def small_config(**kwargs):
    kwargs.setdefault("iterations", 300)
    return base_config(**kwargs)


def test_trial_is_deterministic():
    cfg = small_config(attack="gaussian")
    prepared = prepare_data(cfg)
    a = run_trial(cfg, prepared, 7)
    b = run_trial(cfg, prepared, 7)
    assert a.records == b.records
    assert np.array_equal(a.final_model, b.final_model)


def test_huge_lambda_matches_asyncsgd_bitwise():
    guard = small_config(defense="aflguard", lam=1e9, malicious_fraction=0.0)
    plain = small_config(defense="asyncsgd", malicious_fraction=0.0)
    prepared = prepare_data(guard)
    r_guard = run_trial(guard, prepared, 3)
    r_plain = run_trial(plain, prepared, 3)
    assert np.array_equal(r_guard.final_model, r_plain.final_model)
    assert r_guard.records == r_plain.records


def test_stale_free_run_matches_independent_sgd_oracle():
    cfg = base_config(defense="asyncsgd", malicious_fraction=0.0,
                      max_client_delay=0)
    prepared = prepare_data(cfg)
    seed = 5
    result = run_trial(cfg, prepared, seed)

    # independent oracle: same draw protocol, update math written from scratch
    rng = np.random.default_rng(seed)
    theta = np.zeros(prepared.task.param_dim)
    n = cfg.clients.num_clients
    eta = cfg.schedule.learning_rate
    batch = cfg.schedule.batch_size
    for t in range(cfg.schedule.iterations):
        cid = int(rng.integers(n))
        _ = int(rng.integers(0, 1))  # delay draw, always 0 here
        ds = prepared.client_data[cid]
        picked = minibatch(ds, batch, rng)
        residuals = np.einsum("ij,j->i", picked.features, theta) - picked.labels
        grad_sum = np.einsum("i,ij->j", residuals, picked.features)
        theta = theta - eta * grad_sum
    assert np.allclose(theta, result.final_model, rtol=0, atol=1e-10)
    final_distance = np.linalg.norm(theta - prepared.true_model)
    assert final_distance < 1.0


def test_rejection_never_changes_model():
    # a vanishing acceptance ball rejects every update, freezing the model
    cfg = small_config(defense="aflguard", lam=1e-12)
    prepared = prepare_data(cfg)
    result = run_trial(cfg, prepared, 1)
    assert np.array_equal(result.final_model, np.zeros(prepared.task.param_dim))
    final = result.final_record
    assert final.rejected == cfg.schedule.iterations
    assert final.accepted == 0


def test_asyncsgd_under_gd_reports_divergence_marker():
    cfg = base_config(defense="asyncsgd", attack="gradient_deviation")
    prepared = prepare_data(cfg)
    result = run_trial(cfg, prepared, 1)
    assert result.is_divergent()


def test_history_ring_supports_all_delays():
    cfg = small_config(max_client_delay=10, attack="gaussian")
    prepared = prepare_data(cfg)
    result = run_trial(cfg, prepared, 2)  # would KeyError on a missed read
    assert result.final_record.iteration == cfg.schedule.iterations


def _fresh_state(prepared, theta=None):
    task = prepared.task
    theta = np.zeros(task.param_dim) if theta is None else theta
    g0 = server_update_vector(task, theta, prepared.trusted)
    return GlobalState(theta=theta, iteration=0, history={0: theta},
                       server_update=g0, server_update_iteration=0,
                       server_update_history={0: g0})


def test_threat_knowledge_identical_clients():
    cfg = base_config(attack="adaptive", malicious_fraction=0.2)
    prepared = prepare_data(cfg)
    # overwrite every client with the same local data
    shared = prepared.client_data_clean[0]
    prepared.client_data_clean = [shared] * cfg.clients.num_clients
    state = _fresh_state(prepared)
    know = make_threat_knowledge(state, 0, prepared, cfg)
    from aflbench.tasks import regression_gradient
    single_full = regression_gradient(state.theta, shared.features, shared.labels)
    expected = cfg.schedule.batch_size * single_full
    assert np.allclose(know.benign_mean_gradient, expected)


def test_threat_knowledge_partial_scope():
    cfg = base_config(attack="adaptive", malicious_fraction=0.2)
    cfg = dataclasses.replace(cfg, attack=dataclasses.replace(cfg.attack,
                                                              knowledge="partial"))
    prepared = prepare_data(cfg)
    state = _fresh_state(prepared)
    know = make_threat_knowledge(state, 0, prepared, cfg)
    from aflbench.tasks import regression_gradient
    grads = [regression_gradient(state.theta, prepared.client_data_clean[c].features,
                                 prepared.client_data_clean[c].labels)
             for c in sorted(prepared.malicious)]
    expected = cfg.schedule.batch_size * np.mean(grads, axis=0)
    assert np.allclose(know.benign_mean_gradient, expected)


def test_threat_knowledge_mean_equals_pooled_for_equal_sizes():
    cfg = base_config(attack="adaptive")
    prepared = prepare_data(cfg)
    state = _fresh_state(prepared, theta=np.ones(prepared.task.param_dim))
    state.history[0] = state.theta
    know = make_threat_knowledge(state, 0, prepared, cfg)
    from aflbench.tasks import regression_gradient
    pooled = regression_gradient(state.theta, prepared.train.features,
                                 prepared.train.labels)
    expected = cfg.schedule.batch_size * pooled
    assert np.allclose(know.benign_mean_gradient, expected, rtol=1e-10)


def test_threat_knowledge_missing_base_is_error():
    cfg = base_config(attack="adaptive")
    prepared = prepare_data(cfg)
    state = _fresh_state(prepared)
    with pytest.raises(ValueError):
        make_threat_knowledge(state, 99, prepared, cfg)


def test_prepare_data_poisons_only_malicious():
    cfg = base_config(attack="label_flip", malicious_fraction=0.2)
    prepared = prepare_data(cfg)
    assert prepared.malicious == frozenset(range(20))
    for cid in range(20):
        assert np.array_equal(prepared.client_data[cid].labels,
                              -prepared.client_data_clean[cid].labels)
    for cid in range(20, 100):
        assert prepared.client_data[cid] is prepared.client_data_clean[cid]


def test_metric_cadence_and_final_record():
    cfg = small_config(iterations=120)
    prepared = prepare_data(cfg)
    result = run_trial(cfg, prepared, 1)
    assert [r.iteration for r in result.records] == [50, 100, 120]
