import numpy as np
import pytest

from aflbench import attacks, data, vecmath
from aflbench.attacks import AttackConfig, ThreatKnowledge


def test_flip_label_examples():
    assert attacks.flip_label(1, 10) == 8
    assert attacks.flip_label(9, 10) == 0
    with pytest.raises(ValueError):
        attacks.flip_label(10, 10)
    with pytest.raises(ValueError):
        attacks.flip_label(-1, 10)


def test_flip_label_is_involution():
    for c in (2, 6, 10):
        for y in range(c):
            assert attacks.flip_label(attacks.flip_label(y, c), c) == y


def test_flip_dataset_classification():
    ds = data.Dataset(np.ones((4, 2)), np.array([0, 1, 2, 3]),
                      data.CLASSIFICATION, 4)
    flipped = attacks.flip_dataset_labels(ds)
    assert np.array_equal(flipped.labels, [3, 2, 1, 0])


def test_flip_dataset_regression_negates():
    ds = data.Dataset(np.ones((3, 2)), np.array([1.0, -2.0, 0.0]), data.REGRESSION)
    flipped = attacks.flip_dataset_labels(ds)
    assert np.array_equal(flipped.labels, [-1.0, 2.0, 0.0])


def test_gaussian_update_statistics():
    rng = np.random.default_rng(71)
    draws = np.stack([attacks.gaussian_update(100, 200.0, rng) for _ in range(10_000)])
    stds = draws.std(axis=0)
    assert np.all(np.abs(stds - 200.0) <= 0.05 * 200.0)
    means = draws.mean(axis=0)
    assert np.all(np.abs(means) <= 8.0)


def test_gaussian_update_deterministic():
    a = attacks.gaussian_update(10, 200.0, np.random.default_rng(4))
    b = attacks.gaussian_update(10, 200.0, np.random.default_rng(4))
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        attacks.gaussian_update(10, 0.0, np.random.default_rng(4))


def test_gradient_deviation_examples():
    assert np.array_equal(
        attacks.gradient_deviation_update(np.array([1.0, 2.0]), -10.0),
        np.array([-10.0, -20.0]))
    assert np.array_equal(
        attacks.gradient_deviation_update(np.zeros(3), -10.0), np.zeros(3))
    honest = np.array([0.5, -2.0, 1.0])
    out = attacks.gradient_deviation_update(honest, -4.0)
    assert vecmath.l2norm(out) == pytest.approx(4.0 * vecmath.l2norm(honest))
    assert vecmath.cosine(honest, out) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        attacks.gradient_deviation_update(honest, 2.0)


def _local_classification(n=80, dim=40, c=4):
    return data.gen_synthetic_classification(83, n, dim, c)[0]


def test_backdoor_poison_counts_and_labels():
    local = _local_classification()
    cfg = AttackConfig(kind="backdoor", bd_trigger_period=20, bd_target_class=2,
                       bd_replication_fraction=10 / 80)
    poisoned = attacks.backdoor_poison(local, cfg)
    assert len(poisoned) == 90
    replicas = poisoned.labels[80:]
    assert np.all(replicas == 2)


def test_backdoor_poison_trigger_zeroes():
    local = _local_classification(dim=45)
    cfg = AttackConfig(kind="backdoor", bd_trigger_period=20, bd_target_class=0,
                       bd_replication_fraction=0.25)
    poisoned = attacks.backdoor_poison(local, cfg)
    replica_feats = poisoned.features[80:]
    assert np.all(replica_feats[:, [0, 20, 40]] == 0.0)
    # non-trigger coordinates are untouched copies
    assert np.array_equal(replica_feats[:, 1], local.features[:20, 1])


def test_backdoor_poison_rejects_regression():
    ds, _ = data.gen_synthetic_regression(89, 10, 4)
    with pytest.raises(ValueError):
        attacks.backdoor_poison(ds, AttackConfig(kind="backdoor"))


def test_backdoor_update_scaling():
    u = np.array([1.0, 0.0])
    assert np.array_equal(
        attacks.backdoor_update(u, AttackConfig(kind="backdoor", bd_scale_factor=1.0)), u)
    assert np.array_equal(
        attacks.backdoor_update(u, AttackConfig(kind="backdoor", bd_scale_factor=5.0)),
        np.array([5.0, 0.0]))
    v = np.array([0.3, -0.4])
    out = attacks.backdoor_update(v, AttackConfig(kind="backdoor", bd_scale_factor=3.0))
    assert vecmath.l2norm(out) == pytest.approx(3.0 * vecmath.l2norm(v))


def test_adaptive_boundary_when_estimates_coincide():
    g = np.array([3.0, 4.0])
    know = ThreatKnowledge(np.zeros(2), g, g, 1.5)
    crafted = attacks.adaptive_update(know, AttackConfig(kind="adaptive"))
    s = g / 5.0
    gamma = float(np.dot(g - crafted, s))
    assert gamma == pytest.approx(1.5 * 5.0, abs=1e-5)
    assert vecmath.l2norm(crafted - g) <= 1.5 * 5.0 + 1e-9


def test_adaptive_lambda_zero_degenerate():
    g = np.array([1.0, -1.0, 2.0])
    know = ThreatKnowledge(np.zeros(3), g, g, 0.0)
    assert np.allclose(attacks.adaptive_update(know, AttackConfig(kind="adaptive")), g)


def test_adaptive_feasibility_and_maximality():
    rng = np.random.default_rng(97)
    cfg = AttackConfig(kind="adaptive")
    checked_boundary = 0
    for _ in range(50):
        dim = 6
        g_s = rng.normal(size=dim)
        g_bar = rng.normal(size=dim)
        lam = float(rng.uniform(0.2, 3.0))
        know = ThreatKnowledge(np.zeros(dim), g_bar, g_s, lam)
        crafted = attacks.adaptive_update(know, cfg)
        norm_gs = vecmath.l2norm(g_s)
        if vecmath.l2norm(g_bar - g_s) > lam * norm_gs:
            assert np.array_equal(crafted, g_bar)
            continue
        assert vecmath.l2norm(crafted - g_s) <= lam * norm_gs + 1e-9
        s = g_bar / vecmath.l2norm(g_bar)
        gamma = float(np.dot(g_bar - crafted, s))
        if 0 < gamma < 10.0 * norm_gs - 1e-9:
            probe = crafted - (norm_gs * 1e-3) * s
            assert vecmath.l2norm(probe - g_s) > lam * norm_gs
            checked_boundary += 1
    assert checked_boundary > 10


def test_adaptive_rejects_zero_knowledge():
    with pytest.raises(ValueError):
        attacks.adaptive_update(
            ThreatKnowledge(np.zeros(2), np.zeros(2), np.ones(2), 1.0),
            AttackConfig(kind="adaptive"))


def test_attack_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(kind="bogus")
    with pytest.raises(ValueError):
        AttackConfig(gd_scale=1.0)
    with pytest.raises(ValueError):
        AttackConfig(gauss_sigma=-1.0)
    with pytest.raises(ValueError):
        AttackConfig(bd_replication_fraction=0.0)
    with pytest.raises(ValueError):
        AttackConfig(bd_scale_factor=0.5)
