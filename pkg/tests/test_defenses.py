import numpy as np
import pytest

from aflbench import defenses
from aflbench.defenses import ACCEPT, BUFFERED, REJECT, BasgdState, KardamState, Verdict


class TestAflguard:
    def test_identical_updates_accepted(self):
        v = np.array([0.5, -1.0])
        assert defenses.aflguard_accept(v, v, 1e-9)

    def test_reversed_update_rejected(self):
        assert not defenses.aflguard_accept(np.array([-1.0, 0.0]),
                                            np.array([1.0, 0.0]), 1.5)

    def test_boundary_is_accepted(self):
        # powers of two keep the boundary arithmetic exact in binary floats
        lam = 0.5
        server = np.array([2.0, -4.0, 8.0])
        client = (1 + lam) * server  # deviation norm exactly lam*||server||
        assert defenses.aflguard_accept(client, server, lam)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(101)
        for _ in range(30):
            server = rng.normal(size=5)
            client = rng.normal(size=5)
            lam = float(rng.uniform(0.1, 3.0))
            base = defenses.aflguard_accept(client, server, lam)
            for c in (2.0, -0.5, 100.0):
                assert defenses.aflguard_accept(c * client, c * server, lam) == base

    def test_huge_lambda_accepts_everything(self):
        rng = np.random.default_rng(102)
        server = rng.normal(size=4)
        for _ in range(20):
            assert defenses.aflguard_accept(rng.normal(size=4) * 1e6, server, 1e9)

    def test_zero_server_accepts_only_zero_client(self):
        server = np.zeros(3)
        assert defenses.aflguard_accept(np.zeros(3), server, 1.5)
        assert not defenses.aflguard_accept(np.array([1e-12, 0, 0]), server, 1.5)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            defenses.aflguard_accept(np.ones(2), np.ones(3), 1.0)


class TestKardam:
    def test_bootstrap_accepts_first_update(self):
        state = KardamState()
        for cid in range(5):
            v = defenses.kardam_step(state, cid, np.ones(2) * cid, np.zeros(2))
            assert v.decision == ACCEPT

    def _seed_coefficients(self, state, ks):
        # client i sends two updates whose difference has norm ks[i] over a
        # unit base-model change
        for cid, k in enumerate(ks):
            defenses.kardam_step(state, cid, np.zeros(2), np.zeros(2))
            defenses.kardam_step(state, cid, np.array([k, 0.0]),
                                 np.array([1.0, 0.0]))

    def test_accepts_at_or_below_median(self):
        state = KardamState()
        self._seed_coefficients(state, [0.5, 1.0, 2.0])
        assert sorted(state.coefficients.values()) == [0.5, 1.0, 2.0]
        incoming = state.prev_update[0] + np.array([0.8, 0.0])
        base = state.prev_base[0] + np.array([1.0, 0.0])
        assert defenses.kardam_step(state, 0, incoming, base).decision == ACCEPT

    def test_rejects_above_median(self):
        state = KardamState()
        self._seed_coefficients(state, [0.5, 1.0, 2.0])
        incoming = state.prev_update[1] + np.array([5.0, 0.0])
        base = state.prev_base[1] + np.array([1.0, 0.0])
        assert defenses.kardam_step(state, 1, incoming, base).decision == REJECT

    def test_zero_denominator_bootstraps(self):
        state = KardamState()
        base = np.array([1.0, 1.0])
        defenses.kardam_step(state, 0, np.ones(2), base)
        v = defenses.kardam_step(state, 0, np.ones(2) * 100, base.copy())
        assert v.decision == ACCEPT
        assert 0 not in state.coefficients

    def test_decision_ignores_client_identity(self):
        # same coefficient multiset and same incoming ratio, permuted ids
        outcomes = []
        for perm in ([0, 1, 2], [2, 0, 1], [1, 2, 0]):
            state = KardamState()
            ks = {perm[0]: 0.5, perm[1]: 1.0, perm[2]: 2.0}
            for cid, k in ks.items():
                defenses.kardam_step(state, cid, np.zeros(2), np.zeros(2))
                defenses.kardam_step(state, cid, np.array([k, 0.0]),
                                     np.array([1.0, 0.0]))
            probe = perm[0]
            incoming = state.prev_update[probe] + np.array([1.2, 0.0])
            base = state.prev_base[probe] + np.array([1.0, 0.0])
            outcomes.append(defenses.kardam_step(state, probe, incoming, base).decision)
        assert len(set(outcomes)) == 1


class TestBasgd:
    def test_buffered_until_all_nonempty(self):
        state = BasgdState(2)
        v = defenses.basgd_step(state, 0, np.array([1.0]))
        assert v.decision == BUFFERED

    def test_single_buffer_reduces_to_passthrough(self):
        state = BasgdState(1)
        u = np.array([3.0, -1.0])
        v = defenses.basgd_step(state, 9, u)
        assert v.decision == ACCEPT
        assert np.array_equal(v.effective_update, u)

    def test_median_of_buffer_means(self):
        state = BasgdState(3)
        assert defenses.basgd_step(state, 0, np.array([0.0])).decision == BUFFERED
        assert defenses.basgd_step(state, 3, np.array([1.0])).decision == BUFFERED
        assert defenses.basgd_step(state, 1, np.array([2.0])).decision == BUFFERED
        v = defenses.basgd_step(state, 2, np.array([10.0]))
        assert v.decision == ACCEPT
        # buffer means are {0.5, 2, 10}; coordinate median is 2
        assert v.effective_update[0] == 2.0

    def test_one_accept_per_fill_and_buffers_cleared(self):
        state = BasgdState(2)
        accepts = 0
        rng = np.random.default_rng(5)
        for i in range(40):
            v = defenses.basgd_step(state, int(rng.integers(10)), rng.normal(size=3))
            if v.decision == ACCEPT:
                accepts += 1
                assert all(not buf for buf in state.buffers)
        assert accepts >= 1


class TestZeno:
    def test_same_direction_renormalized(self):
        server = np.array([1.0, 2.0, 2.0])
        v = defenses.zeno_step(3.0 * server, server)
        assert v.decision == ACCEPT
        assert np.allclose(v.effective_update, server)

    def test_norm_always_matches_server(self):
        rng = np.random.default_rng(103)
        server = rng.normal(size=6)
        sn = np.linalg.norm(server)
        for _ in range(50):
            client = rng.normal(size=6)
            v = defenses.zeno_step(client, server)
            if v.decision == ACCEPT:
                assert abs(np.linalg.norm(v.effective_update) - sn) <= 1e-12 * sn

    def test_orthogonal_rejected(self):
        assert defenses.zeno_step(np.array([0.0, 1.0]),
                                  np.array([1.0, 0.0])).decision == REJECT

    def test_reversed_rejected(self):
        s = np.array([1.0, -2.0])
        assert defenses.zeno_step(-s, s).decision == REJECT

    def test_zero_client_rejected_zero_server_error(self):
        assert defenses.zeno_step(np.zeros(2), np.ones(2)).decision == REJECT
        with pytest.raises(ValueError):
            defenses.zeno_step(np.ones(2), np.zeros(2))


def test_asyncsgd_accepts_everything():
    for u in (np.zeros(3), np.ones(3), np.array([1e9, -1e9, 0.0])):
        v = defenses.asyncsgd_step(u)
        assert v.decision == ACCEPT
        assert np.array_equal(v.effective_update, u)


def test_verdict_invariant():
    with pytest.raises(ValueError):
        Verdict(ACCEPT)  # accept requires an effective update
    with pytest.raises(ValueError):
        Verdict(REJECT, np.ones(2))
    with pytest.raises(ValueError):
        Verdict("maybe", np.ones(2))
