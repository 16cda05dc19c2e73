"""Desk-scale acceptance gate: one test per criterion, shared scenario runs.

Criteria 1 and 3 are currently red for structural reasons measured and
documented in the repository notes: the stationary error floor of the
benchmark dynamics sits at the criterion-1 MSE bound, and the pinned
filter semantics of the Lipschitz-median and cosine-gate defenses are
stronger/weaker respectively than the historical numbers those clauses
encode. They are asserted as stated, not loosened.
"""
import pytest

from aflbench import acceptance


@pytest.fixture(scope="module")
def runner():
    return acceptance.ScenarioRunner()


@pytest.mark.parametrize("criterion", acceptance.CRITERIA,
                         ids=[c.__name__ for c in acceptance.CRITERIA])
def test_criterion(criterion, runner):
    result = criterion(runner)
    status = "PASS" if result.passed else "FAIL"
    print(f"[{status}] {result.name}: {result.details}")
    assert result.passed, f"{result.name}: {result.details}"


def test_suite_detects_flipped_acceptance_rule(monkeypatch, runner):
    # mutation check: inverting the acceptance inequality must trip the
    # filter unit suite
    from aflbench import defenses
    from aflbench.vecmath import l2norm

    def flipped(client_update, server_update, lam):
        return l2norm(client_update - server_update) > lam * l2norm(server_update)

    monkeypatch.setattr(defenses, "aflguard_accept", flipped)
    result = acceptance.criterion_8(runner)
    assert not result.passed


def test_verify_exit_code_semantics(monkeypatch):
    good = [acceptance.CriterionResult("a", True, "")]
    bad = good + [acceptance.CriterionResult("b", False, "")]
    monkeypatch.setattr(acceptance, "run_all", lambda verbose=False: good)
    assert acceptance.verify_main() == 0
    monkeypatch.setattr(acceptance, "run_all", lambda verbose=False: bad)
    assert acceptance.verify_main() == 1
