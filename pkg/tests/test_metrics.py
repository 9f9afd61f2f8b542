import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from prescriptor import metrics as M
from prescriptor.problems import CapacitatedNewsvendorProblem, NewsvendorProblem, ShipmentProblem
from prescriptor.solve import make_prescription


class ConstantCost:
    def cost(self, decision, Y):
        return np.full(len(np.atleast_2d(Y)), 4.25)


def test_constant_cost_risk():
    X = np.random.default_rng(0).normal(size=(7, 2))
    assert M.estimate_risk(lambda x: np.zeros(1), X, np.zeros((7, 1)), ConstantCost()) == 4.25


def test_single_validation_point():
    prob = NewsvendorProblem(0.3)
    r = M.estimate_risk(lambda x: np.array([x[0] + 1.0]), np.array([[2.0]]), np.array([[5.0]]), prob)
    assert r == pytest.approx(0.3 * 2.0)


def test_capacitated_overstock_risk():
    rng = np.random.default_rng(1)
    Y = rng.uniform(0, 2, size=(20, 3))
    prob = CapacitatedNewsvendorProblem(3, 100.0)
    r = M.estimate_risk(lambda x: np.full(3, 5.0), np.zeros((20, 1)), Y, prob)
    assert r == pytest.approx(-Y.sum(axis=1).mean())


def test_perfect_foresight_examples():
    rng = np.random.default_rng(2)
    assert M.perfect_foresight_risk(rng.normal(size=(15, 1)), NewsvendorProblem(0.7)) == pytest.approx(0.0, abs=1e-12)
    Y = rng.uniform(0, 2, size=(10, 2))
    assert M.perfect_foresight_risk(Y, CapacitatedNewsvendorProblem(2, 10.0)) == pytest.approx(
        -Y.sum(axis=1).mean())
    toy = ShipmentProblem(np.array([[10.0]]), 5.0, 100.0)
    assert M.perfect_foresight_risk(np.array([[8.0]]), toy) == pytest.approx(120.0)
    with pytest.raises(M.MetricError):
        M.perfect_foresight_risk(np.zeros((0, 1)), toy)


def test_prescriptiveness_examples():
    assert M.coefficient_of_prescriptiveness(1.0, 3.0, 1.0) == 1.0
    assert M.coefficient_of_prescriptiveness(3.0, 3.0, 1.0) == 0.0
    assert M.coefficient_of_prescriptiveness(5.0, 3.0, 1.0) == -1.0
    with pytest.raises(M.MetricError, match="SAA already perfect; P undefined"):
        M.coefficient_of_prescriptiveness(2.0, 1.0, 1.0)
    with pytest.raises(M.MetricError):
        M.coefficient_of_prescriptiveness(2.0, 0.5, 1.0)


@given(st.floats(-1e3, 1e3), st.floats(1e-3, 1e3), st.floats(0, 1e3))
def test_prescriptiveness_at_most_one(perfect, gap, excess):
    P = M.coefficient_of_prescriptiveness(perfect + excess, perfect + gap, perfect)
    assert P <= 1.0


@given(st.integers(0, 10**6))
def test_risk_invariant_to_row_order(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(25, 1))
    Y = X + rng.normal(size=(25, 1))
    prob = NewsvendorProblem(0.6)
    rule = lambda x: np.array([0.5 * x[0]])  # noqa: E731
    perm = rng.permutation(25)
    assert M.estimate_risk(rule, X, Y, prob) == M.estimate_risk(rule, X[perm], Y[perm], prob)


def test_risk_report_and_in_sample_variant():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 1))
    Y = 2 * X + 0.3 * rng.normal(size=(200, 1))
    prob = NewsvendorProblem(0.5)
    knn = make_prescription("knn", {}, X, Y, prob)
    saa = make_prescription("saa", {}, X, Y, prob)
    rep = M.risk_report(knn, saa, X, Y, prob)  # validation := training
    assert rep.n_validation == 200
    assert rep.perfect_foresight_risk == 0.0
    assert 0.5 < rep.P <= 1.0
    assert rep.P == M.coefficient_of_prescriptiveness(rep.policy_risk, rep.saa_risk, 0.0)
    assert set(rep.to_dict()) == {"policy_risk", "saa_risk", "perfect_foresight_risk",
                                  "n_validation", "P"}


def test_row_costs_shipment_matches_cost():
    rng = np.random.default_rng(4)
    prob = ShipmentProblem()
    Z = rng.uniform(0, 50, size=(6, 4))
    Y = rng.uniform(0, 30, size=(6, 12))
    expected = [prob.cost(z, y[None])[0] for z, y in zip(Z, Y)]
    assert np.allclose(M.row_costs(prob, Z, Y), expected)
    with pytest.raises(M.MetricError):
        M.row_costs(prob, Z[:2], Y)


def test_empty_validation():
    with pytest.raises(M.MetricError):
        M.estimate_risk(lambda x: 0, np.zeros((0, 1)), np.zeros((0, 1)), NewsvendorProblem())
