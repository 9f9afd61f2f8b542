"""Out-of-sample risk and the coefficient of prescriptiveness."""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .problems import ShipmentProblem
from .solve import solve_point_pred, weighted_objective


class MetricError(ValueError):
    pass


def row_costs(problem, Z, Y):
    """c(z_i; y_i) for paired rows of decisions and outcomes."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(len(Z), -1)
    if len(Z) != len(Y):
        raise MetricError("one decision per outcome row required")
    if isinstance(problem, ShipmentProblem) and np.all(Z >= 0):
        return problem.extended_cost(Z, Y)
    if np.all(Z == Z[0]):
        return np.asarray(problem.cost(Z[0], Y), dtype=float)
    return np.array([problem.cost(z, y.reshape(1, -1))[0] for z, y in zip(Z, Y)])


def _decisions(prescription, X):
    return np.array([np.atleast_1d(prescription(x)) for x in np.atleast_2d(X)])


def estimate_risk(prescription, X_val, Y_val, problem):
    """Average realized cost of the prescription on a validation sample.

    ``prescription`` is any callable x -> z.
    """
    X_val = np.asarray(X_val, dtype=float)
    if len(X_val) == 0:
        raise MetricError("validation set is empty")
    if X_val.ndim == 1:
        X_val = X_val.reshape(-1, 1)
    costs = row_costs(problem, _decisions(prescription, X_val), Y_val)
    return math.fsum(costs) / len(costs)


def perfect_foresight_risk(Y_val, problem):
    """Average of min_z c(z; y_i): each outcome's single-scenario optimum."""
    Y_val = np.asarray(Y_val, dtype=float)
    if Y_val.ndim == 1:
        Y_val = Y_val.reshape(-1, 1)
    if len(Y_val) == 0:
        raise MetricError("validation set is empty")
    vals = [weighted_objective(problem, solve_point_pred(problem, y), np.ones(1), y.reshape(1, -1))
            for y in Y_val]
    return math.fsum(vals) / len(vals)


def coefficient_of_prescriptiveness(policy_risk, saa_risk, perfect_risk, tol=1e-9):
    """1 - (policy - perfect) / (saa - perfect).

    Equals 1 for a perfect-foresight policy and 0 for SAA; negative values
    (worse than SAA) are kept.
    """
    scale = tol * (1.0 + abs(perfect_risk))
    gap = saa_risk - perfect_risk
    if abs(gap) <= scale:
        raise MetricError("SAA already perfect; P undefined")
    if gap < 0:
        raise MetricError("SAA risk below perfect-foresight risk")
    if policy_risk < perfect_risk - scale:
        raise MetricError("policy risk below perfect-foresight risk")
    return 1.0 - (policy_risk - perfect_risk) / gap


@dataclass(frozen=True)
class RiskReport:
    policy_risk: float
    saa_risk: float
    perfect_foresight_risk: float
    n_validation: int
    P: float

    @classmethod
    def from_risks(cls, policy_risk, saa_risk, perfect_risk, n_validation):
        P = coefficient_of_prescriptiveness(policy_risk, saa_risk, perfect_risk)
        return cls(policy_risk, saa_risk, perfect_risk, int(n_validation), P)

    def to_dict(self):
        return asdict(self)


def risk_report(prescription, saa, X_val, Y_val, problem):
    """Validation risks of a prescription and SAA plus their P."""
    pr = estimate_risk(prescription, X_val, Y_val, problem)
    sr = estimate_risk(saa, X_val, Y_val, problem)
    pf = perfect_foresight_risk(Y_val, problem)
    return RiskReport.from_risks(pr, sr, pf, len(np.atleast_1d(Y_val)) if np.ndim(Y_val) == 1
                                 else len(Y_val))
