import numpy as np
import pytest

from lp_oracles import random_lp, vertex_enumeration
from prescriptor.lp import LinearProgram, LpBuilder, LpError, solve_lp


def one_var(c, rows, senses, b):
    return LinearProgram([c], list(range(len(b))), [0] * len(b), rows, senses, b,
                         [-np.inf], [np.inf])


@pytest.mark.parametrize("method", ["simplex", "highs"])
def test_max_x(method):
    sol = solve_lp(one_var(-1.0, [1.0, 1.0], "LG", [1.0, 0.0]), method)
    assert sol.optimal and sol.x[0] == pytest.approx(1.0) and sol.objective == pytest.approx(-1.0)


@pytest.mark.parametrize("method", ["simplex", "highs"])
def test_infeasible(method):
    sol = solve_lp(one_var(1.0, [1.0, 1.0], "GL", [1.0, 0.0]), method)
    assert sol.status == "infeasible" and not sol.optimal


@pytest.mark.parametrize("method", ["simplex", "highs"])
def test_unbounded(method):
    sol = solve_lp(one_var(-1.0, [1.0], "G", [0.0]), method)
    assert sol.status == "unbounded"


@pytest.mark.parametrize("method", ["simplex", "highs", "auto"])
def test_random_lps_match_vertex_enumeration(method):
    rng = np.random.default_rng(2024)
    n_feasible = 0
    for _ in range(50):
        lp, raw = random_lp(rng)
        expected = vertex_enumeration(*raw)
        sol = solve_lp(lp, method)
        if expected is None:
            assert sol.status == "infeasible"
            continue
        n_feasible += 1
        assert sol.optimal
        assert abs(sol.objective - expected) <= 1e-8 * (1 + abs(expected))
        assert lp.residual(sol.x) <= 1e-7
    assert n_feasible >= 30


def test_degenerate_cycling_prone_lp():
    # a classic degenerate instance; Bland's rule must terminate
    A = np.array([[0.5, -5.5, -2.5, 9.0], [0.5, -1.5, -0.5, 1.0], [1.0, 0.0, 0.0, 0.0]])
    rows, cols = np.nonzero(A)
    lp = LinearProgram([-10.0, 57.0, 9.0, 24.0], rows, cols, A[rows, cols], "LLL", [0, 0, 1])
    sol = solve_lp(lp, "simplex")
    assert sol.optimal and sol.objective == pytest.approx(-1.0)


def test_builder_and_validation():
    b = LpBuilder()
    x = b.add_vars(2, [1.0, 2.0], 0.0, 3.0)
    b.add_rows([0, 0], x, [1.0, 1.0], "G", [1.0])
    sol = solve_lp(b.build())
    assert sol.optimal and sol.x == pytest.approx([1.0, 0.0])
    text = b.build().dumps()
    assert text.count("\n") >= 2 and ">=" in text
    with pytest.raises(LpError):
        LinearProgram([1.0], [0], [1], [1.0], "L", [0.0])
    with pytest.raises(LpError):
        LinearProgram([np.nan], [0], [0], [1.0], "L", [0.0])
