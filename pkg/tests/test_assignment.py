import itertools
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from countflow import assignment
from countflow.assignment import assignment_cost, lsap_duals, solve_assignment

BACKENDS = ["python"] + (["compiled"] if assignment.BACKEND == "compiled" else [])


def brute_force(cost):
    n = len(cost)
    best, best_perm = np.inf, None
    # itertools yields permutations in lexicographic order, so ties keep the smallest
    for p in itertools.permutations(range(n)):
        c = cost[np.arange(n), p].sum()
        if c < best - 1e-12:
            best, best_perm = c, p
    return best, np.array(best_perm)


@pytest.mark.parametrize("backend", BACKENDS)
def test_trivial_examples(backend):
    n = 6
    np.testing.assert_array_equal(solve_assignment(1 - np.eye(n), backend), np.arange(n))
    np.testing.assert_array_equal(solve_assignment(np.full((n, n), 3.0), backend), np.arange(n))
    assert solve_assignment(np.zeros((0, 0)), backend).size == 0
    assert solve_assignment([[4.0]], backend).tolist() == [0]


@pytest.mark.parametrize("backend", BACKENDS)
def test_matches_brute_force_with_ties(backend):
    rng = np.random.default_rng(0)
    for _ in range(150):
        n = int(rng.integers(1, 8))
        # small integer costs produce many tied optima
        cost = rng.integers(0, 4, (n, n)).astype(float)
        best, best_perm = brute_force(cost)
        perm = solve_assignment(cost, backend)
        assert assignment_cost(cost, perm) == pytest.approx(best)
        np.testing.assert_array_equal(perm, best_perm)


@pytest.mark.parametrize("backend", BACKENDS)
def test_duals_are_feasible_and_tight(backend):
    rng = np.random.default_rng(1)
    cost = rng.uniform(0, 10, (40, 40))
    perm, u, v = lsap_duals(cost, backend)
    reduced = cost - u[:, None] - v[None, :]
    assert reduced.min() >= -1e-9
    np.testing.assert_allclose(reduced[np.arange(40), perm], 0.0, atol=1e-9)


def test_matches_scipy_oracle():
    linear_sum_assignment = pytest.importorskip("scipy.optimize").linear_sum_assignment
    rng = np.random.default_rng(2)
    for n in (10, 57, 200):
        cost = rng.uniform(0, 100, (n, n))
        r, c = linear_sum_assignment(cost)
        for backend in BACKENDS:
            perm = solve_assignment(cost, backend)
            assert assignment_cost(cost, perm) == pytest.approx(cost[r, c].sum(), rel=1e-12)


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    rng = np.random.default_rng(3)
    for n in (5, 33, 128):
        cost = rng.integers(0, 6, (n, n)).astype(float)
        np.testing.assert_array_equal(
            solve_assignment(cost, "python"), solve_assignment(cost, "compiled")
        )


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.just(6)), elements=st.floats(0, 50)))
def test_permutation_property(block):
    cost = np.resize(block, (len(block), len(block)))
    perm = solve_assignment(cost)
    assert sorted(perm.tolist()) == list(range(len(cost)))
    best, _ = brute_force(cost)
    assert assignment_cost(cost, perm) == pytest.approx(best, abs=1e-9)


def test_errors():
    with pytest.raises(ValueError):
        solve_assignment(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        solve_assignment([[0.0, np.inf], [1.0, 0.0]])
    with pytest.raises(ValueError):
        solve_assignment([[0.0, np.nan], [1.0, 0.0]])
    with pytest.raises(ValueError):
        lsap_duals(np.eye(2), backend="fortran")


def test_env_var_forces_python_backend():
    code = "import countflow.assignment as a; print(a.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"COUNTFLOW_PURE_PYTHON": "1", "PATH": ""},
        capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
