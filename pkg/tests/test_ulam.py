import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergodyn.errors import ConvergenceError
from ergodyn.maps import CatalogBranch, PiecewiseMap, catalog
from ergodyn.markov import StochasticMatrix, build_markov_map, random_stochastic
from ergodyn.measures import CellDensity, w1_distance
from ergodyn.ulam import (
    refinement_study,
    stationary,
    stationary_direct,
    ulam_invariant_density,
    ulam_matrix,
)


def test_doubling_four_cells():
    P = ulam_matrix(catalog("doubling"), 4).dense()
    expected = np.zeros((4, 4))
    for i in range(4):
        expected[i, (2 * i) % 4] = expected[i, (2 * i + 1) % 4] = 0.5
    np.testing.assert_allclose(P, expected, atol=1e-15)


def test_identity_gives_identity_matrix():
    np.testing.assert_array_equal(ulam_matrix(catalog("identity"), 16).dense(), np.eye(16))


def test_ulam_on_refined_partition_lumps_to_chain(tr_model):
    approx = ulam_matrix(tr_model.map, partition=tr_model.refined_partition)
    U = approx.dense()
    S = np.zeros((tr_model.n_cells, 3))
    S[np.arange(tr_model.n_cells), tr_model.source_state] = 1
    # probability of moving from a state's uniform density to each state
    w = tr_model.cell_lengths[:, None] * S
    lumped = (w / w.sum(axis=0)).T @ U @ S
    np.testing.assert_allclose(lumped, tr_model.matrix.dense(), atol=1e-12)


def test_ulam_on_refined_partition_equals_model_transfer(tr_model):
    U = ulam_matrix(tr_model.map, partition=tr_model.refined_partition).dense()
    np.testing.assert_allclose(U, tr_model.transfer.toarray(), atol=1e-12)


@pytest.mark.parametrize("name", ["del_magno", "inoue", "cubic_pitchfork", "doubling",
                                  "shrink_jump", "contraction"])
def test_exact_and_sampled_matrices_agree(name):
    m = catalog(name)
    exact = ulam_matrix(m, 64).dense()
    mc = ulam_matrix(m, 64, method="monte_carlo", samples=10**6, seed=1).dense()
    assert np.max(np.abs(exact - mc)) < 5e-3


def test_non_monotone_branch_falls_back_to_sampling():
    tent = CatalogBranch("tent", lambda x: 1 - np.abs(2 * np.asarray(x) - 1), 0)
    m = PiecewiseMap(np.array([0.0, 1.0]), (tent,))
    with pytest.warns(UserWarning, match="Monte Carlo"):
        approx = ulam_matrix(m, 8, samples=8000)
    assert approx.method == "monte_carlo"
    np.testing.assert_allclose(approx.dense().sum(axis=1), 1.0, atol=1e-12)


def test_unknown_method():
    with pytest.raises(ValueError):
        ulam_matrix(catalog("doubling"), 8, method="galerkin")


# --- stationary vectors -------------------------------------------------------------------


def test_three_state_chain_stationary(tr_matrix):
    res = stationary(tr_matrix)
    np.testing.assert_allclose(res.vector, np.full(3, 1 / 3), atol=1e-12)
    np.testing.assert_allclose(res.vector, stationary_direct(tr_matrix), atol=1e-12)
    assert res.unique


def test_identity_is_flagged_non_unique():
    assert not stationary(StochasticMatrix(np.eye(4))).unique


def test_doubling_256_is_uniform():
    res = stationary(ulam_matrix(catalog("doubling"), 256).matrix)
    assert np.max(np.abs(res.vector - 1 / 256)) < 1e-10


def test_convergence_error_carries_residual():
    # nearly decoupled states mix far too slowly for 100 iterations
    P = StochasticMatrix([[1 - 1e-6, 1e-6], [1e-6, 1 - 1e-6]])
    with pytest.raises(ConvergenceError) as info:
        stationary(P, max_iter=100, v0=[1.0, 0.0])
    assert info.value.residual > 0


def test_periodic_chain_converges():
    # lazy iteration handles period-2 chains that plain power iteration cycles on
    res = stationary(StochasticMatrix([[0, 1], [1, 0]]), v0=[1.0, 0.0])
    np.testing.assert_allclose(res.vector, [0.5, 0.5], atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 15))
def test_stationary_residual_below_tolerance(seed, n):
    P = random_stochastic(n, np.random.default_rng(seed), density=1.0)
    res = stationary(P, tol=1e-10, check_unique=False)
    assert np.abs(res.vector @ P.dense() - res.vector).sum() < 1e-10


# --- invariant densities ----------------------------------------------------------------------


def test_doubling_density_is_lebesgue():
    dens = ulam_invariant_density(catalog("doubling"), 64)
    assert w1_distance(dens, CellDensity.uniform(64)) < 1e-10


def test_markov_map_density_matches_lumped_stationary(tr_model):
    dens = ulam_invariant_density(tr_model.map, partition=tr_model.refined_partition)
    np.testing.assert_allclose(tr_model.lump(dens), stationary_direct(tr_model.matrix),
                               atol=1e-10)


def test_identity_density_non_unique_and_unchanged():
    dens, res = ulam_invariant_density(catalog("identity"), 32, full=True)
    assert not res.unique
    np.testing.assert_allclose(dens.mass, CellDensity.uniform(32).mass, atol=1e-15)


def test_refinement_study_doubling():
    study = refinement_study(catalog("doubling"), [16, 32, 64, 128, 256], CellDensity.uniform(1))
    assert study.monotone and max(study.w1) < 1e-10


def test_random_markov_model_density():
    P = random_stochastic(6, np.random.default_rng(12), density=0.6)
    model = build_markov_map(P)
    dens = ulam_invariant_density(model.map, partition=model.refined_partition)
    np.testing.assert_allclose(model.lump(dens), stationary_direct(P), atol=1e-9)
