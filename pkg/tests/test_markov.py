import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergodyn.errors import InvalidChainError
from ergodyn.maps import Affine, PiecewiseMap, catalog
from ergodyn.markov import (
    MarkovMapModel,
    StochasticMatrix,
    build_markov_map,
    build_random_walk_map,
    continuous_arrangements,
    dyadic_intervals,
    lumped_action,
    random_stochastic,
    verify_markov,
    verify_partition,
    walk_matrix,
)
from ergodyn.ulam import stationary_direct


# --- StochasticMatrix validation -----------------------------------------------------


def test_rejects_negative_entries():
    with pytest.raises(InvalidChainError):
        StochasticMatrix([[1.2, -0.2], [0.5, 0.5]])


def test_rejects_bad_row_sum():
    with pytest.raises(InvalidChainError):
        StochasticMatrix([[0.5, 0.4], [0.5, 0.5]])


def test_rejects_empty_row():
    with pytest.raises(InvalidChainError):
        StochasticMatrix.from_triples(2, [(0, 0, 1.0)])


def test_prunes_tiny_entries_with_warning():
    with pytest.warns(UserWarning):
        P = StochasticMatrix([[1 - 1e-17, 1e-17], [0.0, 1.0]])
    assert P.triples() == [(0, 0, 1 - 1e-17), (1, 1, 1.0)]


# --- building the map ----------------------------------------------------------------


def test_three_state_chain_gives_displayed_map(tr_model):
    table = tr_model.map.merged().table()
    expected = [(0.0, 2.0, 0.0), (1 / 3, 2.0, -1 / 3), (2 / 3, 2.0, -4 / 3), (5 / 6, 2.0, -1.0)]
    assert len(table) == 4
    np.testing.assert_allclose(table, expected, atol=1e-12)


def test_identity_matrix_gives_identity_map():
    model = build_markov_map(np.eye(2))
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(model.map.eval_array(x), x, atol=1e-15)


def test_random_matrix_model_is_markov_and_acts_like_matrix():
    P = random_stochastic(5, np.random.default_rng(7))
    model = build_markov_map(P)
    assert verify_markov(model)
    p = np.random.default_rng(8).dirichlet(np.ones(5))
    np.testing.assert_allclose(lumped_action(model, p), p @ P.dense(), atol=1e-12)


def test_verify_three_state_chain(tr_model):
    rep = verify_markov(tr_model)
    assert rep.ok and rep.n_cells == 6 and rep.bound == 6


def test_verify_flags_endpoint_violation():
    # slope 1.8 sends [0, 1/3) onto [0, 0.6), which is not a union of thirds
    m = PiecewiseMap(np.array([0, 1 / 3, 2 / 3, 1.0]),
                     (Affine(1.8, 0.0), Affine(1.0, 0.0), Affine(1.0, 0.0)))
    iv = np.array([[0, 1 / 3], [1 / 3, 2 / 3], [2 / 3, 1.0]])
    model = MarkovMapModel(None, iv, m.breakpoints, np.arange(3), np.arange(3), m)
    rep = verify_markov(model)
    assert not rep.ok
    assert "cell 0" in rep.violations[0]


def test_verify_partition_general_maps(tr_model):
    assert verify_partition(catalog("doubling"), [0, 0.5, 1])
    assert verify_partition(catalog("doubling"), [0, 0.25, 0.5, 0.75, 1])
    assert not verify_partition(catalog("doubling"), [0, 0.3, 1])
    assert verify_partition(tr_model.map, [0, 1 / 3, 2 / 3, 1])
    with pytest.raises(ValueError):
        verify_partition(catalog("doubling"), [0.2, 1])


def test_verify_random_8x8():
    assert verify_markov(build_markov_map(random_stochastic(8, np.random.default_rng(88))))


@pytest.mark.parametrize("seed", range(100))
def test_cell_count_bound(seed):
    rng = np.random.default_rng(seed)
    P = random_stochastic(int(rng.integers(2, 21)), rng)
    model = build_markov_map(P)
    assert model.n_cells <= P.n_states * P.max_row_support


# --- lumped action ------------------------------------------------------------------------


def test_lumped_action_from_first_state(tr_model):
    np.testing.assert_allclose(lumped_action(tr_model, [1, 0, 0]), [0.5, 0.5, 0], atol=1e-15)


def test_lumped_action_keeps_uniform(tr_model):
    u = np.full(3, 1 / 3)
    np.testing.assert_allclose(lumped_action(tr_model, u), u, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.01, 1), min_size=2, max_size=2))
def test_lumped_action_identity_chain(w):
    p = np.array(w) / sum(w)
    np.testing.assert_allclose(lumped_action(build_markov_map(np.eye(2)), p), p, atol=1e-15)


def test_lumped_action_rejects_unnormalized(tr_model):
    with pytest.raises(ValueError):
        lumped_action(tr_model, [1, 1, 0])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 20))
def test_iterated_lumped_action_matches_matrix_powers(seed, n):
    rng = np.random.default_rng(seed)
    P = random_stochastic(n, rng)
    model = build_markov_map(P)
    D = P.dense()
    p = q = rng.dirichlet(np.ones(n))
    for _ in range(50):
        p = lumped_action(model, p)
        q = q @ D
    assert np.max(np.abs(p - q)) < 1e-12


# --- continuity obstruction ------------------------------------------------------------------


def test_no_continuous_interval_arrangement(tr_model):
    assert continuous_arrangements(tr_model, circle=False) == []


def test_circle_arrangements_exist(tr_model):
    # the doubling-like map x -> (1/3 - 2x) mod 1 is a continuous circle model,
    # so the circle half of the obstruction claim does not hold (see README)
    found = continuous_arrangements(tr_model, circle=True)
    assert len(found) == 12


# --- random walks ---------------------------------------------------------------------------


def _ratios(model):
    cells = model.refined_partition
    lengths = np.diff(cells)
    iv = model.state_intervals
    out = {}
    for k, (s, t) in enumerate(zip(model.source_state, model.target_state)):
        out[(int(s), int(t))] = out.get((int(s), int(t)), 0.0) + lengths[k] / (iv[s, 1] - iv[s, 0])
    return out


def test_symmetric_walk_ratios():
    model = build_random_walk_map("homogeneous", (0.5, 0.5), 10)
    r = _ratios(model)
    for i in range(1, 9):
        assert r[(i, i - 1)] == pytest.approx(0.5, abs=1e-12)
        assert r[(i, i + 1)] == pytest.approx(0.5, abs=1e-12)


def test_walk_without_right_steps_has_absorbing_origin():
    model = build_random_walk_map("homogeneous", (0.5, 0.0), 10)
    P = model.matrix.dense()
    assert P[0, 0] == 1.0
    assert np.all(np.triu(P, 1) == 0)
    assert np.all(model.target_state <= model.source_state)


def test_walk_stationary_is_geometric():
    pl, pr, M = 0.6, 0.4, 20
    model = build_random_walk_map("homogeneous", (pl, pr), M)
    pi = stationary_direct(model.matrix)
    geo = (pr / pl) ** np.arange(M)
    np.testing.assert_allclose(pi, geo / geo.sum(), atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 12))
def test_walk_probability_recovery(seed, M):
    rng = np.random.default_rng(seed)
    triples = [tuple(rng.dirichlet(np.ones(3))) for _ in range(M)]
    triples[0] = (0.0,) + tuple(rng.dirichlet(np.ones(2)))
    model = build_random_walk_map("inhomogeneous", triples, M)
    P = walk_matrix("inhomogeneous", triples, M).dense()
    for (s, t), r in _ratios(model).items():
        assert r == pytest.approx(P[s, t], abs=1e-12)


def test_dyadic_layout_covers_interval():
    iv = dyadic_intervals(6)
    assert iv[0, 1] == 1.0 and iv[-1, 0] == 0.0
    np.testing.assert_array_equal(iv[:-1, 0], iv[1:, 1])


def test_walk_rejects_left_step_from_origin():
    with pytest.raises(InvalidChainError):
        build_random_walk_map("inhomogeneous", [(0.2, 0.3, 0.5)] * 4, 4)


def test_random_stochastic_is_valid():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        P = random_stochastic(20, np.random.default_rng(0))
    np.testing.assert_allclose(P.dense().sum(axis=1), 1.0, atol=1e-12)
