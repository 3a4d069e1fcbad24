import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergodyn.errors import InvalidChainError, SpecError
from ergodyn.markov import lumped_action
from ergodyn.pca import (
    PcaSpec,
    compile_pca,
    compiled_distribution_step,
    deterministic_rule,
    equivalence_report,
    flip_chain,
    format_pca,
    global_matrix,
    parse_pca,
    simulate_pca,
    step_compiled,
    verify_compiled,
    voter_ring,
)


def majority(config):
    return int(sum(config) * 2 > len(config))


def rule_110ish(config):
    # left, self, right on a 3-ring: an asymmetric deterministic rule
    return int(config in {(1, 1, 0), (1, 0, 1), (0, 1, 1), (0, 1, 0), (0, 0, 1)})


# --- compilation ------------------------------------------------------------------------------


@pytest.mark.parametrize("q", [0.0, 0.3, 0.5, 1.0])
def test_flip_chain_maps_split_each_cell(q):
    compiled = compile_pca(flip_chain(q))
    for s in (0, 1):
        model = compiled.models[0][(s,)]
        start = np.eye(2)[s]
        expected = (1 - q, q) if s == 0 else (q, 1 - q)
        np.testing.assert_allclose(lumped_action(model, start), expected, atol=1e-15)


def test_deterministic_maps_have_unit_slope():
    compiled = compile_pca(deterministic_rule(3, majority))
    for fam in compiled.models.values():
        for model in fam.values():
            assert all(b.slope == 1.0 for b in model.map.branches)
            assert model.n_cells == 2


def test_voter_family_sizes_and_markov_property():
    compiled = compile_pca(voter_ring(3, 0.1))
    assert all(compiled.family_size(v) == 8 for v in range(3))
    assert verify_compiled(compiled) == []


def test_family_size_bound():
    spec = voter_ring(5, 0.2)
    compiled = compile_pca(spec)
    for v in spec.vertices:
        assert compiled.family_size(v) <= spec.n_states ** len(spec.neighbourhood(v))


def test_member_maps_reproduce_rows_exactly():
    spec = voter_ring(3, 0.17)
    compiled = compile_pca(spec)
    for v in spec.vertices:
        for config, model in compiled.models[v].items():
            for s in range(spec.n_states):
                got = lumped_action(model, np.eye(spec.n_states)[s])
                np.testing.assert_allclose(got, spec.row(v, config), atol=1e-12)


def test_spec_validation():
    with pytest.raises(SpecError):
        PcaSpec(2, (0,), ((0, 1),), {0: {(0,): (1, 0), (1,): (0, 1)}})
    with pytest.raises(SpecError):
        PcaSpec(2, (0,), (), {0: {(0,): (1, 0)}})
    with pytest.raises(InvalidChainError):
        PcaSpec(2, (0,), (), {0: {(0,): (0.5, 0.6), (1,): (0, 1)}})
    with pytest.raises(SpecError):
        PcaSpec(2, (0, 1), ((0, 1),), voter_ring(2).table, max_neighbourhood=1)


# --- compiled dynamics ----------------------------------------------------------------------------


def test_deterministic_ca_symbolic_trajectory():
    spec = deterministic_rule(5, rule_110ish)
    compiled = compile_pca(spec)
    rng = np.random.default_rng(0)
    s = rng.integers(0, 2, 5)
    x = compiled.encode(s, rng)
    direct = simulate_pca(spec, s, 40, rng)[:, 0, :]
    for t in range(41):
        assert np.array_equal(compiled.decode(x), direct[t])
        x = step_compiled(compiled, x)


def test_equal_rows_give_single_map_dynamics():
    row = (0.25, 0.75)
    verts = (0, 1, 2)
    edges = ((0, 1), (1, 2), (2, 0))
    table = {v: {c: row for c in itertools.product((0, 1), repeat=3)} for v in verts}
    compiled = compile_pca(PcaSpec(2, verts, edges, table))
    single = compiled.models[0][(0, 0, 0)].map
    x = np.random.default_rng(1).random((50, 3))
    for _ in range(20):
        y = step_compiled(compiled, x)
        np.testing.assert_array_equal(y, single.eval_array(x))
        x = y


def test_voter_marginal_frequencies_match_direct_simulation():
    spec = voter_ring(3, 0.1)
    compiled = compile_pca(spec)
    rng = np.random.default_rng(2)
    s0 = rng.integers(0, 2, (100, 3))
    direct = simulate_pca(spec, s0, 1000, rng)
    x = compiled.encode(s0, rng)
    ones = np.zeros(3)
    for _ in range(1000):
        x = step_compiled(compiled, x)
        ones += compiled.decode(x).sum(axis=0)
    freq_compiled = ones / (1000 * 100)
    freq_direct = direct[1:].mean(axis=(0, 1))
    assert np.max(np.abs(freq_compiled - freq_direct)) < 0.02


def test_distribution_step_matches_global_matrix():
    spec = voter_ring(3, 0.23)
    compiled = compile_pca(spec)
    Q = global_matrix(spec)
    np.testing.assert_allclose(Q.sum(axis=1), 1.0, atol=1e-12)
    p = np.random.default_rng(3).dirichlet(np.ones(8))
    np.testing.assert_allclose(compiled_distribution_step(compiled, p), p @ Q, atol=1e-12)


# --- equivalence reports -------------------------------------------------------------------------------


def test_flip_chain_exact_equivalence():
    rep = equivalence_report(flip_chain(0.3), horizon=50, mode="exact")
    assert rep.mode == "exact" and rep.max_divergence < 1e-12


def test_frozen_ca_divergence_is_zero():
    rep = equivalence_report(deterministic_rule(3, lambda c: c[1]), horizon=20)
    assert np.all(rep.tv == 0.0)


@pytest.mark.slow
def test_voter_monte_carlo_equivalence():
    rep = equivalence_report(voter_ring(3, 0.1), horizon=100, n_runs=10**5, seed=0,
                             mode="monte_carlo")
    assert rep.max_divergence < 0.02


def test_unknown_mode():
    with pytest.raises(ValueError):
        equivalence_report(flip_chain(0.1), mode="symbolic")


# --- text format -----------------------------------------------------------------------------------------


def test_text_round_trip():
    spec = voter_ring(3, 0.1)
    again = parse_pca(format_pca(spec))
    assert again.vertices == ("0", "1", "2")
    for v, w in zip(spec.vertices, again.vertices):
        for config, row in spec.table[v].items():
            np.testing.assert_array_equal(again.row(w, config), row)


def test_parse_small_spec():
    text = """
    states 2
    vertex a
    vertex b
    edge a b
    a 00 -> 1 0
    a 01 -> 0.5 0.5
    a 10 -> 0.5 0.5
    a 11 -> 0 1
    b 00 -> 1 0
    b 01 -> 0 1
    b 10 -> 1 0
    b 11 -> 0 1
    """
    spec = parse_pca(text)
    assert spec.neighbourhood("a") == ("a", "b")
    assert verify_compiled(compile_pca(spec)) == []


def test_parse_errors():
    with pytest.raises(SpecError):
        parse_pca("vertex a\n")
    with pytest.raises(SpecError):
        parse_pca("states 2\nvertex a\nnonsense here\n")


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 1), st.integers(0, 10**6))
def test_flip_chain_distribution_step(q, seed):
    spec = flip_chain(q)
    compiled = compile_pca(spec)
    p = np.random.default_rng(seed).dirichlet(np.ones(2))
    np.testing.assert_allclose(compiled_distribution_step(compiled, p), p @ global_matrix(spec),
                               atol=1e-12)
