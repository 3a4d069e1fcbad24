import numpy as np
import pytest

from ergodyn.lattice import Fixed, LatticeSystem, Periodic, diffusive
from ergodyn.maps import catalog
from ergodyn.phase import (
    attractor_census,
    particles,
    phase_sweep,
    random_product_measure,
    stability_diagnostics,
    write_census_csv,
)

FAST = dict(n_transient=3000, n_tail=100, n_samples=60)


def cubic(d, y, eps=0.05):
    return LatticeSystem(d, catalog("cubic_pitchfork"), diffusive(eps, Fixed(y)))


def test_zero_boundary_single_attractor():
    census = attractor_census(cubic(3, 0.0), **FAST)
    assert census.count == 1
    a = census.attractors[0]
    assert np.max(a.representative) < 1e-6
    assert a.basin_fraction == pytest.approx(1.0)
    assert a.classification == "fixed"


def test_unit_boundary_census():
    # Observed: the all-ones state and one near-zero state whose edge sites are
    # lifted by the boundary; mixed corners are not sustained because 1 is only
    # neutral for the local map.  See the decisions ledger.
    census = attractor_census(cubic(3, 1.0), **FAST)
    reps = [a.representative for a in census.attractors]
    assert census.count == 2
    assert any(np.all(r > 1 - 1e-6) for r in reps)
    assert all(a.classification == "fixed" for a in census.attractors)


def test_single_uncoupled_site_has_one_attractor():
    sys = LatticeSystem(1, catalog("cubic_pitchfork"), diffusive(0.0))
    census = attractor_census(sys, n_transient=20000, n_tail=200, n_samples=100, corners=False)
    assert census.count == 1
    assert census.attractors[0].representative[0] < 1e-4


def test_census_is_deterministic():
    a = attractor_census(cubic(3, 1.0), seed=7, **FAST)
    b = attractor_census(cubic(3, 1.0), seed=7, **FAST)
    assert a.count == b.count
    for x, y in zip(a.attractors, b.attractors):
        assert np.array_equal(x.representative, y.representative)
        assert x.basin_fraction == y.basin_fraction


@pytest.mark.parametrize("y", [0.0, 0.5, 1.0])
def test_larger_merge_radius_never_adds_attractors(y):
    small = attractor_census(cubic(3, y), merge_radius=1e-4, **FAST)
    large = attractor_census(cubic(3, y), merge_radius=2e-4, **FAST)
    assert large.count <= small.count


def test_chaotic_lattice_is_unresolved():
    sys = LatticeSystem(3, catalog("doubling"), diffusive(0.05))
    census = attractor_census(sys, n_transient=200, n_tail=100, n_samples=20, corners=False)
    assert census.unresolved_fraction > 0.5


# --- sweeps ------------------------------------------------------------------------------


def test_boundary_sweep_finds_one_transition():
    res = phase_sweep(lambda y: cubic(3, y), [0.0, 1.0], **FAST)
    assert res.counts[0] == 1
    assert len(res.transitions) == 1


def test_sweep_result_independent_of_jobs():
    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    a = phase_sweep(lambda y: cubic(2, y), grid, jobs=1, **FAST)
    b = phase_sweep(lambda y: cubic(2, y), grid, jobs=3, **FAST)
    assert a.counts == b.counts and a.transitions == b.transitions


def test_strong_coupling_does_not_add_attractors():
    res = phase_sweep(lambda e: cubic(3, 1.0, e), [0.05, 0.45], **FAST)
    assert res.counts[1] <= res.counts[0]


def test_constant_family_has_no_transitions():
    sys = LatticeSystem(2, catalog("doubling"), diffusive(0.1, Periodic()))
    res = phase_sweep(lambda g: sys, [0.0, 0.5, 1.0], n_transient=100, n_tail=50,
                      n_samples=10, corners=False)
    assert len(set(res.counts)) == 1 and res.transitions == []


def test_empty_grid():
    with pytest.raises(ValueError):
        phase_sweep(lambda g: cubic(2, g), [])


def test_census_csv(tmp_path):
    census = attractor_census(cubic(2, 1.0), **FAST)
    write_census_csv(tmp_path / "c.csv", [(1.0, census)])
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0].startswith("gamma,attractor_id,basin_fraction")
    assert len(lines) == census.count + 1


# --- stability diagnostics -----------------------------------------------------------------


def test_contracting_lattice_relaxes_geometrically():
    sys = LatticeSystem(3, catalog("contraction"), diffusive(0.0))
    diag = stability_diagnostics(sys, n_pairs=5, n_particles=500, n_steps=(1, 2, 4, 8),
                                 n_reference=60)
    assert diag.C_hat <= 1 + 1e-9
    assert diag.phi_decays
    for n in (1, 2, 4, 8):
        assert diag.phi_hat[n] <= 2.0 ** -n + 1e-12


def test_interaction_is_nonexpansive():
    rng = np.random.default_rng(0)
    for _ in range(5):
        eps = rng.random()
        sys = LatticeSystem(4, catalog("inoue"), diffusive(eps, Fixed(float(rng.random()))))
        diag = stability_diagnostics(sys, n_pairs=10, n_particles=500, n_steps=(1,),
                                     n_reference=10, seed=int(rng.integers(1000)))
        assert diag.C_hat_interaction <= 1 + 1e-9
        assert not diag.warnings or "exceeds" not in " ".join(diag.warnings)


def test_multiple_attractors_block_relaxation():
    diag = stability_diagnostics(cubic(3, 1.0), n_pairs=6, n_particles=500,
                                 n_steps=(1, 4, 16, 64), n_reference=2000)
    assert not diag.phi_decays


def test_uncoupled_windows_have_no_cross_talk():
    sys = LatticeSystem(5, catalog("inoue"), diffusive(0.0))
    diag = stability_diagnostics(sys, windows=(1, 2, 3), n_pairs=4, n_particles=300,
                                 n_steps=(1,), n_reference=5)
    assert all(v == 0.0 for v in diag.psi_hat.values())


def test_bad_window_rejected():
    with pytest.raises(ValueError):
        stability_diagnostics(cubic(3, 0.0), windows=(3,), n_pairs=1, n_particles=10,
                              n_steps=(1,), n_reference=1)


def test_particles_follow_cell_masses():
    rng = np.random.default_rng(2)
    masses = random_product_measure(rng, 2, 4)
    u = rng.random((20000, 2))
    pts = particles(masses, u)
    for i in range(2):
        freq = np.bincount((pts[:, i] * 4).astype(int), minlength=4) / len(pts)
        np.testing.assert_allclose(freq, masses[i], atol=0.02)
