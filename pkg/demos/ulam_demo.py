"""Ulam approximation of invariant densities.

Run with ``python3 demos/ulam_demo.py``.
"""
from ergodyn import CellDensity, catalog, ulam_invariant_density, w1_distance
from ergodyn.ulam import refinement_study

doubling = catalog("doubling")
for W in (16, 64, 256):
    density = ulam_invariant_density(doubling, W)
    print(f"W={W:4d}  W1 to Lebesgue {w1_distance(density, CellDensity.uniform(1)):.2e}")

study = refinement_study(doubling, [16, 32, 64, 128], CellDensity.uniform(1), noise=1e-9)
print("refinement monotone:", study.monotone)
