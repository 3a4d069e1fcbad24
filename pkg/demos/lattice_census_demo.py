"""Attractor census of a cubic lattice under two boundary values.

Run with ``python3 demos/lattice_census_demo.py``.
"""
import numpy as np

from ergodyn import Fixed, LatticeSystem, attractor_census, catalog, diffusive, phase_sweep


def cubic(d, y):
    return LatticeSystem(d, catalog("cubic_pitchfork"), diffusive(0.05, Fixed(y)))


for y in (0.0, 1.0):
    census = attractor_census(cubic(3, y))
    print(f"boundary y={y}: {census.count} attractor(s)")
    for a in census.attractors:
        print("   ", np.round(a.representative, 4))

sweep = phase_sweep(lambda y: cubic(3, y), np.linspace(0, 1, 11))
print("count changes along the sweep:", sweep.transitions)
