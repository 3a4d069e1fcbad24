"""Compile a three-state chain into an interval map and check it.

Run with ``python3 demos/markov_map_demo.py``.
"""
import numpy as np

from ergodyn import StochasticMatrix, build_markov_map, lumped_action, stationary, verify_markov
from ergodyn.markov import continuous_arrangements

P = StochasticMatrix(np.array([[0.5, 0.5, 0.0],
                               [0.0, 0.5, 0.5],
                               [0.5, 0.0, 0.5]]))
model = build_markov_map(P)
print("cells in the canonical model:", model.n_cells)

# Contiguous branches with the same affine law merge into the 4-branch form.
print("breakpoint   slope   intercept")
for b, a, c in model.map.merged().table():
    print(f"{b:10.6f} {a:7.3f} {c:11.6f}")

print("Markov property holds:", verify_markov(model).ok)

# Pushing a law through the map and lumping onto states is the matrix action.
p = np.array([1.0, 0.0, 0.0])
for n in range(5):
    p = lumped_action(model, p)
    print(f"step {n + 1}: {np.round(p, 6)}")

print("stationary law:", stationary(model.matrix).vector)
print("continuous rearrangements on the interval:",
      len(continuous_arrangements(model, circle=False)))
