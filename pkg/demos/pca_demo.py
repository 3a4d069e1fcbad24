"""Compile probabilistic cellular automata into deterministic interval maps.

Run with ``python3 demos/pca_demo.py``.
"""
from ergodyn import compile_pca, equivalence_report
from ergodyn.pca import flip_chain, voter_ring

flip = flip_chain(0.3)
print("flip chain, exact divergence:",
      equivalence_report(flip, horizon=50, mode="exact").max_divergence)

voter = voter_ring(3, 0.1)
compiled = compile_pca(voter)
print("voter ring compiled")
report = equivalence_report(voter, compiled, horizon=50, n_runs=10**4, seed=0,
                            mode="monte_carlo")
print(f"voter ring, Monte Carlo divergence: {report.max_divergence:.4f}")
