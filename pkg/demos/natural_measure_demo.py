"""Natural measures of maps with neutral fixed points.

Run with ``python3 demos/natural_measure_demo.py``.
"""
from ergodyn import birkhoff, catalog, cesaro_natural, ergodicity_report, occupation_fraction

m = catalog("del_magno")
single = birkhoff(m, 0.3, 10**5)
print("one orbit of del_magno, mass near 0:", float(single.representation.cdf(0.05)))

ces = cesaro_natural(m, n_steps=10**4)
print("Cesaro atoms near 0 and 1:", ces.atom_near(0.0), ces.atom_near(1.0))
print("flagged non-ergodic:", ergodicity_report(m, ces, n_probes=5, n_steps=10**4).non_ergodic)

inoue = catalog("inoue")
occ = occupation_fraction(inoue, 0.37, (0.0, 0.05), 10**6)
print(f"inoue occupation of [0, 0.05]: tail range {occ.tail_min:.3f} to {occ.tail_max:.3f}")
