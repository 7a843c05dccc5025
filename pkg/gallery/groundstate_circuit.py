"""Free ground state of a small lattice, prepared from local vacua.

Builds the Gaussian unitary that maps local vacua to the free ground state,
lowers it to an optical circuit, and checks the result three ways.
"""

import numpy as np

from cvqed import gaussian
from cvqed.circuit import groundstate_circuit
from cvqed.lattice import LatticeConfig, ModeLayout
from cvqed.modes import groundstate_unitary

cfg = LatticeConfig(dim=1, extent=4, scalar_mass=0.5)
layout = ModeLayout(cfg)
print(f"{cfg.num_modes} modes; frequencies {np.round(layout.frequencies, 4)}")

U = groundstate_unitary(cfg)
print(f"symplectic error of the preparation map: {U.symplectic_error():.1e}")

circ = groundstate_circuit(cfg, inverse=True)
print("element counts:", circ.counts())
print(f"circuit round trip error: {circ.recompose().distance(U.inverse()):.1e}")
print(circ.to_text().splitlines()[0])
for line in circ.to_text().splitlines()[1:6]:
    print("  ", line)

omega = gaussian.groundstate(cfg)
print("particle occupations in the prepared state:", np.round(gaussian.number_means(omega, U), 12) + 0.0)
moved = gaussian.apply(omega, gaussian.free_evolution(cfg, 2.5))
print(f"covariance change after free evolution: {np.abs(moved.cov - omega.cov).max():.1e}")
