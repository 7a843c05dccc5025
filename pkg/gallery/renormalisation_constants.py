"""One-loop lattice constants: the mass counterterm, the tadpole and the log running."""

import math

import numpy as np

from cvqed.renorm import LOG_COEFFICIENT, delta_m, log_fit, monte_carlo_integral, omega_sq, pi1, pi2

dm = delta_m(1.0)
print(f"delta_m / e^2 = {dm.value:.5f} +- {dm.abs_error_estimate:.1e} ({dm.evaluations} evaluations)")

tad = pi2(0.0)
print(f"tadpole constant = {abs(tad.value):.5f} +- {tad.abs_error_estimate:.1e}")
print(f"|delta_m| / (3 tadpole) = {abs(dm.value) / (3 * abs(tad.value)):.6f}")

mc = monte_carlo_integral(lambda l: 1 / np.sqrt(omega_sq(l, 0.0)), seed=1)
print(f"Sobol estimate of the tadpole = {mc.value:.5f} +- {mc.abs_error_estimate:.1e}")

masses = (0.1, 0.01, 0.001)
rows = [pi1(0.0, np.zeros(3), m) for m in masses]
for m, r in zip(masses, rows):
    print(f"m = {m:<6} pi1 = {r.pi1.value:.6f}  pi2 = {r.pi2.value:.6f}  log(1/m^2) = {math.log(m**-2):.3f}")
fit = log_fit(masses, [r.pi1 for r in rows])
print(f"pi1 fit: slope {fit.slope:.7f} (closed form {LOG_COEFFICIENT:.7f}), intercept {fit.intercept:.5f}")
fit2 = log_fit(masses, [type(r.pi2)(-r.pi2.value, r.pi2.abs_error_estimate, 0) for r in rows])
print(f"-pi2 fit: slope {fit2.slope:.7f}, intercept {fit2.intercept:.5f}")
