"""Classical simulator for a continuous-variable algorithm computing scattering in
lattice scalar QED.

Gaussian stages run exactly on covariance matrices (:mod:`cvqed.gaussian`),
interacting evolution runs on truncated Fock spaces (:mod:`cvqed.fock`), and
one-loop renormalisation constants are computed by :mod:`cvqed.renorm`.
"""

__version__ = "0.1.0"
