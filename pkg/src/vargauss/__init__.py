"""Variational Gaussian-state engine.

Imaginary- and real-time variational flows over Gaussian and canonically
transformed Gaussian states, with applications to single polarons
(Holstein, SSH), the spin-boson/Kondo model, and the finite-density
Holstein lattice.
"""

__version__ = "0.1.0"
