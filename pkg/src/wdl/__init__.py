"""Numerical laboratory for impedance-damped waves on product cylinders.

Modules: ``specfun`` (Bessel kernels), ``modes`` (transcendental eigenvalue
branches), ``discretize`` (finite-difference oracles), ``evolve`` (energy
traces), ``analysis`` (cross-checks) and ``cli``.
"""

__version__ = "0.1.0"
