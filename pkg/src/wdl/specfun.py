"""Bessel functions of the first kind, their real zeros, and the lower-half-plane square root.

Evaluation strategy for ``J_nu(z)``:

* ``|z| <= 8``: power series with compensated (Kahan) summation.
* ``8 < |z| <= 100``: Miller backward recurrence, normalised with the
  Neumann-type identity ``(z/2)**nu = sum_k (nu+2k) Gamma(nu+k)/k! J_{nu+2k}(z)``.

For non-integer ``nu`` the factor ``(z/2)**nu`` uses the principal branch
(cut along the negative real axis).  With that choice
``J_nu(conj(z)) == conj(J_nu(z))`` for every ``z`` off the cut, for integer and
half-integer orders alike.
"""

import cmath
import math

import numpy as np

from .errors import DomainError, InvalidOrderError, NoConvergence, SingularArgumentError

SERIES_RADIUS = 8.0
MAX_ABS_Z = 100.0

_EPS = 2.0 ** -53


def bessel_order(d):
    """Order ``d/2 - 1`` attached to a ``d``-dimensional ball cross-section."""
    if int(d) != d or d < 1:
        raise InvalidOrderError(f"dimension must be a positive integer, got {d!r}")
    nu = d / 2.0 - 1.0
    if nu < 0:
        raise InvalidOrderError(f"dimension {d} gives negative order {nu}")
    return nu


def _check(nu, z):
    if nu < 0 or not math.isfinite(nu):
        raise InvalidOrderError(f"order must be >= 0, got {nu!r}")
    if not cmath.isfinite(z):
        raise DomainError(f"non-finite argument {z!r}")
    if abs(z) > MAX_ABS_Z:
        raise DomainError(f"|z| = {abs(z):.6g} exceeds the supported envelope {MAX_ABS_Z}")


def _half_power(z, nu):
    if nu == 0:
        return 1.0 + 0j
    if z == 0:
        return 0j
    return cmath.exp(nu * cmath.log(z / 2.0))


def _series(nu, z):
    q = -(z / 2.0) ** 2
    term = 1.0 / math.gamma(nu + 1.0) + 0j
    total = term
    comp = 0j
    k = 0
    while True:
        k += 1
        term = term * q / (k * (nu + k))
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if k > abs(q) ** 0.5 and abs(term) <= _EPS * 1e-2 * max(abs(total), 1e-300):
            break
        if k > 500:
            raise NoConvergence(f"series for J_{nu}({z}) did not converge", last=total)
    return _half_power(z, nu) * total


def _norm_coeff(nu, k):
    if k == 0:
        return math.gamma(nu + 1.0)
    return (nu + 2 * k) * math.exp(math.lgamma(nu + k) - math.lgamma(k + 1.0))


def _miller(nu, z):
    """Return ``(J_nu(z), J_{nu+1}(z))`` by backward recurrence."""
    r = abs(z)
    m = int(1.2 * r + 12.0 * r ** (1.0 / 3.0)) + 30
    m += m % 2
    f_hi = 0j  # order nu + j + 1
    f = 1e-30 + 0j  # order nu + j
    total = _norm_coeff(nu, m // 2) * f
    j = m
    f_nu1 = None
    while j > 0:
        mu = nu + j
        f_lo = (2.0 * mu / z) * f - f_hi
        f_hi, f = f, f_lo
        j -= 1
        if j % 2 == 0:
            total += _norm_coeff(nu, j // 2) * f
        if j == 1:
            f_nu1 = f
        if abs(f) > 1e200:
            f_hi *= 1e-200
            f *= 1e-200
            total *= 1e-200
            if f_nu1 is not None:
                f_nu1 *= 1e-200
    if f_nu1 is None:
        f_nu1 = f_hi
    scale = _half_power(z, nu) / total
    return f * scale, f_nu1 * scale


def _pair(nu, z):
    z = complex(z)
    if abs(z) <= SERIES_RADIUS:
        return _series(nu, z), _series(nu + 1.0, z)
    return _miller(nu, z)


def bessel_j(nu, z):
    """Bessel function ``J_nu(z)`` for real ``nu >= 0`` and complex ``|z| <= 100``.

    Arrays are evaluated elementwise.
    """
    if np.ndim(z):
        return np.vectorize(lambda w: bessel_j(nu, w), otypes=[complex])(z)
    nu = float(nu)
    z = complex(z)
    _check(nu, z)
    if abs(z) <= SERIES_RADIUS:
        return _series(nu, z)
    return _miller(nu, z)[0]


def bessel_j_prime(nu, z):
    """Derivative ``J'_nu(z) = (nu/z) J_nu(z) - J_{nu+1}(z)``.

    At ``z = 0`` only ``nu = 0`` is accepted (``J'_0 = -J_1`` needs no division).
    """
    if np.ndim(z):
        return np.vectorize(lambda w: bessel_j_prime(nu, w), otypes=[complex])(z)
    nu = float(nu)
    z = complex(z)
    _check(nu, z)
    if z == 0:
        if nu == 0:
            return 0j
        raise SingularArgumentError(f"J'_{nu} at z=0 requires division by z")
    j0, j1 = _pair(nu, z)
    return (nu / z) * j0 - j1


def bessel_j_and_prime(nu, z):
    """``(J_nu(z), J'_nu(z), J''_nu(z))`` from a single evaluation, ``z != 0``."""
    nu = float(nu)
    z = complex(z)
    _check(nu, z)
    if z == 0:
        raise SingularArgumentError("second derivative form divides by z")
    j0, j1 = _pair(nu, z)
    jp = (nu / z) * j0 - j1
    jpp = -jp / z - (1.0 - (nu / z) ** 2) * j0
    return j0, jp, jpp


def _real_j(nu, x):
    return bessel_j(nu, x).real


def bessel_real_zero(nu, m, max_iter=100):
    """``m``-th positive zero ``j_{nu,m}`` of ``J_nu`` to absolute accuracy 1e-12.

    The bracket is centred on McMahon's estimate and is ``pi/2`` wide; the zero
    index is then confirmed by counting sign changes of ``J_nu`` on ``(0, x)``.
    """
    from scipy.optimize import brentq

    nu = float(nu)
    if nu < 0:
        raise InvalidOrderError(f"order must be >= 0, got {nu}")
    if int(m) != m or m < 1:
        raise DomainError(f"zero index must be a positive integer, got {m!r}")
    m = int(m)
    beta = (m + nu / 2.0 - 0.25) * math.pi
    guess = beta - (4.0 * nu * nu - 1.0) / (8.0 * beta)
    lo, hi = max(guess - math.pi / 4, 1e-3), guess + math.pi / 4
    if hi > MAX_ABS_Z:
        raise DomainError(f"zero j_({nu},{m}) lies outside the supported envelope")
    flo, fhi = _real_j(nu, lo), _real_j(nu, hi)
    if flo * fhi > 0:
        raise NoConvergence(f"no sign change in bracket [{lo:.6f}, {hi:.6f}] for j_({nu},{m})",
                            last=(lo, hi))
    root, info = brentq(lambda x: _real_j(nu, x), lo, hi, xtol=1e-14, rtol=1e-15,
                        maxiter=max_iter, full_output=True)
    if not info.converged:
        raise NoConvergence(f"bracket [{lo}, {hi}] did not converge", last=(lo, hi))
    if _count_sign_changes(nu, root - 1e-9) != m - 1:
        raise NoConvergence(f"bracket [{lo}, {hi}] isolates the wrong zero for m={m}",
                            last=(lo, hi))
    return root


def _count_sign_changes(nu, x_max):
    xs = np.arange(0.05, x_max, math.pi / 8)
    xs = np.append(xs, x_max)
    vals = np.array([_real_j(nu, x) for x in xs])
    return int(np.sum(np.signbit(vals[1:]) != np.signbit(vals[:-1])))


def branch_sqrt(z):
    """Square root with values in the closed lower half-plane.

    ``w = sqrt(|z|) * exp(i theta/2)`` with ``theta = arg z`` taken in ``(-2 pi, 0]``.
    The cut is the positive real axis, approached from below, so
    ``branch_sqrt(4) == 2`` and ``branch_sqrt(-1) == -1j``.
    """
    z = np.asarray(z, dtype=complex)
    theta = np.angle(z)
    theta = np.where(theta > 0, theta - 2 * np.pi, theta)
    w = np.sqrt(np.abs(z)) * np.exp(0.5j * theta)
    if w.ndim == 0:
        return complex(w)
    return w
