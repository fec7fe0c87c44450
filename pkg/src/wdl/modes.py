"""Complex eigenvalue branches of the impedance-damped Helmholtz problem on cylinders.

Conventions.  Time dependence is ``exp(-i lam t)``, so decaying modes have
``Im lam < 0``.  The wall condition is ``i d_n u + a lam u + i b u = 0`` and the
full eigenvalue satisfies ``lam**2 = lam_prime**2 + k**2`` where ``k`` is the
longitudinal wavenumber (``eta`` on the infinite cylinder) and ``lam_prime`` the
transverse one.

Three families are solved by damped Newton iteration in ``lam_prime``:

``CapNeumann``     ball cross-section, ``a = 1, b = 0``:  ``lam J(z) + i z J'(z) = 0``
``InfiniteRobin``  ball cross-section, ``a = 1, b = 1``:  ``lam J(z) + i (J(z) + z J'(z)) = 0``
``Strip1D``        interval ``[0, 1]``, impedance on both walls.

Near a root ``lam(lam_prime)`` is the branch of ``sqrt(lam_prime**2 + k**2)``
that is holomorphic there, ``sgn J'(j) * principal_sqrt``.  At convergence it is
checked against :func:`wdl.specfun.branch_sqrt` (lower half-plane values).
"""

import cmath
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import specfun
from .errors import (DomainError, InsufficientData, InvalidZeroError, InvariantViolation,
                     NoConvergence, SheetEscape, WrongHalfPlane)
from .fitting import RateFit, loglog_fit

MAX_NEWTON = 50
MAX_HALVINGS = 8
K_MIN_SEED = 5.0
# half the spacing of the undamped strip roots n*pi
STRIP_SHEET_RADIUS = math.pi / 2


class Family(str, Enum):
    CAP_NEUMANN = "CapNeumann"
    INFINITE_ROBIN = "InfiniteRobin"
    STRIP_1D = "Strip1D"


@dataclass(frozen=True)
class ModeRoot:
    family: Family
    nu: float
    zero_index: int
    k_or_eta: float
    lambda_prime: complex
    lam: complex
    residual: float
    newton_iters: int
    a: float = 1.0
    b: float = 0.0
    exact_trace: bool = False

    @property
    def lambda0_prime(self):
        if self.family is Family.STRIP_1D:
            return self.zero_index * math.pi
        return specfun.bessel_real_zero(self.nu, self.zero_index)

    def relation_defect(self):
        return abs(self.lam ** 2 - self.lambda_prime ** 2 - self.k_or_eta ** 2)

    def csv_row(self):
        return (self.family.value, self.nu, self.zero_index, self.k_or_eta,
                self.lambda_prime.real, self.lambda_prime.imag, self.lam.real, self.lam.imag,
                self.residual, self.newton_iters)


CSV_HEADER = ("family", "nu", "m", "k", "re_lambda_prime", "im_lambda_prime",
              "re_lambda", "im_lambda", "residual", "iters")


@dataclass(frozen=True)
class AsymptoticSeed:
    lambda_prime_seed: complex
    lambda_seed: complex
    k_or_eta: float
    nu: float = 0.0
    lambda0_prime: float = float("nan")


def _sgn(x):
    return 1.0 if x > 0 else -1.0


def derivative_sign(nu, lambda0_prime):
    return _sgn(specfun.bessel_j_prime(nu, lambda0_prime).real)


def asymptotic_seed(nu, lambda0_prime, k, corrected=False):
    """Two-term large-``k`` expansion of ``lam_prime`` and ``lam`` about ``lambda0_prime``.

    ``lam_prime ~ j - i j s / k`` and ``lam ~ s R - i c / (k R)`` with
    ``R = sqrt(j**2 + k**2)``, ``s = sgn J'_nu(j)``.  The default coefficient is
    ``c = 1``; the expansion of ``lam**2 = lam_prime**2 + k**2`` actually gives
    ``c = j**2``, available with ``corrected=True``.
    """
    j = float(lambda0_prime)
    if abs(specfun.bessel_j(nu, j)) >= 1e-9:
        raise InvalidZeroError(f"J_{nu}({j}) = {specfun.bessel_j(nu, j):.3e} is not a zero")
    if k < 1:
        raise DomainError(f"asymptotic seed needs k >= 1, got {k}")
    s = derivative_sign(nu, j)
    big_r = math.sqrt(j * j + k * k)
    coeff = j * j if corrected else 1.0
    lp = complex(j, -j * s / k)
    lam = complex(s * big_r, -coeff / (k * big_r))
    return AsymptoticSeed(lp, lam, float(k), float(nu), j)


def _damped_newton(func, z0, tol, max_iter=MAX_NEWTON):
    """Return ``(root, |f(root)|, iterations)``; ``func`` returns ``(f, f')``."""
    z = complex(z0)
    f, df = func(z)
    res = abs(f)
    for it in range(1, max_iter + 1):
        if res <= tol:
            # one polishing step, kept only if it helps
            try:
                zn = z - f / df
                fn, dfn = func(zn)
                if abs(fn) < res:
                    return zn, abs(fn), it
            except (ValueError, ZeroDivisionError):
                pass
            return z, res, it - 1
        if df == 0:
            raise NoConvergence("zero derivative in Newton iteration", last=z, residual=res)
        step = f / df
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            zn = z - t * step
            try:
                fn, dfn = func(zn)
            except (ValueError, ZeroDivisionError, specfun.DomainError):
                fn, dfn = complex("nan"), complex("nan")
            if abs(fn) < res:
                break
            t *= 0.5
        else:
            raise NoConvergence(f"no decrease after {MAX_HALVINGS} halvings (|f|={res:.3e})",
                                last=z, residual=res)
        z, f, df, res = zn, fn, dfn, abs(fn)
    if res <= tol:
        return z, res, max_iter
    raise NoConvergence(f"iteration budget {max_iter} exceeded (|f|={res:.3e})", last=z,
                        residual=res)


def _principal_sqrt(w):
    return cmath.sqrt(w)


def _ball_residual(nu, k, sign, a, b, exact_trace):
    """Characteristic function ``(a lam + i b) J + i (z J' - c J)`` and its derivative."""
    c = nu if exact_trace else 0.0

    def func(z):
        lam = sign * _principal_sqrt(z * z + k * k)
        dlam = z / lam
        j0, jp, jpp = specfun.bessel_j_and_prime(nu, z)
        beta = a * lam + 1j * b
        trace = z * jp - c * j0
        dtrace = jp + z * jpp - c * jp
        g = beta * j0 + 1j * trace
        dg = a * dlam * j0 + beta * jp + 1j * dtrace
        return g, dg

    return func


def ball_characteristic(nu, lambda_prime, k, sign, a=1.0, b=0.0, exact_trace=False):
    return _ball_residual(nu, float(k), sign, a, b, exact_trace)(complex(lambda_prime))[0]


def _finish_ball(family, nu, m, k, j, sign, lp, res, iters, tol, a, b, exact_trace):
    lam = sign * _principal_sqrt(lp * lp + k * k)
    if abs(lp - j) >= 1.0:
        raise SheetEscape(f"Newton left the sheet of j_({nu},{m}) = {j}: lambda' = {lp}")
    if not lam.imag < 0:
        raise WrongHalfPlane(f"converged root has Im lambda = {lam.imag:.3e} >= 0")
    lam_conv = specfun.branch_sqrt(lp * lp + k * k)
    if abs(lam_conv - lam) > 1e-10 * (1 + abs(lam)):
        raise WrongHalfPlane(f"branch mismatch: {lam} vs lower-half-plane root {lam_conv}")
    if abs(lam * lam - lp * lp - k * k) > 1e-10 * (1 + abs(lam) ** 2):
        raise InvariantViolation("lambda^2 = lambda'^2 + k^2 violated")
    j0, jp = specfun.bessel_j(nu, lp), specfun.bessel_j_prime(nu, lp)
    trace = lp * jp - (nu if exact_trace else 0.0) * j0
    beta = a * lam + 1j * b
    second = beta * j0 - 1j * trace
    if abs(second) <= 1e-6 * (abs(beta * j0) + abs(trace)):
        raise InvariantViolation("second factor vanishes at the root; wrong factor selected")
    return ModeRoot(family, float(nu), int(m), float(k), lp, lam, float(res), int(iters),
                    float(a), float(b), bool(exact_trace))


def _solve_ball(family, nu, m, k, tol, a, b, exact_trace, start=None):
    if not 1e-14 <= tol <= 1e-6:
        raise DomainError(f"tolerance {tol} outside [1e-14, 1e-6]")
    j = specfun.bessel_real_zero(nu, m)
    sign = derivative_sign(nu, j)
    if start is None:
        start = asymptotic_seed(nu, j, k).lambda_prime_seed
    func = _ball_residual(nu, float(k), sign, a, b, exact_trace)
    lp, res, iters = _damped_newton(func, start, tol)
    return _finish_ball(family, nu, m, k, j, sign, lp, res, iters, tol, a, b, exact_trace)


def solve_cap_mode(nu, m, k, tol=1e-12, a=1.0, b=0.0, exact_trace=False):
    """Eigenvalue branch of the finite cylinder (ball x [0, 2 pi], Neumann caps).

    ``exact_trace`` subtracts ``nu J`` in the wall condition, which is the
    normal derivative of the regular radial solution ``r**(-nu) J_nu(lam' r)``
    when ``d != 2``; by default the trace is ``z J'(z)`` alone, which is exact for ``d = 2``.

    For ``k < 5`` the root is reached by continuation in ``k`` from ``k = 5``.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if k >= K_MIN_SEED:
        return _solve_ball(Family.CAP_NEUMANN, nu, m, k, tol, a, b, exact_trace)
    root = _solve_ball(Family.CAP_NEUMANN, nu, m, K_MIN_SEED, tol, a, b, exact_trace)
    for kk in np.linspace(K_MIN_SEED, k, 9)[1:]:
        root = _solve_ball(Family.CAP_NEUMANN, nu, m, float(kk), tol, a, b, exact_trace,
                           start=root.lambda_prime)
    return root


def solve_infinite_mode(nu, m, eta, tol=1e-12, previous=None, a=1.0, b=1.0):
    """Eigenvalue branch of the infinite cylinder at transverse frequency ``eta``.

    ``previous`` (a ModeRoot at nearby ``eta``) replaces the asymptotic seed;
    this is how continuation in ``eta`` is done.
    """
    if previous is None and eta < K_MIN_SEED:
        raise DomainError(f"seeded solve needs eta >= {K_MIN_SEED}; pass `previous` to continue")
    start = None if previous is None else previous.lambda_prime
    return _solve_ball(Family.INFINITE_ROBIN, nu, m, float(eta), tol, a, b, False, start=start)


def continue_infinite_mode(nu, m, etas, tol=1e-12):
    """Solve along increasing or decreasing ``etas``, each step seeded by the previous root."""
    roots = []
    prev = None
    for eta in etas:
        prev = solve_infinite_mode(nu, m, float(eta), tol, previous=prev)
        roots.append(prev)
    return roots


# -- strip cross-section ---------------------------------------------------

def _sinc(z):
    if abs(z) < 1e-4:
        z2 = z * z
        return 1 - z2 / 6 + z2 * z2 / 120
    return cmath.sin(z) / z


def _dsinc(z):
    if abs(z) < 1e-4:
        return -z / 3 + z ** 3 / 30
    return (cmath.cos(z) - _sinc(z)) / z


def strip_determinant(lambda_prime, lam, a, b=0.0):
    """Scaled determinant of the two wall rows for ``u = A cos(z x) + B sin(z x)/z``.

    The raw determinant is ``(z**2 + beta**2) sinc(z) + 2 i beta cos(z)`` with
    ``beta = a lam + i b``; dividing by ``z**2 + beta**2`` keeps it O(1) for
    large damping without moving the roots near ``n pi``.
    """
    z = complex(lambda_prime)
    beta = a * lam + 1j * b
    return _sinc(z) + 2j * beta * cmath.cos(z) / (z * z + beta * beta)


def strip_boundary_rows(lambda_prime, lam, a, b=0.0):
    """2x2 matrix acting on ``(A, B)`` for the basis ``cos(z x), sin(z x)/z``.

    Row 0 is the wall ``x = 0`` (outward normal ``-x``), row 1 the wall ``x = 1``.
    """
    z = complex(lambda_prime)
    beta = a * lam + 1j * b
    c, s = cmath.cos(z), cmath.sin(z)
    return np.array([[beta, -1j],
                     [-1j * z * s + beta * c, 1j * c + beta * _sinc(z)]])


def strip_profile(root):
    """Coefficients ``(A, B)`` and a callable transverse profile for a strip root."""
    z, lam = root.lambda_prime, root.lam
    rows = strip_boundary_rows(z, lam, root.a, root.b)
    # null vector of the first row, scaled so the larger coefficient is one
    coef = np.array([1.0, -1j * (root.a * lam + 1j * root.b)])
    if root.a == 0 and root.b == 0:
        coef = np.array([1.0, 0.0])
    coef = coef / np.max(np.abs(coef))
    resid = np.abs(rows @ coef).max()

    def phi(x):
        x = np.asarray(x, dtype=float)
        return coef[0] * np.cos(z * x) + coef[1] * np.sin(z * x) / z

    def dphi(x):
        x = np.asarray(x, dtype=float)
        return -coef[0] * z * np.sin(z * x) + coef[1] * np.cos(z * x)

    return coef, phi, dphi, resid


def strip_mode(k, a=1.0, tol=1e-12, n=1, b=0.0):
    """Root on the branch ``lam_prime -> n pi`` of the strip ``[0, 1]`` with impedance walls.

    The returned eigenvalue has ``Re lam > 0``; ``-conj(lam)`` is its mirror.
    """
    if not 0.0 <= a <= 10:
        raise DomainError(f"damping a={a} outside [0, 10]")
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if not 1e-14 <= tol <= 1e-6:
        raise DomainError(f"tolerance {tol} outside [1e-14, 1e-6]")
    k = float(k)
    j = n * math.pi
    lam0 = math.sqrt(j * j + k * k)
    beta0 = a * lam0 + 1j * b
    start = j - 2j * beta0 * j / (j * j + beta0 * beta0)

    def func(z):
        lam = _principal_sqrt(z * z + k * k)
        dlam = z / lam
        beta = a * lam + 1j * b
        dbeta = a * dlam
        q = z * z + beta * beta
        dq = 2 * z + 2 * beta * dbeta
        c, sn = cmath.cos(z), cmath.sin(z)
        f = _sinc(z) + 2j * beta * c / q
        df = _dsinc(z) + 2j * ((dbeta * c - beta * sn) * q - beta * c * dq) / (q * q)
        return f, df

    lp, res, iters = _damped_newton(func, start, tol)
    lam = _principal_sqrt(lp * lp + k * k)
    if abs(lp - j) >= STRIP_SHEET_RADIUS:
        raise SheetEscape(f"Newton left the sheet of n pi = {j}: lambda' = {lp}")
    if lam.imag > 1e-10 or (a > 0 and not lam.imag < 0):
        raise WrongHalfPlane(f"converged root has Im lambda = {lam.imag:.3e}")
    root = ModeRoot(Family.STRIP_1D, -0.5, int(n), k, lp, lam, float(res), int(iters),
                    float(a), float(b))
    if strip_profile(root)[3] > 1e-10 * max(1.0, abs(lam)):
        raise InvariantViolation("recovered (A, B) does not satisfy both wall rows")
    return root


def transverse_profile(root, x):
    """Cross-sectional eigenfunction of ``root`` sampled at ``x`` (strip) or ``r`` (ball).

    Ball profiles are ``J_nu(lp r) / (lp r)**nu``, the radial part in ``d = 2 nu + 2``
    dimensions, finite at the axis.
    """
    x = np.asarray(x, dtype=float)
    if root.family is Family.STRIP_1D:
        return strip_profile(root)[1](x)
    z = root.lambda_prime * x
    out = np.empty(x.shape, dtype=complex)
    axis = x == 0
    out[axis] = 1.0 / (2.0 ** root.nu * math.gamma(root.nu + 1.0))
    zz = z[~axis]
    out[~axis] = specfun.bessel_j(root.nu, zz) / zz ** root.nu
    return out


# -- verification and sweeps ----------------------------------------------

def characteristic_residual(root):
    """Re-evaluate the characteristic function at a stored root."""
    if root.family is Family.STRIP_1D:
        return abs(strip_determinant(root.lambda_prime, root.lam, root.a, root.b))
    j = specfun.bessel_real_zero(root.nu, root.zero_index)
    sign = derivative_sign(root.nu, j)
    return abs(ball_characteristic(root.nu, root.lambda_prime, root.k_or_eta, sign,
                                   root.a, root.b, root.exact_trace))


def _lam_of(x):
    return x.lambda_seed if isinstance(x, AsymptoticSeed) else x.lam


def _k_of(x):
    return x.k_or_eta


def asymptotic_order(roots, seeds):
    """Slope of ``log|lam_k - lam_seed(k)|`` against ``log k``.

    A slope near -3 means the seed captures the expansion through the
    ``k**-1`` imaginary term.  All differences below 1e-14 give a fit flagged
    ``degenerate``.
    """
    if len(roots) < 8 or len(roots) != len(seeds):
        raise InsufficientData(f"need >= 8 matched roots and seeds, got {len(roots)}/{len(seeds)}")
    ks = np.array([_k_of(r) for r in roots])
    if np.any(np.diff(ks) <= 0):
        raise InsufficientData("roots must have strictly increasing k")
    for r in roots:
        if isinstance(r, ModeRoot) and not r.residual <= 1e-6:
            raise InsufficientData(f"root at k={r.k_or_eta} is not converged")
    diffs = np.array([abs(_lam_of(r) - _lam_of(s)) for r, s in zip(roots, seeds)])
    if np.all(diffs < 1e-14):
        return RateFit(np.nan, np.nan, np.nan, (float(ks[0]), float(ks[-1])), ("degenerate",),
                       len(ks))
    return loglog_fit(ks, diffs, floor=1e-14)


def worker_count():
    try:
        return max(1, int(os.environ.get("WDL_THREADS", "1")))
    except ValueError:
        return 1


def sweep(solver, ks, **kwargs):
    """Solve independent points ``solver(k=k, **kwargs)`` and return them sorted by k."""
    ks = list(ks)
    workers = min(worker_count(), max(1, len(ks)))
    if workers == 1:
        roots = [solver(k=k, **kwargs) for k in ks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            roots = list(pool.map(lambda k: solver(k=k, **kwargs), ks))
    return sorted(roots, key=lambda r: (r.family.value, r.zero_index, r.k_or_eta))
