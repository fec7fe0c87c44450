"""Cross-checks between transcendental roots and the discretised generator."""

import math
from dataclasses import dataclass, field

import numpy as np

from .discretize import CapBC, Geometry
from .errors import GeometryMismatch, InsufficientData, UnderResolved
from .fitting import loglog_fit
from .modes import Family, strip_mode, transverse_profile

RESOLUTION_GATE = 0.3
BAND_EPSILON = 0.1

QUASIMODE_HEADER = ("k", "re_lambda", "im_lambda", "band_constant", "residual_ratio", "predicted")
SHARPNESS_HEADER = ("k", "re_lambda", "im_lambda", "band_constant", "scaled_im", "in_band")


@dataclass
class QuasimodeReport:
    k: float
    mu: float
    residual_ratio: float
    predicted: float
    band_constant: float
    lam: complex = 0j
    k_effective: float = None

    @property
    def ratio_to_predicted(self):
        return self.residual_ratio / self.predicted if self.predicted else math.inf

    def csv_row(self):
        return (self.k, self.lam.real, self.lam.imag, self.band_constant, self.residual_ratio,
                self.predicted)


def band_constant(lam):
    """``|Im lam| * (Re lam)**2``, bounded along a branch whose damping decays like ``k**-2``."""
    return abs(lam.imag) * lam.real ** 2


def residual_ratio(system, w, shift):
    """``||(A - shift) w||_G / ||w||_G`` for a complex ``shift``."""
    r = system.A @ w - shift * w
    return system.norm(r) / system.norm(w)


def discrete_wavenumber(grid, k):
    """Wavenumber seen by ``cos(k y)`` (or ``sin``) under the three-point cap operator.

    The sampled cap mode is an exact eigenvector of the discrete y operator
    with eigenvalue ``(2/hy)**2 sin(k hy/2)**2``; transverse grids return ``k``.
    """
    if not grid.ny:
        return float(k)
    return 2.0 / grid.hy * math.sin(0.5 * k * grid.hy)


_MATCH = {
    Family.STRIP_1D: (Geometry.STRIP_1D, Geometry.STRIP_2D),
    Family.CAP_NEUMANN: (Geometry.RADIAL_DISK,),
}


def _check_family(system, root):
    grid = system.grid
    if grid.geometry not in _MATCH.get(root.family, ()):
        raise GeometryMismatch(f"{root.family.value} root cannot be tested on "
                               f"{grid.geometry.value}")


def quasimode_vector(system, root, y_index=None):
    """``w = (u, -i lam u)`` with ``u`` the transverse profile of ``root`` times a cap mode.

    The cap factor is ``cos(k y)`` (``sin`` for Dirichlet caps) with ``k =
    y_index``, defaulting to the root's own longitudinal index.
    """
    _check_family(system, root)
    grid = system.grid
    phi = transverse_profile(root, grid.x)
    if grid.ny:
        k = root.k_or_eta if y_index is None else y_index
        if grid.cap_bc is CapBC.PERIODIC and k != round(k):
            raise GeometryMismatch(f"periodic caps need integer k, got {k}")
        if 2 * k != round(2 * k):
            raise GeometryMismatch(f"caps at y = 0, 2 pi need 2k integer, got {k}")
        ymode = np.sin(k * grid.y) if grid.cap_bc is CapBC.DIRICHLET else np.cos(k * grid.y)
        u = np.outer(phi, ymode).ravel()
    else:
        u = phi
    return np.concatenate([u, -1j * root.lam * u])


def quasimode_residual(system, root):
    """Residual of the transcendental mode against the discrete generator.

    The pair ``(u, -i lam u)`` is an eigenvector of the continuum generator
    for ``-i lam = Im lam - i Re lam``.  Shifting by the purely imaginary part
    leaves ``Im lam`` as the exact continuum residual, which is reported as
    ``predicted``.  The resolution gate is ``|lam| * hx <= 0.3``.

    On a 2D strip the sampled cap mode is an exact discrete eigenvector, so
    the transverse root is re-solved at the discrete wavenumber it sees
    (:func:`discrete_wavenumber`); ``k_effective`` records that value.  The
    cap mode itself must be sampled with ``k hy <= pi/2``.
    """
    _check_family(system, root)
    if root.residual > 1e-8:
        raise UnderResolved(f"root at k={root.k_or_eta} is not converged")
    grid = system.grid
    k = root.k_or_eta
    if grid.ny == 0 and system.k_shift != k:
        raise GeometryMismatch(f"transverse block built for k={system.k_shift}, root has k={k}")
    matched = root
    if grid.ny:
        if k * grid.hy > 0.5 * math.pi:
            raise UnderResolved(f"k hy = {k * grid.hy:.3f} exceeds pi/2")
        matched = strip_mode(discrete_wavenumber(grid, k), a=root.a, n=root.zero_index, b=root.b)
    lam = matched.lam
    if abs(lam) * grid.hx > RESOLUTION_GATE:
        raise UnderResolved(f"|lambda| hx = {abs(lam) * grid.hx:.3f} exceeds {RESOLUTION_GATE}")
    w = quasimode_vector(system, matched, y_index=k)
    ratio = residual_ratio(system, w, -1j * lam.real)
    return QuasimodeReport(float(k), abs(lam.real), ratio, abs(lam.imag), band_constant(lam), lam,
                           matched.k_or_eta)


@dataclass
class SharpnessReport:
    rows: list
    exponent_fit: object
    band_c: float
    epsilon: float
    notes: list = field(default_factory=list)

    @property
    def flagged(self):
        return [r for r in self.rows if not r[-1]]


def scaled_imaginary(root):
    """``Im lam * k * sqrt(lam0'**2 + k**2)``, the normalised second asymptotic term."""
    k = root.k_or_eta
    return root.lam.imag * k * math.sqrt(root.lambda0_prime ** 2 + k * k)


def sharpness_report(roots, epsilon=BAND_EPSILON):
    """Per-root table and the fitted exponent of ``|Im lam|`` against ``|Re lam|``.

    The band constant ``C`` is the smallest value for which every damped
    root lies in ``0 > Im lam >= -C |Re lam|**(-2 + epsilon)``; roots with
    ``Im lam >= 0`` are flagged.
    """
    if len(roots) < 10:
        raise InsufficientData(f"need >= 10 roots, got {len(roots)}")
    ks = [r.k_or_eta for r in roots]
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise InsufficientData("roots must have strictly increasing k")
    re = np.array([abs(r.lam.real) for r in roots])
    im = np.array([r.lam.imag for r in roots])
    damped = im < 0
    c = float(np.max(-im[damped] * re[damped] ** (2 - epsilon))) if damped.any() else 0.0
    rows = []
    for r, x, y in zip(roots, re, im):
        inside = bool(y < 0 and -y <= c * x ** (-2 + epsilon) * (1 + 1e-12))
        rows.append((float(r.k_or_eta), float(r.lam.real), float(y), band_constant(r.lam),
                     scaled_imaginary(r), inside))
    notes = []
    if not damped.any():
        notes.append("degenerate input: no root has Im lambda < 0")
    fit = loglog_fit(re, -im, floor=0.0)
    return SharpnessReport(rows, fit, c, epsilon, notes)
