"""Finite-difference oracles for the impedance-damped wave generator.

All assemblies share one symmetric structure.  With a stiffness matrix ``K``
(discrete Dirichlet form), a diagonal trapezoidal mass ``M`` and diagonal wall
quadrature weights ``W``, the semi-discrete damped wave equation is

    M u'' + (K + B_b) u + B_a u' = 0,     B_a = diag(a W),  B_b = diag(b W),

so the generator on ``w = (u, v)`` is

    A = [[0, I], [-M^-1 (K + B_b), -M^-1 B_a]]

and the energy Gram matrix is ``G = blockdiag(K + B_b, M)``.  Then
``Re <A w, w>_G = -v^H B_a v`` holds exactly.  Eliminating a centred ghost
point in the impedance condition gives exactly these wall rows, so the wall
treatment is second order.

Time dependence ``exp(-i lam t)`` links a stationary eigenvalue ``lam`` to the
generator eigenvalue ``-i lam``.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar
from scipy.signal import find_peaks

from .errors import (AssemblyError, ConfigError, EigenSolverError, EnvelopeExceeded,
                     InvariantViolation, SingularSystem)
from .fitting import loglog_fit

DENSE_LIMIT = 20000


class Geometry(str, Enum):
    STRIP_2D = "Strip2D"
    RADIAL_DISK = "RadialDisk"
    STRIP_1D = "Strip1D"


class CapBC(str, Enum):
    NEUMANN = "Neumann"
    DIRICHLET = "Dirichlet"
    PERIODIC = "Periodic"


@dataclass(frozen=True)
class GridSpec:
    """Grid on ``x in [0, 1]`` (or ``r in [0, 1]``) times ``y in [0, 2 pi]``.

    ``ny = 0`` selects a purely transverse (one-dimensional) grid.
    ``radial_power`` is the exponent ``p`` in the radial weight ``r**p``;
    ``None`` means ``d - 1``.
    """

    geometry: Geometry
    nx: int
    ny: int = 0
    cap_bc: CapBC = CapBC.NEUMANN
    d: int = 2
    radial_power: float = None

    def __post_init__(self):
        object.__setattr__(self, "geometry", Geometry(self.geometry))
        object.__setattr__(self, "cap_bc", CapBC(self.cap_bc))
        if self.nx < 16:
            raise ConfigError(f"nx must be >= 16, got {self.nx}")
        if self.ny and self.ny < 16:
            raise ConfigError(f"ny must be >= 16 (or 0 for a transverse grid), got {self.ny}")
        if self.geometry is Geometry.STRIP_2D and not self.ny:
            raise ConfigError("Strip2D needs ny >= 16")
        if self.geometry is Geometry.STRIP_1D and self.ny:
            raise ConfigError("Strip1D is transverse only (ny = 0)")
        if self.d < 1:
            raise ConfigError(f"dimension d must be >= 1, got {self.d}")

    @property
    def hx(self):
        return 1.0 / self.nx

    @property
    def hy(self):
        return 2 * math.pi / self.ny if self.ny else float("nan")

    @property
    def power(self):
        if self.geometry is not Geometry.RADIAL_DISK:
            return 0.0
        return float(self.d - 1 if self.radial_power is None else self.radial_power)

    @property
    def x(self):
        return np.linspace(0.0, 1.0, self.nx + 1)

    @property
    def y(self):
        if not self.ny:
            return np.zeros(1)
        if self.cap_bc is CapBC.PERIODIC:
            return np.arange(self.ny) * self.hy
        if self.cap_bc is CapBC.DIRICHLET:
            return np.arange(1, self.ny) * self.hy
        return np.arange(self.ny + 1) * self.hy

    @property
    def n_walls(self):
        return 1 if self.geometry is Geometry.RADIAL_DISK else 2


# -- one-dimensional building blocks -----------------------------------------

def transverse_operators(grid):
    """Stiffness ``K``, mass ``m`` and wall weights ``w`` on the transverse nodes.

    Strip: standard three-point stiffness with half-weight end cells.
    Radial: finite-volume form of ``-(r^p u')' / r^p`` with exact cell
    volumes; the axis row reduces to the L'Hopital stencil ``2(p+1)(u0-u1)/h^2``.
    """
    n = grid.nx + 1
    h = grid.hx
    if grid.geometry is Geometry.RADIAL_DISK:
        p = grid.power
        faces = (np.arange(grid.nx) + 0.5) * h
        flux = faces ** p / h
        edges = np.concatenate([[0.0], faces, [1.0]])
        m = (edges[1:] ** (p + 1) - edges[:-1] ** (p + 1)) / (p + 1)
        wall = np.zeros(n)
        wall[-1] = 1.0
    else:
        flux = np.ones(grid.nx) / h
        m = np.full(n, h)
        m[0] = m[-1] = h / 2
        wall = np.zeros(n)
        wall[0] = wall[-1] = 1.0
    main = np.zeros(n)
    main[:-1] += flux
    main[1:] += flux
    K = sp.diags([main, -flux, -flux], [0, 1, -1], format="csr")
    return K, m, wall


def longitudinal_operators(grid):
    """Stiffness and mass along ``y in [0, 2 pi]`` for the cap condition."""
    ny, h = grid.ny, grid.hy
    if grid.cap_bc is CapBC.PERIODIC:
        main = np.full(ny, 2.0)
        off = -np.ones(ny - 1)
        K = sp.diags([main, off, off], [0, 1, -1], format="lil")
        K[0, ny - 1] = -1.0
        K[ny - 1, 0] = -1.0
        return (K / h).tocsr(), np.full(ny, h)
    if grid.cap_bc is CapBC.DIRICHLET:
        n = ny - 1
        main = np.full(n, 2.0)
        off = -np.ones(n - 1)
        return sp.diags([main, off, off], [0, 1, -1], format="csr") / h, np.full(n, h)
    n = ny + 1
    main = np.full(n, 2.0)
    main[0] = main[-1] = 1.0
    off = -np.ones(n - 1)
    m = np.full(n, h)
    m[0] = m[-1] = h / 2
    return sp.diags([main, off, off], [0, 1, -1], format="csr") / h, m


# -- damping -------------------------------------------------------------------

@dataclass
class DampingProfile:
    """Wall damping values ``a, b`` at the wall nodes, with their global bounds.

    ``a`` and ``b`` have shape ``(n_walls, n_y)``; ``n_y = 1`` on transverse grids.
    ``a0 = 0`` is accepted for the conservative reference system even though
    the damping assumption proper needs ``a0 > 0``.
    """

    a: np.ndarray
    b: np.ndarray
    a0: float
    a1: float
    b0: float
    b1: float

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if self.a.shape != self.b.shape:
            raise ConfigError("a and b must live on the same wall points")
        tol = 1e-14
        if not (0 <= self.a0 <= self.a1 and 0 <= self.b0 <= self.b1):
            raise ConfigError("damping bounds must satisfy 0 <= a0 <= a1, 0 <= b0 <= b1")
        if np.any(self.a < self.a0 - tol) or np.any(self.a > self.a1 + tol):
            raise ConfigError("a(p) violates a0 <= a(p) <= a1")
        if np.any(self.b < -tol) or np.any(self.b > self.b1 + tol):
            raise ConfigError("b(p) violates 0 <= b(p) <= b1")

    @classmethod
    def constant(cls, grid, a=1.0, b=0.0):
        shape = (grid.n_walls, len(grid.y))
        return cls(np.full(shape, float(a)), np.full(shape, float(b)), float(a), float(a),
                   float(b), float(b))

    @classmethod
    def from_functions(cls, grid, fa, fb=None):
        """Sample ``fa(wall, y)`` and ``fb(wall, y)`` at the wall nodes; bounds from the samples."""
        y = grid.y
        a = np.array([[fa(w, yy) for yy in y] for w in range(grid.n_walls)], dtype=float)
        if fb is None:
            b = np.zeros_like(a)
        else:
            b = np.array([[fb(w, yy) for yy in y] for w in range(grid.n_walls)], dtype=float)
        return cls(a, b, float(a.min()), float(a.max()), float(b.min()), float(b.max()))

    @property
    def satisfies_assumption(self):
        return self.a0 > 0

    @property
    def b_vanishes(self):
        return not np.any(self.b)

    @property
    def y_independent(self):
        return bool(np.all(self.a == self.a[:, :1]) and np.all(self.b == self.b[:, :1]))


# -- generator -----------------------------------------------------------------

@dataclass
class KernelProjector:
    """Projection onto ``{w : ell . w = 0}`` along the constant pair ``c = (1, 0)``.

    ``c`` spans the kernel of ``G`` when ``b`` vanishes; ``ell`` is the discrete
    form of ``int v + int_wall a u``, which ``A`` preserves.
    """

    c: np.ndarray
    ell: np.ndarray

    def apply(self, w):
        return w - np.outer(self.c, self.ell @ w / (self.ell @ self.c)).reshape(w.shape)

    def basis(self):
        return la.null_space(self.ell[None, :])


@dataclass
class GeneratorSystem:
    grid: GridSpec
    damping: DampingProfile
    A: sp.csr_matrix
    G: sp.csr_matrix
    K: sp.csr_matrix
    M: np.ndarray
    wall_weights: np.ndarray
    a_nodes: np.ndarray
    b_nodes: np.ndarray
    wall_index_set: np.ndarray
    kernel_projector: KernelProjector = None
    k_shift: float = 0.0
    _blocks: list = field(default=None, repr=False)

    @property
    def n(self):
        return self.M.size

    def split(self, w):
        return w[: self.n], w[self.n:]

    def inner(self, w1, w2):
        return np.vdot(w2, self.G @ w1)

    def norm(self, w):
        return math.sqrt(max(self.inner(w, w).real, 0.0))

    def energy(self, w):
        return 0.5 * self.inner(w, w).real

    def dissipation(self, w):
        """``sum_wall a |v|^2`` with the trapezoidal wall weights."""
        v = self.split(w)[1]
        return float(np.sum(self.a_nodes * self.wall_weights * np.abs(v) ** 2))

    def to_grid(self, u):
        """Nodal vector reshaped to ``(nx+1, n_y)``; Dirichlet cap rows are filled with zeros."""
        u = np.asarray(u)
        nxn = self.grid.nx + 1
        ny = len(self.grid.y)
        arr = u.reshape(nxn, ny)
        if self.grid.ny and self.grid.cap_bc is CapBC.DIRICHLET:
            z = np.zeros((nxn, 1), dtype=arr.dtype)
            arr = np.hstack([z, arr, z])
        return arr

    def stationary_operator(self, lam):
        """``K + B_b - i lam B_a - lam^2 M`` (impedance Helmholtz operator)."""
        w = self.wall_weights
        return (self.K + sp.diags(self.b_nodes * w - 1j * lam * self.a_nodes * w
                                  - lam * lam * self.M)).tocsc()

    def ymode_blocks(self):
        """Exact decomposition into y-Fourier blocks when the damping is y-independent.

        Returns a list of ``(kappa, A_j, G_j)`` with dense blocks.  The block
        with ``kappa = 0`` is restricted to the invariant subspace when ``b`` vanishes.
        """
        if self._blocks is not None:
            return self._blocks
        if not self.grid.ny or not self.damping.y_independent:
            raise InvariantViolation("y-mode blocks need a 2D grid and y-independent damping")
        Kx, mx, wall = transverse_operators(self.grid)
        Ky, my = longitudinal_operators(self.grid)
        kappa = la.eigh(Ky.toarray(), np.diag(my), eigvals_only=True)
        a_wall = _wall_values_1d(self.grid, self.damping.a[:, 0])
        b_wall = _wall_values_1d(self.grid, self.damping.b[:, 0])
        blocks = []
        for kap in kappa:
            kap = max(kap, 0.0)
            A, G = _block_matrices(Kx.toarray(), mx, wall, a_wall, b_wall, kap)
            if kap < 1e-10 and not np.any(b_wall) and self.grid.cap_bc is not CapBC.DIRICHLET:
                A, G = _restrict_constant(A, G, mx, a_wall * wall)
            blocks.append((kap, A, G))
        self._blocks = blocks
        return blocks


def _wall_values_1d(grid, per_wall):
    vals = np.zeros(grid.nx + 1)
    if grid.geometry is Geometry.RADIAL_DISK:
        vals[-1] = per_wall[0]
    else:
        vals[0], vals[-1] = per_wall[0], per_wall[-1]
    return vals


def _block_matrices(Kx, mx, wall, a_wall, b_wall, kappa):
    n = mx.size
    S = Kx + np.diag(kappa * mx + b_wall * wall)
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = -S / mx[:, None]
    A[n:, n:] = -np.diag(a_wall * wall / mx)
    G = la.block_diag(S, np.diag(mx))
    return A, G


def _constraint_rows(m, aw):
    """Rows whose null space is the energy space when ``b`` vanishes.

    With damping, ``int v + int_wall a u = 0`` alone is A-invariant and
    excludes the constant pair.  Without damping the zero eigenvalue is a
    Jordan block, and both means (of ``u`` and of ``v``) are fixed to zero.
    """
    zero = np.zeros_like(m)
    if np.any(aw):
        return np.concatenate([aw, m])[None, :]
    return np.vstack([np.concatenate([zero, m]), np.concatenate([m, zero])])


def _restrict_constant(A, G, m, aw):
    Q = la.null_space(_constraint_rows(m, aw))
    GV = Q.T @ G @ Q
    AV = la.solve(GV, Q.T @ G @ A @ Q)
    return AV, GV


def _build_system(grid, damping, K, M, wall_w, a_nodes, b_nodes, wall_idx, k_shift=0.0,
                  check=True):
    n = M.size
    if np.any(M <= 0):
        raise AssemblyError("mass weights must be positive")
    S = (K + sp.diags(b_nodes * wall_w)).tocsr()
    Minv = sp.diags(1.0 / M)
    A = sp.bmat([[None, sp.eye(n)], [-Minv @ S, -sp.diags(a_nodes * wall_w / M)]],
                format="csr")
    G = sp.block_diag([S, sp.diags(M)], format="csr")
    constant_mode = not np.any(b_nodes) and k_shift == 0.0 and not (
        grid.ny and grid.cap_bc is CapBC.DIRICHLET)
    proj = None
    if constant_mode:
        c = np.concatenate([np.ones(n), np.zeros(n)])
        ell = np.concatenate([a_nodes * wall_w, M])
        if not np.any(a_nodes):
            ell = np.concatenate([M, np.zeros(n)])
        proj = KernelProjector(c, ell)
    system = GeneratorSystem(grid, damping, A, G, K, M, wall_w, a_nodes, b_nodes, wall_idx, proj,
                             k_shift)
    if check:
        defect = dissipativity_defect(system, n_samples=8, rng=np.random.default_rng(0))
        if defect > 1e-12:
            raise InvariantViolation(f"discrete dissipativity identity fails by {defect:.3e}")
    return system


def assemble_generator_2d(grid, damping, check=True):
    """Generator on ``x`` (or ``r``) times ``y`` with impedance walls and the given caps."""
    if not grid.ny:
        raise AssemblyError("assemble_generator_2d needs ny > 0")
    Kx, mx, wall = transverse_operators(grid)
    Ky, my = longitudinal_operators(grid)
    nyn = my.size
    if damping.a.shape != (grid.n_walls, nyn):
        raise AssemblyError(f"damping shape {damping.a.shape} does not match walls "
                            f"({grid.n_walls}, {nyn})")
    K = (sp.kron(Kx, sp.diags(my)) + sp.kron(sp.diags(mx), Ky)).tocsr()
    M = np.kron(mx, my)
    wall_w = np.kron(wall, my)
    a_nodes = np.zeros(M.size)
    b_nodes = np.zeros(M.size)
    wall_rows = np.flatnonzero(wall)
    for iw, row in enumerate(wall_rows):
        sl = slice(row * nyn, (row + 1) * nyn)
        a_nodes[sl] = damping.a[iw]
        b_nodes[sl] = damping.b[iw]
    wall_idx = np.flatnonzero(wall_w)
    return _build_system(grid, damping, K, M, wall_w, a_nodes, b_nodes, wall_idx, check=check)


def assemble_transverse(grid, damping, k=0.0, check=True):
    """One longitudinal Fourier block: transverse operator shifted by ``k**2 M``."""
    K, m, wall = transverse_operators(grid)
    K = (K + sp.diags(k * k * m)).tocsr()
    a_nodes = _wall_values_1d(grid, damping.a[:, 0])
    b_nodes = _wall_values_1d(grid, damping.b[:, 0])
    return _build_system(grid, damping, K, m, wall, a_nodes, b_nodes, np.flatnonzero(wall),
                         k_shift=float(k), check=check)


def dissipativity_defect(system, n_samples=200, rng=None):
    """Max over random complex ``w`` of ``|Re<Aw,w>_G + sum a|v|^2 w| / ||w||_G^2``."""
    rng = np.random.default_rng() if rng is None else rng
    worst = 0.0
    for _ in range(n_samples):
        w = rng.standard_normal(2 * system.n) + 1j * rng.standard_normal(2 * system.n)
        nrm2 = system.inner(w, w).real
        val = system.inner(system.A @ w, w).real + system.dissipation(w)
        worst = max(worst, abs(val) / nrm2)
    return worst


# -- per-mode quadratic eigenvalue problem ---------------------------------------

def mode_qep_matrices(grid, k, a=1.0, b=0.0):
    """Matrices of ``(K + k^2 M + B_b) u - i lam B_a u - lam^2 M u = 0``."""
    K, m, wall = transverse_operators(grid)
    Kt = K.toarray() + np.diag(k * k * m + b * wall)
    return Kt, m, a * wall


def assemble_mode_qep(grid, k, a=1.0, b=0.0, return_vectors=False):
    """All ``2 (nx+1)`` eigenvalues ``lam`` of the transverse QEP, sorted by ``|Im lam|``.

    Companion doubling with ``v = lam u`` gives the linear problem
    ``lam [u, v] = [[0, I], [M^-1 Kt, -i M^-1 B_a]] [u, v]``.
    """
    if grid.ny:
        raise AssemblyError("the per-mode QEP acts on a transverse grid (ny = 0)")
    Kt, m, aw = mode_qep_matrices(grid, k, a, b)
    n = m.size
    L = np.zeros((2 * n, 2 * n), dtype=complex)
    L[:n, n:] = np.eye(n)
    L[n:, :n] = Kt / m[:, None]
    L[n:, n:] = np.diag(-1j * aw / m)
    try:
        if return_vectors:
            vals, vecs = la.eig(L)
        else:
            vals = la.eigvals(L)
    except la.LinAlgError as exc:
        raise EigenSolverError(f"QEP eigensolve failed; cond(L) ~ {np.linalg.cond(L):.3e}") from exc
    order = np.lexsort((vals.real, np.abs(vals.imag)))
    if return_vectors:
        return vals[order], vecs[:n, order]
    return vals[order]


def nearest(values, target):
    values = np.asarray(values)
    return values[np.argmin(np.abs(values - target))]


def richardson_order(values):
    """Observed order from three values on grids refined by 2: ``log2(|e1| / |e2|)``."""
    v1, v2, v3 = values
    return math.log2(abs(v1 - v2) / abs(v2 - v3))


# -- spectra -------------------------------------------------------------------

def _drop_kernel(vals, system):
    """Remove the eigenvalue(s) carried by the constant pair (two when undamped)."""
    if system.kernel_projector is None:
        return vals
    count = 1 if np.any(system.a_nodes) else 2
    idx = np.argsort(np.abs(vals))[:count]
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.any(np.abs(vals[idx]) > 1e-6 * scale):
        raise InvariantViolation(f"expected {count} eigenvalue(s) near 0, found {vals[idx]}")
    return np.delete(vals, idx)


def generator_spectrum(system, method="dense"):
    """Eigenvalues of ``A`` on the energy space, sorted by imaginary part.

    ``method="blocks"`` uses :meth:`GeneratorSystem.ymode_blocks` and is exact
    for y-independent damping; ``"dense"`` diagonalises the assembled matrix.
    """
    if method == "blocks":
        vals = np.concatenate([la.eigvals(A) for _, A, _ in system.ymode_blocks()])
    else:
        if 2 * system.n > DENSE_LIMIT:
            raise EnvelopeExceeded(f"2N = {2 * system.n} exceeds the dense limit {DENSE_LIMIT}")
        try:
            vals = la.eigvals(system.A.toarray())
        except la.LinAlgError as exc:
            raise EigenSolverError(str(exc)) from exc
        vals = _drop_kernel(vals, system)
    return vals[np.lexsort((vals.real, vals.imag))]


def block_spectra(system):
    """``[(kappa_j, eigenvalues_j)]`` for each y-Fourier block."""
    return [(kap, la.eigvals(A)) for kap, A, _ in system.ymode_blocks()]


def damping_branch(system, n=1, mu_min=5.0):
    """Eigenvalues of the ``n``-th transverse branch, one per y-Fourier block.

    In the block with discrete wavenumber squared ``kappa`` the branch member is
    the eigenvalue with ``Im > 0`` nearest ``sqrt(kappa + (n pi)**2)``.  Blocks
    with ``Im < mu_min`` are dropped.  Returns ``(sqrt(kappa), eigenvalues)``.
    """
    ks, evs = [], []
    for kap, vals in block_spectra(system):
        vals = vals[vals.imag > 0]
        if not vals.size:
            continue
        target = math.sqrt(kap + (n * math.pi) ** 2)
        ev = vals[np.argmin(np.abs(vals.imag - target))]
        if ev.imag >= mu_min:
            ks.append(math.sqrt(kap))
            evs.append(ev)
    order = np.argsort(ks)
    return np.array(ks)[order], np.array(evs)[order]


def branch_decay_fit(system, n=1, mu_min=5.0):
    """Log-log slope of ``|Re|`` against ``Im`` along :func:`damping_branch`."""
    _, evs = damping_branch(system, n, mu_min)
    return loglog_fit(evs.imag, -evs.real)


def conjugate_mismatch(vals):
    """Largest distance from an eigenvalue's conjugate to the spectrum."""
    vals = np.asarray(vals)
    scale = max(1.0, float(np.abs(vals).max()))
    worst = 0.0
    for v in vals:
        worst = max(worst, float(np.min(np.abs(vals - np.conj(v)))))
    return worst / scale


# -- resolvent -----------------------------------------------------------------

@dataclass
class ResolventScan:
    lambdas: np.ndarray
    norms: np.ndarray
    peak_locations: np.ndarray
    peak_values: np.ndarray
    singular: np.ndarray

    def csv_rows(self):
        return [(float(x), float(r)) for x, r in zip(self.lambdas, self.norms)]


def _energy_similarity(A, G):
    R = la.cholesky(G)
    return R @ A @ la.inv(R)


def _smin_dense(T, lams):
    n = T.shape[0]
    eye = np.eye(n)
    out = np.empty(len(lams))
    chunk = max(1, int(4e6 // (n * n)))
    for i in range(0, len(lams), chunk):
        ls = np.asarray(lams[i:i + chunk])
        mats = T[None] - 1j * ls[:, None, None] * eye[None]
        out[i:i + chunk] = np.linalg.svd(mats, compute_uv=False)[:, -1]
    return out


def _energy_blocks(system):
    """``(A, G)`` pairs on the energy space: y-mode blocks when separable, else one dense pair."""
    if system.grid.ny and system.damping.y_independent and system.A.shape[0] > 0:
        return [(A, G) for _, A, G in system.ymode_blocks()]
    A = system.A.toarray()
    G = system.G.toarray()
    if system.kernel_projector is not None:
        A, G = _restrict_constant(A, G, system.M, system.a_nodes * system.wall_weights)
    if A.shape[0] > 4000:
        raise EnvelopeExceeded("dense energy-space solves limited to 2N <= 4000 for "
                               "non-separable damping")
    return [(A, G)]


def gram_condition(system):
    """Spectral condition number of the energy Gram matrix on the energy space.

    The blocks are G-orthogonal, so the extreme eigenvalues over all blocks
    are those of the full restricted Gram matrix.
    """
    ev = np.concatenate([la.eigvalsh(G) for _, G in _energy_blocks(system)])
    return float(ev.max() / ev.min())


class _Resolvent:
    """Smallest G-singular value of ``A - i lam`` for one assembled system."""

    def __init__(self, system):
        self.mats = [_energy_similarity(A, G) for A, G in _energy_blocks(system)]

    def per_block(self, lams):
        return np.array([_smin_dense(T, lams) for T in self.mats])

    def smin(self, lam):
        return float(self.per_block([lam]).min())


def resolvent_scan(system, lambda_grid, refine=True):
    """``r(lam) = ||(A - i lam)^-1||_G = 1 / sigma_min`` over a real grid.

    Grid points with ``sigma_min < 1e-12`` are moved by half a grid step and
    flagged.  Local maxima are refined by a bounded 1D search.
    """
    lams = np.array(lambda_grid, dtype=float)
    step = float(np.min(np.diff(lams))) if lams.size > 1 else 1.0
    res = _Resolvent(system)
    S = res.per_block(lams)
    smin = S.min(axis=0)
    singular = smin < 1e-12
    if singular.any():
        lams[singular] += 0.5 * step
        S[:, singular] = res.per_block(lams[singular])
        smin = S.min(axis=0)
    norms = 1.0 / smin
    idx, _ = find_peaks(norms)
    locs, vals = [], []
    for i in idx:
        if not refine:
            locs.append(lams[i])
            vals.append(norms[i])
            continue
        j = int(np.argmin(S[:, i]))
        opt = minimize_scalar(lambda x, T=res.mats[j]: _smin_dense(T, [x])[0],
                              bounds=(lams[i - 1], lams[i + 1]), method="bounded",
                              options={"xatol": 1e-9})
        locs.append(float(opt.x))
        vals.append(1.0 / res.smin(float(opt.x)))
    return ResolventScan(lams, norms, np.array(locs), np.array(vals), singular)


def peak_envelope(scan):
    """Running-maximum (record) peaks of a scan: ``(locations, values)``."""
    locs, vals = scan.peak_locations, scan.peak_values
    keep = []
    best = -np.inf
    for i, v in enumerate(vals):
        if v >= best:
            keep.append(i)
            best = v
    keep = np.array(keep, dtype=int)
    return locs[keep], vals[keep]


def peak_envelope_fit(scan):
    locs, vals = peak_envelope(scan)
    return loglog_fit(locs, vals)


# -- interior impedance problem --------------------------------------------------

COND_LIMIT = 1e12


def factor_stationary(system, lam):
    """LU of the impedance operator; near-singular operators raise SingularSystem.

    The 1-norm condition number is estimated with ``onenormest`` on the
    inverse, using the factorisation for both products.
    """
    op = system.stationary_operator(lam)
    try:
        lu = spla.splu(op)
    except RuntimeError as exc:
        raise SingularSystem(f"impedance operator singular at lambda={lam}: {exc}") from exc
    inv = spla.LinearOperator(op.shape, matvec=lu.solve, dtype=complex,
                              rmatvec=lambda x: lu.solve(x, trans="H"))
    cond = spla.onenormest(op) * spla.onenormest(inv)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystem(f"impedance operator numerically singular at lambda={lam} "
                             f"(condition estimate {cond:.3e})")
    return op, lu


def impedance_solve(system, lam, f, g=None):
    """Solve ``(Delta_h - lam^2) u = f`` with ``i d_n u + a lam u + i b u = g`` on the walls.

    Returns ``(u, Q)`` with
    ``Q = (||u||^2 + ||grad u||^2/(1+lam^2)) / ((1+lam^2)||f||^2 + ||g||_wall^2)``.
    ``f`` is nodal, ``g`` is given on ``system.wall_index_set`` and may be 2D
    (one column per right-hand side).
    """
    if abs(lam) < 0.5:
        raise ConfigError(f"|lambda| must be >= 0.5, got {lam}")
    f = np.asarray(f, dtype=complex)
    single = f.ndim == 1
    F = f[:, None] if single else f
    rhs = system.M[:, None] * F
    if g is not None:
        g = np.asarray(g, dtype=complex)
        Gm = g[:, None] if g.ndim == 1 else g
        wall = system.wall_index_set
        rhs[wall] -= 1j * system.wall_weights[wall, None] * Gm
        g_norm2 = np.sum(system.wall_weights[wall, None] * np.abs(Gm) ** 2, axis=0)
    else:
        g_norm2 = np.zeros(F.shape[1])
    op, lu = factor_stationary(system, lam)
    U = lu.solve(rhs)
    scale = np.abs(rhs).max() if np.abs(rhs).max() > 0 else 1.0
    resid = np.abs(op @ U - rhs).max()
    if resid > 1e-8 * (np.abs(op).max() * np.abs(U).max() + scale):
        raise SingularSystem(f"impedance solve inaccurate at lambda={lam} (residual {resid:.3e})")
    u_l2 = np.sum(system.M[:, None] * np.abs(U) ** 2, axis=0)
    grad2 = np.real(np.sum(np.conj(U) * (system.K @ U), axis=0))
    f_l2 = np.sum(system.M[:, None] * np.abs(F) ** 2, axis=0)
    den = (1 + lam * lam) * f_l2 + g_norm2
    num = u_l2 + grad2 / (1 + lam * lam)
    Q = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    if single:
        return U[:, 0], float(Q[0])
    return U, Q


def random_unit_data(system, n, rng):
    """``n`` random nodal fields with unit discrete L2 norm (columns)."""
    F = rng.standard_normal((system.n, n)) + 1j * rng.standard_normal((system.n, n))
    F /= np.sqrt(np.sum(system.M[:, None] * np.abs(F) ** 2, axis=0))
    return F


def quotient_sup(system, lam, n_probe=50, n_power=2, rng=None):
    """Randomised estimate of ``sup_f Q(lam, f)`` with ``g = 0``.

    ``n_probe`` random data seed a subspace iteration on the solution map
    ``f -> u``; alternating solves with the operator and its adjoint (in the
    quotient's norms) concentrate the probes on the most amplified data, and a
    Rayleigh-Ritz step on the final span returns the largest quotient in it.
    """
    rng = np.random.default_rng() if rng is None else rng
    if abs(lam) < 0.5:
        raise ConfigError(f"|lambda| must be >= 0.5, got {lam}")
    scale = 1.0 + lam * lam
    _, lu = factor_stationary(system, lam)
    M = system.M

    def out_norm(U):
        return M[:, None] * U + (system.K @ U) / scale

    X = random_unit_data(system, n_probe, rng)
    for _ in range(n_power):
        U = lu.solve(M[:, None] * X)
        X = lu.solve(out_norm(U), trans="H") / scale
        X, _ = np.linalg.qr(np.sqrt(M)[:, None] * X)
        X = X / np.sqrt(M)[:, None]
    U = lu.solve(M[:, None] * X)
    num = U.conj().T @ out_norm(U)
    den = scale * (X.conj().T @ (M[:, None] * X))
    vals = la.eigh(0.5 * (num + num.conj().T), 0.5 * (den + den.conj().T), eigvals_only=True)
    return float(vals[-1])


def quotient_sweep(system, lambdas, n_trials=50, seed=0, method="sup"):
    """Per-``lambda`` quotient from ``n_trials`` random unit data (``g = 0``).

    ``method="raw"`` keeps the largest quotient among the raw draws;
    ``method="sup"`` feeds the same number of draws to :func:`quotient_sup`.
    """
    rng = np.random.default_rng(seed)
    out = []
    for lam in lambdas:
        if method == "sup":
            out.append(quotient_sup(system, float(lam), n_trials, rng=rng))
        else:
            _, Q = impedance_solve(system, float(lam), random_unit_data(system, n_trials, rng))
            out.append(float(np.max(Q)))
    return np.array(out)
