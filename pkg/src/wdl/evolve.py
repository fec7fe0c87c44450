"""Implicit-midpoint time stepping of ``w' = A w`` with an exact discrete energy balance.

For a G-dissipative ``A`` the midpoint (Crank-Nicolson) step satisfies

    E_{n+1} - E_n = -dt * D(w_{n+1/2}),   w_{n+1/2} = (w_n + w_{n+1}) / 2,

where ``D`` is the boundary dissipation ``sum_wall a |v|^2``.  The scheme is
therefore contractive for every ``dt > 0``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, InsufficientData, NoConvergence, SingularSystem
from .fitting import RateFit, loglog_fit
from .modes import transverse_profile


@dataclass
class EnergyTrace:
    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    initial_norms: tuple
    dt: float
    balance_defect: np.ndarray = field(default=None, repr=False)
    final_state: np.ndarray = field(default=None, repr=False)

    @property
    def relative_balance(self):
        """Largest per-step ``|E_{n+1} - E_n + dt D_{n+1/2}| / E_0``."""
        if self.balance_defect is None or not self.balance_defect.size:
            return 0.0
        return float(np.max(np.abs(self.balance_defect)) / self.energy[0])

    @property
    def relative_drift(self):
        return float(np.max(np.abs(self.energy - self.energy[0])) / self.energy[0])

    def csv_rows(self):
        return [(float(t), float(e), float(d))
                for t, e, d in zip(self.times, self.energy, self.dissipation)]


def initial_norms(system, w):
    """Discrete ``(||u||_{H^2}, ||v||_{H^1})`` with ``Delta_h u = M^-1 K u``."""
    u, v = system.split(w)
    M, K = system.M, system.K
    lap = (K @ u) / M
    h2 = np.sum(M * np.abs(u) ** 2) + np.real(np.vdot(u, K @ u)) + np.sum(M * np.abs(lap) ** 2)
    h1 = np.sum(M * np.abs(v) ** 2) + np.real(np.vdot(v, K @ v))
    return (math.sqrt(h2), math.sqrt(h1))


def evolve(system, w0, T, dt, record_every=1):
    """Integrate from ``w0`` to time ``T`` with step ``dt``; one LU factorisation is reused.

    Every step records its energy balance defect; samples are kept every
    ``record_every`` steps.  The dissipation column holds the midpoint flux
    ``D_{n+1/2}`` of the step that ends at that sample (0 for the first row).
    """
    w = np.asarray(w0)
    if not np.all(np.isfinite(w)) or not np.any(w):
        raise SingularSystem("initial state must be finite and nonzero")
    if dt <= 0 or T <= 0:
        raise ConfigError("T and dt must be positive")
    n_steps = int(round(T / dt))
    A = system.A.tocsc()
    eye = sp.identity(A.shape[0], format="csc")
    try:
        lu = spla.splu((eye - 0.5 * dt * A).tocsc())
    except RuntimeError as exc:
        raise SingularSystem(f"factorisation of I - dt/2 A failed: {exc}") from exc
    dtype = np.result_type(w.dtype, float)
    w = w.astype(dtype)
    times, energy, diss = [0.0], [system.energy(w)], [0.0]
    defects = np.empty(n_steps)
    e_prev = energy[0]
    if np.iscomplexobj(w):
        def solve(rhs):
            return lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)
    else:
        solve = lu.solve
    for n in range(n_steps):
        w_next = solve(w + 0.5 * dt * (A @ w))
        if not np.all(np.isfinite(w_next)):
            raise NoConvergence(f"non-finite state at step {n + 1}", last=n + 1)
        d_mid = system.dissipation(0.5 * (w + w_next))
        e_next = system.energy(w_next)
        defects[n] = e_next - e_prev + dt * d_mid
        w, e_prev = w_next, e_next
        if (n + 1) % record_every == 0 or n + 1 == n_steps:
            times.append((n + 1) * dt)
            energy.append(e_next)
            diss.append(d_mid)
    return EnergyTrace(np.array(times), np.array(energy), np.array(diss),
                       initial_norms(system, w0), dt, defects, w)


# -- initial data ----------------------------------------------------------------

def mode_initial_data(system, root):
    """Pair ``(u, -i lam u)`` from the transverse eigenfunction of ``root``.

    On a 2D strip the profile is multiplied by ``cos(k y)``; on a transverse
    system (one Fourier block) the profile is used as is.
    """
    grid = system.grid
    phi = transverse_profile(root, grid.x)
    if grid.ny:
        u = np.outer(phi, np.cos(round(root.k_or_eta) * grid.y)).ravel()
    else:
        u = phi
    return np.concatenate([u, -1j * root.lam * u])


def smooth_initial_data(system, kx=1, ky=2):
    """A real separable bump; the discrete domain needs no wall correction."""
    grid = system.grid
    x = grid.x
    px = np.cos(math.pi * kx * x) + 0.5 * x * x
    if grid.ny:
        py = np.cos(ky * grid.y) + 0.3
        u = np.outer(px, py).ravel()
    else:
        u = px
    return np.concatenate([u, np.zeros_like(u)])


# -- fits ------------------------------------------------------------------------

def local_exponents(times, energy, n_segments=4):
    """Log-log slopes of ``sqrt(E)`` on consecutive equal sub-windows."""
    t = np.asarray(times)
    y = np.sqrt(np.asarray(energy))
    edges = np.linspace(0, t.size, n_segments + 1).astype(int)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo >= 2:
            out.append(loglog_fit(t[lo:hi], y[lo:hi]).exponent)
    return np.array(out)


def decay_fit(trace, window):
    """Least-squares slope of ``log sqrt(E)`` against ``log t`` inside ``window``.

    The fit is flagged ``exponential_regime`` when the local exponent drifts
    monotonically downward by more than 0.2 across the window, which is the
    log-log signature of ``exp(-c t)`` decay.
    """
    t_lo, t_hi = window
    t = np.asarray(trace.times)
    e = np.asarray(trace.energy)
    sel = (t >= t_lo) & (t <= t_hi) & (t > 0)
    if sel.sum() < 20:
        raise InsufficientData(f"window {window} holds {int(sel.sum())} samples, need 20")
    if np.any(e[sel] <= 1e-14 * e[0]):
        raise InsufficientData("energy underflows inside the fit window")
    fit = loglog_fit(t[sel], np.sqrt(e[sel]))
    fit.window = (float(t[sel][0]), float(t[sel][-1]))
    local = local_exponents(t[sel], e[sel])
    steps = np.diff(local)
    if local.size >= 3 and np.all(steps < 0) and local[0] - local[-1] > 0.2:
        fit.flags = tuple(fit.flags) + ("exponential_regime",)
    return fit


def efolding_time(trace, window=None):
    """Time for ``E`` to fall by ``e``, from a linear fit of ``log E``."""
    t = np.asarray(trace.times)
    e = np.asarray(trace.energy)
    sel = np.ones(t.size, bool) if window is None else (t >= window[0]) & (t <= window[1])
    slope = np.polyfit(t[sel], np.log(e[sel]), 1)[0]
    if slope >= 0:
        return math.inf
    return -1.0 / slope


# -- closed-form mode oracle -------------------------------------------------------

def mode_energy(root, t, e0=1.0):
    """``E_k(t) = E_k(0) exp(2 Im(lam_k) t)`` for a single exact mode."""
    return e0 * np.exp(2.0 * root.lam.imag * np.asarray(t, dtype=float))


def normalized_mode_energy0(root):
    """Initial energy of mode ``root`` scaled to unit ``H^2 x H^1`` norm.

    For an eigenpair ``(u, -i lam u)`` both ``||u||_{H^2}`` and ``||v||_{H^1}``
    scale like ``|lam|^2 ||u||`` while the energy scales like ``|lam|^2 ||u||^2``,
    so the normalised energy is ``|lam|^-2``.
    """
    return 1.0 / abs(root.lam) ** 2


def envelope_trace(roots, times):
    """``sup_k sqrt(E_k(t))`` over unit-data modes, packaged as an EnergyTrace."""
    times = np.asarray(times, dtype=float)
    stack = np.array([mode_energy(r, times, normalized_mode_energy0(r)) for r in roots])
    env = stack.max(axis=0)
    return EnergyTrace(times, env, np.zeros_like(env), (1.0, 1.0), float("nan"))


def superposition_trace(roots, times):
    """Energy of the sum of unit-data modes (orthogonal in the energy space)."""
    times = np.asarray(times, dtype=float)
    stack = np.array([mode_energy(r, times, normalized_mode_energy0(r)) for r in roots])
    total = stack.sum(axis=0)
    return EnergyTrace(times, total, np.zeros_like(total), (1.0, 1.0), float("nan"))


def lifetime_ratio(t_short, t_long):
    return t_long / t_short


__all__ = ["EnergyTrace", "RateFit", "evolve", "decay_fit", "efolding_time", "envelope_trace",
           "superposition_trace", "mode_initial_data", "smooth_initial_data", "initial_norms",
           "mode_energy", "normalized_mode_energy0", "local_exponents", "lifetime_ratio"]
