import math

import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from wdl import discretize as dz
from wdl.discretize import DampingProfile, GridSpec
from wdl.errors import AssemblyError, ConfigError, EnvelopeExceeded, SingularSystem
from wdl.modes import solve_cap_mode, strip_mode


def strip2d(nx=24, ny=24, a=1.0, b=0.0, cap_bc="Neumann"):
    grid = GridSpec("Strip2D", nx, ny, cap_bc)
    return dz.assemble_generator_2d(grid, DampingProfile.constant(grid, a, b))


@pytest.fixture(scope="module")
def strip40():
    return strip2d(40, 40, 1.0, 0.0)


# -- types ------------------------------------------------------------------------

def test_grid_validation():
    with pytest.raises(ConfigError):
        GridSpec("Strip2D", 8, 32)
    with pytest.raises(ConfigError):
        GridSpec("Strip2D", 32, 0)
    g = GridSpec("Strip2D", 32, 64)
    assert g.hx == 1 / 32 and abs(g.hy - 2 * math.pi / 64) < 1e-15


def test_damping_bounds_enforced():
    g = GridSpec("Strip2D", 16, 16)
    with pytest.raises(ConfigError):
        DampingProfile(np.full((2, 17), 2.0), np.zeros((2, 17)), 0.5, 1.5, 0.0, 0.0)
    with pytest.raises(ConfigError):
        DampingProfile(np.ones((2, 17)), -np.ones((2, 17)), 1.0, 1.0, 0.0, 1.0)
    prof = DampingProfile.from_functions(g, lambda w, y: 1 + 0.5 * math.sin(y) ** 2)
    assert prof.a0 >= 1 and prof.a1 <= 1.5 and not prof.y_independent


def test_damping_shape_mismatch():
    g = GridSpec("Strip2D", 16, 16)
    other = GridSpec("Strip2D", 16, 32)
    with pytest.raises(AssemblyError):
        dz.assemble_generator_2d(g, DampingProfile.constant(other, 1.0))


# -- dissipativity and Gram ------------------------------------------------------------

def test_dissipativity_identity_a1(strip40):
    assert dz.dissipativity_defect(strip40, 200, np.random.default_rng(1)) <= 1e-12


def test_undamped_generator_is_skew():
    s = strip2d(40, 40, 0.0, 0.0)
    rng = np.random.default_rng(2)
    for _ in range(50):
        w = rng.standard_normal(2 * s.n) + 1j * rng.standard_normal(2 * s.n)
        assert abs(s.inner(s.A @ w, w).real) <= 1e-12 * s.inner(w, w).real


def test_gram_positive_definite_with_b():
    s = strip2d(32, 32, 1.0, 1.0)
    G = s.G.toarray()
    assert np.allclose(G, G.T)
    assert la.eigvalsh(G).min() > 0
    assert s.kernel_projector is None


def test_gram_kernel_is_constant_pair_without_b():
    s = strip2d(16, 16, 1.0, 0.0)
    ev, vec = la.eigh(s.G.toarray())
    assert abs(ev[0]) < 1e-10 and ev[1] > 1e-6
    kp = s.kernel_projector
    assert kp is not None
    # the constraint functional is preserved by A
    rng = np.random.default_rng(0)
    w = rng.standard_normal(2 * s.n)
    assert abs(kp.ell @ (s.A @ w)) < 1e-10 * np.abs(s.A @ w).max()
    assert abs(kp.ell @ kp.apply(w)) < 1e-10 * np.abs(w).max()


@given(st.floats(0.1, 5.0), st.floats(0.0, 3.0))
@settings(max_examples=10, deadline=None)
def test_dissipativity_for_random_damping(a, b):
    g = GridSpec("Strip2D", 16, 16)
    prof = DampingProfile.from_functions(g, lambda w, y: a * (1 + 0.3 * math.cos(y + w)),
                                         lambda w, y: b * (1 + 0.2 * math.sin(2 * y)))
    s = dz.assemble_generator_2d(g, prof)
    assert dz.dissipativity_defect(s, 20, np.random.default_rng(0)) <= 1e-12


# -- caps -------------------------------------------------------------------------------

def test_dirichlet_caps_vanish():
    s = strip2d(16, 16, 1.0, 0.0, "Dirichlet")
    rng = np.random.default_rng(0)
    u = rng.standard_normal(s.n)
    arr = s.to_grid(u)
    assert arr.shape == (17, 17)
    assert np.all(arr[:, 0] == 0) and np.all(arr[:, -1] == 0)
    assert s.kernel_projector is None


def test_periodic_rows_sum_like_interior():
    g = GridSpec("Strip2D", 16, 16, "Periodic")
    Ky, my = dz.longitudinal_operators(g)
    sums = np.asarray(Ky.sum(axis=1)).ravel()
    assert np.allclose(sums, 0)
    assert Ky[0, 15] == Ky[0, 1] == Ky[5, 4]


def test_transverse_operator_row_sums():
    for geo in ("Strip1D", "RadialDisk"):
        K, m, wall = dz.transverse_operators(GridSpec(geo, 32))
        assert np.allclose(np.asarray(K.sum(axis=1)).ravel(), 0)


def test_radial_axis_row_is_lhopital_stencil():
    g = GridSpec("RadialDisk", 32, d=2)
    K, m, _ = dz.transverse_operators(g)
    h = g.hx
    # -u'' - u'/r -> -2 u''(0) at the axis, i.e. 2 d (u0 - u1) / h^2 with d = 2
    assert abs(K[0, 0] / m[0] - 4 / h ** 2) < 1e-8 / h ** 2
    assert abs(K[0, 1] / m[0] + 4 / h ** 2) < 1e-8 / h ** 2


def test_radial_power_flag():
    a = GridSpec("RadialDisk", 64, d=3)
    b = GridSpec("RadialDisk", 64, d=3, radial_power=2)
    c = GridSpec("RadialDisk", 64, d=2, radial_power=2)
    assert a.power == 2 and b.power == 2 and c.power == 2
    assert GridSpec("RadialDisk", 64, d=2).power == 1


# -- QEP ----------------------------------------------------------------------------

def test_qep_strip_contains_transcendental_root():
    lam = strip_mode(40.0).lam
    ev = dz.assemble_mode_qep(GridSpec("Strip1D", 400), 40.0, a=1.0)
    assert len(ev) == 2 * 401
    assert abs(dz.nearest(ev, lam) - lam) < 5 * abs(lam) ** 4 * (1 / 400) ** 2 / 12 / abs(lam)


def test_qep_undamped_is_real():
    ev = dz.assemble_mode_qep(GridSpec("Strip1D", 400), 40.0, a=0.0)
    assert np.max(np.abs(ev.imag)) <= 1e-10 * np.max(np.abs(ev))


def test_qep_sorted_by_imaginary_magnitude():
    ev = dz.assemble_mode_qep(GridSpec("Strip1D", 64), 10.0, a=1.0)
    assert np.all(np.diff(np.abs(ev.imag)) >= -1e-12)


def test_qep_disk_refinement_order():
    lam = solve_cap_mode(0, 1, 60.0).lam
    lam = -np.conj(lam)
    vals = [dz.nearest(dz.assemble_mode_qep(GridSpec("RadialDisk", n), 60.0), lam)
            for n in (100, 200, 400)]
    assert abs(dz.richardson_order(vals) - 2) < 0.3


def test_qep_rejects_2d_grid():
    with pytest.raises(AssemblyError):
        dz.assemble_mode_qep(GridSpec("Strip2D", 16, 16), 5.0)


def test_qep_matches_transverse_generator():
    g = GridSpec("Strip1D", 64)
    ev = dz.assemble_mode_qep(g, 7.0, a=1.0)
    sys = dz.assemble_transverse(g, DampingProfile.constant(g, 1.0), k=7.0)
    gen = la.eigvals(sys.A.toarray())
    # generator eigenvalue -i lam for every QEP eigenvalue lam
    for lam in ev[:20]:
        assert np.min(np.abs(gen + 1j * lam)) < 1e-8 * max(1, abs(lam))


# -- spectrum ---------------------------------------------------------------------

def test_spectrum_damped(strip40):
    ev = dz.generator_spectrum(strip40)
    assert ev.size == 2 * strip40.n - 1
    assert ev.real.max() < 0
    assert dz.conjugate_mismatch(ev) < 1e-10


def test_blocks_match_dense():
    s = strip2d(20, 20)
    dense = np.sort_complex(dz.generator_spectrum(s))
    blocks = np.sort_complex(dz.generator_spectrum(s, "blocks"))
    assert np.max(np.abs(dense - blocks)) < 1e-9


def test_undamped_spectrum_imaginary():
    s = strip2d(20, 20, 0.0, 0.0)
    ev = dz.generator_spectrum(s)
    assert np.max(np.abs(ev.real)) <= 1e-10 * max(1, np.abs(ev).max())


def test_low_modes_match_strip_roots(strip40):
    # each y-block is the strip problem at the block's discrete wavenumber; the
    # generator eigenvalue of the mirrored root -conj(lam) is Im lam + i Re lam
    for kap, vals in dz.block_spectra(strip40)[10:16]:
        lam = strip_mode(math.sqrt(kap)).lam
        err = np.min(np.abs(vals - 1j * np.conj(lam)))
        assert err < abs(lam) ** 3 * strip40.grid.hx ** 2 / 4


def test_branch_scaling(strip40):
    fit = dz.branch_decay_fit(strip40)
    assert abs(fit.exponent + 2) <= 0.3


def test_dense_envelope_limit(monkeypatch):
    s = strip2d(16, 16)
    monkeypatch.setattr(dz, "DENSE_LIMIT", 100)
    with pytest.raises(EnvelopeExceeded):
        dz.generator_spectrum(s)


# -- resolvent ------------------------------------------------------------------------

def test_resolvent_lower_bounds_distance():
    s = strip2d(16, 16)
    ev = dz.generator_spectrum(s)
    lams = np.linspace(3, 20, 60)
    scan = dz.resolvent_scan(s, lams, refine=False)
    for lam, r in zip(scan.lambdas, scan.norms):
        dist = np.min(np.abs(ev - 1j * lam))
        assert 1 / r <= dist + 1e-10


def test_resolvent_peaks_align_with_spectrum():
    s = strip2d(24, 24)
    ev = dz.generator_spectrum(s)
    step = 0.05
    scan = dz.resolvent_scan(s, np.arange(5, 15, step))
    # sharp peaks (weakly damped eigenvalues) sit on an eigenfrequency; broad
    # peaks of strongly damped ones are pulled around by their neighbours
    sharp = scan.peak_locations[scan.peak_values > 2.0]
    assert sharp.size > 5
    weak = ev[np.abs(ev.real) < 1.0]
    for loc in sharp:
        assert np.min(np.abs(np.abs(weak.imag) - loc)) <= step


def test_resolvent_dense_path_agrees_with_blocks():
    g = GridSpec("Strip2D", 16, 16)
    s = dz.assemble_generator_2d(g, DampingProfile.constant(g, 1.0))
    blocks = dz._Resolvent(s).smin(7.3)
    s2 = dz.assemble_generator_2d(g, DampingProfile.constant(g, 1.0))
    s2.damping = DampingProfile.from_functions(g, lambda w, y: 1.0)
    s2.damping.a[0, 0] = 1.0 + 1e-15  # not exactly y-independent: forces the dense path
    dense = dz._Resolvent(s2).smin(7.3)
    assert abs(blocks - dense) < 1e-8


def test_resolvent_singular_flag_on_eigenfrequency():
    g = GridSpec("Strip2D", 16, 16)
    s = dz.assemble_generator_2d(g, DampingProfile.constant(g, 0.0))
    ev = dz.generator_spectrum(s)
    omega = float(np.sort(np.abs(ev.imag))[10])
    lams = np.array([omega - 0.2, omega, omega + 0.2])
    scan = dz.resolvent_scan(s, lams, refine=False)
    assert scan.singular[1] and not scan.singular[0]
    assert np.all(np.isfinite(scan.norms))


def test_peak_envelope_is_running_max():
    scan = dz.ResolventScan(np.arange(5.0), np.ones(5), np.array([1.0, 2, 3, 4]),
                            np.array([1.0, 0.5, 2.0, 3.0]), np.zeros(5, bool))
    locs, vals = dz.peak_envelope(scan)
    assert list(locs) == [1.0, 3.0, 4.0]


# -- impedance -------------------------------------------------------------------------

def test_impedance_zero_data():
    s = strip2d(16, 16)
    u, q = dz.impedance_solve(s, 3.0, np.zeros(s.n))
    assert np.all(u == 0) and q == 0


def test_impedance_residual_and_wall_data():
    s = strip2d(16, 16, 1.0, 0.5)
    rng = np.random.default_rng(3)
    f = rng.standard_normal(s.n)
    g = rng.standard_normal(s.wall_index_set.size)
    u, q = dz.impedance_solve(s, 4.0, f, g)
    op = s.stationary_operator(4.0)
    rhs = (s.M * f).astype(complex)
    rhs[s.wall_index_set] -= 1j * s.wall_weights[s.wall_index_set] * g
    assert np.abs(op @ u - rhs).max() < 1e-10 * np.abs(rhs).max()
    assert 0 < q < np.inf


def test_undamped_restriction_removes_both_constant_modes():
    g = GridSpec("Strip2D", 16, 16)
    s = dz.assemble_generator_2d(g, DampingProfile.constant(g, 0.0))
    ev = dz.generator_spectrum(s)
    assert ev.size == 2 * s.n - 2
    assert np.min(np.abs(ev)) > 0.1
    for _, _, G in s.ymode_blocks()[:2]:
        assert la.eigvalsh(G).min() > 0


def test_impedance_singular_when_undamped_on_eigenfrequency():
    g = GridSpec("Strip1D", 32)
    s = dz.assemble_transverse(g, DampingProfile.constant(g, 0.0), k=0.0)
    # undamped Neumann eigenfrequency of the 1D operator
    lam2 = la.eigh(s.K.toarray(), np.diag(s.M), eigvals_only=True)[3]
    with pytest.raises(SingularSystem):
        dz.impedance_solve(s, math.sqrt(lam2), np.ones(s.n))


def test_impedance_rejects_small_lambda():
    s = strip2d(16, 16)
    with pytest.raises(ConfigError):
        dz.impedance_solve(s, 0.2, np.ones(s.n))


def test_quotient_sup_dominates_raw_draws():
    s = strip2d(16, 32)
    raw = dz.quotient_sweep(s, [6.0, 11.0], 20, seed=4, method="raw")
    sup = dz.quotient_sweep(s, [6.0, 11.0], 20, seed=4, method="sup")
    assert np.all(sup >= raw * (1 - 1e-9))


def test_quotient_sup_matches_dense_operator_norm():
    g = GridSpec("Strip1D", 32)
    s = dz.assemble_transverse(g, DampingProfile.constant(g, 1.0), k=3.0)
    lam = 5.0
    S = s.stationary_operator(lam).toarray()
    T = np.linalg.solve(S, np.diag(s.M))
    scale = 1 + lam * lam
    N = np.diag(s.M) + s.K.toarray() / scale
    num = T.conj().T @ N @ T
    den = scale * np.diag(s.M)
    exact = la.eigh(num, den, eigvals_only=True)[-1]
    est = dz.quotient_sup(s, lam, n_probe=40, rng=np.random.default_rng(0))
    assert abs(est - exact) < 1e-8 * exact


def test_gram_condition_grows_like_inverse_h_squared():
    conds = [dz.gram_condition(strip2d(n, n)) for n in (16, 32, 64)]
    ratios = np.array(conds[1:]) / np.array(conds[:-1])
    assert np.all(np.abs(ratios - 4) < 0.2)


def test_worst_quotient_consistent_between_frequencies():
    g = GridSpec("Strip2D", 32, 256)
    s = dz.assemble_generator_2d(g, DampingProfile.constant(g, 1.0))
    q10, q20 = dz.quotient_sweep(s, [10.0, 20.0], n_trials=50, seed=0)
    assert 0.25 <= q10 / q20 <= 4
