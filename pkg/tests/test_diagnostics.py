import numpy as np
import pytest
from numpy.testing import assert_allclose

from nullwave import diagnostics as dg


# --------------------------------------------------------------------------
# interaction region geometry

def test_membership_basics():
    # inside: on the slab, within the light cone
    assert dg.region_membership(4.0, 4.0, 0.0, 0.0)
    assert dg.region_membership(4.0, 3.5, 1.0, -1.0)
    # outside the slab |t - x| <= 1
    assert not dg.region_membership(4.0, 0.0, 0.0, 0.0)
    # outside the cone r <= t + 1
    assert not dg.region_membership(4.0, 4.5, 4.0, 4.0)


def test_bounding_cylinder_contains_samples():
    t = 64.0
    x_lo, x_hi, rho = dg.region_bounding_cylinder(t)
    x, y, z = dg.sample_region(t, 4000, seed=9).T
    assert np.all((x >= x_lo) & (x <= x_hi))
    assert np.all(y ** 2 + z ** 2 <= rho ** 2 + 1e-9)
    assert np.all(dg.region_membership(t, x, y, z))


def test_volume_grows_linearly():
    # mu(S_t) -> 4 pi t for large t (disc of radius ~ sqrt(2t) x slab width 2)
    est = dg.region_volume(256.0, n_samples=400_000, seed=2)
    assert abs(est.value / (4 * np.pi * 256.0) - 1.0) < 0.05
    assert est.std_error < 0.02 * est.value


def test_volume_monte_carlo_reproducible():
    a = dg.region_volume(16.0, n_samples=100_000, seed=11)
    b = dg.region_volume(16.0, n_samples=100_000, seed=11)
    assert a.value == b.value


def test_cap_measure_scales_like_one_over_t():
    # sigma(S(r = t) cap S_t) ~ 2 pi / t, so t * sigma is nearly constant
    vals = [t * dg.sphere_cap_measure(t, t) for t in (16.0, 256.0)]
    assert_allclose(vals, 2 * np.pi, rtol=0.01)


# --------------------------------------------------------------------------
# commutation fields

def _grids(n=41, span=2.0):
    ax = np.linspace(-span, span, n)
    T, X, Y, Z = np.meshgrid(ax, ax, ax, ax, indexing="ij")
    return (T, X, Y, Z), (ax, ax, ax, ax)


def test_translations_are_plain_derivatives():
    (T, X, Y, Z), axes = _grids()
    F = T ** 2 + 3 * X - Y * Z
    assert_allclose(dg.apply_field("dt", F, axes)[2:-2, 2:-2, 2:-2, 2:-2],
                    (2 * T)[2:-2, 2:-2, 2:-2, 2:-2], atol=1e-9)
    assert_allclose(dg.apply_field("dy", F, axes)[2:-2, 2:-2, 2:-2, 2:-2],
                    (-Z)[2:-2, 2:-2, 2:-2, 2:-2], atol=1e-9)


def test_rotation_annihilates_invariant_function():
    (T, X, Y, Z), axes = _grids()
    F = X ** 2 + Y ** 2  # invariant under rot_xy
    out = dg.apply_field("rot_xy", F, axes)
    assert np.max(np.abs(out[2:-2, 2:-2, 2:-2, 2:-2])) < 1e-9


def test_boost_on_plane_wave_phase():
    # boost_ty (t dy + y dt) applied to u = t - x gives y
    (T, X, Y, Z), axes = _grids()
    out = dg.apply_field("boost_ty", T - X, axes)
    assert_allclose(out[2:-2, 2:-2, 2:-2, 2:-2], Y[2:-2, 2:-2, 2:-2, 2:-2],
                    atol=1e-9)


def test_scaling_field_euler_identity():
    (T, X, Y, Z), axes = _grids()
    F = T * X  # homogeneous of degree 2
    out = dg.apply_field("scaling", F, axes)
    assert_allclose(out[2:-2, 2:-2, 2:-2, 2:-2],
                    (2 * F)[2:-2, 2:-2, 2:-2, 2:-2], atol=1e-8)


def test_commutator_defect_translations():
    (T, X, Y, Z), axes = _grids()
    F = np.sin(T) * np.cos(X) + Y ** 2 * Z
    # translations commute exactly
    defect = dg.commutator_defect("dt", "dx", F, axes)
    inner = defect[4:-4, 4:-4, 4:-4, 4:-4]
    assert np.max(np.abs(inner)) < 1e-6


def test_gamma_string_on_wave_single_boost():
    # boost_ty f(t - x) = y f'(t - x): directional factor c^t - c^x with
    # c = (y, 0, t, 0) reduces to y
    prof_f = lambda u: np.exp(-u ** 2)
    prof_fp = lambda u: -2 * u * np.exp(-u ** 2)
    pts = np.array([[2.0, 1.0, 0.5, -0.3], [10.0, 9.5, 3.0, 1.0]])
    vals = dg.gamma_string_on_wave(("boost_ty",), prof_fp, None, pts)
    expected = pts[:, 2] * prof_fp(pts[:, 0] - pts[:, 1])
    assert_allclose(vals, expected, rtol=1e-10)
    del prof_f


def test_weight_growth_check_bump():
    f1 = lambda u: np.exp(1 - 1 / np.maximum(1 - u ** 2, 1e-300)) * (np.abs(u) < 1)
    rep = dg.weight_growth_check(f1, f1, 1, n_samples=5000)
    assert rep.holds
    assert rep.max_exponent <= rep.bound


# --------------------------------------------------------------------------
# fits

def test_sqrt_exponential_fit_recovers_rate():
    t = np.linspace(1.0, 400.0, 300)
    y = np.exp(0.3 + 1.7 * np.sqrt(t))
    fit = dg.fit_sqrt_exponential(t, y)
    assert_allclose(fit.K, 1.7, rtol=1e-10)
    assert fit.r_squared > 1 - 1e-12


def test_sqrt_exponential_fit_log_input():
    t = np.linspace(1.0, 400.0, 300)
    logy = -2.0 + 0.9 * np.sqrt(t)
    fit = dg.fit_sqrt_exponential(t, logy, log_input=True)
    assert_allclose(fit.K, 0.9, rtol=1e-10)


def test_power_fits_recover_exponents():
    t = np.linspace(0.0, 100.0, 200)
    up = dg.fit_power_law(t, 2.0 * (1 + t) ** 0.5)
    assert_allclose(up.exponent, 0.5, rtol=1e-9)
    down = dg.fit_power_decay(t, 3.0 * (1 + t) ** -1.2)
    assert_allclose(down.exponent, -1.2, rtol=1e-9)


def test_fit_requires_enough_points():
    with pytest.raises(ValueError):
        dg.fit_sqrt_exponential(np.array([1.0]), np.array([2.0]))
