import mpmath
import numpy as np
import pytest
from numpy.testing import assert_allclose

from nullwave.modes import (GoursatGrid, ResolutionError, bessel_i0,
                            bessel_i0_log, closed_form_scalar, goursat_solve,
                            nirenberg_blowup_scan, sup_growth_profile)
from nullwave.profiles import WaveProfile, holder_half_seminorm


def _zero(u):
    return np.zeros_like(np.asarray(u, dtype=float))


# --------------------------------------------------------------------------
# modified Bessel function

def test_i0_at_one():
    assert_allclose(bessel_i0(1.0).real, 1.2660658777520084, rtol=1e-14)
    assert_allclose(bessel_i0(1.0).imag, 0.0, atol=1e-15)


@pytest.mark.parametrize("z", [
    0.0, 0.3, -2.0, 7.5, 29.0, 31.0, 80.0, 3j, 12j, 2 + 1j, 10 - 3j,
    25 + 20j, -40 + 5j, 100 + 80j, 0.01 - 0.02j,
])
def test_i0_against_mpmath(z):
    ref = complex(mpmath.besseli(0, mpmath.mpc(z)))
    val = bessel_i0(z)
    assert abs(val - ref) <= 1e-9 * abs(ref)


def test_i0_near_crossover_on_imaginary_axis():
    # worst case for the series/asymptotic hand-off: pure oscillation,
    # heaviest cancellation; agreement here is ~1e-7 rather than 1e-9
    for z in (29.5j, 30.5j):
        ref = complex(mpmath.besseli(0, mpmath.mpc(z)))
        assert abs(bessel_i0(z) - ref) <= 2e-7 * abs(ref)


def test_i0_is_even():
    for z in (3 + 4j, 17j, 50 + 2j):
        assert_allclose(bessel_i0(z), bessel_i0(-z), rtol=1e-12)


@pytest.mark.parametrize("z", [0.5, 5j, 20 + 3j, 200 + 10j, 500 + 400j])
def test_i0_log_consistent(z):
    lg = bessel_i0_log(z)
    ref = mpmath.log(mpmath.besseli(0, mpmath.mpc(z)))
    assert abs(lg.real - float(ref.real)) < 1e-7 * max(1.0, abs(lg.real))
    # imaginary parts agree mod 2 pi (ours is unwrapped along the evaluation)
    d = (lg.imag - float(ref.imag)) / (2 * np.pi)
    assert abs(d - round(d)) < 1e-7


def test_i0_log_handles_huge_arguments():
    lg = bessel_i0_log(2000.0)
    # I0(x) ~ e^x / sqrt(2 pi x)
    assert_allclose(lg.real, 2000.0 - 0.5 * np.log(2 * np.pi * 2000.0),
                    rtol=1e-6)


# --------------------------------------------------------------------------
# Goursat marching

def test_zero_coefficient_gives_constant_solution():
    grid = GoursatGrid(u_min=0.0, u_max=1.0, h_u=1 / 50, v_max=5.0, h_v=1 / 50)
    mode = goursat_solve(_zero, None, (0.0, 0.0), grid, resolution_check=False)
    assert np.max(np.abs(mode.q - 1.0)) == 0.0


def test_free_oscillation_matches_closed_form():
    # B = 0, xi_y = |xi|: the closed form is I_0 of a purely imaginary
    # argument; compare away from its oscillation zeros
    grid = GoursatGrid(u_min=0.0, u_max=1.0, h_u=1 / 200, v_max=20.0,
                       h_v=1 / 200)
    mode = goursat_solve(_zero, None, (2.0, 0.0), grid, refine=True)
    logq = closed_form_scalar(_zero, (2.0, 0.0), u=grid.u, v=grid.v, u0=0.0,
                              b_antideriv=_zero)
    q_ex = np.exp(logq)
    sel = np.abs(q_ex) >= 0.1
    rel = np.abs(mode.q - q_ex)[sel] / np.abs(q_ex)[sel]
    assert rel.max() < 1e-6


def test_data_on_characteristics_is_preserved():
    grid = GoursatGrid(u_min=0.0, u_max=1.0, h_u=1 / 40, v_max=3.0, h_v=1 / 40)
    data_v = lambda v: np.exp(-0.1 * (v - 1.0))
    mode = goursat_solve(_zero, None, (1.0, 0.0), grid, data_v=data_v,
                         resolution_check=False)
    assert_allclose(mode.q[0, :], data_v(grid.v), rtol=1e-14)
    assert_allclose(mode.q[:, 0], data_v(1.0), rtol=1e-14)


def test_system_march_reduces_to_scalar():
    # diagonal 2x2 coefficient: the components must equal two scalar runs
    prof = WaveProfile([1.0])
    fp = prof.component(0, 1)
    grid = GoursatGrid(u_min=0.0, u_max=1.0, h_u=1 / 100, v_max=8.0,
                       h_v=1 / 100)

    def by_mat(u):
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape + (2, 2))
        out[..., 0, 0] = fp(u)
        out[..., 1, 1] = -0.5 * fp(u)
        return out

    sysmode = goursat_solve(by_mat, None, (3.0, 0.0), grid, n_components=2,
                            resolution_check=False)
    s0 = goursat_solve(lambda u: np.asarray(fp(u)), None, (3.0, 0.0), grid,
                       resolution_check=False)
    s1 = goursat_solve(lambda u: -0.5 * np.asarray(fp(u)), None, (3.0, 0.0),
                       grid, resolution_check=False)
    assert_allclose(sysmode.q[:, :, 0], s0.q, rtol=1e-12, atol=1e-12)
    assert_allclose(sysmode.q[:, :, 1], s1.q, rtol=1e-12, atol=1e-12)


def test_resolution_guard_trips_on_coarse_grid():
    grid = GoursatGrid(u_min=0.0, u_max=1.0, h_u=1 / 20, v_max=100.0,
                       h_v=1 / 20)
    with pytest.raises(ResolutionError):
        goursat_solve(_zero, None, (50.0, 0.0), grid)


# --------------------------------------------------------------------------
# closed form

def test_closed_form_trivial_edges():
    prof = WaveProfile([2.0])
    bf, f = prof.component(0, 1), prof.component(0, 0)
    u = np.array([0.345, 0.7, 1.0])
    v = np.array([1.0, 5.0])
    lg = closed_form_scalar(bf, (20.0, 0.0), u=u, v=v, u0=0.345,
                            b_antideriv=f)
    # q = 1 on both data characteristics
    assert_allclose(lg[0, :], 0.0, atol=1e-12)   # u' = u0
    assert_allclose(lg[:, 0], 0.0, atol=1e-12)   # v' = 1


def test_closed_form_quadrature_matches_antiderivative():
    prof = WaveProfile([2.0])
    bf, f = prof.component(0, 1), prof.component(0, 0)
    u = np.array([0.6, 1.0])
    v = np.array([3.0, 10.0])
    a = closed_form_scalar(bf, (5.0, 0.0), u=u, v=v, u0=0.345, b_antideriv=f)
    b = closed_form_scalar(bf, (5.0, 0.0), u=u, v=v, u0=0.345)
    assert_allclose(a, b, rtol=1e-8, atol=1e-8)


def test_closed_form_growth_matches_bessel_asymptotics():
    # at v' = 400 the log-magnitude should sit on e^z / sqrt(2 pi z)
    prof = WaveProfile([2.0])
    bf, f = prof.component(0, 1), prof.component(0, 0)
    u0, u1, v = 0.345, 1.0, 400.0
    lg = closed_form_scalar(bf, (20.0, 0.0), u=np.array([u1]),
                            v=np.array([v]), u0=u0, b_antideriv=f)[0, 0]
    F = -((u1 - u0) * 400.0 + 1j * 20.0 * (f(u1) - f(u0))) / 4.0
    z = 2.0 * np.sqrt((v - 1.0) * F)
    asym = abs(z.real) - 0.5 * np.log(2 * np.pi * abs(z))
    assert abs(lg.real - asym) / asym < 0.02


# --------------------------------------------------------------------------
# growth profile and blow-up scan

def test_sup_growth_profile_of_constant_mode():
    grid = GoursatGrid(u_min=0.0, u_max=1.0, h_u=1 / 50, v_max=5.0, h_v=1 / 50)
    mode = goursat_solve(_zero, None, (0.0, 0.0), grid, resolution_check=False)
    t, logmax = sup_growth_profile(mode)
    assert len(t) == len(grid.v)
    assert np.all(np.diff(t) > 0)
    assert_allclose(logmax, 0.0, atol=1e-14)


def test_fitted_growth_matches_prediction():
    # scalar unstable mode: fitted K within 10% of the interval-optimized rate
    prof = WaveProfile([2.0])
    sem = holder_half_seminorm(prof, 0)
    grid = GoursatGrid(u_min=sem.witness[0], u_max=1.0, h_u=1 / 800,
                       v_max=600.0, h_v=1 / 25)
    mode = goursat_solve(prof.component(0, 1), None, (10.0, 0.0), grid,
                         resolution_check=False)
    t, logmax = sup_growth_profile(mode)
    from nullwave.diagnostics import fit_sqrt_exponential
    fit = fit_sqrt_exponential(t, logmax, t_min=50.0, log_input=True)
    K_pred = sem.value / np.sqrt(2.0)
    assert abs(fit.K - K_pred) / K_pred < 0.10


def test_blowup_scan_immediate_for_large_delta():
    prof = WaveProfile([2.0])
    grid = GoursatGrid(u_min=0.345, u_max=1.0, h_u=1 / 200, v_max=30.0,
                       h_v=1 / 50)
    scan = nirenberg_blowup_scan(prof.component(0, 1), (5.0, 0.0), grid,
                                 deltas=[2.0], b_antideriv=prof.component(0, 0))
    assert scan.t_blow[0] == pytest.approx((grid.v_min + grid.u_min) / 2.0 + 0.0,
                                           abs=grid.v[1] - grid.v[0] + 1e-9) \
        or np.isfinite(scan.t_blow[0])


def test_blowup_times_increase_as_delta_shrinks():
    prof = WaveProfile([2.0])
    grid = GoursatGrid(u_min=0.345, u_max=1.0, h_u=1 / 400, v_max=120.0,
                       h_v=1 / 50)
    scan = nirenberg_blowup_scan(prof.component(0, 1), (10.0, 0.0), grid,
                                 deltas=[1e-2, 1e-3, 1e-4],
                                 b_antideriv=prof.component(0, 0))
    assert np.all(np.isfinite(scan.t_blow))
    assert np.all(np.diff(scan.t_blow) > 0)
    assert scan.r_squared > 0.95
