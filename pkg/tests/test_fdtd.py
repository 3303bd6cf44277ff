import numpy as np
import pytest
from numpy.testing import assert_allclose

from nullwave import fdtd
from nullwave.algebra import example_system, quadratic_rhs
from nullwave.profiles import WaveProfile
from nullwave.renormalize import linearized_coefficients, solve_renormalizer


def test_grid_spec_geometry():
    ball = fdtd.GridSpec(L=4.0, h=0.5)
    assert ball.shape == (17, 17, 17)
    strip = fdtd.GridSpec(L=4.0, h=0.5, geometry="strip", widths=(2.0, 2.0))
    assert strip.shape == (17, 4, 4)
    with pytest.raises(ValueError):
        fdtd.GridSpec(L=4.0, h=0.5, geometry="torus")


def test_laplacian_exact_on_quadratic():
    grid = fdtd.GridSpec(L=2.0, h=0.25)
    X, Y, Z = np.meshgrid(grid.x, grid.y, grid.z, indexing="ij")
    f = (X ** 2 + 2 * Y ** 2 + 3 * Z ** 2)[None]
    lap = fdtd.laplacian(f, grid)
    assert_allclose(lap[0, 2:-2, 2:-2, 2:-2], 12.0, rtol=1e-11)


def test_gradient_exact_on_linear():
    grid = fdtd.GridSpec(L=2.0, h=0.25)
    X, Y, Z = np.meshgrid(grid.x, grid.y, grid.z, indexing="ij")
    f = (2 * X - Y + 0.5 * Z)[None]
    g = fdtd.gradient(f, grid)
    assert_allclose(g[0, 0, 2:-2, 2:-2, 2:-2], 2.0, atol=1e-12)
    assert_allclose(g[0, 1, 2:-2, 2:-2, 2:-2], -1.0, atol=1e-12)
    assert_allclose(g[0, 2, 2:-2, 2:-2, 2:-2], 0.5, atol=1e-12)


def test_free_evolution_conserves_energy():
    grid = fdtd.GridSpec(L=4.0, h=0.2)
    state = fdtd.initial_bump(grid, 1, 1.0)
    rhs = fdtd.RhsOperator("free")
    ledger, out = fdtd.evolve(state, rhs, t_max=2.0, out_every=0.5)
    E = np.array(ledger.column("flat_energy"))
    # O(dt^2) leapfrog shadow-energy oscillation only; the wave has not
    # reached the boundary yet
    assert np.max(np.abs(E / E[0] - 1.0)) < 2e-2
    assert out.t == pytest.approx(2.0, abs=out.grid.dt_max)


def test_nonlinear_rhs_vanishes_on_pure_background(sys1, profile2):
    # psi = 0 on top of the travelling wave: the full quadratic RHS minus the
    # background RHS must be identically zero
    grid = fdtd.GridSpec(L=3.0, h=0.5)
    rhs = fdtd.RhsOperator("nonlinear", sys1, profile2)
    psi = np.zeros((2,) + grid.shape)
    pi = np.zeros_like(psi)
    grads = fdtd.gradient(psi, grid)
    out = rhs(psi, pi, grads, 0.4, grid)
    assert_allclose(out, 0.0, atol=1e-15)


def test_linearization_oracle_richardson(sys1, sys2, profile2):
    # Richardson-extrapolated finite difference of the quadratic RHS is an
    # exact linearization; it must agree with the linearized operator to
    # machine precision
    for system in (sys1, sys2):
        grid = fdtd.GridSpec(L=3.0, h=0.25)
        state = fdtd.initial_bump(grid, system.n, 1.0, components=(0, 1))
        rhs_nl = fdtd.RhsOperator("nonlinear", system, profile2)
        rhs_lin = fdtd.RhsOperator("linearized", system, profile2)
        psi, pi = state.psi, state.pi + 0.3
        grads = fdtd.gradient(psi, grid)
        t = 0.3
        zero = rhs_nl(0 * psi, 0 * pi, 0 * grads, t, grid)

        def deriv(eps):
            return (rhs_nl(eps * psi, eps * pi, eps * grads, t, grid)
                    - zero) / eps

        rich = 2.0 * deriv(5e-4) - deriv(1e-3)
        lin = rhs_lin(psi, pi, grads, t, grid)
        scale = max(1e-30, np.abs(lin).max())
        assert np.abs(rich - lin).max() / scale < 1e-12


def test_quadratic_rhs_convention_matches_algebra(sys2, rng):
    # the "nonlinear" operator evaluated with no background must reduce to
    # the plain null-form contraction of the perturbation gradients
    grid = fdtd.GridSpec(L=2.0, h=0.5)
    zero_prof = WaveProfile([0.0, 0.0])
    rhs = fdtd.RhsOperator("nonlinear", sys2, zero_prof)
    psi = rng.normal(size=(2,) + grid.shape)
    pi = rng.normal(size=psi.shape)
    grads = fdtd.gradient(psi, grid)
    out = rhs(psi, pi, grads, 0.0, grid)
    G = np.stack([pi, grads[:, 0], grads[:, 1], grads[:, 2]], axis=-1)
    expected = quadratic_rhs(sys2, np.moveaxis(G, 0, -2))
    assert_allclose(out, np.moveaxis(expected, -1, 0), rtol=1e-12, atol=1e-12)


def test_snapshot_round_trip(tmp_path):
    grid = fdtd.GridSpec(L=2.0, h=0.5)
    state = fdtd.initial_bump(grid, 2, 0.3, components=(1,))
    state.t = 1.75
    prefix = str(tmp_path / "snap")
    fdtd.write_snapshot(state, prefix)
    back = fdtd.read_snapshot(prefix)
    assert back.t == state.t
    assert back.grid.geometry == grid.geometry
    assert_allclose(back.psi, state.psi)
    assert_allclose(back.pi, state.pi)


def test_multiplier_energy_non_increasing(sys2, profile2):
    coeffs = linearized_coefficients(sys2, profile2)
    grid = fdtd.GridSpec(L=6.0, h=0.25, geometry="strip", widths=(4.0, 4.0))
    state = fdtd.initial_bump(grid, 2, 1.0, components=(0,), k_y=1)
    rhs = fdtd.RhsOperator("linearized", sys2, profile2, coeffs=coeffs)
    ledger, _ = fdtd.evolve(state, rhs, t_max=6.0, out_every=0.5,
                            coeffs=coeffs)
    me = np.array(ledger.column("multiplier_energy"))
    t = np.array(ledger.column("t"))
    rates = np.diff(np.log(me)) / np.diff(t)
    assert np.max(rates) < 1e-3


def test_gamma_energy_matches_flat_energy_for_trivial_renormalizer(sys2,
                                                                   profile2):
    # example 2 has Lam_a = 0, so A = Id and the gamma energy is the flat one
    renorm = solve_renormalizer(sys2, profile2)
    grid = fdtd.GridSpec(L=3.0, h=0.25)
    state = fdtd.initial_bump(grid, 2, 0.5, components=(0,))
    state.pi = 0.1 * state.psi
    assert_allclose(fdtd.gamma_energy(state, renorm),
                    fdtd.flat_energy(state), rtol=1e-10)


def test_weighted_sups_split(sys1):
    grid = fdtd.GridSpec(L=3.0, h=0.25)
    state = fdtd.initial_bump(grid, 2, 1.0)
    state.pi = np.ones_like(state.psi)
    bad, good = fdtd.weighted_sups(state)
    assert np.isfinite(bad) and np.isfinite(good)
    assert bad >= 0 and good >= 0


def test_weighted_norms_keys(sys1, profile2):
    grid = fdtd.GridSpec(L=3.0, h=0.25)
    state = fdtd.initial_bump(grid, 2, 0.1)
    rhs = fdtd.RhsOperator("nonlinear", sys1, profile2)
    norms = fdtd.weighted_norms(state, rhs)
    assert set(norms) == {"E1", "E2"}
    assert all(np.isfinite(v) and v >= 0 for v in norms.values())


def test_evolve_detects_blowup(sys1, profile2):
    grid = fdtd.GridSpec(L=2.0, h=0.5)
    state = fdtd.initial_bump(grid, 2, 1.0)
    state.psi[0, 4, 4, 4] = np.nan
    rhs = fdtd.RhsOperator("free")
    with pytest.raises(fdtd.BlowupDetected):
        fdtd.evolve(state, rhs, t_max=1.0, out_every=0.25)


def test_ledger_csv(tmp_path):
    grid = fdtd.GridSpec(L=2.0, h=0.5)
    state = fdtd.initial_bump(grid, 1, 0.5)
    ledger, _ = fdtd.evolve(state, fdtd.RhsOperator("free"), t_max=1.0,
                            out_every=0.5)
    path = tmp_path / "ledger.csv"
    ledger.write_csv(str(path))
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    assert "t" in header and "flat_energy" in header
    assert len(lines) == len(ledger.rows) + 1
