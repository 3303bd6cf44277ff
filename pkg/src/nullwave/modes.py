"""Transverse Fourier modes of the linearized equation in null coordinates.

With gamma ~ q(u', v') exp(i(xi_y y + xi_z z)) the renormalized linearization
Box gamma = B_y d_y gamma + B_z d_z gamma becomes the Goursat problem

    4 d_u' d_v' q = c(u') q,
    c(u') = -( |xi|^2 Id + i xi_y B_y(u') + i xi_z B_z(u') ),

with data on the characteristics u' = u_min and v' = 1.  For N = 1 and
constant data the solution is q = I_0( 2 sqrt( (v'-1) int_{u0}^{u'} a ) )
with a = c/4, which is used as an oracle and for predicted growth rates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.integrate import quad

_TWO_PI = 2.0 * np.pi


class ResolutionError(ValueError):
    """Grid too coarse for the oscillation content of the requested mode."""


# ---------------------------------------------------------------------------
# modified Bessel function I_0 for complex argument

# asymptotic tail coefficients b_k = ((2k)!)^2 / (k!^3 32^k)
_B_COEF = np.array([1.0, 1.0 / 8, 9.0 / 128, 75.0 / 1024, 3675.0 / 32768,
                    59535.0 / 262144, 2401245.0 / 4194304,
                    57972915.0 / 33554432, 13043905875.0 / 2147483648])
_SERIES_RADIUS = 30.0


def _i0_series(z):
    """Power series sum_k (z^2/4)^k / (k!)^2 in extended precision.

    Evaluated in longdouble complex: for oscillatory z near the crossover
    the terms reach ~e^|z| before cancelling, so double precision alone
    would lose too many digits.
    """
    z = np.asarray(z, dtype=np.clongdouble)
    w = z * z / 4.0
    term = np.ones_like(w)
    total = np.ones_like(w)
    for k in range(1, 400):
        term = term * w / (k * k)
        total = total + term
        if np.all(np.abs(term) <= 1e-25 * np.abs(total)):
            break
    return total


def _i0_asym_log(z):
    """log I_0(z) from the two-branch asymptotic expansion, Re z >= 0.

    I_0(z) ~ (2 pi z)^{-1/2} [ e^z S(1/z) +- i e^{-z} S(-1/z) ],
    sign chosen by the half-plane of z (DLMF 10.40.5 with nu = 0).
    """
    z = np.asarray(z, dtype=complex)
    zi = 1.0 / z
    Sp = np.zeros_like(z)
    Sm = np.zeros_like(z)
    for k in range(len(_B_COEF) - 1, -1, -1):
        Sp = Sp * zi + _B_COEF[k]
        Sm = Sm * (-zi) + _B_COEF[k]
    sigma = np.where(np.imag(z) >= 0, 1.0, -1.0)
    # e^{-2z} relative to the dominant branch; Re z >= 0 keeps it bounded
    comb = Sp + 1j * sigma * np.exp(-2.0 * z) * Sm
    return z - 0.5 * np.log(_TWO_PI * z) + np.log(comb)


def bessel_i0(z):
    """I_0(z) for complex z (vectorized); series |z| <= 30, asymptotic beyond."""
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    # I_0 is even; map to Re z >= 0 so the asymptotic branch logic applies
    z = np.where(np.real(z) < 0, -z, z)
    out = np.empty(z.shape, dtype=complex)
    small = np.abs(z) <= _SERIES_RADIUS
    if np.any(small):
        out[small] = _i0_series(z[small]).astype(complex)
    if np.any(~small):
        # overflows to inf for Re z >~ 709; use bessel_i0_log in that regime
        with np.errstate(over="ignore"):
            out[~small] = np.exp(_i0_asym_log(z[~small]))
    return out[0] if scalar else out


def bessel_i0_log(z):
    """log I_0(z), safe against overflow for large |Re z|."""
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    z = np.where(np.real(z) < 0, -z, z)
    out = np.empty(z.shape, dtype=complex)
    small = np.abs(z) <= _SERIES_RADIUS
    if np.any(small):
        vals = _i0_series(z[small])
        out[small] = (np.log(np.abs(vals)).astype(float)
                      + 1j * np.angle(vals.astype(complex)))
    if np.any(~small):
        out[~small] = _i0_asym_log(z[~small])
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# Goursat solver

@dataclass
class GoursatGrid:
    u_min: float
    u_max: float
    h_u: float
    v_max: float
    h_v: float
    v_min: float = 1.0

    @property
    def u(self):
        n = int(round((self.u_max - self.u_min) / self.h_u))
        return self.u_min + self.h_u * np.arange(n + 1)

    @property
    def v(self):
        n = int(round((self.v_max - self.v_min) / self.h_v))
        return self.v_min + self.h_v * np.arange(n + 1)


@dataclass
class TransverseMode:
    grid: GoursatGrid
    xi: tuple
    q: np.ndarray          # (n_u, n_v) complex for N = 1, else (n_u, n_v, N)
    refined: bool = False

    def log_abs(self):
        q = self.q if self.q.ndim == 2 else np.linalg.norm(self.q, axis=-1)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(q))


@njit(cache=True)
def _march_scalar(q, kcell):
    """Box-scheme sweep, scalar unknown.  q preloaded with boundary data.

    Cell update from 4(q11 - q10 - q01 + q00) = 16 k qbar,
    qbar = corner average, k = (h_v/16) * int_cell c du  (exact u-integral).
    """
    n_u, n_v = q.shape
    for i in range(1, n_u):
        k = kcell[i - 1]
        for j in range(1, n_v):
            s = q[i - 1, j] + q[i, j - 1] - q[i - 1, j - 1]
            t = q[i - 1, j - 1] + q[i - 1, j] + q[i, j - 1]
            q[i, j] = (s + k * t) / (1.0 - k)
    return q


@njit(cache=True)
def _march_system(q, inv, kcell):
    """Box-scheme sweep, N-vector unknown; inv[i-1] = (Id - k)^-1 per row."""
    n_u, n_v, N = q.shape
    for i in range(1, n_u):
        k = kcell[i - 1]
        A = inv[i - 1]
        for j in range(1, n_v):
            rhs = (q[i - 1, j] + q[i, j - 1] - q[i - 1, j - 1]
                   + k @ (q[i - 1, j - 1] + q[i - 1, j] + q[i, j - 1]))
            q[i, j] = A @ rhs
    return q


_GAUSS5_X = np.array([-0.9061798459386640, -0.5384693101056831, 0.0,
                      0.5384693101056831, 0.9061798459386640])
_GAUSS5_W = np.array([0.2369268850561891, 0.4786286704993665,
                      0.5688888888888889, 0.4786286704993665,
                      0.2369268850561891])


def _cell_coefficients(cfun, u, h_v, N):
    """k per u-cell: (h_v/16) * int_{u_i}^{u_i+1} c(s) ds by 5-pt Gauss."""
    mids = 0.5 * (u[:-1] + u[1:])
    half = 0.5 * (u[1] - u[0])
    if N == 1:
        acc = np.zeros(len(mids), dtype=complex)
        for x, w in zip(_GAUSS5_X, _GAUSS5_W):
            acc += w * cfun(mids + half * x)
        return acc * half * (h_v / 16.0)
    acc = np.zeros((len(mids), N, N), dtype=complex)
    for x, w in zip(_GAUSS5_X, _GAUSS5_W):
        acc += w * cfun(mids + half * x)
    return acc * half * (h_v / 16.0)


def mode_coefficient(by, bz, xi):
    """c(u) = -(|xi|^2 Id + i xi_y B_y(u) + i xi_z B_z(u)), vectorized in u.

    by, bz: callables u -> scalar array (N = 1) or u -> (n, N, N) array;
    bz may be None.
    """
    xi_y, xi_z = xi
    xi2 = xi_y * xi_y + xi_z * xi_z

    def cfun(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        By = np.asarray(by(u))
        if By.ndim == 1:  # scalar coefficient
            Bz = np.asarray(bz(u)) if bz is not None else 0.0
            return -(xi2 + 1j * xi_y * By + 1j * xi_z * Bz)
        N = By.shape[-1]
        Bz = np.asarray(bz(u)) if bz is not None else np.zeros_like(By)
        return -(xi2 * np.eye(N)[None] + 1j * xi_y * By + 1j * xi_z * Bz)

    return cfun


def _check_resolution(grid, xi, nodes_per_wavelength=20):
    """Abort if h_v under-resolves the mode oscillation.

    The local v'-frequency of the closed form is
    |xi| sqrt(u_max - u_min) / (2 sqrt(v'-1)); it diverges at v' -> 1 where
    the solution is analytic in (v'-1), so the check is applied one unit
    into the domain (v' = v_min + 1, capped by the domain end).
    """
    xi_mag = float(np.hypot(*xi))
    if xi_mag == 0.0:
        return
    v_ref = min(grid.v_min + 1.0, grid.v_max)
    if v_ref <= grid.v_min:
        return
    omega = xi_mag * np.sqrt(grid.u_max - grid.u_min) / (2.0 * np.sqrt(v_ref - grid.v_min))
    wavelength = _TWO_PI / omega
    if grid.h_v > wavelength / nodes_per_wavelength:
        raise ResolutionError(
            f"h_v={grid.h_v:g} exceeds wavelength/{nodes_per_wavelength} "
            f"= {wavelength / nodes_per_wavelength:g} at |xi|={xi_mag:g}")


def goursat_solve(by, bz, xi, grid, data_u=None, data_v=None, n_components=1,
                  refine=False, resolution_check=True):
    """March the Goursat problem 4 q_{u'v'} = c(u') q over the grid.

    data_v: values on the row u' = u_min as a function of v' (array over
    grid.v or scalar); data_u: values on the column v' = v_min over grid.u.
    Defaults: constant 1 (matching corner values required).

    refine=True runs the second-order box scheme at h and h/2 and Richardson
    extrapolates on the common nodes (fourth-order phase accuracy).
    """
    if resolution_check:
        _check_resolution(grid, xi)
    cfun = mode_coefficient(by, bz, xi)

    def solve_on(g):
        u, v = g.u, g.v
        if n_components == 1:
            q = np.empty((len(u), len(v)), dtype=complex)
            q[0, :] = 1.0 if data_v is None else np.asarray(data_v(v) if callable(data_v) else data_v)
            q[:, 0] = 1.0 if data_u is None else np.asarray(data_u(u) if callable(data_u) else data_u)
            k = _cell_coefficients(cfun, u, g.h_v, 1)
            return _march_scalar(q, k)
        N = n_components
        q = np.empty((len(u), len(v), N), dtype=complex)
        q[0, :, :] = 1.0 if data_v is None else np.asarray(data_v(v) if callable(data_v) else data_v)
        q[:, 0, :] = 1.0 if data_u is None else np.asarray(data_u(u) if callable(data_u) else data_u)
        k = _cell_coefficients(cfun, u, g.h_v, N)
        inv = np.linalg.inv(np.eye(N)[None] - k)
        return _march_system(q, inv, np.ascontiguousarray(k))

    q = solve_on(grid)
    if refine:
        fine = GoursatGrid(u_min=grid.u_min, u_max=grid.u_max, h_u=grid.h_u / 2,
                           v_max=grid.v_max, h_v=grid.h_v / 2, v_min=grid.v_min)
        qf = solve_on(fine)
        q = (4.0 * qf[::2, ::2] - q) / 3.0
    return TransverseMode(grid=grid, xi=tuple(xi), q=q, refined=refine)


# ---------------------------------------------------------------------------
# closed form and growth profiles

def closed_form_scalar(bfun, xi, grid=None, u=None, v=None, u0=None,
                       b_antideriv=None, quad_tol=1e-10):
    """log q for the N = 1 closed form with unit characteristic data.

    q(u', v') = I_0( 2 sqrt( (v'-1) F(u') ) ),
    F(u') = int_{u0}^{u'} a,  a = -(|xi|^2 + i xi_y B)/4.

    Returns complex log q on the (u, v) grid, shape (n_u, n_v).  The B
    integral uses the supplied antiderivative when available, else adaptive
    quadrature to quad_tol.
    """
    if grid is not None:
        u, v, u0 = grid.u, grid.v, grid.u_min
        v_min = grid.v_min
    else:
        v_min = 1.0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    xi_y, xi_z = xi
    xi2 = xi_y * xi_y + xi_z * xi_z
    if b_antideriv is not None:
        intb = np.asarray(b_antideriv(u)) - float(b_antideriv(u0))
    else:
        intb = np.array([quad(bfun, u0, uu, epsabs=quad_tol, epsrel=quad_tol,
                              limit=400)[0] for uu in u])
    F = -((u - u0) * xi2 + 1j * xi_y * intb) / 4.0
    w = (v[None, :] - v_min) * F[:, None]
    z = 2.0 * np.sqrt(w.astype(complex))
    return bessel_i0_log(z)


def sup_growth_profile(mode):
    """Per-column growth curve: t_j = (u'_* + v'_j)/2, max_u log|q|."""
    la = mode.log_abs()
    j_best = np.argmax(la, axis=0)
    u, v = mode.grid.u, mode.grid.v
    t = 0.5 * (u[j_best] + v)
    return t, la[j_best, np.arange(len(v))]


@dataclass
class BlowupScan:
    deltas: np.ndarray
    t_blow: np.ndarray       # nan where no blow-up observed
    K_fit: float
    slope: float             # of sqrt(t_blow) vs -log(delta)
    r_squared: float


def nirenberg_blowup_scan(bfun, xi, grid, deltas, b_antideriv=None):
    """Blow-up times of phi = exp(-eta) - 1 under data of size delta.

    The complex mode q with unit data is solved once; for data delta the
    reconstructed solution is delta * Re(q e^{i xi . (y,z)}), whose minimum
    over the transverse phase is -delta |q|.  Blow-up of phi at the first
    grid time where delta * max_u |q| >= 1.
    """
    mode = goursat_solve(bfun, None, xi, grid)
    t, logmax = sup_growth_profile(mode)
    deltas = np.asarray(deltas, dtype=float)
    t_blow = np.full(len(deltas), np.nan)
    running = np.maximum.accumulate(logmax)
    for k, d in enumerate(deltas):
        if d >= 1.0:
            t_blow[k] = t[0]
            continue
        hit = np.flatnonzero(running + np.log(d) >= 0.0)
        if len(hit):
            t_blow[k] = t[hit[0]]
    ok = np.isfinite(t_blow) & (deltas < 1.0)
    slope = r2 = np.nan
    if np.count_nonzero(ok) >= 2:
        x = -np.log(deltas[ok])
        y = np.sqrt(t_blow[ok])
        A = np.vstack([x, np.ones_like(x)]).T
        coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
        slope = float(coef[0])
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        pred = A @ coef
        ss_res = float(np.sum((y - pred) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    # growth-rate fit over the later half of the run for reference
    half = len(t) // 2
    K_fit = np.nan
    if half > 10:
        x = np.sqrt(t[half:])
        y = logmax[half:]
        A = np.vstack([x, np.ones_like(x)]).T
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        K_fit = float(coef[0])
    return BlowupScan(deltas=deltas, t_blow=t_blow, K_fit=K_fit,
                      slope=float(slope), r_squared=float(r2))
