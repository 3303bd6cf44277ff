"""Geometry of the interaction region and commuting vector-field diagnostics.

The interaction region on the time slice Sigma_t is

    S_t = { u = t - r >= -1 }  intersect  { |t - x| <= 1 },

contained in the cylinder x in [t-1, t+1], y^2 + z^2 <= 4t, of volume
8 pi t <= 100 t.  The eleven commuting fields are the four translations,
three rotations, three boosts, and the scaling field; translations carry
weight 0, the rest weight 1 (they grow like sqrt(t) on S_t when applied to
functions of t - x).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
import sympy as sp

_T, _X, _Y, _Z = sp.symbols("t x y z")
_COORDS = (_T, _X, _Y, _Z)

# field name -> tuple of 4 sympy coefficient expressions (c^t, c^x, c^y, c^z)
FIELD_COEFFS = {
    "dt": (sp.Integer(1), 0, 0, 0),
    "dx": (sp.Integer(0), 1, 0, 0),
    "dy": (sp.Integer(0), 0, 1, 0),
    "dz": (sp.Integer(0), 0, 0, 1),
    "rot_xy": (sp.Integer(0), -_Y, _X, 0),
    "rot_xz": (sp.Integer(0), -_Z, 0, _X),
    "rot_yz": (sp.Integer(0), 0, -_Z, _Y),
    "boost_tx": (_X, _T, 0, 0),
    "boost_ty": (_Y, 0, _T, 0),
    "boost_tz": (_Z, 0, 0, _T),
    "scaling": (_T, _X, _Y, _Z),
}

FIELD_WEIGHTS = {name: (0 if name.startswith("d") else 1) for name in FIELD_COEFFS}
TRANSLATIONS = ("dt", "dx", "dy", "dz")
WEIGHTED_FIELDS = tuple(n for n in FIELD_COEFFS if FIELD_WEIGHTS[n] == 1)


def field_names():
    return list(FIELD_COEFFS)


# ---------------------------------------------------------------------------
# region measures

def region_bounding_cylinder(t):
    """(x_lo, x_hi, rho) of the bounding cylinder of S_t."""
    return t - 1.0, t + 1.0, 2.0 * np.sqrt(max(t, 0.0))


def region_membership(t, x, y, z):
    """Boolean membership of points in S_t."""
    r = np.sqrt(np.asarray(x) ** 2 + np.asarray(y) ** 2 + np.asarray(z) ** 2)
    return (t - r >= -1.0) & (np.abs(t - np.asarray(x)) <= 1.0)


@dataclass
class VolumeEstimate:
    value: float
    std_error: float
    n_samples: int


def region_volume(t, n_samples=100_000, seed=0):
    """Monte Carlo estimate of mu(S_t) by sampling the bounding cylinder."""
    if n_samples < 100_000:
        raise ValueError("at least 1e5 samples required for a stable estimate")
    rng = np.random.default_rng(seed)
    x_lo, x_hi, rho = region_bounding_cylinder(t)
    x = rng.uniform(x_lo, x_hi, n_samples)
    # uniform in the disc of radius rho
    rr = rho * np.sqrt(rng.uniform(0.0, 1.0, n_samples))
    th = rng.uniform(0.0, 2.0 * np.pi, n_samples)
    y, z = rr * np.cos(th), rr * np.sin(th)
    inside = region_membership(t, x, y, z)
    vol_cyl = (x_hi - x_lo) * np.pi * rho * rho
    p = float(np.mean(inside))
    se = vol_cyl * np.sqrt(max(p * (1.0 - p), 0.0) / n_samples)
    return VolumeEstimate(value=vol_cyl * p, std_error=se, n_samples=n_samples)


def sphere_cap_measure(t, r, n_nodes=200_000):
    """sigma{ omega in S^2 : r omega in S_t } by quadrature in omega_x.

    The indicator depends only on omega_x, so the surface integral reduces
    to 2 pi * int indicator(omega_x) d omega_x over [-1, 1] (midpoint rule).
    """
    if r > t + 1.0 or r <= 0.0:
        return 0.0
    wx = -1.0 + (np.arange(n_nodes) + 0.5) * (2.0 / n_nodes)
    inside = np.abs(t - r * wx) <= 1.0
    return float(2.0 * np.pi * np.mean(inside) * 2.0)


def sample_region(t, n_samples, seed=0):
    """Seeded uniform samples from S_t (rejection from the cylinder)."""
    rng = np.random.default_rng(seed)
    x_lo, x_hi, rho = region_bounding_cylinder(t)
    pts = []
    need = n_samples
    while need > 0:
        m = max(4 * need, 1000)
        x = rng.uniform(x_lo, x_hi, m)
        rr = rho * np.sqrt(rng.uniform(0.0, 1.0, m))
        th = rng.uniform(0.0, 2.0 * np.pi, m)
        y, z = rr * np.cos(th), rr * np.sin(th)
        keep = region_membership(t, x, y, z)
        sel = np.flatnonzero(keep)[:need]
        pts.append(np.stack([x[sel], y[sel], z[sel]], axis=1))
        need -= len(sel)
    return np.concatenate(pts, axis=0)


# ---------------------------------------------------------------------------
# numeric field application on 4D grids

def apply_field(name, values, axes):
    """Apply a commuting field to a grid function by central differences.

    values: array over a rectangular (t, x, y, z) grid; axes: the four
    coordinate 1D arrays (uniform spacing each).  One layer is lost at each
    boundary in every direction with a nonzero coefficient; the result keeps
    the full shape with edge values from one-sided differences.
    """
    coeffs = FIELD_COEFFS[name]
    grids = np.meshgrid(*axes, indexing="ij")
    out = np.zeros_like(np.asarray(values, dtype=float))
    for k, cexpr in enumerate(coeffs):
        if cexpr == 0:
            continue
        h = axes[k][1] - axes[k][0]
        d = np.gradient(values, h, axis=k)
        cfun = sp.lambdify(_COORDS, cexpr, modules="numpy")
        c = cfun(*grids)
        out += np.asarray(c, dtype=float) * d
    return out


def commutator_defect(name_a, name_b, values, axes):
    """[Gamma_a, Gamma_b] applied numerically (for commutator sanity checks)."""
    ab = apply_field(name_a, apply_field(name_b, values, axes), axes)
    ba = apply_field(name_b, apply_field(name_a, values, axes), axes)
    return ab - ba


# ---------------------------------------------------------------------------
# symbolic application of Gamma strings to functions of u = t - x

def _directional_factor(name):
    """Gamma F(t-x) = (c^t - c^x) F'(t-x); returns the sympy factor c^t - c^x."""
    c = FIELD_COEFFS[name]
    return sp.simplify(c[0] - c[1])


def _apply_to_poly(name, expr):
    c = FIELD_COEFFS[name]
    return sum(sp.Integer(0) if ck == 0 else ck * sp.diff(expr, v)
               for ck, v in zip(c, _COORDS))


def gamma_string_on_wave(string, f1, f2, points):
    """|Gamma_k ... Gamma_1 F(t-x)| at sample points, strings of length <= 2.

    f1, f2: callables for F' and F''.  Uses the chain-rule closed forms
      Gamma F        = d(Gamma) F'
      Gamma1 Gamma2 F = (Gamma1 d2) F' + d2 d1 F''
    with d(Gamma) = c^t - c^x a polynomial in the coordinates.
    """
    t, x, y, z = (points[:, k] for k in range(4))
    u = t - x
    if len(string) == 1:
        d = _directional_factor(string[0])
        dfun = sp.lambdify(_COORDS, d, modules="numpy")
        return np.broadcast_to(dfun(t, x, y, z), u.shape) * f1(u)
    if len(string) == 2:
        g1, g2 = string
        d1, d2 = _directional_factor(g1), _directional_factor(g2)
        g1d2 = sp.simplify(_apply_to_poly(g1, d2))
        a = sp.lambdify(_COORDS, g1d2, modules="numpy")(t, x, y, z)
        b = sp.lambdify(_COORDS, d1 * d2, modules="numpy")(t, x, y, z)
        return (np.broadcast_to(a, u.shape) * f1(u)
                + np.broadcast_to(b, u.shape) * f2(u))
    raise ValueError("strings of length 1 or 2 only")


@dataclass
class WeightGrowthReport:
    k: int
    exponents: dict          # string -> fitted exponent
    max_exponent: float
    bound: float             # k/2 + slack
    holds: bool


def weight_growth_check(f1, f2, k, t_values=(16.0, 64.0, 256.0, 1024.0),
                        n_samples=20_000, seed=3, slack=0.1,
                        strings=None):
    """Check max_{S_t} |Gamma^alpha F(t-x)| = O(t^{k/2}) for weighted strings.

    Fits log max vs log(1+t) per string of weighted fields, |alpha| = k,
    and compares the largest exponent against k/2 + slack.
    """
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    if strings is None:
        strings = ([(g,) for g in WEIGHTED_FIELDS] if k == 1
                   else [s for s in product(WEIGHTED_FIELDS, repeat=2)])
    t_values = np.asarray(t_values, dtype=float)
    exps = {}
    for s in strings:
        maxima = []
        for ti, t in enumerate(t_values):
            xyz = sample_region(t, n_samples, seed=seed + ti)
            pts = np.concatenate([np.full((len(xyz), 1), t), xyz], axis=1)
            vals = np.abs(gamma_string_on_wave(list(s), f1, f2, pts))
            maxima.append(np.max(vals))
        maxima = np.asarray(maxima)
        if np.max(maxima) < 1e-300:
            exps["*".join(s)] = -np.inf
            continue
        fit = fit_power_law(t_values, maxima)
        exps["*".join(s)] = fit.exponent
    finite = [v for v in exps.values() if np.isfinite(v)]
    mx = max(finite) if finite else -np.inf
    return WeightGrowthReport(k=k, exponents=exps, max_exponent=float(mx),
                              bound=k / 2.0 + slack, holds=bool(mx <= k / 2.0 + slack))


# ---------------------------------------------------------------------------
# fits

@dataclass
class SqrtExpFit:
    K: float
    log_c: float
    r_squared: float


@dataclass
class PowerFit:
    exponent: float
    log_c: float
    r_squared: float


def _lstsq_fit(x, logy):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, logy, rcond=None)
    pred = A @ coef
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    ss_res = float(np.sum((logy - pred) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), float(r2)


def fit_sqrt_exponential(t, y, t_min=5.0, log_input=False):
    """Fit y ~ c exp(K sqrt(t)) over t >= t_min; y may be given as log y."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = t >= t_min
    if log_input:
        logy = y[keep]
    else:
        if np.any(y[keep] <= 0):
            raise ValueError("nonpositive values cannot be fit on a log scale")
        logy = np.log(y[keep])
    if np.count_nonzero(keep) < 3:
        raise ValueError("need at least 3 points past the transient window")
    K, c, r2 = _lstsq_fit(np.sqrt(t[keep]), logy)
    return SqrtExpFit(K=K, log_c=c, r_squared=r2)


def fit_power_law(t, y, t_min=0.0):
    """Fit y ~ c (1+t)^p (used for both growth and decay exponents)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (t >= t_min) & (y > 0)
    if np.count_nonzero(keep) < 2:
        raise ValueError("need at least 2 positive points")
    p, c, r2 = _lstsq_fit(np.log1p(t[keep]), np.log(y[keep]))
    return PowerFit(exponent=p, log_c=c, r_squared=r2)


def fit_power_decay(t, y, t_min=5.0):
    """Decay-exponent fit excluding the early transient (t < t_min)."""
    return fit_power_law(t, y, t_min=t_min)
