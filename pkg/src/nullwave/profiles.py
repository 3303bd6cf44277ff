"""Travelling-wave profiles f(u) supported in [-1, 1].

Shapes are defined symbolically once and lambdified together with their
first three derivatives; evaluation masks |u| >= 1 so the compactly
supported bump never sees the singular exponent at the endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp

_u = sp.Symbol("u")

_SHAPE_EXPRS = {
    # smooth bump, peak value 1 at u = 0
    "bump": sp.exp(1 - 1 / (1 - _u**2)),
    # odd variant, vanishing at 0
    "odd_bump": _u * sp.exp(1 - 1 / (1 - _u**2)),
    # flattened variant
    "poly_bump": (1 - _u**2) * sp.exp(1 - 1 / (1 - _u**2)),
    "zero": sp.Integer(0) * _u,
}

_SHAPE_FUNCS = {}
for _name, _expr in _SHAPE_EXPRS.items():
    _SHAPE_FUNCS[_name] = [
        sp.lambdify(_u, sp.diff(_expr, _u, k), modules="numpy") for k in range(4)
    ]


def shape_ids():
    return sorted(_SHAPE_EXPRS)


def _eval_shape(shape, u, order):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    if np.any(inside):
        with np.errstate(over="ignore", under="ignore", divide="ignore",
                         invalid="ignore"):
            vals = _SHAPE_FUNCS[shape][order](u[inside])
        out[inside] = np.nan_to_num(vals, nan=0.0, posinf=0.0, neginf=0.0)
    return out


@dataclass
class WaveProfile:
    """Profile vector f = (f_1, ..., f_N), each component amplitude * shape(u)."""

    amplitudes: np.ndarray
    shapes: list

    def __init__(self, amplitudes, shapes=None):
        self.amplitudes = np.atleast_1d(np.asarray(amplitudes, dtype=float))
        n = len(self.amplitudes)
        if shapes is None:
            shapes = ["bump"] * n
        if isinstance(shapes, str):
            shapes = [shapes] * n
        if len(shapes) != n:
            raise ValueError("one shape id per component required")
        for s in shapes:
            if s not in _SHAPE_EXPRS:
                raise KeyError(f"unknown shape id {s!r}; known: {shape_ids()}")
        self.shapes = list(shapes)

    @property
    def n(self):
        return len(self.amplitudes)

    def eval(self, u, order=0):
        """f^(order)(u), orders 0..3.  Returns shape u.shape + (N,)."""
        if not 0 <= order <= 3:
            raise ValueError("derivative order must be in 0..3")
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape + (self.n,))
        for k, (amp, shape) in enumerate(zip(self.amplitudes, self.shapes)):
            out[..., k] = amp * _eval_shape(shape, u, order)
        return out

    def component(self, i, order=0):
        """Scalar callable u -> f_i^(order)(u)."""
        amp, shape = self.amplitudes[i], self.shapes[i]
        return lambda u: amp * _eval_shape(shape, np.asarray(u, dtype=float), order)

    def active_components(self, tol=0.0):
        return [i for i, a in enumerate(self.amplitudes)
                if abs(a) > tol and self.shapes[i] != "zero"]


@dataclass
class HolderHalf:
    value: float
    witness: tuple  # (u0, u1)


def holder_half_seminorm(profile, component=0, h_u=1e-3):
    """|f|_{1/2} = sup_{u0 < u1} |f(u1) - f(u0)| / sqrt(u1 - u0) by grid search.

    Grid search over [-1, 1] with spacing h_u; O(n^2) pairs, vectorized.
    """
    u = np.arange(-1.0, 1.0 + 0.5 * h_u, h_u)
    f = profile.eval(u, order=0)[:, component]
    df = np.abs(f[None, :] - f[:, None])
    du = u[None, :] - u[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(du > 0, df / np.sqrt(np.abs(du) + (du <= 0)), 0.0)
    k = int(np.argmax(ratio))
    i0, i1 = divmod(k, len(u))
    return HolderHalf(value=float(ratio.ravel()[k]), witness=(float(u[i0]), float(u[i1])))


def verify_travelling_wave(system, profile, n_samples=2001):
    """Max residual of Box f_i(t-x) = Q_i(df) over a u-grid.

    d f_j(t-x) = f_j'(u) du' with du' null, so both sides vanish: the wave
    operator term is f'' <du', du'>_g and the nonlinearity only ever pairs
    du' with itself.  Computed numerically anyway as a consistency check on
    the stored tensor; the result should be at rounding level.
    """
    from .algebra import DU_PRIME, MINKOWSKI, quadratic_rhs

    u = np.linspace(-1.2, 1.2, n_samples)
    fpp = profile.eval(u, order=2)  # (n, N)
    du_norm = DU_PRIME @ MINKOWSKI @ DU_PRIME  # exactly 0
    box_term = fpp * du_norm
    fp = profile.eval(u, order=1)
    grads = fp[:, :, None] * DU_PRIME[None, None, :]  # (n, N, 4)
    q = quadratic_rhs(system, grads)
    return float(np.max(np.abs(box_term - q)))
