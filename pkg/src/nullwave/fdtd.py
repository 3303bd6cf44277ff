"""3+1 finite-difference evolution of perturbations of the plane wave.

The evolved unknown is the perturbation psi (never the background): the
travelling wave enters analytically through f'(t - x) evaluated at the
nodes, so the scheme sees

    Box psi_i = Q_i(d psi + f'(t-x) du')        ("nonlinear")

or one of the linearized right-hand sides.  Spatial discretization is the
7-point Laplacian; time stepping is velocity-Verlet (kick-drift-kick) with
one fixed-point correction for the velocity-dependent force, second order
overall and energy-stable at CFL <= 0.45 h / sqrt(3).

Geometries: "ball" (cube [-L, L]^3, homogeneous Dirichlet walls that are
never reached when L >= t_max + 2) and "strip" (Dirichlet in x, periodic in
y, z) for linearized instability demonstrations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .algebra import coupling_tensors, quadratic_rhs  # noqa: F401  (re-export)
from . import diagnostics as diag


class BlowupDetected(RuntimeError):
    pass


@dataclass
class GridSpec:
    L: float
    h: float
    cfl: float = 0.45
    geometry: str = "ball"           # "ball" | "strip"
    widths: tuple = (4.0, 4.0)       # periodic y, z extents for "strip"

    def __post_init__(self):
        if self.geometry not in ("ball", "strip"):
            raise ValueError("geometry must be 'ball' or 'strip'")

    @property
    def x(self):
        n = int(round(2 * self.L / self.h))
        return -self.L + self.h * np.arange(n + 1)

    @property
    def y(self):
        if self.geometry == "ball":
            return self.x
        n = int(round(self.widths[0] / self.h))
        return self.h * np.arange(n)

    @property
    def z(self):
        if self.geometry == "ball":
            return self.x
        n = int(round(self.widths[1] / self.h))
        return self.h * np.arange(n)

    @property
    def shape(self):
        return (len(self.x), len(self.y), len(self.z))

    @property
    def dt_max(self):
        return self.cfl * self.h / np.sqrt(3.0)


@dataclass
class FieldState:
    grid: GridSpec
    psi: np.ndarray   # (N, nx, ny, nz)
    pi: np.ndarray
    t: float

    @property
    def n(self):
        return self.psi.shape[0]


def _shift(a, axis, step, periodic):
    """Neighbor values along a spatial axis; zero-fill (Dirichlet) or wrap."""
    ax = axis + 1  # component axis first
    if periodic:
        return np.roll(a, -step, axis=ax)
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if step > 0:
        src[ax] = slice(step, None)
        dst[ax] = slice(None, -step)
    else:
        src[ax] = slice(None, step)
        dst[ax] = slice(-step, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _periodic_axes(grid):
    return (False, grid.geometry == "strip", grid.geometry == "strip")


def laplacian(a, grid):
    per = _periodic_axes(grid)
    out = -6.0 * a
    for ax in range(3):
        out += _shift(a, ax, 1, per[ax]) + _shift(a, ax, -1, per[ax])
    return out / (grid.h * grid.h)


def gradient(a, grid):
    """Central-difference spatial gradient, shape (N, 3, nx, ny, nz)."""
    per = _periodic_axes(grid)
    return np.stack(
        [(_shift(a, ax, 1, per[ax]) - _shift(a, ax, -1, per[ax])) / (2 * grid.h)
         for ax in range(3)], axis=1)


# ---------------------------------------------------------------------------
# right-hand sides

class RhsOperator:
    """Evaluates the source term at given (psi, pi, spatial gradients, t).

    modes:
      "free"        zero source (linear wave);
      "nonlinear"   full Q_i(d psi + f'(t-x) du');
      "linearized"  coupling-tensor linearization in psi variables;
      "gamma"       B_y d_y + B_z d_z from renormalized coefficient tables
                    (the unknown is then gamma, not psi).
    """

    def __init__(self, mode, system=None, profile=None, coeffs=None):
        self.mode = mode
        self.system = system
        self.profile = profile
        self.coeffs = coeffs
        if mode in ("nonlinear", "linearized"):
            if system is None or profile is None:
                raise ValueError(f"mode {mode!r} needs system and profile")
            self.ct = coupling_tensors(system)
        if mode == "gamma" and coeffs is None:
            raise ValueError("mode 'gamma' needs linearized coefficient tables")

    def _fp(self, t, x, order=1):
        # (N, nx) profile derivative at u = t - x
        return self.profile.eval(t - x, order=order).T

    def four_gradient(self, psi, pi, grads, t, grid):
        """d psi + background, shape (N, 4, nx, ny, nz)."""
        fp = self._fp(t, grid.x)[:, :, None, None]
        G = np.empty((psi.shape[0], 4) + psi.shape[1:])
        G[:, 0] = pi + fp
        G[:, 1] = grads[:, 0] - fp
        G[:, 2] = grads[:, 1]
        G[:, 3] = grads[:, 2]
        return G

    def __call__(self, psi, pi, grads, t, grid):
        if self.mode == "free":
            return 0.0
        if self.mode == "nonlinear":
            G = self.four_gradient(psi, pi, grads, t, grid)
            return np.einsum("ijlab,jaxyz,lbxyz->ixyz", self.system.tensor, G, G,
                             optimize=True)
        if self.mode == "linearized":
            fp = self._fp(t, grid.x)  # (N, nx)
            w = pi + grads[:, 0]      # (d_t + d_x) psi
            out = np.einsum("ijq,jx,qxyz->ixyz", self.ct.a, fp, w)
            out += np.einsum("ijq,jx,qxyz->ixyz", self.ct.b, fp, grads[:, 1])
            out += np.einsum("ijq,jx,qxyz->ixyz", self.ct.c, fp, grads[:, 2])
            return out
        if self.mode == "gamma":
            By = self.coeffs.by_at(t - grid.x)  # (nx, N, N)
            Bz = self.coeffs.bz_at(t - grid.x)
            out = np.einsum("xip,pxyz->ixyz", By, grads[:, 1])
            out += np.einsum("xip,pxyz->ixyz", Bz, grads[:, 2])
            return out
        raise ValueError(f"unknown rhs mode {self.mode!r}")

    def time_derivative(self, psi, pi, grads, acc, t, grid):
        """d/dt of the source (used by the weighted-norm jets).

        Exact for "nonlinear" (2 m(dG/dt, G) by symmetry of the stored
        tensor); zero for "free"; for the linearized modes the quadratic
        closure is dropped, consistent with their use at the linear level.
        """
        if self.mode != "nonlinear":
            return 0.0
        G = self.four_gradient(psi, pi, grads, t, grid)
        fpp = self._fp(t, grid.x, order=2)[:, :, None, None]
        pig = gradient(pi, grid)
        Gt = np.empty_like(G)
        Gt[:, 0] = acc + fpp
        Gt[:, 1] = pig[:, 0] - fpp
        Gt[:, 2] = pig[:, 1]
        Gt[:, 3] = pig[:, 2]
        return 2.0 * np.einsum("ijlab,jaxyz,lbxyz->ixyz", self.system.tensor,
                               Gt, G, optimize=True)


# ---------------------------------------------------------------------------
# initial data

def initial_bump(grid, n, eps, components=(0,), k_y=0, k_z=0):
    """Smooth compactly supported data of size eps.

    Ball: eps * bump(|x|) in the unit ball.  Strip: eps * bump(x) times
    cos(2 pi k_y y / W_y) cos(2 pi k_z z / W_z) (periodic transverse modes).
    """
    X, Y, Z = np.meshgrid(grid.x, grid.y, grid.z, indexing="ij")
    if grid.geometry == "ball":
        r2 = X * X + Y * Y + Z * Z
        prof = np.zeros_like(X)
        m = r2 < 1.0
        prof[m] = np.exp(1.0 - 1.0 / (1.0 - r2[m]))
    else:
        prof = np.zeros_like(X)
        m = np.abs(X) < 1.0
        prof[m] = np.exp(1.0 - 1.0 / (1.0 - X[m] ** 2))
        if k_y:
            prof = prof * np.cos(2 * np.pi * k_y * Y / grid.widths[0])
        if k_z:
            prof = prof * np.cos(2 * np.pi * k_z * Z / grid.widths[1])
    psi = np.zeros((n,) + grid.shape)
    for c in components:
        psi[c] = eps * prof
    return FieldState(grid=grid, psi=psi, pi=np.zeros_like(psi), t=0.0)


# ---------------------------------------------------------------------------
# diagnostics on states

def _forward_grad_sq(a, grid):
    """sum_d |D+_d a|^2 with one-sided differences.

    This is the potential-energy form whose semi-discrete flow is generated
    by the 7-point Laplacian, so the free-wave energy is conserved up to
    O(dt^2) time-stepping error only; the central-difference form is not
    compatible and drifts by O((kh)^2) as energy moves between kinetic and
    potential parts.
    """
    per = _periodic_axes(grid)
    out = np.zeros_like(a)
    for ax in range(3):
        d = _shift(a, ax, 1, per[ax]) - a
        out += d * d
    return out / (grid.h * grid.h)


def flat_energy(state):
    dens = state.pi ** 2 + _forward_grad_sq(state.psi, state.grid)
    return 0.5 * float(np.sum(dens)) * state.grid.h ** 3


def sup_dpsi(state):
    g = gradient(state.psi, state.grid)
    return float(max(np.max(np.abs(state.pi)), np.max(np.abs(g))))


def _radial_frame(grid):
    X, Y, Z = np.meshgrid(grid.x, grid.y, grid.z, indexing="ij")
    r = np.sqrt(X * X + Y * Y + Z * Z)
    return X, Y, Z, r


def weighted_sups(state, delta=0.05):
    """Pointwise decay monitors (ball geometry).

    Returns (sup (1+t+r)^{1-delta} (1+|u|)^{1/2} |d psi|,
             sup (1+t+r)^{3/2-delta} |dbar psi|) with u = t - r and the good
    derivatives dbar = (d_v, angular / r-rescaled rotations).
    """
    grid, t = state.grid, state.t
    X, Y, Z, r = _radial_frame(grid)
    g = gradient(state.psi, grid)
    dmag = np.maximum(np.abs(state.pi), np.max(np.abs(g), axis=1))
    w1 = (1 + t + r) ** (1 - delta) * (1 + np.abs(t - r)) ** 0.5
    sup_bad = float(np.max(w1[None] * dmag))
    rs = np.maximum(r, grid.h)
    dr = (X * g[:, 0] + Y * g[:, 1] + Z * g[:, 2]) / rs
    dv = 0.5 * (state.pi + dr)
    exy = (X * g[:, 1] - Y * g[:, 0]) / rs
    exz = (X * g[:, 2] - Z * g[:, 0]) / rs
    eyz = (Y * g[:, 2] - Z * g[:, 1]) / rs
    gbar = np.max(np.abs(np.stack([dv, exy, exz, eyz], axis=1)), axis=1)
    w2 = (1 + t + r) ** (1.5 - delta)
    sup_good = float(np.max(w2[None] * gbar))
    return sup_bad, sup_good


def multiplier_energy(state, coeffs, q0=1e-2):
    """Weighted instability energy int e^{-g} (|d_y|^2 + |d_z|^2 + 4|d_v'|^2)/2.

    g = sqrt(Q(u')) sqrt(v' + 1) with Q' = |B_y|^2 + |B_z|^2 (operator
    norms) and Q(u_min) = q0 > 0, which gives 4 g_u g_v = Q' >= |B|^2 so the
    continuum energy is non-increasing in time.  v' + 1 is clamped at 0;
    supported data keeps v' >= -1.
    """
    grid, t = state.grid, state.t
    u_tab = coeffs.u
    norms = (np.linalg.norm(coeffs.By, ord=2, axis=(1, 2)) ** 2
             + np.linalg.norm(coeffs.Bz, ord=2, axis=(1, 2)) ** 2)
    h_tab = u_tab[1] - u_tab[0]
    Q = q0 + np.concatenate([[0.0], np.cumsum(0.5 * (norms[1:] + norms[:-1]) * h_tab)])
    u_nodes = t - grid.x
    Qx = np.interp(u_nodes, u_tab, Q)
    vpx = np.maximum(t + grid.x + 1.0, 0.0)
    gx = np.sqrt(Qx) * np.sqrt(vpx)
    w = np.exp(-gx)[None, :, None, None]
    g = gradient(state.psi, grid)
    dv = 0.5 * (state.pi + g[:, 0])
    dens = 0.5 * (g[:, 1] ** 2 + g[:, 2] ** 2 + 4.0 * dv * dv)
    return float(np.sum(w * dens)) * grid.h ** 3


def gamma_energy(state, renorm):
    """Flat energy of gamma = A(t - x) psi.

    gamma is formed pointwise on the grid and its spatial part measured with
    the same compatible one-sided differences as flat_energy; the time
    derivative needs the product rule, d_t gamma = A pi + A' psi.
    """
    grid, t = state.grid, state.t
    u = t - grid.x
    A = renorm.at(u)                            # (nx, N, N)
    fp = renorm.profile.eval(u, order=1)        # (nx, N)
    lam = np.einsum("ijl,xj->xil",
                    coupling_tensors(renorm.system).a, fp)
    Ap = -0.5 * np.einsum("xij,xjk->xik", A, lam)
    gam = np.einsum("xij,jxyz->ixyz", A, state.psi)
    gam_t = (np.einsum("xij,jxyz->ixyz", A, state.pi)
             + np.einsum("xij,jxyz->ixyz", Ap, state.psi))
    dens = gam_t ** 2 + _forward_grad_sq(gam, grid)
    return 0.5 * float(np.sum(dens)) * grid.h ** 3


# ---------------------------------------------------------------------------
# commuting vector-field norms (bootstrap surrogates)

def _coeff_grids(name, grid, t):
    """Numeric (c^t, c^x, c^y, c^z) and their time derivatives on the grid."""
    import sympy as sp
    X, Y, Z = np.meshgrid(grid.x, grid.y, grid.z, indexing="ij")
    subs = {diag._T: t}
    vals, tder = [], []
    for cexpr in diag.FIELD_COEFFS[name]:
        cexpr = sp.sympify(cexpr)
        ct = sp.diff(cexpr, diag._T)
        f = sp.lambdify((diag._X, diag._Y, diag._Z), cexpr.subs(subs), "numpy")
        ft = sp.lambdify((diag._X, diag._Y, diag._Z), ct.subs(subs), "numpy")
        vals.append(np.broadcast_to(np.asarray(f(X, Y, Z), dtype=float), X.shape))
        tder.append(np.broadcast_to(np.asarray(ft(X, Y, Z), dtype=float), X.shape))
    return vals, tder


def _apply_jet(name, jet, grid, t, need_tt=False):
    """Gamma applied to a jet (v, v_t[, v_tt, v_ttt]) of grid functions.

    Coefficients of the eleven fields are degree-1 polynomials, so their
    second time derivatives vanish and the chain rule terminates.
    """
    (c, ct) = _coeff_grids(name, grid, t)
    v, vt = jet[0], jet[1]
    gv = gradient(v, grid)
    gvt = gradient(vt, grid)
    w = c[0] * vt + c[1] * gv[:, 0] + c[2] * gv[:, 1] + c[3] * gv[:, 2]
    vtt = jet[2]
    wt = (ct[0] * vt + c[0] * vtt
          + ct[1] * gv[:, 0] + ct[2] * gv[:, 1] + ct[3] * gv[:, 2]
          + c[1] * gvt[:, 0] + c[2] * gvt[:, 1] + c[3] * gvt[:, 2])
    if not need_tt:
        return (w, wt)
    vttt = jet[3]
    gvtt = gradient(vtt, grid)
    wtt = (2 * ct[0] * vtt + c[0] * vttt
           + 2 * (ct[1] * gvt[:, 0] + ct[2] * gvt[:, 1] + ct[3] * gvt[:, 2])
           + c[1] * gvtt[:, 0] + c[2] * gvtt[:, 1] + c[3] * gvtt[:, 2])
    return (w, wt, wtt)


def _string_weight(string):
    return sum(diag.FIELD_WEIGHTS[s] for s in string)


def weighted_norms(state, rhs_op, delta=0.05, max_order=2):
    """Bootstrap-style norms E_1, E_2 from a single snapshot.

    E_k = sum over strings |alpha| <= max_order with at most k weighted
    factors of ||d Gamma^alpha psi||_{L2} plus the (1+|u|)^{-1-delta}
    weighted good-derivative L2 norm (time-slice surrogate of the null-cone
    flux); E_2 carries the (1+t)^{-delta} prefactor.

    Time derivatives through the strings are reconstructed via the PDE
    (pi_t = Lap psi + RHS); the deepest time derivative uses the linear
    closure psi_ttt ~ Lap pi + RHS_t.
    """
    grid, t = state.grid, state.t
    g = gradient(state.psi, grid)
    acc = laplacian(state.psi, grid) + rhs_op(state.psi, state.pi, g, t, grid)
    acc_t = (laplacian(state.pi, grid)
             + rhs_op.time_derivative(state.psi, state.pi, g, acc, t, grid))
    jet0 = (state.psi, state.pi, acc, acc_t)

    X, Y, Z, r = _radial_frame(grid)
    rs = np.maximum(r, grid.h)
    u_wt = (1.0 + np.abs(t - r)) ** (-1.0 - delta)
    h3 = grid.h ** 3

    def l2(a):
        return float(np.sqrt(np.sum(a * a) * h3))

    def norms_of(pair):
        v, vt = pair[0], pair[1]
        gv = gradient(v, grid)
        bad = l2(vt) + sum(l2(gv[:, k]) for k in range(3))
        dr = (X * gv[:, 0] + Y * gv[:, 1] + Z * gv[:, 2]) / rs
        dv = 0.5 * (vt + dr)
        exy = (X * gv[:, 1] - Y * gv[:, 0]) / rs
        exz = (X * gv[:, 2] - Z * gv[:, 0]) / rs
        eyz = (Y * gv[:, 2] - Z * gv[:, 1]) / rs
        good = float(np.sqrt(np.sum(
            u_wt[None] * (dv * dv + exy * exy + exz * exz + eyz * eyz)) * h3))
        return bad + good

    names = diag.field_names()
    e = {1: 0.0, 2: 0.0}
    base = norms_of(jet0)
    e[1] += base
    e[2] += base
    cache1 = {}
    for n1 in names:
        cache1[n1] = _apply_jet(n1, jet0, grid, t, need_tt=(max_order >= 2))
        w = diag.FIELD_WEIGHTS[n1]
        val = norms_of(cache1[n1])
        if w <= 1:
            e[1] += val
        e[2] += val
    if max_order >= 2:
        for n1, n2 in product(names, repeat=2):
            w = diag.FIELD_WEIGHTS[n1] + diag.FIELD_WEIGHTS[n2]
            pair = _apply_jet(n1, cache1[n2], grid, t, need_tt=False)
            val = norms_of(pair)
            if w <= 1:
                e[1] += val
            e[2] += val
    return {"E1": e[1], "E2": e[2] * (1.0 + t) ** (-delta)}


# ---------------------------------------------------------------------------
# evolution loop

@dataclass
class DiagnosticsLedger:
    rows: list = field(default_factory=list)

    def record(self, **kw):
        self.rows.append(kw)

    def column(self, key):
        return np.array([r[key] for r in self.rows])

    def write_csv(self, path):
        keys = list(self.rows[0].keys()) if self.rows else []
        with open(path, "w") as fh:
            fh.write(",".join(keys) + "\n")
            for r in self.rows:
                fh.write(",".join(repr(r[k]) for k in keys) + "\n")


def evolve(state, rhs_op, t_max, out_every=1.0, renorm=None, coeffs=None,
           delta=0.05, collect_weighted_norms=False, on_output=None):
    """Advance the state to t_max, recording diagnostics every out_every.

    Returns (ledger, state).  NaN/Inf in the fields at an output time raises
    BlowupDetected (the ledger keeps everything recorded up to that point).
    """
    grid = state.grid
    dt0 = grid.dt_max
    n_per_out = max(1, int(np.ceil(out_every / dt0)))
    dt = out_every / n_per_out
    n_out = int(round(t_max / out_every))

    ledger = DiagnosticsLedger()

    def sample():
        row = {"t": state.t, "flat_energy": flat_energy(state),
               "sup_dpsi": sup_dpsi(state)}
        if grid.geometry == "ball":
            row["sup_weighted_dpsi"], row["sup_weighted_dbar"] = \
                weighted_sups(state, delta=delta)
        if renorm is not None:
            row["gamma_energy"] = gamma_energy(state, renorm)
        if coeffs is not None:
            row["multiplier_energy"] = multiplier_energy(state, coeffs)
        if collect_weighted_norms:
            row.update(weighted_norms(state, rhs_op, delta=delta))
        ledger.record(**row)
        if not np.isfinite(row["flat_energy"]):
            raise BlowupDetected(f"non-finite fields at t = {state.t:g}")
        if on_output is not None:
            on_output(state, row)

    sample()
    for _ in range(n_out):
        for _ in range(n_per_out):
            psi, pi, t = state.psi, state.pi, state.t
            g = gradient(psi, grid)
            a1 = laplacian(psi, grid) + rhs_op(psi, pi, g, t, grid)
            pi_half = pi + 0.5 * dt * a1
            psi_new = psi + dt * pi_half
            g_new = gradient(psi_new, grid)
            lap_new = laplacian(psi_new, grid)
            # velocity-dependent force: one fixed-point pass on pi(t + dt)
            a2 = lap_new + rhs_op(psi_new, pi_half, g_new, t + dt, grid)
            pi_new = pi_half + 0.5 * dt * a2
            a2 = lap_new + rhs_op(psi_new, pi_new, g_new, t + dt, grid)
            pi_new = pi_half + 0.5 * dt * a2
            state.psi, state.pi, state.t = psi_new, pi_new, t + dt
        state.t = round(state.t / out_every) * out_every  # kill drift
        sample()
    return ledger, state


# ---------------------------------------------------------------------------
# snapshots

def write_snapshot(state, path_prefix):
    """Flat float64 binary (psi then pi) plus a JSON sidecar."""
    data = np.concatenate([state.psi.ravel(), state.pi.ravel()])
    bin_path = f"{path_prefix}.bin"
    data.astype("<f8").tofile(bin_path)
    meta = {
        "t": state.t,
        "n_components": int(state.psi.shape[0]),
        "shape": [int(s) for s in state.psi.shape],
        "dtype": "<f8",
        "layout": "psi then pi, C order",
        "grid": {"L": state.grid.L, "h": state.grid.h,
                 "geometry": state.grid.geometry,
                 "widths": list(state.grid.widths)},
    }
    with open(f"{path_prefix}.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return bin_path


def read_snapshot(path_prefix):
    with open(f"{path_prefix}.json") as fh:
        meta = json.load(fh)
    shape = tuple(meta["shape"])
    raw = np.fromfile(f"{path_prefix}.bin", dtype="<f8")
    n = int(np.prod(shape))
    grid = GridSpec(L=meta["grid"]["L"], h=meta["grid"]["h"],
                    geometry=meta["grid"]["geometry"],
                    widths=tuple(meta["grid"]["widths"]))
    return FieldState(grid=grid, psi=raw[:n].reshape(shape),
                      pi=raw[n:].reshape(shape), t=meta["t"])
