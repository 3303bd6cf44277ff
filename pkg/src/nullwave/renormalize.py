"""Renormalizer ODE and linearized coefficient tables.

The linearization of the system around the plane wave f(t-x) is

    Box psi_i = Lam_a(u)_{il} (d_t + d_x) psi_l + Lam_b(u)_{il} d_y psi_l
              + Lam_c(u)_{il} d_z psi_l,          u = t - x.

The renormalizer A(u) solves A' = -1/2 A Lam_a with A(1) = Id (integrated
leftwards); gamma = A psi removes the (d_t + d_x) term, leaving

    Box gamma_i = (B_y)_{ip} d_y gamma_p + (B_z)_{ip} d_z gamma_p,
    B_y = A Lam_b A^{-1},  B_z = A Lam_c A^{-1}.

Both B matrices vanish for |u| >= 1 because every Lam carries a factor f'.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import coupling_tensors


class StepSizeError(RuntimeError):
    """Raised when the RK4 local error estimate exceeds the tolerance."""


@dataclass
class Renormalizer:
    u: np.ndarray           # ascending grid, [-1 - pad, 1 + pad]
    A: np.ndarray           # (n_u, N, N)
    Ainv: np.ndarray        # (n_u, N, N)
    lam_a: np.ndarray       # (n_u, N, N)
    system: object
    profile: object

    @property
    def n(self):
        return self.A.shape[1]

    def at(self, u):
        """Linear interpolation of A onto arbitrary u (clamped to the grid)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        uc = np.clip(u, self.u[0], self.u[-1])
        h = self.u[1] - self.u[0]
        k = np.clip(((uc - self.u[0]) / h).astype(int), 0, len(self.u) - 2)
        w = (uc - self.u[k]) / h
        return (1 - w)[:, None, None] * self.A[k] + w[:, None, None] * self.A[k + 1]


def solve_renormalizer(system, profile, h=1e-3, pad=0.05, err_tol=1e-8):
    """Integrate A' = -1/2 A Lam_a(u) from u = 1 down to u = -1 - pad.

    Classical RK4 with per-step step-doubling error estimation; a local
    error estimate above ``err_tol`` raises StepSizeError.  A is exactly Id
    for u >= 1 and exactly constant for u <= -1 (f' vanishes there).
    """
    ct = coupling_tensors(system)
    N = system.n

    u_lo, u_hi = -1.0 - pad, 1.0 + pad
    n_steps = int(round((u_hi - u_lo) / h))
    grid = u_hi - h * np.arange(n_steps + 1)  # descending from 1 + pad
    # Lam_a on quarter-step nodes, one vectorized profile evaluation; the
    # RK4 full/half steps below only ever sample these nodes.
    u_q = u_hi - 0.25 * h * np.arange(4 * n_steps + 1)
    lam_q = np.einsum("ijl,uj->uil", ct.a, profile.eval(u_q, order=1))

    def rk4_tab(A, step, l0, lm, l1):
        k1 = -0.5 * A @ l0
        k2 = -0.5 * (A + 0.5 * step * k1) @ lm
        k3 = -0.5 * (A + 0.5 * step * k2) @ lm
        k4 = -0.5 * (A + step * k3) @ l1
        return A + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    A_desc = np.empty((n_steps + 1, N, N))
    A = np.eye(N)
    A_desc[0] = A
    for k in range(n_steps):
        u = grid[k]
        if u <= 1.0 + 1e-12 and grid[k + 1] >= -1.0 - 1e-12:
            q = 4 * k
            full = rk4_tab(A, -h, lam_q[q], lam_q[q + 2], lam_q[q + 4])
            half = rk4_tab(rk4_tab(A, -0.5 * h, lam_q[q], lam_q[q + 1],
                                   lam_q[q + 2]),
                           -0.5 * h, lam_q[q + 2], lam_q[q + 3], lam_q[q + 4])
            err = np.max(np.abs(full - half)) / 15.0
            if err > err_tol:
                raise StepSizeError(
                    f"local error {err:.3e} exceeds {err_tol:.1e} at u={u:.4f}; "
                    "reduce h")
            A = half  # keep the more accurate value
        # outside (-1, 1): Lam_a == 0, A unchanged
        A_desc[k + 1] = A

    u_asc = grid[::-1].copy()
    A_asc = A_desc[::-1].copy()
    lam = lam_q[::-4].copy()
    Ainv = np.linalg.inv(A_asc)
    return Renormalizer(u=u_asc, A=A_asc, Ainv=Ainv, lam_a=lam,
                        system=system, profile=profile)


@dataclass
class LinearizedCoefficients:
    """Tables of B_y(u), B_z(u) on the renormalizer grid, plus interpolants."""

    u: np.ndarray
    By: np.ndarray  # (n_u, N, N)
    Bz: np.ndarray
    renorm: Renormalizer

    @property
    def n(self):
        return self.By.shape[1]

    def _interp(self, table, u):
        u_in = np.asarray(u, dtype=float)
        u = np.atleast_1d(u_in)
        out = np.zeros(u.shape + table.shape[1:])
        mask = (u > self.u[0]) & (u < self.u[-1])
        if np.any(mask):
            h = self.u[1] - self.u[0]
            k = np.clip(((u[mask] - self.u[0]) / h).astype(int), 0, len(self.u) - 2)
            w = ((u[mask] - self.u[k]) / h)[:, None, None]
            out[mask] = (1 - w) * table[k] + w * table[k + 1]
        if u_in.ndim == 0:
            return out[0]
        return out

    def by_at(self, u):
        return self._interp(self.By, u)

    def bz_at(self, u):
        return self._interp(self.Bz, u)

    def scalar_by(self):
        """Callable u -> B_y(u)[0,0] for N = 1 paths."""
        return lambda u: self._interp(self.By, u)[..., 0, 0]

    def to_rows(self):
        rows = []
        for k, u in enumerate(self.u):
            row = {"u": float(u)}
            for i in range(self.n):
                for j in range(self.n):
                    row[f"By_{i + 1}{j + 1}"] = float(self.By[k, i, j])
                    row[f"Bz_{i + 1}{j + 1}"] = float(self.Bz[k, i, j])
            rows.append(row)
        return rows


def linearized_coefficients(system, profile, h=1e-3, pad=0.05, renorm=None):
    """Compute B_y, B_z tables from the renormalizer conjugation."""
    if renorm is None:
        renorm = solve_renormalizer(system, profile, h=h, pad=pad)
    ct = coupling_tensors(system)
    fp = profile.eval(renorm.u, order=1)  # (n_u, N)
    lam_b = np.einsum("ijl,uj->uil", ct.b, fp)
    lam_c = np.einsum("ijl,uj->uil", ct.c, fp)
    By = np.einsum("uij,ujk,ukl->uil", renorm.A, lam_b, renorm.Ainv)
    Bz = np.einsum("uij,ujk,ukl->uil", renorm.A, lam_c, renorm.Ainv)
    return LinearizedCoefficients(u=renorm.u, By=By, Bz=Bz, renorm=renorm)


def spectral_abscissa(M):
    """max Re eigenvalue of a square matrix."""
    return float(np.max(np.real(np.linalg.eigvals(np.asarray(M, dtype=float)))))


def _max_abs_real_eig(M):
    return float(np.max(np.abs(np.real(np.linalg.eigvals(M)))))


@dataclass
class ConditionTwoReport:
    satisfied: bool
    theta: float
    u: float
    value: float  # max |Re eigenvalue| at the witness


def check_condition_two(coeffs, n_theta=360, threshold=1e-8, u_stride=None):
    """Condition 2: some pencil cos(th) B_y(u) + sin(th) B_z(u) has an
    eigenvalue with nonzero real part.

    Scans th in [0, pi) (the metric is invariant under M -> -M) against the
    u-grid, then runs one golden-section refinement pass in th at the best u.
    """
    mask = (coeffs.u > -1.0) & (coeffs.u < 1.0)
    u_nodes = coeffs.u[mask]
    By, Bz = coeffs.By[mask], coeffs.Bz[mask]
    if u_stride is None:
        u_stride = max(1, len(u_nodes) // 400)
    u_nodes, By, Bz = u_nodes[::u_stride], By[::u_stride], Bz[::u_stride]

    thetas = np.linspace(0.0, np.pi, n_theta, endpoint=False)
    best = (-1.0, 0.0, 0.0)
    for th in thetas:
        P = np.cos(th) * By + np.sin(th) * Bz
        vals = np.abs(np.real(np.linalg.eigvals(P))).max(axis=1)
        k = int(np.argmax(vals))
        if vals[k] > best[0]:
            best = (float(vals[k]), float(th), float(u_nodes[k]))
    val, th0, u0 = best

    # golden-section refinement in theta at the witness u
    Byu = coeffs.by_at(np.array([u0]))[0]
    Bzu = coeffs.bz_at(np.array([u0]))[0]

    def metric(th):
        return _max_abs_real_eig(np.cos(th) * Byu + np.sin(th) * Bzu)

    dth = np.pi / n_theta
    a, b = th0 - dth, th0 + dth
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - gr * (b - a), a + gr * (b - a)
    fc, fd = metric(c), metric(d)
    for _ in range(40):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = metric(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = metric(d)
    th_ref = 0.5 * (a + b)
    val_ref = metric(th_ref)
    if val_ref < val:
        th_ref, val_ref = th0, val
    return ConditionTwoReport(satisfied=bool(val_ref > threshold),
                              theta=float(th_ref % np.pi), u=u0, value=float(val_ref))


@dataclass
class GrowthRateEstimate:
    K: float
    u0: float
    u1: float
    theta: float
    method: str  # "scalar" or "matrix" or "none"

    @property
    def positive(self):
        return self.K > 1e-12


def _best_pair(u, vals, require_positive=False):
    """max over u0 < u1 of cumint(vals)/(sqrt2 sqrt(u1-u0)) via prefix sums.

    With require_positive, pairs whose interval contains a nonpositive value
    are excluded (matrix path: the spectral abscissa only bounds growth where
    it is positive).
    """
    h = u[1] - u[0]
    F = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * h)])
    best = (-np.inf, u[0], u[-1])
    if require_positive:
        pos = vals > 0
        # maximal positive runs
        edges = np.flatnonzero(np.diff(np.concatenate([[0], pos.view(np.int8), [0]])))
        for s, e in zip(edges[::2], edges[1::2]):
            if e - s < 2:
                continue
            uu, FF = u[s:e], F[s:e]
            dF = FF[None, :] - FF[:, None]
            dU = uu[None, :] - uu[:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                R = np.where(dU > 0, dF / (np.sqrt(2.0) * np.sqrt(np.abs(dU) + (dU <= 0))), -np.inf)
            k = int(np.argmax(R))
            i0, i1 = divmod(k, len(uu))
            if R.ravel()[k] > best[0]:
                best = (float(R.ravel()[k]), float(uu[i0]), float(uu[i1]))
    else:
        dF = F[None, :] - F[:, None]
        dU = u[None, :] - u[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            R = np.where(dU > 0, dF / (np.sqrt(2.0) * np.sqrt(np.abs(dU) + (dU <= 0))), -np.inf)
        k = int(np.argmax(R))
        i0, i1 = divmod(k, len(u))
        best = (float(R.ravel()[k]), float(u[i0]), float(u[i1]))
    return best


def growth_rate_estimate(coeffs, n_theta=360, max_nodes=800):
    """Predicted exponential rate K: sup over windows [u0, u1] of
    (1/(sqrt2 sqrt(u1-u0))) * int lambda, cf. the Bessel asymptotics.

    Scalar path (N = 1, B_z == 0): lambda = B_y itself, signed integrals
    allowed (flipping xi_y flips the effective sign of B).  Matrix path:
    lambda_theta(u) = spectral abscissa of cos(th) B_y + sin(th) B_z over
    th in [0, 2pi), restricted to windows where it stays positive.
    """
    stride = max(1, len(coeffs.u) // max_nodes)
    u = coeffs.u[::stride]
    By, Bz = coeffs.By[::stride], coeffs.Bz[::stride]

    if coeffs.n == 1 and np.max(np.abs(Bz)) < 1e-14:
        b = By[:, 0, 0]
        for sgn in (1.0, -1.0):
            K, u0, u1 = _best_pair(u, sgn * b)
            if sgn == 1.0 or K > bestK:
                bestK, bu0, bu1, bth = K, u0, u1, 0.0 if sgn > 0 else np.pi
        if bestK <= 1e-12:
            return GrowthRateEstimate(K=0.0, u0=0.0, u1=0.0, theta=0.0, method="none")
        return GrowthRateEstimate(K=bestK, u0=bu0, u1=bu1, theta=bth, method="scalar")

    best = GrowthRateEstimate(K=-np.inf, u0=0.0, u1=0.0, theta=0.0, method="matrix")
    for th in np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False):
        P = np.cos(th) * By + np.sin(th) * Bz
        lam = np.real(np.linalg.eigvals(P)).max(axis=1)
        if not np.any(lam > 0):
            continue
        K, u0, u1 = _best_pair(u, lam, require_positive=True)
        if K > best.K:
            best = GrowthRateEstimate(K=K, u0=u0, u1=u1, theta=float(th),
                                      method="matrix")
    if not np.isfinite(best.K) or best.K <= 1e-12:
        return GrowthRateEstimate(K=0.0, u0=0.0, u1=0.0, theta=0.0, method="none")
    return best
