"""Null forms, null-form tensors, and semilinear wave systems.

Conventions
-----------
Covectors on R^{3+1} are length-4 arrays ordered (dt, dx, dy, dz).  The
Minkowski metric has signature (+,-,-,-).  A bilinear form is a 4x4 real
matrix M acting as m(xi, eta) = xi^T M eta.  A form satisfies the null
condition iff its symmetric part is a multiple of the metric, equivalently
m(xi, xi) = 0 for every null covector xi.

A system of N wave equations

    Box phi_i = sum_{j,l} m_{ijl}(d phi_j, d phi_l)

is stored as an (N, N, N, 4, 4) tensor, pre-symmetrized so that
M[i, j, l] = M[i, l, j]^T.  All quadratic quantities are invariant under
that symmetrization, so it is performed once at construction time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MINKOWSKI = np.diag([1.0, -1.0, -1.0, -1.0])

# frequently used covectors: du' = dt - dx, dv' = dt + dx
DU_PRIME = np.array([1.0, -1.0, 0.0, 0.0])
DV_PRIME = np.array([1.0, 1.0, 0.0, 0.0])
DY = np.array([0.0, 0.0, 1.0, 0.0])
DZ = np.array([0.0, 0.0, 0.0, 1.0])


def eval_form(M, xi, eta):
    """Evaluate the bilinear form m(xi, eta) = xi^T M eta."""
    return float(np.asarray(xi) @ np.asarray(M) @ np.asarray(eta))


def standard_null_form():
    """The flat d'Alembertian polarization Q0: m(d phi, d psi) = <d phi, d psi>_g."""
    return MINKOWSKI.copy()


def antisymmetric_form(a, b):
    """The null form Q_{ab} = dx^a wedge dx^b (antisymmetric, automatically null)."""
    M = np.zeros((4, 4))
    M[a, b] = 1.0
    M[b, a] = -1.0
    return M


def is_null_form(M, tol=1e-10):
    """Test whether a 4x4 form satisfies the null condition.

    Returns (verdict, c) where c is the least-squares multiple of the
    Minkowski metric matching the symmetric part.  The residual is measured
    in the max norm, scaled by max(1, ||M||_max) so the test is meaningful
    for forms of any magnitude.
    """
    M = np.asarray(M, dtype=float)
    S = 0.5 * (M + M.T)
    # <S, g> / <g, g> with g = diag(1,-1,-1,-1); <g,g> = 4
    c = (S[0, 0] - S[1, 1] - S[2, 2] - S[3, 3]) / 4.0
    resid = np.max(np.abs(S - c * MINKOWSKI))
    scale = max(1.0, np.max(np.abs(M)))
    return bool(resid <= tol * scale), float(c)


def null_vector_test(M, tol=1e-10, n_vectors=10_000, seed=7):
    """Cross-check of the null condition: m(xi, xi) over random null covectors.

    Draws xi = (1, omega) with omega uniform on S^2 (these are exactly the
    future null covectors up to scale) and checks |xi^T M xi| against the
    same scaled threshold as :func:`is_null_form`.
    """
    M = np.asarray(M, dtype=float)
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(n_vectors, 3))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    xi = np.concatenate([np.ones((n_vectors, 1)), w], axis=1)
    vals = np.einsum("na,ab,nb->n", xi, M, xi)
    scale = max(1.0, np.max(np.abs(M)))
    # |xi|^2 = 2 for xi = (1, omega); fold that into the threshold so the
    # two tests use commensurate residuals
    return bool(np.max(np.abs(vals)) <= 2.0 * tol * scale)


class NotNullFormError(ValueError):
    pass


@dataclass
class SemilinearSystem:
    """System Box phi_i = sum_{jl} m_{ijl}(d phi_j, d phi_l), pre-symmetrized."""

    n: int
    tensor: np.ndarray  # (N, N, N, 4, 4)
    label: str = ""

    def form(self, i, j, l):
        return self.tensor[i, j, l]


def make_system(n, entries, label="", check_null=True, tol=1e-10):
    """Build a SemilinearSystem from a dict {(i, j, l): 4x4 matrix} (0-based).

    The stored tensor is symmetrized: M[i,j,l] <- (raw[i,j,l] + raw[i,l,j]^T)/2,
    which leaves every quadratic contraction unchanged.
    """
    raw = np.zeros((n, n, n, 4, 4))
    for (i, j, l), M in entries.items():
        raw[i, j, l] += np.asarray(M, dtype=float)
    sym = 0.5 * (raw + np.transpose(raw, (0, 2, 1, 4, 3)))
    if check_null:
        for i in range(n):
            for j in range(n):
                for l in range(n):
                    if not np.any(sym[i, j, l]):
                        continue
                    ok, _ = is_null_form(sym[i, j, l], tol=tol)
                    if not ok:
                        raise NotNullFormError(
                            f"form ({i},{j},{l}) violates the null condition"
                        )
    return SemilinearSystem(n=n, tensor=sym, label=label)


def example_system(name):
    """Built-in two-component fixtures.

    "example1": Box phi_1 = 2 Q0(d phi_1, d phi_2), Box phi_2 = Q0(d phi_1, d phi_1).
        Around the plane wave (0, f(t-x)) the linearization of the first
        equation is 2 f'(t-x) (dt + dx) . d psi_1: no transverse derivatives,
        Condition 1 holds (stable regime).

    "example2": Box phi_1 = 2 Q_{ty}(d phi_1, d phi_2), Box phi_2 = Q0(d phi_1, d phi_1).
        Linearization is -2 f'(t-x) d_y psi_1: a transverse derivative with a
        coefficient of definite sign, Condition 2 holds (unstable regime).
    """
    m0 = standard_null_form()
    if name == "example1":
        ent = {(0, 0, 1): m0, (0, 1, 0): m0, (1, 0, 0): m0}
    elif name == "example2":
        ma = antisymmetric_form(0, 2)  # dt wedge dy
        ent = {(0, 0, 1): ma, (0, 1, 0): ma.T, (1, 0, 0): m0}
    elif name == "nirenberg":
        # scalar Box phi = Q0(d phi, d phi); phi = exp(-eta) - 1 linearizes it
        return make_system(1, {(0, 0, 0): m0}, label="nirenberg")
    else:
        raise KeyError(f"unknown example system {name!r}")
    return make_system(2, ent, label=name)


def quadratic_rhs(system, gradients):
    """Full quadratic nonlinearity Q_i = sum_{jl} m_{ijl}(g_j, g_l).

    gradients: array (..., N, 4) of covector values d phi_j.
    Returns array (..., N).
    """
    g = np.asarray(gradients, dtype=float)
    return np.einsum("ijlab,...ja,...lb->...i", system.tensor, g, g)


@dataclass
class CouplingTensors:
    """Plane-wave coupling tensors a, b, c, each of shape (N, N, N).

    The linearized system around the travelling wave f(t-x) reads

        Box psi_i = sum_l [ Lam_a(u)_{il} (d_t + d_x) psi_l
                          + Lam_b(u)_{il} d_y psi_l + Lam_c(u)_{il} d_z psi_l ]

    with Lam_x(u)_{il} = sum_j x_{ijl} f_j'(u), x in {a, b, c}.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def lam(self, fprime):
        """Coefficient matrices (Lam_a, Lam_b, Lam_c) at f'(u) = fprime (N,)."""
        fp = np.asarray(fprime, dtype=float)
        la = np.einsum("ijl,j->il", self.a, fp)
        lb = np.einsum("ijl,j->il", self.b, fp)
        lc = np.einsum("ijl,j->il", self.c, fp)
        return la, lb, lc


def coupling_tensors(system):
    """Contract the system tensor against the plane-wave frame covectors.

    a_{ijl} = 1/2 [m_{ijl}(du', dv') + m_{ilj}(dv', du')]
    b_{ijl} =      m_{ijl}(du', dy)  + m_{ilj}(dy, du')
    c_{ijl} =      m_{ijl}(du', dz)  + m_{ilj}(dz, du')

    The two-term combinations make the definition independent of how the raw
    tensor split mass between the (j,l) and (l,j) slots.
    """
    T = system.tensor
    Tsw = np.transpose(T, (0, 2, 1, 3, 4))

    def contract(X, xi, eta):
        return np.einsum("ijlab,a,b->ijl", X, xi, eta)

    a = 0.5 * (contract(T, DU_PRIME, DV_PRIME) + contract(Tsw, DV_PRIME, DU_PRIME))
    b = contract(T, DU_PRIME, DY) + contract(Tsw, DY, DU_PRIME)
    c = contract(T, DU_PRIME, DZ) + contract(Tsw, DZ, DU_PRIME)
    return CouplingTensors(a=a, b=b, c=c)


@dataclass
class ConditionOneReport:
    holds: bool
    violations: list = field(default_factory=list)


def check_condition_one(system, active, tol=1e-12):
    """Condition 1: all b, c entries touching an active profile component vanish.

    active: iterable of 0-based component indices with f_j not identically 0.
    A (b or c)_{ijl} entry matters when j or l is active.  When Condition 1
    holds the linearized system has no transverse derivative terms and the
    plane wave is in the stable regime.
    """
    ct = coupling_tensors(system)
    act = set(int(k) for k in active)
    bad = []
    for name, X in (("b", ct.b), ("c", ct.c)):
        idx = np.argwhere(np.abs(X) > tol)
        for i, j, l in idx:
            if j in act or l in act:
                bad.append((name, int(i), int(j), int(l), float(X[i, j, l])))
    return ConditionOneReport(holds=not bad, violations=bad)


# ---------------------------------------------------------------------------
# JSON system format:  {"N": int, "forms": [{"i","j","l","matrix":[16 floats]}]}
# with 1-based component indices and the matrix flattened row-major.

def system_from_dict(d, label="", check_null=True):
    n = int(d["N"])
    entries = {}
    for rec in d["forms"]:
        i, j, l = int(rec["i"]) - 1, int(rec["j"]) - 1, int(rec["l"]) - 1
        if not (0 <= i < n and 0 <= j < n and 0 <= l < n):
            raise ValueError(f"form index out of range: {rec}")
        M = np.asarray(rec["matrix"], dtype=float).reshape(4, 4)
        if (i, j, l) in entries:
            entries[(i, j, l)] = entries[(i, j, l)] + M
        else:
            entries[(i, j, l)] = M
    return make_system(n, entries, label=label, check_null=check_null)


def system_to_dict(system):
    forms = []
    for i in range(system.n):
        for j in range(system.n):
            for l in range(system.n):
                M = system.tensor[i, j, l]
                if np.any(M):
                    forms.append(
                        {"i": i + 1, "j": j + 1, "l": l + 1,
                         "matrix": [float(x) for x in M.ravel()]}
                    )
    return {"N": system.n, "forms": forms}


def random_null_form(rng, scale=1.0):
    """Random form satisfying the null condition: c*g + antisymmetric part."""
    A = rng.normal(size=(4, 4), scale=scale)
    A = 0.5 * (A - A.T)
    c = rng.normal(scale=scale)
    return c * MINKOWSKI + A


def random_null_system(rng, n):
    """Random pre-symmetrized system in which every component form is null."""
    ent = {}
    for i in range(n):
        for j in range(n):
            for l in range(n):
                ent[(i, j, l)] = random_null_form(rng)
    return make_system(n, ent, label="random")
