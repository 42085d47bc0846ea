"""Polyhedra, linear programming, and inscribed-center computations.

All sets are halfspace-represented: P = {x | A x <= b}. The LP backend is a
dense two-phase primal simplex (float64) with an anti-cycling fallback to
Bland's rule, sized for the small problems this package produces (tens of
variables, at most a few hundred rows).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Feasibility / optimality tolerances shared by every consumer of this module.
TOL_FEAS = 1e-7
TOL_OPT = 1e-7

_PIVOT_TOL = 1e-9
_STALL_LIMIT = 40
_MAX_ITER = 20000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class GeometryError(ValueError):
    """Raised on malformed inputs (dimension mismatches, NaN entries)."""


@dataclass(frozen=True)
class Polyhedron:
    """Convex set {x in R^dim | A x <= b}.

    Emptiness is a query result (see :func:`chebyshev`), never an invalid
    state. Instances are immutable; row additions go through
    :func:`append_rows`.
    """

    A: np.ndarray
    b: np.ndarray
    dim: int

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        if A.size == 0:
            A = A.reshape(0, self.dim)
        if A.shape[1] != self.dim:
            raise GeometryError(
                f"constraint matrix has {A.shape[1]} columns, expected {self.dim}")
        if A.shape[0] != b.shape[0]:
            raise GeometryError(
                f"{A.shape[0]} rows but {b.shape[0]} offsets")
        if not (np.isfinite(A).all() and np.isfinite(b).all()):
            raise GeometryError("non-finite entry in polyhedron data")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def rows(self) -> int:
        return self.A.shape[0]

    def contains(self, x, tol: float = TOL_FEAS) -> bool:
        x = np.asarray(x, dtype=float)
        if self.rows == 0:
            return True
        return bool(np.all(self.A @ x <= self.b + tol))

    def violation(self, x) -> float:
        """Largest constraint violation at x (<= 0 means feasible)."""
        if self.rows == 0:
            return -np.inf
        return float(np.max(self.A @ np.asarray(x, float) - self.b))

    @staticmethod
    def from_box(bounds) -> "Polyhedron":
        """Axis-aligned box from [(lo, hi), ...] per coordinate."""
        bounds = [(float(lo), float(hi)) for lo, hi in bounds]
        dim = len(bounds)
        A = np.vstack([np.eye(dim), -np.eye(dim)])
        b = np.array([hi for _, hi in bounds] + [-lo for lo, _ in bounds])
        return Polyhedron(A, b, dim)

    @staticmethod
    def from_point(point) -> "Polyhedron":
        """Singleton {p} as the degenerate box [p, p]."""
        p = np.asarray(point, dtype=float).ravel()
        return Polyhedron.from_box([(v, v) for v in p])


@dataclass(frozen=True)
class LpOutcome:
    status: str
    point: np.ndarray | None = None
    objective: float | None = None


@dataclass(frozen=True)
class CenterResult:
    center: np.ndarray
    radius: float
    shape: np.ndarray | None = None  # MVE only: Cholesky-like factor L of the ellipsoid
    degraded: bool = False  # MVE fell back to the Chebyshev center


def append_rows(P: Polyhedron, A_new, b_new) -> Polyhedron:
    """Intersection of P with {x | A_new x <= b_new}; P itself is unmodified."""
    A_new = np.atleast_2d(np.asarray(A_new, dtype=float))
    b_new = np.asarray(b_new, dtype=float).ravel()
    if A_new.size == 0 and b_new.size == 0:
        return Polyhedron(P.A.copy(), P.b.copy(), P.dim)
    if A_new.shape[1] != P.dim:
        raise GeometryError(
            f"appended rows have {A_new.shape[1]} columns, expected {P.dim}")
    return Polyhedron(np.vstack([P.A, A_new]),
                      np.concatenate([P.b, b_new]), P.dim)


# ---------------------------------------------------------------------------
# Simplex backend
# ---------------------------------------------------------------------------

def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    T[:, c] = 0.0
    T[r, c] = 1.0


def _run_simplex(T: np.ndarray, basis: np.ndarray, ncols: int) -> str:
    """Minimize the canonicalized cost row of tableau T in place.

    T is (rows+1) x (ncols+1): constraint rows with rhs in the last column,
    cost row last. Uses Dantzig pricing, switching to Bland's rule once the
    objective stalls, which guarantees termination on degenerate problems.
    """
    stall = 0
    prev_obj = T[-1, -1]
    for _ in range(_MAX_ITER):
        costs = T[-1, :ncols]
        if stall >= _STALL_LIMIT:
            neg = np.nonzero(costs < -TOL_OPT)[0]
            if neg.size == 0:
                return OPTIMAL
            c = int(neg[0])  # Bland: lowest eligible index
        else:
            c = int(np.argmin(costs))
            if costs[c] >= -TOL_OPT:
                return OPTIMAL
        col = T[:-1, c]
        rhs = T[:-1, -1]
        ok = col > _PIVOT_TOL
        if not ok.any():
            return UNBOUNDED
        ratios = np.full(col.shape, np.inf)
        ratios[ok] = rhs[ok] / col[ok]
        rmin = ratios.min()
        ties = np.nonzero(ratios <= rmin + _PIVOT_TOL)[0]
        # leaving variable: lowest basis index among ties (anti-cycling)
        r = int(ties[np.argmin(basis[ties])])
        _pivot(T, r, c)
        basis[r] = c
        # The rhs cell of the cost row holds the negated objective, so
        # progress shows up as an increase there.
        obj = T[-1, -1]
        stall = stall + 1 if obj <= prev_obj + 1e-12 else 0
        prev_obj = obj
    raise RuntimeError("simplex iteration limit exceeded")


def _canonicalize_cost(T: np.ndarray, basis: np.ndarray) -> None:
    for r, j in enumerate(basis):
        if abs(T[-1, j]) > 0.0:
            T[-1] -= T[-1, j] * T[r]


def solve_lp(objective, sense: str, P: Polyhedron) -> LpOutcome:
    """Optimize a linear objective over P.

    sense is "min" or "max". Free variables are split into positive and
    negative parts before the two-phase simplex runs. On an Optimal outcome,
    the returned point is feasible within TOL_FEAS and optimal within
    TOL_OPT.
    """
    c = np.asarray(objective, dtype=float).ravel()
    if c.shape[0] != P.dim:
        raise GeometryError(
            f"objective has length {c.shape[0]}, expected {P.dim}")
    if sense not in ("min", "max"):
        raise GeometryError(f"unknown sense {sense!r}")
    if sense == "max":
        out = solve_lp(-c, "min", P)
        if out.status == OPTIMAL:
            return LpOutcome(OPTIMAL, out.point, -out.objective)
        return out

    D, R = P.dim, P.rows
    if R == 0:
        # No constraints: bounded only for a zero objective.
        if np.allclose(c, 0.0):
            return LpOutcome(OPTIMAL, np.zeros(D), 0.0)
        return LpOutcome(UNBOUNDED)

    # Standard form over z = [x+, x-, slack] >= 0:  [A, -A, I] z = b.
    A, b = P.A.copy(), P.b.copy()
    flip = b < 0.0
    sign = np.where(flip, -1.0, 1.0)
    E = np.hstack([A * sign[:, None], -A * sign[:, None],
                   np.diag(sign)])
    g = b * sign
    nstruct = 2 * D + R
    art_rows = np.nonzero(flip)[0]
    nart = art_rows.size

    T = np.zeros((R + 1, nstruct + nart + 1))
    T[:-1, :nstruct] = E
    T[:-1, -1] = g
    basis = np.empty(R, dtype=int)
    for k, r in enumerate(art_rows):
        T[r, nstruct + k] = 1.0
        basis[r] = nstruct + k
    clean = np.nonzero(~flip)[0]
    basis[clean] = 2 * D + clean  # slack columns form the rest of the basis

    if nart:
        T[-1, nstruct:nstruct + nart] = 1.0
        _canonicalize_cost(T, basis)
        status = _run_simplex(T, basis, nstruct + nart)
        if status != OPTIMAL:
            raise RuntimeError("phase-1 simplex failed to terminate cleanly")
        if -T[-1, -1] > TOL_FEAS * max(1.0, np.abs(g).max()):
            return LpOutcome(INFEASIBLE)
        # Pivot any artificial still in the basis out on a structural column.
        for r in range(R):
            if basis[r] >= nstruct:
                row = T[r, :nstruct]
                cand = np.nonzero(np.abs(row) > _PIVOT_TOL)[0]
                if cand.size:
                    _pivot(T, r, int(cand[0]))
                    basis[r] = int(cand[0])
        keep = basis < nstruct
        if not keep.all():
            # Redundant rows: zero them so they never pivot again.
            for r in np.nonzero(~keep)[0]:
                T[r, :nstruct] = 0.0
                T[r, -1] = 0.0
        T = np.delete(T, np.s_[nstruct:nstruct + nart], axis=1)

    T[-1, :] = 0.0
    T[-1, :D] = c
    T[-1, D:2 * D] = -c
    _canonicalize_cost(T, basis)
    status = _run_simplex(T, basis, nstruct)
    if status == UNBOUNDED:
        return LpOutcome(UNBOUNDED)
    z = np.zeros(nstruct)
    valid = basis < nstruct
    z[basis[valid]] = T[:-1, -1][valid]
    x = z[:D] - z[D:2 * D]
    return LpOutcome(OPTIMAL, x, float(c @ x))


def feasible_point(P: Polyhedron) -> np.ndarray | None:
    """Some point of P, or None when P is empty (phase-1 only query)."""
    out = solve_lp(np.zeros(P.dim), "min", P)
    return out.point if out.status == OPTIMAL else None


# ---------------------------------------------------------------------------
# Inscribed centers
# ---------------------------------------------------------------------------

def chebyshev(P: Polyhedron):
    """Center and radius of the largest inscribed Euclidean ball.

    Solves max r s.t. a_j^T x + r ||a_j||_2 <= b_j. Returns a CenterResult,
    or the string status "infeasible" sentinel via LpOutcome when P is empty.
    An unbounded inscribed ball reports radius = +inf.
    """
    if P.rows == 0:
        raise GeometryError("chebyshev requires at least one constraint row")
    norms = np.linalg.norm(P.A, axis=1)
    A_ext = np.hstack([P.A, norms[:, None]])
    Q = Polyhedron(A_ext, P.b, P.dim + 1)
    obj = np.zeros(P.dim + 1)
    obj[-1] = 1.0
    out = solve_lp(obj, "max", Q)
    if out.status == UNBOUNDED:
        # Ball radius unbounded: recover a center with a capped radius.
        cap = append_rows(Q, np.concatenate([np.zeros(P.dim), [1.0]])[None, :],
                          [1e30])
        capped = solve_lp(obj, "max", cap)
        return CenterResult(capped.point[:-1], np.inf)
    if out.status == INFEASIBLE:
        return LpOutcome(INFEASIBLE)
    r = out.objective
    if r < -TOL_FEAS:
        return LpOutcome(INFEASIBLE)
    return CenterResult(out.point[:-1], max(float(r), 0.0))


def _mve_start(P: Polyhedron):
    cheb = chebyshev(P)
    if isinstance(cheb, LpOutcome):
        raise GeometryError("MVE center of an empty polyhedron")
    if not np.isfinite(cheb.radius):
        raise GeometryError("MVE center of an unbounded polyhedron")
    if cheb.radius <= 0.0:
        return None, cheb
    return cheb.center.copy(), cheb


def mve_center(P: Polyhedron, max_iter: int = 200,
               grad_tol: float = 1e-8) -> CenterResult:
    """Center of the maximum-volume inscribed ellipsoid of a bounded P.

    The ellipsoid {x0 + L u : ||u|| <= 1} (L lower triangular, positive
    diagonal) is inscribed iff ||L^T a_j|| + a_j^T x0 <= b_j for every row,
    and its volume is proportional to det L. We minimize
    -sum(log diag L) - w * sum(log slack_j) by damped Newton steps with an
    analytic Hessian, shrinking the barrier weight w along a short path.
    On non-convergence the Chebyshev center is returned with degraded=True;
    the flat (radius ~ 0) case degrades the same way.
    """
    D = P.dim
    x0, cheb = _mve_start(P)
    if x0 is None:
        return CenterResult(cheb.center, cheb.radius, degraded=True)
    keep = np.linalg.norm(P.A, axis=1) > 0
    A, b = P.A[keep], P.b[keep]

    tril_r, tril_c = np.tril_indices(D)
    diag_idx = np.nonzero(tril_r == tril_c)[0]
    nL = tril_r.size
    n = D + nL
    # E[t, u] = 1 when the two triangle entries share a column index.
    E = (tril_c[:, None] == tril_c[None, :]).astype(float)

    def unpack(v):
        L = np.zeros((D, D))
        L[tril_r, tril_c] = v[D:]
        return v[:D], L

    def state(v):
        x, L = unpack(v)
        diag = v[D + diag_idx]
        if np.any(diag <= 0):
            return None
        W = A @ L  # row j = L^T a_j
        nu = np.linalg.norm(W, axis=1)
        slack = b - A @ x - nu
        if np.any(slack <= 0) or np.any(nu <= 0):
            return None
        return x, L, W, nu, slack, diag

    def value(v, w):
        st = state(v)
        if st is None:
            return np.inf
        _, _, _, _, slack, diag = st
        return -np.log(diag).sum() - w * np.log(slack).sum()

    def grad_hess(v, w):
        st = state(v)
        if st is None:
            return None
        x, L, W, nu, slack, diag = st
        inv_s = 1.0 / slack
        # Gradient of each slack: gs_j = -[a_j ; a_{j,p} W_{j,q} / nu_j].
        GL = A[:, tril_r] * W[:, tril_c] / nu[:, None]  # (R, nL)
        Gs = np.hstack([A, GL])  # = -grad slack rows
        g = w * (Gs.T @ inv_s)
        g[D + diag_idx] -= 1.0 / diag
        f = -np.log(diag).sum() - w * np.log(slack).sum()
        # Hessian: w * [Gs' diag(1/s^2) Gs + sum_j (1/(s_j nu_j)) K_j] + diag part,
        # with K_j the curvature of nu_j (lower-triangle block only).
        Hs = (Gs * (inv_s ** 2)[:, None]).T @ Gs
        scale = np.sqrt(inv_s / nu)
        Pm = A[:, tril_r] * scale[:, None]          # (R, nL)
        Rm = Pm * (W[:, tril_c] / nu[:, None])
        K = E * (Pm.T @ Pm) - Rm.T @ Rm
        H = w * Hs
        H[D:, D:] += w * K
        H[D + diag_idx, D + diag_idx] += 1.0 / diag ** 2
        return f, g, H

    v = np.zeros(n)
    v[:D] = x0
    v[D + diag_idx] = cheb.radius / (2.0 * np.sqrt(D))
    converged = True
    total_it = 0
    for w in (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7):
        while total_it < max_iter * 8:
            total_it += 1
            gh = grad_hess(v, w)
            if gh is None:
                converged = False
                break
            f, g, H = gh
            try:
                step = np.linalg.solve(H + 1e-12 * np.eye(n), -g)
            except np.linalg.LinAlgError:
                step = -g
            if not np.isfinite(step).all() or step @ g >= 0:
                step = -g
            decrement = -0.5 * (g @ step)
            if decrement <= max(grad_tol, 1e-12 * abs(f)):
                break
            alpha = 1.0
            for _ in range(60):
                if value(v + alpha * step, w) < f - 1e-14:
                    break
                alpha *= 0.5
            else:
                break
            v = v + alpha * step
        if not converged:
            break
    if not converged:
        return CenterResult(cheb.center, cheb.radius, degraded=True)
    x, L = unpack(v)
    slack = b - A @ x - np.linalg.norm(A @ L, axis=1)
    if np.any(slack < -TOL_FEAS * np.maximum(1.0, np.abs(b))):
        return CenterResult(cheb.center, cheb.radius, degraded=True)
    # Radius of the largest ball inside the ellipsoid = smallest singular value.
    r = float(np.linalg.svd(L, compute_uv=False).min())
    return CenterResult(x, r, shape=L)
