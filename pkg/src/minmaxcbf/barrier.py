"""Piecewise-affine barrier functions and the merit-based switching rule.

A barrier is B(x) = max_i (c_i^T x - d_i) or min_i (c_i^T x - d_i) together
with an exponential rate lambda. The merit of a mode at a state scores how
robustly that mode achieves the required decrease of B; its argmax defines
the set-valued switching rule. For states with B(x) > 0 the rule projects
onto the nonpositive sublevel set first.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from minmaxcbf.geometry import Polyhedron, chebyshev, LpOutcome
from minmaxcbf.system import SwitchedAffineSystem

MAX = "max"
MIN = "min"

# A piece within TOL_ACTIVE of the max (resp. min) counts as attaining it;
# ties within TOL_TIE of the best merit all enter the switching set.
TOL_ACTIVE = 1e-7
TOL_TIE = 1e-9


class EmptyRegionError(RuntimeError):
    """The barrier's nonpositive sublevel set is empty."""


@dataclass(frozen=True)
class PiecewiseAffineBarrier:
    """k affine pieces (rows of C, entries of d) combined by max or min."""

    kind: str
    C: np.ndarray  # (k, n)
    d: np.ndarray  # (k,)
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in (MAX, MIN):
            raise ValueError(f"kind must be {MAX!r} or {MIN!r}")
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        d = np.asarray(self.d, dtype=float).ravel()
        if C.shape[0] != d.shape[0] or C.shape[0] < 1:
            raise ValueError("need one offset per piece, at least one piece")
        if not (np.isfinite(C).all() and np.isfinite(d).all()):
            raise ValueError("non-finite barrier coefficients")
        if self.lam < 0:
            raise ValueError("rate must be nonnegative")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)

    @property
    def k(self) -> int:
        return self.C.shape[0]

    @property
    def n(self) -> int:
        return self.C.shape[1]

    @property
    def pieces(self):
        return [(self.C[i].copy(), float(self.d[i])) for i in range(self.k)]

    def piece_values(self, x) -> np.ndarray:
        return self.C @ np.asarray(x, dtype=float) - self.d

    def __call__(self, x) -> float:
        vals = self.piece_values(x)
        return float(vals.max() if self.kind == MAX else vals.min())


def evaluate(B: PiecewiseAffineBarrier, x):
    """Barrier value at x and the set of pieces attaining it (0-indexed)."""
    vals = B.piece_values(x)
    value = float(vals.max() if B.kind == MAX else vals.min())
    active = frozenset(np.nonzero(np.abs(vals - value) <= TOL_ACTIVE)[0].tolist())
    return value, active


@dataclass(frozen=True)
class MeritTable:
    values: np.ndarray  # (m,), all >= 0
    argmax_modes: tuple  # modes attaining the best merit within TOL_TIE


def merit(B: PiecewiseAffineBarrier, sys: SwitchedAffineSystem, x) -> MeritTable:
    """Merit of every mode at x.

    With phi_i = c_i^T x - d_i, phihat_i = c_i^T (A_l x + b_l) and
    phi = B(x), the per-piece merit is the largest tau >= 0 with
    tau*phihat_i + tau^2 + lam*tau*phi_i <= phi - phi_i (max kind; the gap
    flips sign for min). Closed form: active pieces give
    max(0, -(phihat_i + lam*phi_i)); the rest give the positive root of the
    quadratic. The mode merit is the minimum over pieces.
    """
    x = np.asarray(x, dtype=float)
    if B.n != sys.n:
        raise ValueError("barrier and system dimensions differ")
    phi = B.piece_values(x)  # (k,)
    value = phi.max() if B.kind == MAX else phi.min()
    gap = value - phi if B.kind == MAX else phi - value  # >= 0 either way
    active = gap <= TOL_ACTIVE
    drift = np.stack([A_l @ x + b_l for A_l, b_l in zip(sys.A, sys.b)])
    phihat = drift @ B.C.T  # (m, k)
    q = phihat + B.lam * phi[None, :]
    with np.errstate(invalid="ignore"):
        root = 0.5 * (-q + np.sqrt(q * q + 4.0 * gap[None, :]))
    per_piece = np.where(active[None, :], np.maximum(0.0, -q), root)
    values = per_piece.min(axis=1)
    best = values.max()
    modes = tuple(np.nonzero(values >= best - TOL_TIE)[0].tolist())
    return MeritTable(values, modes)


def _project_onto_polyhedron(x: np.ndarray, C: np.ndarray, d: np.ndarray):
    """Euclidean projection of x onto {z | C z <= d}.

    Enumerates candidate active sets (exact for the small piece counts this
    package produces); the true projection is the nearest feasible candidate.
    """
    k, n = C.shape
    if k > 16:
        raise NotImplementedError("projection supports at most 16 pieces")
    tol = 1e-9 * max(1.0, float(np.abs(d).max()))
    best, best_dist = None, np.inf
    if np.all(C @ x <= d + tol):
        return x.copy()
    idx = range(k)
    for size in range(1, min(k, n + 1) + 1):
        for S in combinations(idx, size):
            Cs, ds = C[list(S)], d[list(S)]
            G = Cs @ Cs.T
            rhs = Cs @ x - ds
            w, *_ = np.linalg.lstsq(G, rhs, rcond=None)
            z = x - Cs.T @ w
            if np.abs(Cs @ z - ds).max() > 1e-7 * max(1.0, np.abs(ds).max()):
                continue  # inconsistent subset
            if np.all(C @ z <= d + 1e-7):
                dist = np.linalg.norm(z - x)
                if dist < best_dist - 1e-12:
                    best, best_dist = z, dist
    if best is None:
        raise EmptyRegionError("barrier has empty invariant region")
    return best


def project_to_sublevel(B: PiecewiseAffineBarrier, x) -> np.ndarray:
    """Nearest point of {z | B(z) <= 0} to x.

    Max kind: the sublevel set is the polyhedron of all pieces nonpositive.
    Min kind: a union of halfspaces; project onto each and keep the nearest,
    ties broken by lowest piece index.
    """
    x = np.asarray(x, dtype=float)
    if B.kind == MAX:
        return _project_onto_polyhedron(x, B.C, B.d)
    best, best_dist = None, np.inf
    for i in range(B.k):
        c, di = B.C[i], float(B.d[i])
        nrm2 = float(c @ c)
        if nrm2 == 0.0:
            if di >= 0.0:
                z = x.copy()
            else:
                continue  # this halfspace is empty
        else:
            viol = float(c @ x) - di
            z = x.copy() if viol <= 0 else x - (viol / nrm2) * c
        dist = np.linalg.norm(z - x)
        if dist < best_dist - 1e-12:
            best, best_dist = z, dist
    if best is None:
        raise EmptyRegionError("barrier has empty invariant region")
    return best


def switching_rule(B: PiecewiseAffineBarrier, sys: SwitchedAffineSystem, x):
    """Set of admissible modes at x (0-indexed, nonempty).

    Inside the region (B(x) <= 0) this is the merit argmax; outside, the
    merit argmax at the projection of x onto the region.
    """
    x = np.asarray(x, dtype=float)
    if B(x) > 0.0:
        x = project_to_sublevel(B, x)
    return merit(B, sys, x).argmax_modes


def sublevel_nonempty(B: PiecewiseAffineBarrier) -> bool:
    """Whether {x | B(x) <= 0} has a point (max kind via a feasibility LP)."""
    if B.kind == MIN:
        return any((B.C[i] != 0).any() or B.d[i] >= 0 for i in range(B.k))
    res = chebyshev(Polyhedron(B.C, B.d, B.n))
    return not isinstance(res, LpOutcome)
