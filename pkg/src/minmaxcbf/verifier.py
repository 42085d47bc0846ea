"""Barrier certificate verification: initial-set, separation, and decrease checks.

A candidate either verifies or yields a typed counterexample state. The
decrease check searches for a state in the nonpositive sublevel region where
every mode fails the required decrease on some attaining piece; it is decided
exactly by enumerating mode-to-piece assignments (each one a small LP), with
a big-M mixed-binary encoding as the fallback for large k^m and as an export
format.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from minmaxcbf.barrier import MAX, MIN, TOL_ACTIVE, PiecewiseAffineBarrier
from minmaxcbf.geometry import (
    TOL_FEAS,
    CenterResult,
    Polyhedron,
    append_rows,
    chebyshev,
    feasible_point,
    solve_lp,
)
from minmaxcbf.system import SwitchedAffineSystem, mode_norms

VERIFIED = "verified"
COUNTEREXAMPLE = "counterexample"

COND_INITIAL = "initial"      # barrier must be <= -eps on the initial set
COND_SEPARATION = "separation"  # separating piece(s) must be >= eps on the unsafe set
COND_DECREASE = "decrease"    # every region state needs a strictly decreasing mode

# Strict inequalities in the falsification problem are realized with this
# slack: a reported violation must exceed it.
EPS_STRICT = 1e-6
ENUM_CAP = 10 ** 6
BOUND_CAP = 1e12


class VerifierInputError(ValueError):
    pass


@dataclass(frozen=True)
class ModeAssignment:
    """Map from each mode to the piece asserted to attain the barrier value."""

    mu: tuple  # length m, entries in [0, k)


@dataclass
class VerificationOutcome:
    status: str
    failed_condition: str | None = None
    witness: np.ndarray | None = None
    margin: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def verified(self) -> bool:
        return self.status == VERIFIED


def _require_bounded_nonempty(P: Polyhedron, name: str) -> None:
    if feasible_point(P) is None:
        raise VerifierInputError(f"{name} is empty")
    for i in range(P.dim):
        e = np.zeros(P.dim)
        e[i] = 1.0
        for sense in ("min", "max"):
            if solve_lp(e, sense, P).status == "unbounded":
                raise VerifierInputError(f"{name} is unbounded")


def check_initial(B: PiecewiseAffineBarrier, X0: Polyhedron, eps: float):
    """Require B <= -eps on X0.

    Max kind: one LP per piece (all pieces must stay below -eps). Min kind:
    sufficient condition on the first piece only, mirroring the separating
    first-piece trick on the unsafe side.
    """
    if eps <= 0:
        raise VerifierInputError("eps must be positive")
    _require_bounded_nonempty(X0, "initial set")
    pieces = range(B.k) if B.kind == MAX else (0,)
    worst = -math.inf
    for i in pieces:
        out = solve_lp(B.C[i], "max", X0)
        opt = out.objective - B.d[i] + eps
        if opt > 0.0:
            return VerificationOutcome(
                COUNTEREXAMPLE, COND_INITIAL, out.point, margin=float(opt))
        worst = max(worst, opt)
    return VerificationOutcome(VERIFIED, margin=float(-worst))


def check_separation(B: PiecewiseAffineBarrier, Xu: Polyhedron, eps: float):
    """Require the separating pieces to be >= eps on Xu.

    Max kind: piece 1 alone separates (sufficient for positivity of the
    max). Min kind: every piece must be positive on Xu, so k LPs.
    """
    if eps <= 0:
        raise VerifierInputError("eps must be positive")
    _require_bounded_nonempty(Xu, "unsafe set")
    pieces = (0,) if B.kind == MAX else range(B.k)
    worst = math.inf
    for i in pieces:
        out = solve_lp(B.C[i], "min", Xu)
        opt = out.objective - B.d[i] - eps
        if opt < 0.0:
            return VerificationOutcome(
                COUNTEREXAMPLE, COND_SEPARATION, out.point, margin=float(-opt))
        worst = min(worst, opt)
    return VerificationOutcome(VERIFIED, margin=float(worst))


def big_m_bound(B: PiecewiseAffineBarrier, sys: SwitchedAffineSystem,
                cap: float = BOUND_CAP) -> float:
    """Magnitude bound on counterexample states, (n U)^n, clamped at cap."""
    a = max(max(float(np.abs(B.C[i]).sum()), abs(float(B.d[i])))
            for i in range(B.k))
    norms, _ = mode_norms(sys)
    U = max(2.0, *(B.lam + nl for nl in norms)) * a
    n = sys.n
    try:
        bound = (n * U) ** n
    except OverflowError:
        bound = math.inf
    if bound > cap:
        warnings.warn(
            f"counterexample bound {bound:.3g} clamped to {cap:.3g}; "
            "the search region uses the clamp", RuntimeWarning)
        return cap
    return float(bound)


def _assignment_rows(B: PiecewiseAffineBarrier, sys: SwitchedAffineSystem,
                     l: int, i: int):
    """Constraint rows (over the state) asserting that piece i attains the
    barrier value at a nonpositive-region state where mode l fails to
    decrease by at least EPS_STRICT."""
    k = B.k
    rows, rhs = [], []
    rows.append(B.C[i])
    rhs.append(float(B.d[i]))  # sublevel: c_i x - d_i <= 0
    for j in range(k):
        if j == i:
            continue
        if B.kind == MAX:
            rows.append(B.C[j] - B.C[i])
            rhs.append(float(B.d[j] - B.d[i]))  # c_i x - d_i >= c_j x - d_j
        else:
            rows.append(B.C[i] - B.C[j])
            rhs.append(float(B.d[i] - B.d[j]))
    grad = sys.A[l].T @ B.C[i] + B.lam * B.C[i]
    rows.append(-grad)
    rhs.append(float(B.C[i] @ sys.b[l] - B.lam * B.d[i] - EPS_STRICT))
    return np.array(rows), np.array(rhs)


def _small_witness(P: Polyhedron, bound: float) -> np.ndarray:
    """Interior point of a known-feasible P, preferring small coordinates."""
    box = 10.0
    while box < bound:
        Q = append_rows(P, np.vstack([np.eye(P.dim), -np.eye(P.dim)]),
                        np.full(2 * P.dim, box))
        res = chebyshev(Q)
        if isinstance(res, CenterResult):
            return res.center
        box *= 100.0
    res = chebyshev(P)
    if isinstance(res, CenterResult):
        return res.center
    raise RuntimeError("witness polyhedron unexpectedly empty")


def find_decrease_counterexample(B: PiecewiseAffineBarrier,
                                 sys: SwitchedAffineSystem,
                                 bound: float,
                                 enum_cap: int = ENUM_CAP):
    """Search the region {B <= 0}, clipped to ||x||_inf <= bound, for a state
    where no mode achieves the strict decrease.

    Primary backend: depth-first enumeration of mode-to-piece assignments in
    lexicographic order with infeasibility pruning of shared prefixes; the
    decision matches full enumeration exactly. Falls back to the big-M
    mixed-binary search when k^m exceeds enum_cap.
    """
    if bound <= 0:
        raise VerifierInputError("search bound must be positive")
    m, k, n = sys.m, B.k, sys.n
    if k ** m > enum_cap:
        return _find_by_big_m(B, sys, bound)

    box_A = np.vstack([np.eye(n), -np.eye(n)])
    box_b = np.full(2 * n, bound)
    blocks = [[_assignment_rows(B, sys, l, i) for i in range(k)]
              for l in range(m)]
    checked = 0

    def descend(level, A_stack, b_stack):
        nonlocal checked
        for i in range(k):
            A_i, b_i = blocks[level][i]
            A_all = A_stack + [A_i]
            b_all = b_stack + [b_i]
            P = Polyhedron(np.vstack(A_all), np.concatenate(b_all), n)
            checked += 1
            if feasible_point(P) is None:
                continue
            if level == m - 1:
                mu = _current_mu + [i]
                return P, tuple(mu)
            _current_mu.append(i)
            hit = descend(level + 1, A_all, b_all)
            _current_mu.pop()
            if hit is not None:
                return hit
        return None

    _current_mu: list = []
    hit = descend(0, [box_A], [box_b])
    details = {"assignments_checked": checked, "backend": "enumeration"}
    if hit is None:
        return VerificationOutcome(VERIFIED, details=details)
    P, mu = hit
    x = _small_witness(P, bound)
    margin = violation_margin(B, sys, x)
    return VerificationOutcome(
        COUNTEREXAMPLE, COND_DECREASE, x, margin=margin,
        details={**details, "assignment": ModeAssignment(mu)})


def violation_margin(B: PiecewiseAffineBarrier, sys: SwitchedAffineSystem,
                     x) -> float:
    """Worst-mode decrease surplus at x: min over modes of the best
    attaining-piece value of c_i^T(A_l x + b_l) + lam*(c_i^T x - d_i).
    Positive means x genuinely falsifies the decrease condition."""
    x = np.asarray(x, dtype=float)
    phi = B.piece_values(x)
    value = phi.max() if B.kind == MAX else phi.min()
    active = np.abs(phi - value) <= TOL_ACTIVE
    worst = math.inf
    for l in range(sys.m):
        drift = sys.A[l] @ x + sys.b[l]
        surplus = max(float(B.C[i] @ drift + B.lam * phi[i])
                      for i in range(B.k) if active[i])
        worst = min(worst, surplus)
    return worst


def recheck_decrease_witness(B, sys, x, tol: float = 1e2 * TOL_FEAS) -> bool:
    """Direct re-evaluation: x is in the region and every mode has an
    attaining piece whose decrease is violated by at least the strict slack."""
    x = np.asarray(x, dtype=float)
    value = B(x)
    if value > tol:
        return False
    return violation_margin(B, sys, x) >= EPS_STRICT - tol


# ---------------------------------------------------------------------------
# Big-M mixed-binary encoding (fallback backend and export path)
# ---------------------------------------------------------------------------

@dataclass
class BigMEncoding:
    """Linear system over [x (n) ; w (m*k)] with w binary.

    Rows encode, per (mode l, piece i), the implication "w_{l,i}=1 implies
    piece i attains the value at x, x is in the region, and mode l violates
    the decrease", deactivated by slack constants when w_{l,i}=0; plus one
    coverage row per mode and the magnitude box on x.
    """

    A: np.ndarray
    b: np.ndarray
    n: int
    m: int
    k: int
    binary_cols: tuple

    def w_col(self, l: int, i: int) -> int:
        return self.n + l * self.k + i

    def as_polyhedron(self) -> Polyhedron:
        dim = self.n + self.m * self.k
        unit = np.zeros((2 * self.m * self.k, dim))
        ub = np.empty(2 * self.m * self.k)
        for t, c in enumerate(self.binary_cols):
            unit[2 * t, c] = 1.0
            ub[2 * t] = 1.0
            unit[2 * t + 1, c] = -1.0
            ub[2 * t + 1] = 0.0
        return Polyhedron(np.vstack([self.A, unit]),
                          np.concatenate([self.b, ub]), dim)

    def export_lp_format(self) -> str:
        """CPLEX-LP text of the feasibility system (constant objective)."""
        names = [f"x{j + 1}" for j in range(self.n)] + [
            f"w_{l + 1}_{i + 1}" for l in range(self.m) for i in range(self.k)]

        def term(coef, name):
            return f"{'+' if coef >= 0 else '-'} {abs(coef):.12g} {name}"

        lines = ["Minimize", " obj: 0", "Subject To"]
        for r in range(self.A.shape[0]):
            terms = " ".join(term(self.A[r, j], names[j])
                             for j in range(self.A.shape[1])
                             if self.A[r, j] != 0.0)
            lines.append(f" c{r + 1}: {terms} <= {self.b[r]:.12g}")
        lines.append("Bounds")
        for j in range(self.n):
            lines.append(f" -inf <= {names[j]} <= +inf")
        lines.append("Binary")
        lines.append(" " + " ".join(names[self.n:]))
        lines.append("End")
        return "\n".join(lines) + "\n"


def encode_big_m_milp(B: PiecewiseAffineBarrier, sys: SwitchedAffineSystem,
                      M: float) -> BigMEncoding:
    """Binary-indicator encoding of the decrease falsification over
    ||x||_inf <= M, with one binary per (mode, piece) and per-mode coverage."""
    if M <= 0:
        raise VerifierInputError("big-M magnitude must be positive")
    m, k, n = sys.m, B.k, sys.n
    dim = n + m * k
    rows, rhs = [], []

    def add_implied(l, i, a, beta):
        # w_{l,i} = 1  =>  a^T x <= beta, slack M||a||_1 + |beta| otherwise.
        S = M * float(np.abs(a).sum()) + abs(float(beta))
        row = np.zeros(dim)
        row[:n] = a
        row[n + l * k + i] = S
        rows.append(row)
        rhs.append(float(beta) + S)

    for l in range(m):
        A_li = [_assignment_rows(B, sys, l, i) for i in range(k)]
        for i, (A_blk, b_blk) in enumerate(A_li):
            for a, beta in zip(A_blk, b_blk):
                add_implied(l, i, a, beta)
        cov = np.zeros(dim)
        cov[n + l * k: n + (l + 1) * k] = -1.0
        rows.append(cov)
        rhs.append(-1.0)  # sum_i w_{l,i} >= 1
    for j in range(n):
        for sign in (1.0, -1.0):
            row = np.zeros(dim)
            row[j] = sign
            rows.append(row)
            rhs.append(M)
    return BigMEncoding(np.array(rows), np.array(rhs), n, m, k,
                        tuple(range(n, dim)))


def solve_big_m(enc: BigMEncoding, max_nodes: int = 200000):
    """Depth-first branch and bound over the binaries of a BigMEncoding.

    Returns a feasible state x or None. Branches on the most fractional
    binary of the relaxation's feasible point, trying 1 before 0.
    """
    base = enc.as_polyhedron()
    stack = [()]  # tuples of (col, value) fixings
    nodes = 0
    while stack:
        fixing = stack.pop()
        nodes += 1
        if nodes > max_nodes:
            raise RuntimeError("big-M branch and bound exceeded node budget")
        P = base
        if fixing:
            rows = np.zeros((2 * len(fixing), base.dim))
            rhs = np.empty(2 * len(fixing))
            for t, (col, val) in enumerate(fixing):
                rows[2 * t, col] = 1.0
                rhs[2 * t] = val
                rows[2 * t + 1, col] = -1.0
                rhs[2 * t + 1] = -val
            P = append_rows(base, rows, rhs)
        point = feasible_point(P)
        if point is None:
            continue
        wvals = point[list(enc.binary_cols)]
        frac = np.abs(wvals - np.round(wvals))
        if frac.max() <= 1e-6:
            return point[:enc.n]
        j = int(np.argmax(frac))
        col = enc.binary_cols[j]
        stack.append(fixing + ((col, 0.0),))
        stack.append(fixing + ((col, 1.0),))
    return None


def _find_by_big_m(B, sys, bound):
    enc = encode_big_m_milp(B, sys, bound)
    x = solve_big_m(enc)
    details = {"backend": "big-m"}
    if x is None:
        return VerificationOutcome(VERIFIED, details=details)
    return VerificationOutcome(COUNTEREXAMPLE, COND_DECREASE, x,
                               margin=violation_margin(B, sys, x),
                               details=details)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

def verify_full(B: PiecewiseAffineBarrier, sys: SwitchedAffineSystem,
                X0: Polyhedron, Xu: Polyhedron, eps: float,
                enum_cap: int = ENUM_CAP) -> VerificationOutcome:
    """Run the initial, separation, and decrease checks in order; the first
    failure wins and is tagged with its condition."""
    if B.n != sys.n or X0.dim != sys.n or Xu.dim != sys.n:
        raise VerifierInputError("dimension mismatch between barrier, system, and sets")
    margins = {}
    out = check_initial(B, X0, eps)
    if not out.verified:
        return out
    margins[COND_INITIAL] = out.margin
    out = check_separation(B, Xu, eps)
    if not out.verified:
        return out
    margins[COND_SEPARATION] = out.margin
    bound = max(1.0, big_m_bound(B, sys))
    out = find_decrease_counterexample(B, sys, bound, enum_cap=enum_cap)
    if not out.verified:
        return out
    margins[COND_DECREASE] = math.inf  # no violating state within the bound
    return VerificationOutcome(
        VERIFIED,
        margin=min(margins[COND_INITIAL], margins[COND_SEPARATION]),
        details={"margins": margins, **out.details})
