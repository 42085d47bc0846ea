import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minmaxcbf.barrier import (
    MAX,
    MIN,
    EmptyRegionError,
    PiecewiseAffineBarrier,
    evaluate,
    merit,
    project_to_sublevel,
    switching_rule,
)
from minmaxcbf.system import SwitchedAffineSystem

# Benchmark max/min barriers for the test point (1, 0) of the three-mode
# planar system (values frozen from affine arithmetic on the coefficients).
EX5_MAX = PiecewiseAffineBarrier(
    MAX,
    np.array([[-9.04427, 0.0], [-9.04427, 9.04427]]),
    np.array([-6.69266, 9.04427]))
EX5_MIN = PiecewiseAffineBarrier(
    MIN,
    np.array([[-7.32068, 0.0], [-9.37083, 0.88549]]),
    np.array([-5.43091, -9.37083]))

TWO_MODE = SwitchedAffineSystem.from_modes([
    (-np.eye(2), np.zeros(2)),
    (np.eye(2), np.zeros(2)),
])


def test_evaluate_max_example():
    value, active = evaluate(EX5_MAX, np.array([1.0, 0.0]))
    assert value == pytest.approx(-2.35161, abs=1e-5)
    assert active == frozenset({0})


def test_evaluate_min_example():
    value, active = evaluate(EX5_MIN, np.array([1.0, 0.0]))
    assert value == pytest.approx(-1.88977, abs=1e-5)
    assert active == frozenset({0})


def test_evaluate_single_zero_piece():
    B = PiecewiseAffineBarrier(MAX, np.zeros((1, 2)), np.zeros(1))
    for x in (np.zeros(2), np.array([3.0, -4.0])):
        value, active = evaluate(B, x)
        assert value == 0.0 and active == frozenset({0})


def test_merit_closed_form_active_piece():
    # Single active piece, phi = -1, phihat = -2, lambda = 0 -> merit 2.
    B = PiecewiseAffineBarrier(MAX, np.array([[1.0, 0.0]]), np.array([0.0]))
    sys = SwitchedAffineSystem.from_modes([(np.zeros((2, 2)), np.array([-2.0, 0.0]))])
    table = merit(B, sys, np.array([-1.0, 0.0]))
    assert table.values[0] == pytest.approx(2.0)


def test_merit_quadratic_root_inactive_piece():
    # Inactive piece with phihat + lam*phi = 0 and gap 1 -> sqrt(4)/2 = 1.
    B = PiecewiseAffineBarrier(
        MAX, np.array([[1.0, 0.0], [1.0, 0.0]]), np.array([0.0, 1.0]))
    sys = SwitchedAffineSystem.from_modes([(np.zeros((2, 2)), np.zeros(2))])
    table = merit(B, sys, np.array([-5.0, 0.0]))
    # piece 2 has phi_2 = -6 (inactive, gap 1), phihat = 0 -> M_2 = 1;
    # piece 1 active with phihat 0 -> M_1 = 0; merit = min = 0.
    assert table.values[0] == pytest.approx(0.0)


def test_merit_zero_when_decrease_violated():
    B = PiecewiseAffineBarrier(MAX, np.array([[1.0, 0.0]]), np.array([0.0]))
    sys = SwitchedAffineSystem.from_modes([(np.zeros((2, 2)), np.array([1.0, 0.0]))])
    table = merit(B, sys, np.array([-1.0, 0.0]))
    assert table.values[0] == 0.0


def test_switching_rule_two_modes():
    # Piece c=(1,0), d=0 at x=(-1,0): mode A=-I gives phihat=+1 (merit 0),
    # mode A=+I gives phihat=-1 (merit 1) -> mode 2 (index 1) selected.
    B = PiecewiseAffineBarrier(MAX, np.array([[1.0, 0.0]]), np.array([0.0]))
    sigma = switching_rule(B, TWO_MODE, np.array([-1.0, 0.0]))
    assert sigma == (1,)


def test_switching_rule_single_mode():
    B = PiecewiseAffineBarrier(MAX, np.array([[1.0, 0.0]]), np.array([0.0]))
    sys = SwitchedAffineSystem.from_modes([(-np.eye(2), np.zeros(2))])
    for x in ([-1.0, 0.0], [-2.0, 5.0]):
        assert switching_rule(B, sys, np.array(x)) == (0,)


def test_projection_single_halfspace():
    B = PiecewiseAffineBarrier(MAX, np.array([[1.0, 0.0]]), np.array([0.0]))
    z = project_to_sublevel(B, np.array([2.0, 3.0]))
    assert np.allclose(z, [0.0, 3.0], atol=1e-9)
    sigma = switching_rule(B, TWO_MODE, np.array([2.0, 3.0]))
    assert sigma == switching_rule(B, TWO_MODE, np.array([0.0, 3.0]))


def test_projection_polyhedron_corner():
    B = PiecewiseAffineBarrier(
        MAX, np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2))
    z = project_to_sublevel(B, np.array([1.0, 2.0]))
    assert np.allclose(z, [0.0, 0.0], atol=1e-9)


def test_projection_min_kind_nearest_halfspace():
    B = PiecewiseAffineBarrier(
        MIN, np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.0, -1.0]))
    # x = (0.5, 0.5): piece 1 projection distance 0.5, piece 2 distance 1.5.
    z = project_to_sublevel(B, np.array([0.5, 0.5]))
    assert np.allclose(z, [0.0, 0.5], atol=1e-9)


def test_projection_min_kind_tie_lowest_index():
    B = PiecewiseAffineBarrier(
        MIN, np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([-1.0, -1.0]))
    # x = 0 is equidistant from both halfspaces; the tie goes to piece 1.
    z = project_to_sublevel(B, np.zeros(2))
    assert np.allclose(z, [-1.0, 0.0], atol=1e-9)


def test_empty_region_error():
    B = PiecewiseAffineBarrier(
        MAX, np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([-1.0, -1.0]))
    with pytest.raises(EmptyRegionError):
        project_to_sublevel(B, np.array([5.0, 0.0]))
    Bmin = PiecewiseAffineBarrier(MIN, np.zeros((1, 2)), np.array([-1.0]))
    with pytest.raises(EmptyRegionError):
        project_to_sublevel(Bmin, np.zeros(2))


def _random_instance(rng, kind):
    n = rng.integers(2, 4)
    k = rng.integers(1, 4)
    m = rng.integers(1, 4)
    B = PiecewiseAffineBarrier(
        kind, rng.uniform(-2, 2, size=(k, n)), rng.uniform(-2, 2, size=k),
        lam=float(rng.choice([0.0, 0.5])))
    sys = SwitchedAffineSystem.from_modes(
        [(rng.uniform(-1, 1, size=(n, n)), rng.uniform(-1, 1, size=n))
         for _ in range(m)])
    return B, sys, rng.normal(size=n)


@pytest.mark.parametrize("kind", [MAX, MIN])
def test_merit_nonnegative(kind):
    rng = np.random.default_rng(42)
    for _ in range(400):
        B, sys, x = _random_instance(rng, kind)
        assert merit(B, sys, x).values.min() >= 0.0


@pytest.mark.parametrize("kind", [MAX, MIN])
def test_merit_decrease_equivalence(kind):
    # Positive merit iff every attaining piece decreases strictly, checked by
    # direct inequality evaluation on states inside the region.
    rng = np.random.default_rng(43)
    done = 0
    while done < 400:
        B, sys, x = _random_instance(rng, kind)
        if B(x) > 0:
            continue
        done += 1
        phi = B.piece_values(x)
        value = phi.max() if kind == MAX else phi.min()
        active = np.abs(phi - value) <= 1e-7
        table = merit(B, sys, x)
        for l in range(sys.m):
            drift = sys.A[l] @ x + sys.b[l]
            decreases = all(
                B.C[i] @ drift < -B.lam * phi[i]
                for i in range(B.k) if active[i])
            assert (table.values[l] > 0.0) == decreases, (B, x, l)


def test_merit_continuity_probe():
    rng = np.random.default_rng(44)
    for _ in range(300):
        B, sys, x = _random_instance(rng, MAX)
        delta = rng.normal(size=x.size)
        delta *= 1e-6 / np.linalg.norm(delta)
        m0 = merit(B, sys, x).values
        m1 = merit(B, sys, x + delta).values
        bound = 10.0 * 1e-6 * (1.0 + np.linalg.norm(x))
        assert np.abs(m1 - m0).max() <= bound


def test_switching_rule_nonempty_everywhere():
    rng = np.random.default_rng(45)
    for _ in range(200):
        B, sys, x = _random_instance(rng, MAX)
        try:
            sigma = switching_rule(B, sys, x)
        except EmptyRegionError:
            continue
        assert len(sigma) >= 1


@settings(max_examples=60, deadline=None)
@given(scale=st.floats(min_value=1e-2, max_value=1e2),
       seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_evaluate_positively_homogeneous(scale, seed):
    rng = np.random.default_rng(seed)
    B, sys, x = _random_instance(rng, MAX)
    scaled = PiecewiseAffineBarrier(B.kind, scale * B.C, scale * B.d, B.lam)
    v0, a0 = evaluate(B, x)
    v1, a1 = evaluate(scaled, x)
    assert v1 == pytest.approx(scale * v0, rel=1e-9, abs=1e-9)
    gaps = np.abs(B.piece_values(x) - v0)
    if gaps[gaps > 0].size == 0 or gaps[gaps > 0].min() > 1e-3:
        # Activity is tolerance-based, so the active set is only stable away
        # from near-ties.
        assert a1 == a0
    if B.k == 1:
        # Single-piece merits scale linearly, so the mode ranking is stable.
        assert (merit(B, sys, x).argmax_modes
                == merit(scaled, sys, x).argmax_modes)


def test_merit_mode_ranking_not_scale_invariant():
    # Active-piece merits scale linearly while inactive-piece merits grow
    # like sqrt, so scaling the coefficients can change the preferred mode.
    B = PiecewiseAffineBarrier(
        MAX, np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2))
    sys = SwitchedAffineSystem.from_modes([
        (np.zeros((2, 2)), np.array([-0.1, -10.0])),
        (np.zeros((2, 2)), np.array([-5.0, 0.0])),
    ])
    x = np.array([-1.0, -1.25])
    assert merit(B, sys, x).argmax_modes == (1,)
    big = PiecewiseAffineBarrier(MAX, 1e4 * B.C, 1e4 * B.d)
    assert merit(big, sys, x).argmax_modes == (0,)
