"""Switched affine plant model: m modes, each with dynamics xdot = A_l x + b_l."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SwitchedAffineSystem:
    """Immutable collection of mode matrices; modes are 0-indexed internally."""

    A: tuple  # tuple of (n, n) arrays
    b: tuple  # tuple of (n,) arrays
    n: int

    def __post_init__(self):
        if len(self.A) == 0 or len(self.A) != len(self.b):
            raise ValueError("need at least one (A, b) pair per mode")
        As, bs = [], []
        for A_l, b_l in zip(self.A, self.b):
            A_l = np.asarray(A_l, dtype=float)
            b_l = np.asarray(b_l, dtype=float).ravel()
            if A_l.shape != (self.n, self.n) or b_l.shape != (self.n,):
                raise ValueError(
                    f"mode matrices must be {self.n}x{self.n} with offset length {self.n}")
            if not (np.isfinite(A_l).all() and np.isfinite(b_l).all()):
                raise ValueError("non-finite entry in system matrices")
            A_l.setflags(write=False)
            b_l.setflags(write=False)
            As.append(A_l)
            bs.append(b_l)
        object.__setattr__(self, "A", tuple(As))
        object.__setattr__(self, "b", tuple(bs))

    @staticmethod
    def from_modes(modes) -> "SwitchedAffineSystem":
        """Build from a list of (A, b) pairs."""
        A = [np.asarray(m[0], dtype=float) for m in modes]
        b = [np.asarray(m[1], dtype=float) for m in modes]
        return SwitchedAffineSystem(tuple(A), tuple(b), A[0].shape[0])

    @property
    def m(self) -> int:
        return len(self.A)


def flow(sys: SwitchedAffineSystem, l: int, x) -> np.ndarray:
    """Vector field of mode l at state x: A_l x + b_l."""
    if not 0 <= l < sys.m:
        raise IndexError(f"mode index {l} out of range [0, {sys.m})")
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({sys.n},)")
    return sys.A[l] @ x + sys.b[l]


def mode_norms(sys: SwitchedAffineSystem):
    """Per-mode infinity norms (max absolute row sums) and their maximum."""
    norms = [float(np.abs(A_l).sum(axis=1).max()) if sys.n else 0.0
             for A_l in sys.A]
    return norms, max(norms)
