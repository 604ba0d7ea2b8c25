"""Exact and discretized arc length for planar curves.

A sampled curve is a float64 array of shape ``(2, n)``: row 0 holds the x
coordinates, row 1 the y coordinates, in traversal order. Analytic curves
are transformed sine waves (:class:`AnalyticSine`), for which the true
length is computed by quadrature of the closed-form speed integrand. These
two representations back every label and every ground-truth check in the
package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Isometry",
    "AnalyticSine",
    "as_curve",
    "sample",
    "polyline_length",
    "cumulative_lengths",
    "analytic_length",
    "discretization_error",
    "apply_isometry",
    "split_at",
]


def as_curve(points) -> np.ndarray:
    """Validate and return a sampled curve as a float64 ``(2, n)`` array.

    Raises ValueError if the shape is not ``(2, n)`` with n >= 2 or if any
    coordinate is non-finite.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != 2 or arr.shape[1] < 2:
        raise ValueError(
            f"curve must have shape (2, n) with n >= 2, got {arr.shape}"
        )
    if not np.isfinite(arr).all():
        raise ValueError("curve contains non-finite coordinates")
    return arr


@dataclass(frozen=True)
class Isometry:
    """Rotation about the origin followed by a translation."""

    angle: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to points of shape (2, n): R @ p + t."""
        t = np.array([[self.tx], [self.ty]])
        return self.matrix() @ points + t


@dataclass(frozen=True)
class AnalyticSine:
    """The curve p -> R @ (p, a*sin(p + phase)) + t for p in [p_lo, p_hi].

    Negative amplitudes are canonicalized to (|a|, phase + pi), which
    traces the identical point set.
    """

    amplitude: float = 1.0
    phase: float = 0.0
    isometry: Isometry = field(default_factory=Isometry)
    p_lo: float = 0.0
    p_hi: float = 2.0 * math.pi

    def __post_init__(self):
        if not self.p_lo < self.p_hi:
            raise ValueError(f"need p_lo < p_hi, got [{self.p_lo}, {self.p_hi}]")
        if self.amplitude < 0:
            object.__setattr__(self, "amplitude", -self.amplitude)
            object.__setattr__(self, "phase", self.phase + math.pi)

    def restrict(self, p_lo: float, p_hi: float) -> "AnalyticSine":
        """The same curve over a sub-interval of the parameter range."""
        self._check_interval(p_lo, p_hi)
        return replace(self, p_lo=p_lo, p_hi=p_hi)

    def _check_interval(self, p_lo, p_hi):
        if not (self.p_lo <= p_lo < p_hi <= self.p_hi):
            raise ValueError(
                f"[{p_lo}, {p_hi}] is not a sub-interval of "
                f"[{self.p_lo}, {self.p_hi}]"
            )


def sample(curve: AnalyticSine, n_points: int) -> np.ndarray:
    """Sample the curve at n_points parameters uniformly spaced on [p_lo, p_hi]."""
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    p = np.linspace(curve.p_lo, curve.p_hi, n_points)
    base = np.vstack([p, curve.amplitude * np.sin(p + curve.phase)])
    return curve.isometry.apply(base)


def polyline_length(curve) -> float:
    """Chord-sum length: the length of the polyline through the samples."""
    pts = as_curve(curve)
    return float(np.hypot(np.diff(pts[0]), np.diff(pts[1])).sum())


def cumulative_lengths(curve) -> np.ndarray:
    """Arc position of each sample along the polyline, starting at 0."""
    pts = as_curve(curve)
    seg = np.hypot(np.diff(pts[0]), np.diff(pts[1]))
    out = np.empty(pts.shape[1])
    out[0] = 0.0
    np.cumsum(seg, out=out[1:])
    return out


def _speed(curve: AnalyticSine, p: np.ndarray) -> np.ndarray:
    # |C'(p)| = sqrt(1 + a^2 cos^2(p + phase)); isometries drop out.
    return np.sqrt(1.0 + (curve.amplitude * np.cos(p + curve.phase)) ** 2)


def _simpson(f: np.ndarray, h: float) -> float:
    # composite Simpson over an even number of panels
    return h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum())


def analytic_length(
    curve: AnalyticSine,
    p_lo: float | None = None,
    p_hi: float | None = None,
    tol: float = 1e-10,
) -> float:
    """True arc length over [p_lo, p_hi] by adaptive composite Simpson.

    Doubles the panel count until the Richardson error estimate
    |S(2m) - S(m)| / 15 falls below ``tol``. The default sub-interval is
    the curve's full parameter range.
    """
    lo = curve.p_lo if p_lo is None else p_lo
    hi = curve.p_hi if p_hi is None else p_hi
    curve._check_interval(lo, hi)

    panels = 64
    p = np.linspace(lo, hi, panels + 1)
    prev = _simpson(_speed(curve, p), (hi - lo) / panels)
    while panels < 2**24:
        panels *= 2
        p = np.linspace(lo, hi, panels + 1)
        cur = _simpson(_speed(curve, p), (hi - lo) / panels)
        if abs(cur - prev) <= 15.0 * tol:
            return cur
        prev = cur
    raise ArithmeticError(f"quadrature failed to converge on [{lo}, {hi}]")


def discretization_error(curve: AnalyticSine, n_points: int) -> float:
    """True length minus the chord sum of a uniform n_points sample.

    Non-negative for any curve (chords never overshoot the arc) and
    second-order small in the spacing for smooth curves.
    """
    return analytic_length(curve) - polyline_length(sample(curve, n_points))


def apply_isometry(curve, iso: Isometry) -> np.ndarray:
    """Rotate and translate every sample point."""
    return iso.apply(as_curve(curve))


def split_at(curve, index: int):
    """Split into two curves sharing the point at ``index``.

    Both halves keep at least one segment, so 1 <= index <= n - 2. The
    halves' chord sums add up to the parent's exactly (same chords).
    """
    pts = as_curve(curve)
    n = pts.shape[1]
    if not 1 <= index <= n - 2:
        raise ValueError(f"split index must be in [1, {n - 2}], got {index}")
    return pts[:, : index + 1].copy(), pts[:, index:].copy()
