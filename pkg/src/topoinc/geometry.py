"""Data-generating manifolds: parameterized curves in the plane.

Each dataset is a disjoint union of regular parameterized curves, one per
class, with uniform arc-length densities scaled by class priors.  The module
provides uniform sampling, normal perturbations, exact nearest-point
projection (the geometric oracle behind the ideal defense), and the minimum
distance between class manifolds.

Shipped datasets:

  two-moons   two interleaved unit half-circles.  The second moon is
              (1 - cos t, 1/2 - sin t); the published table prints "+ 1/2",
              which makes the curves cross (two-circle intersection with
              center distance sqrt(3.25) < 2), so the conventional sign is
              used to keep the classes disjoint.
  spirals     three logarithmic spirals (e^t / 3) offset by 120 degrees,
              t in [0, ln(15/sqrt(2) + 1)].  The second coordinate of the
              first arm is sin (the table prints cos twice).
  circles     concentric circles of radius 1 and 1/2, parameterized by arc
              length so every shipped curve except spirals is unit-speed.
  segments    two horizontal unit segments with a vertical gap of 2, a
              construction whose class-wise distance comfortably exceeds
              the separation threshold of the density-topology argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import SingleClassError, UnknownDatasetError, ZeroVelocityError

DATASET_NAMES = ("two-moons", "spirals", "circles", "segments")

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # golden-section ratio


@dataclass(frozen=True)
class CurveManifold:
    """A regular parameterized curve for one class.

    position/velocity are vectorized over parameter arrays.  arclength_to
    maps a parameter to the arc length from param_range[0]; param_at_arclength
    is its inverse.  Both have closed forms for every shipped dataset.
    """

    label: int
    param_range: tuple[float, float]
    position: Callable[[np.ndarray], np.ndarray]
    velocity: Callable[[np.ndarray], np.ndarray]
    arclength_to: Callable[[np.ndarray], np.ndarray]
    param_at_arclength: Callable[[np.ndarray], np.ndarray]
    closed: bool = False

    @property
    def arc_length(self) -> float:
        return float(self.arclength_to(np.asarray(self.param_range[1])))

    def point(self, u) -> np.ndarray:
        return self.position(np.asarray(u, dtype=float))

    def speed(self, u) -> np.ndarray:
        v = self.velocity(np.asarray(u, dtype=float))
        return np.linalg.norm(v, axis=-1)

    def unit_normal(self, u) -> np.ndarray:
        """Unit normal, velocity rotated clockwise: (vy, -vx)/|v|.

        On the unit circle traversed counterclockwise this points radially
        outward, matching the sign convention of the perturbation benchmark.
        """
        v = self.velocity(np.asarray(u, dtype=float))
        speed = np.linalg.norm(v, axis=-1, keepdims=True)
        if np.any(speed == 0.0):
            raise ZeroVelocityError(f"curve {self.label} has zero velocity")
        n = np.stack([v[..., 1], -v[..., 0]], axis=-1)
        return n / speed


@dataclass(frozen=True)
class LabeledSample:
    point: np.ndarray
    label: int
    u: float | None = None


@dataclass(frozen=True)
class AdversarialSample:
    """A normal-offset perturbation together with its source point."""

    point: np.ndarray
    source: np.ndarray
    label: int
    u: float
    r: float
    sign: int


@dataclass(frozen=True)
class NearestPoint:
    point: np.ndarray
    param: float
    label: int
    distance: float


class DataGeneratingManifold:
    """Disjoint union of class curves with class priors."""

    def __init__(self, name: str, curves: Sequence[CurveManifold], priors: Sequence[float]):
        priors = np.asarray(priors, dtype=float)
        if len(curves) != len(priors):
            raise ValueError("one prior per curve required")
        if abs(priors.sum() - 1.0) > 1e-12 or np.any(priors <= 0.0):
            raise ValueError("priors must be positive and sum to 1")
        labels = [c.label for c in curves]
        if labels != list(range(len(curves))):
            raise ValueError("labels must be distinct and contiguous from 0")
        self.name = name
        self.curves = tuple(curves)
        self.priors = priors
        self._dcw: float | None = None
        if len(curves) > 1 and self._coarse_pair_distance() <= 1e-6:
            raise ValueError(f"curves of {name!r} are not pairwise disjoint")

    @property
    def n_classes(self) -> int:
        return len(self.curves)

    @property
    def arc_lengths(self) -> np.ndarray:
        return np.array([c.arc_length for c in self.curves])

    def _coarse_pair_distance(self, samples: int = 512) -> float:
        pts = [c.point(np.linspace(*c.param_range, samples)) for c in self.curves]
        best = math.inf
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                d2 = ((pts[i][:, None, :] - pts[j][None, :, :]) ** 2).sum(-1)
                best = min(best, math.sqrt(d2.min()))
        return best

    def bounding_box(self, margin: float = 0.0, samples: int = 2048) -> tuple[float, float, float, float]:
        pts = np.concatenate(
            [c.point(np.linspace(*c.param_range, samples)) for c in self.curves]
        )
        return (
            float(pts[:, 0].min() - margin),
            float(pts[:, 0].max() + margin),
            float(pts[:, 1].min() - margin),
            float(pts[:, 1].max() + margin),
        )

    def class_wise_distance(self, grid: int = 2048) -> float:
        """Minimum distance between distinct class curves, accurate to 1e-6.

        Dense cross grid for bracketing, then coordinate golden-section
        refinement of the best parameter pair.
        """
        if self.n_classes < 2:
            raise SingleClassError("class-wise distance needs at least two classes")
        if self._dcw is not None:
            return self._dcw
        best = math.inf
        for i in range(self.n_classes):
            for j in range(i + 1, self.n_classes):
                best = min(best, _curve_pair_distance(self.curves[i], self.curves[j], grid))
        self._dcw = best
        return best


def _curve_pair_distance(ca: CurveManifold, cb: CurveManifold, grid: int) -> float:
    ua = np.linspace(*ca.param_range, grid)
    ub = np.linspace(*cb.param_range, grid)
    pa = ca.point(ua)
    pb = cb.point(ub)
    best = math.inf
    best_ij = (0, 0)
    chunk = max(1, int(4e6) // grid)
    for s in range(0, grid, chunk):
        d2 = ((pa[s : s + chunk, None, :] - pb[None, :, :]) ** 2).sum(-1)
        k = int(d2.argmin())
        i, j = divmod(k, grid)
        if d2[i, j] < best:
            best = float(d2[i, j])
            best_ij = (s + i, j)
    # coordinate descent with golden-section line searches
    sa = ua[1] - ua[0]
    sb = ub[1] - ub[0]
    va, vb = ua[best_ij[0]], ub[best_ij[1]]
    for _ in range(12):
        va = _golden_min(
            lambda t: float(((ca.point(t) - cb.point(vb)) ** 2).sum()),
            va - sa, va + sa, *ca.param_range, ca.closed,
        )
        vb = _golden_min(
            lambda t: float(((cb.point(t) - ca.point(va)) ** 2).sum()),
            vb - sb, vb + sb, *cb.param_range, cb.closed,
        )
        sa *= 0.5
        sb *= 0.5
    return math.sqrt(float(((ca.point(va) - cb.point(vb)) ** 2).sum()))


def _golden_min(f, lo, hi, a, b, closed, iters: int = 60) -> float:
    """Golden-section minimizer on [lo, hi], clamped to [a, b] unless closed."""
    if not closed:
        lo, hi = max(lo, a), min(hi, b)
    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_PHI * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_PHI * (hi - lo)
            f2 = f(x2)
    x = 0.5 * (lo + hi)
    if closed:
        period = b - a
        x = a + (x - a) % period
    return x


# ---------------------------------------------------------------------------
# dataset constructors


def _unit_speed(label, length, pos, vel, closed=False) -> CurveManifold:
    ident = lambda s: np.asarray(s, dtype=float)
    return CurveManifold(
        label=label,
        param_range=(0.0, length),
        position=pos,
        velocity=vel,
        arclength_to=ident,
        param_at_arclength=ident,
        closed=closed,
    )


def _moon(label: int, cx: float, cy: float, flip: bool) -> CurveManifold:
    sgn = -1.0 if flip else 1.0

    def pos(t):
        t = np.asarray(t, dtype=float)
        return np.stack([cx + sgn * np.cos(t), cy + sgn * np.sin(t)], axis=-1)

    def vel(t):
        t = np.asarray(t, dtype=float)
        return np.stack([-sgn * np.sin(t), sgn * np.cos(t)], axis=-1)

    return _unit_speed(label, math.pi, pos, vel)


def _circle(label: int, radius: float) -> CurveManifold:
    def pos(u):
        u = np.asarray(u, dtype=float)
        return radius * np.stack([np.cos(u / radius), np.sin(u / radius)], axis=-1)

    def vel(u):
        u = np.asarray(u, dtype=float)
        return np.stack([-np.sin(u / radius), np.cos(u / radius)], axis=-1)

    return _unit_speed(label, 2.0 * math.pi * radius, pos, vel, closed=True)


def _segment(label: int, y: float) -> CurveManifold:
    def pos(u):
        u = np.asarray(u, dtype=float)
        return np.stack([u - 0.5, np.full_like(u, y)], axis=-1)

    def vel(u):
        u = np.asarray(u, dtype=float)
        return np.stack([np.ones_like(u), np.zeros_like(u)], axis=-1)

    return _unit_speed(label, 1.0, pos, vel)


SPIRAL_T_MAX = math.log(15.0 / math.sqrt(2.0) + 1.0)


def _spiral(label: int) -> CurveManifold:
    phase = 2.0 * math.pi * label / 3.0
    c = math.sqrt(2.0) / 3.0  # |velocity| = c * e^t

    def pos(t):
        t = np.asarray(t, dtype=float)
        r = np.exp(t) / 3.0
        return np.stack([r * np.cos(t + phase), r * np.sin(t + phase)], axis=-1)

    def vel(t):
        t = np.asarray(t, dtype=float)
        r = np.exp(t) / 3.0
        return np.stack(
            [r * (np.cos(t + phase) - np.sin(t + phase)),
             r * (np.sin(t + phase) + np.cos(t + phase))],
            axis=-1,
        )

    def arclength_to(t):
        return c * (np.exp(np.asarray(t, dtype=float)) - 1.0)

    def param_at_arclength(s):
        return np.log(np.asarray(s, dtype=float) / c + 1.0)

    return CurveManifold(
        label=label,
        param_range=(0.0, SPIRAL_T_MAX),
        position=pos,
        velocity=vel,
        arclength_to=arclength_to,
        param_at_arclength=param_at_arclength,
    )


def make_dataset(name: str) -> DataGeneratingManifold:
    """Build a shipped dataset with uniform class priors."""
    if name == "two-moons":
        curves = [_moon(0, 0.0, 0.0, flip=False), _moon(1, 1.0, 0.5, flip=True)]
    elif name == "spirals":
        curves = [_spiral(i) for i in range(3)]
    elif name == "circles":
        curves = [_circle(0, 1.0), _circle(1, 0.5)]
    elif name == "segments":
        curves = [_segment(0, -1.0), _segment(1, 1.0)]
    else:
        raise UnknownDatasetError(f"unknown dataset {name!r}; known: {', '.join(DATASET_NAMES)}")
    l = len(curves)
    return DataGeneratingManifold(name, curves, [1.0 / l] * l)


# ---------------------------------------------------------------------------
# sampling and perturbation


def sample_uniform(m: DataGeneratingManifold, n_per_class: int, rng_seed: int) -> list[LabeledSample]:
    """n_per_class points per class, uniform with respect to arc length.

    The seed is split per class, so per-class draws do not depend on the
    other classes.
    """
    from .rng import substream

    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    out: list[LabeledSample] = []
    for curve in m.curves:
        rng = substream(rng_seed, "sample", curve.label)
        s = rng.uniform(0.0, curve.arc_length, size=n_per_class)
        u = curve.param_at_arclength(s)
        pts = curve.point(u)
        out.extend(
            LabeledSample(point=pts[k], label=curve.label, u=float(u[k]))
            for k in range(n_per_class)
        )
    return out


def perturb_normal(
    m: DataGeneratingManifold,
    samples: Sequence[LabeledSample],
    r: float,
    sign: int,
) -> list[AdversarialSample]:
    """Offset each sample by sign * r along the curve's unit normal."""
    if r < 0:
        raise ValueError("offset magnitude must be >= 0")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    out = []
    for s in samples:
        if s.u is None:
            raise ValueError("samples must carry their source parameter u")
        n = m.curves[s.label].unit_normal(s.u)
        src = m.curves[s.label].point(s.u)
        out.append(
            AdversarialSample(
                point=src + sign * r * n, source=src, label=s.label,
                u=float(s.u), r=float(r), sign=sign,
            )
        )
    return out


# ---------------------------------------------------------------------------
# nearest-point projection


def _curve_param_grid(curve: CurveManifold, n: int) -> np.ndarray:
    a, b = curve.param_range
    if curve.closed:
        return np.linspace(a, b, n, endpoint=False)
    return np.linspace(a, b, n)


def _refine_on_curve(curve: CurveManifold, query: np.ndarray, u0: float, h: float) -> tuple[float, float]:
    """Golden-section refinement of squared distance around grid best u0."""
    q = query

    def f(t):
        p = curve.point(t)
        return float(((p - q) ** 2).sum())

    u = _golden_min(f, u0 - h, u0 + h, *curve.param_range, curve.closed)
    return u, math.sqrt(f(u))


def nearest_point(m: DataGeneratingManifold, query, grid: int = 4096) -> NearestPoint:
    """Global nearest point over all curves.

    Dense parameter grid then golden-section refinement around the best
    cell; ties within 1e-12 broken by (lowest label, lowest parameter).
    """
    query = np.asarray(query, dtype=float)
    cands: list[NearestPoint] = []
    for curve in m.curves:
        us = _curve_param_grid(curve, grid)
        pts = curve.point(us)
        d2 = ((pts - query) ** 2).sum(-1)
        # first grid index within float noise of the minimum, so exact
        # ties resolve to the smallest parameter
        k = int(np.argmax(d2 <= d2.min() * (1.0 + 1e-12)))
        h = us[1] - us[0]
        u_ref, d_ref = _refine_on_curve(curve, query, float(us[k]), h)
        u_best, d_best = float(us[k]), math.sqrt(float(d2[k]))
        # require a real relative improvement so float noise on flat
        # distance functions cannot move the tie-broken parameter
        if d_ref < d_best * (1.0 - 1e-12):
            u_best, d_best = u_ref, d_ref
        cands.append(
            NearestPoint(point=curve.point(u_best), param=u_best, label=curve.label, distance=d_best)
        )
    dmin = min(c.distance for c in cands)
    tied = [c for c in cands if c.distance <= dmin + 1e-12]
    tied.sort(key=lambda c: (c.label, c.param))
    return tied[0]


def nearest_point_batch(
    m: DataGeneratingManifold,
    queries: np.ndarray,
    grid: int = 4096,
    refine: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized nearest_point: returns (points, params, labels, distances).

    Refinement runs a fixed-iteration golden section on all queries at once;
    ties resolve to the lowest label (and lowest parameter via the grid
    argmin taking the first minimum).
    """
    queries = np.asarray(queries, dtype=float)
    nq = queries.shape[0]
    best_d2 = np.full(nq, np.inf)
    best_u = np.zeros(nq)
    best_label = np.zeros(nq, dtype=int)
    for curve in m.curves:
        us = _curve_param_grid(curve, grid)
        pts = curve.point(us)
        h = us[1] - us[0]
        chunk = max(1, int(8e6) // grid)
        for s in range(0, nq, chunk):
            q = queries[s : s + chunk]
            d2 = ((q[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
            mins = d2.min(axis=1)
            k = (d2 <= mins[:, None] * (1.0 + 1e-12)).argmax(axis=1)
            dk = d2[np.arange(len(q)), k]
            u = us[k]
            if refine:
                u, dk = _golden_min_batch(curve, q, u, h)
            upd = dk < best_d2[s : s + chunk] - 1e-12
            sl = slice(s, s + chunk)
            best_d2[sl] = np.where(upd, dk, best_d2[sl])
            best_u[sl] = np.where(upd, u, best_u[sl])
            best_label[sl] = np.where(upd, curve.label, best_label[sl])
    pts = _points_by_label(m, best_u, best_label)
    return pts, best_u, best_label, np.sqrt(best_d2)


def _points_by_label(m, us, labels):
    out = np.empty((len(us), 2))
    for curve in m.curves:
        mask = labels == curve.label
        if mask.any():
            out[mask] = curve.point(us[mask])
    return out


def _golden_min_batch(curve, queries, u0, h, iters: int = 48):
    a, b = curve.param_range
    lo = u0 - h
    hi = u0 + h
    if not curve.closed:
        lo = np.maximum(lo, a)
        hi = np.minimum(hi, b)

    def f(t):
        return ((curve.point(t) - queries) ** 2).sum(-1)

    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        take1 = f1 <= f2
        hi = np.where(take1, x2, hi)
        lo = np.where(take1, lo, x1)
        x1n = np.where(take1, hi - _INV_PHI * (hi - lo), x2)
        x2n = np.where(take1, x1, lo + _INV_PHI * (hi - lo))
        fx = f(np.where(take1, x1n, x2n))
        f1, f2 = np.where(take1, fx, f2), np.where(take1, f1, fx)
        x1, x2 = x1n, x2n
    x = 0.5 * (lo + hi)
    if curve.closed:
        x = a + (x - a) % (b - a)
    d2 = f(x)
    # keep the grid point where refinement did not clearly improve
    d2g = ((curve.point(u0) - queries) ** 2).sum(-1)
    worse = d2 >= d2g * (1.0 - 1e-12)
    return np.where(worse, u0, x), np.where(worse, d2g, d2)


def class_wise_distance(m: DataGeneratingManifold, grid: int = 2048) -> float:
    return m.class_wise_distance(grid)
