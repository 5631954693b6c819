"""Isotropic Gaussian noise and the exact extended density.

The data distribution is curve mass convolved with per-point noise:

    p(x) = sum_i Pr[y=i] * (1/L_i) * integral nu(x - g_i(t)) |g_i'(t)| dt

evaluated per curve with composite Simpson panels.  The noise density is the
correctly normalized planar Gaussian nu(n) = exp(-|n|^2 / (2 s^2)) / (2 pi s^2);
its superlevel sets are exact disks, so the bounding and guaranteeing radii of
a level coincide and have the closed form r = s * sqrt(2 ln(peak / level)).

The module also computes:

  omega_epsilon      minimum over manifold points of the curve mass inside an
                     epsilon-ball (the minimum sits at endpoints of open arcs),
  theorem1_report    the separation-threshold chain level -> radii ->
                     omega -> lambda* -> delta*, with the precondition
                     d_cw > 2 delta* and numeric floor/ceiling validations,
  monotonicity_probe densities along the segment from a query to its nearest
                     manifold point (a diagnostic, not a theorem).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateThresholdError, EmptySuperlevelSetError
from .geometry import DataGeneratingManifold, nearest_point, nearest_point_batch

DEFAULT_SIGMA = 0.05
DEFAULT_QUAD_POINTS = 1024


@dataclass(frozen=True)
class NoiseModel:
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def peak(self) -> float:
        return 1.0 / (2.0 * math.pi * self.sigma**2)

    def pdf(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        r2 = (n**2).sum(axis=-1)
        return self.peak * np.exp(-r2 / (2.0 * self.sigma**2))

    def pdf_radial(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return self.peak * np.exp(-(r**2) / (2.0 * self.sigma**2))


def noise_pdf(nm: NoiseModel, n) -> np.ndarray:
    return nm.pdf(n)


def radius_of_level(nm: NoiseModel, level: float) -> float:
    """Radius of the noise superlevel set at `level` (closed form).

    For a radially decreasing density the set {nu >= level} is the closed
    disk of this radius, so it is simultaneously the bounding and the
    guaranteeing radius.
    """
    if level <= 0:
        raise ValueError("level must be positive")
    if level > nm.peak:
        raise EmptySuperlevelSetError(
            f"level {level} exceeds noise peak {nm.peak}; superlevel set is empty"
        )
    return nm.sigma * math.sqrt(2.0 * math.log(nm.peak / level))


def radius_of_level_bisect(
    pdf_radial, level: float, r_hi: float = 1.0, tol: float = 1e-13, max_expand: int = 200
) -> float:
    """Generic bisection for any radially decreasing density.

    Constructively realizes the existence argument for the radii: find r with
    pdf_radial(r) = level by expanding the bracket then bisecting.
    """
    f0 = float(pdf_radial(0.0))
    if level > f0:
        raise EmptySuperlevelSetError("level exceeds the density peak")
    if level == f0:
        return 0.0
    hi = r_hi
    for _ in range(max_expand):
        if float(pdf_radial(hi)) < level:
            break
        hi *= 2.0
    else:
        raise ValueError("could not bracket the level crossing")
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if float(pdf_radial(mid)) >= level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# quadrature over the manifold


def _simpson_rule(curve, panels: int) -> tuple[np.ndarray, np.ndarray]:
    """Simpson nodes and weights for the curve integral; weights sum to L_i.

    The integral of f(g(t)) |g'(t)| dt is evaluated through the arc-length
    substitution, which places nodes uniformly with respect to the measure;
    for non-unit-speed curves (spirals) this keeps the node spacing small
    relative to the noise scale everywhere along the curve.
    """
    n = 2 * panels
    length = curve.arc_length
    s = np.linspace(0.0, length, n + 1)
    h = length / n
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= h / 3.0
    return curve.param_at_arclength(s), w


def extended_density(
    nm: NoiseModel,
    m: DataGeneratingManifold,
    queries,
    quad_points: int = DEFAULT_QUAD_POINTS,
) -> np.ndarray:
    """Exact extended density at query points, Simpson panels per curve.

    The default panel count keeps the node spacing near sigma/20 on the
    longest shipped curve, which holds the relative quadrature error under
    1e-6 throughout the data region.
    """
    if quad_points < 64:
        raise ValueError("quad_points must be >= 64")
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    out = np.zeros(q.shape[0])
    inv_two_s2 = 1.0 / (2.0 * nm.sigma**2)
    for curve, prior in zip(m.curves, m.priors):
        t, w = _simpson_rule(curve, quad_points)
        pts = curve.point(t)
        scale = prior / curve.arc_length * nm.peak
        chunk = max(1, int(8e6) // len(t))
        for s in range(0, q.shape[0], chunk):
            d2 = ((q[s : s + chunk, None, :] - pts[None, :, :]) ** 2).sum(-1)
            out[s : s + chunk] += scale * (np.exp(-d2 * inv_two_s2) @ w)
    if np.ndim(queries) == 1:
        return out[0]
    return out


def density_on_grid(
    nm: NoiseModel,
    m: DataGeneratingManifold,
    quad_points: int = DEFAULT_QUAD_POINTS,
):
    """Vectorized density callable suitable for rasterization."""

    def f(pts: np.ndarray) -> np.ndarray:
        return extended_density(nm, m, pts, quad_points)

    return f


# ---------------------------------------------------------------------------
# omega_epsilon


def _ball_arclength(curve, center: np.ndarray, eps: float, scan: int, tol: float) -> float:
    """Arc length of the curve inside the closed eps-ball around center.

    Sign-change scan of |g(t) - center|^2 - eps^2 at `scan` samples, each
    crossing bisected to parameter tolerance `tol`.
    """
    a, b = curve.param_range
    t = np.linspace(a, b, scan)
    g = ((curve.point(t) - center) ** 2).sum(-1) - eps**2

    def refine(lo, hi):
        # one sign change inside [lo, hi]
        flo = float(((curve.point(lo) - center) ** 2).sum() - eps**2)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            fm = float(((curve.point(mid) - center) ** 2).sum() - eps**2)
            if (fm < 0.0) == (flo < 0.0):
                lo, flo = mid, fm
            else:
                hi = mid
        return 0.5 * (lo + hi)

    inside = g <= 0.0
    total = 0.0
    k = 0
    n = len(t)
    while k < n:
        if not inside[k]:
            k += 1
            continue
        j = k
        while j + 1 < n and inside[j + 1]:
            j += 1
        lo = t[k] if k == 0 else refine(t[k - 1], t[k])
        hi = t[j] if j == n - 1 else refine(t[j], t[j + 1])
        total += float(curve.arclength_to(hi) - curve.arclength_to(lo))
        k = j + 1
    return total


def omega_epsilon(
    m: DataGeneratingManifold,
    eps: float,
    probe_points: int = 512,
    scan: int = 4096,
    tol: float = 1e-8,
) -> float:
    """Minimum over manifold probes of the curve mass inside an eps-ball.

    Probes are distributed per curve proportionally to arc length and
    include curve endpoints, where the minimum sits for open arcs.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    lengths = m.arc_lengths
    total_len = lengths.sum()
    best = math.inf
    for curve, length in zip(m.curves, lengths):
        k = max(2, int(round(probe_points * length / total_len)))
        us = np.linspace(*curve.param_range, k)
        centers = curve.point(us)
        for c in centers:
            mass = 0.0
            for other, prior in zip(m.curves, m.priors):
                arc = _ball_arclength(other, c, eps, scan, tol)
                mass += prior * arc / other.arc_length
            best = min(best, mass)
    return best


# ---------------------------------------------------------------------------
# separation threshold report


@dataclass(frozen=True)
class ThresholdReport:
    """The threshold chain of the separation theorem, plus validations.

    For isotropic Gaussian noise eps_lambda == delta_lambda.  lambda_star is
    omega * lambda and delta_star its bounding radius; the precondition is
    d_cw > 2 delta_star.
    """

    sigma: float
    lam: float
    eps_lambda: float
    delta_lambda: float
    omega_eps: float
    lambda_star: float
    delta_star: float
    d_cw: float
    precondition_holds: bool
    min_on_manifold_density: float
    max_off_neighborhood_density: float
    floor_holds: bool
    ceiling_holds: bool

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "lambda": self.lam,
            "eps_lambda": self.eps_lambda,
            "delta_lambda": self.delta_lambda,
            "omega_eps": self.omega_eps,
            "lambda_star": self.lambda_star,
            "delta_star": self.delta_star,
            "d_cw": self.d_cw,
            "precondition_holds": self.precondition_holds,
            "validations": {
                "min_on_manifold_density": self.min_on_manifold_density,
                "max_off_neighborhood_density": self.max_off_neighborhood_density,
                "floor_holds": self.floor_holds,
                "ceiling_holds": self.ceiling_holds,
            },
        }


def _manifold_probes(m: DataGeneratingManifold, n: int) -> np.ndarray:
    lengths = m.arc_lengths
    per = [max(2, int(round(n * L / lengths.sum()))) for L in lengths]
    pts = [c.point(np.linspace(*c.param_range, k)) for c, k in zip(m.curves, per)]
    return np.concatenate(pts)


def _off_neighborhood_probes(
    m: DataGeneratingManifold, delta: float, n: int
) -> np.ndarray:
    """Points with true manifold distance just above delta.

    Push manifold points along both normals by small multiples of delta and
    keep those whose exact nearest distance exceeds delta.
    """
    probes = []
    factors = (1.0001, 1.01, 1.1, 1.5, 2.0)
    per_curve = max(8, n // max(1, len(m.curves)))
    for curve in m.curves:
        us = np.linspace(*curve.param_range, per_curve)
        base = curve.point(us)
        nrm = curve.unit_normal(us)
        for f in factors:
            probes.append(base + f * delta * nrm)
            probes.append(base - f * delta * nrm)
    cand = np.concatenate(probes)
    _, _, _, dist = nearest_point_batch(m, cand, grid=2048)
    keep = cand[dist > delta * (1.0 + 1e-9)]
    if len(keep) < n:
        return keep
    idx = np.linspace(0, len(keep) - 1, n).astype(int)
    return keep[idx]


def theorem1_report(
    nm: NoiseModel,
    m: DataGeneratingManifold,
    lam: float,
    probes: int = 512,
    quad_points: int = DEFAULT_QUAD_POINTS,
) -> ThresholdReport:
    eps = radius_of_level(nm, lam)  # raises when lam > peak
    if eps == 0.0:
        raise DegenerateThresholdError(
            "level equals the noise peak: radii collapse and lambda_star would be 0"
        )
    omega = omega_epsilon(m, eps, probe_points=probes)
    lam_star = omega * lam
    if lam_star <= 0.0:
        raise DegenerateThresholdError("omega is zero; lambda_star must be positive")
    delta_star = radius_of_level(nm, lam_star)
    d_cw = m.class_wise_distance()

    on_pts = _manifold_probes(m, probes)
    floor = extended_density(nm, m, on_pts, quad_points)
    off_pts = _off_neighborhood_probes(m, eps, probes)
    ceiling = extended_density(nm, m, off_pts, quad_points)

    return ThresholdReport(
        sigma=nm.sigma,
        lam=lam,
        eps_lambda=eps,
        delta_lambda=eps,
        omega_eps=omega,
        lambda_star=lam_star,
        delta_star=delta_star,
        d_cw=d_cw,
        precondition_holds=bool(d_cw > 2.0 * delta_star),
        min_on_manifold_density=float(floor.min()),
        max_off_neighborhood_density=float(ceiling.max()),
        floor_holds=bool(floor.min() >= lam_star),
        ceiling_holds=bool(ceiling.max() < lam),
    )


# ---------------------------------------------------------------------------
# monotonicity probe


@dataclass(frozen=True)
class MonotonicityProbe:
    densities: np.ndarray
    nondecreasing: bool


def monotonicity_probe(
    nm: NoiseModel,
    m: DataGeneratingManifold,
    query,
    steps: int,
    quad_points: int = DEFAULT_QUAD_POINTS,
) -> MonotonicityProbe:
    """Densities at steps+1 equal fractions from the query to its projection."""
    query = np.asarray(query, dtype=float)
    target = nearest_point(m, query).point
    frac = np.linspace(0.0, 1.0, steps + 1)
    pts = query[None, :] + frac[:, None] * (target - query)[None, :]
    dens = extended_density(nm, m, pts, quad_points)
    diffs = np.diff(dens)
    tol = 1e-9 * max(1.0, float(np.abs(dens).max()))
    return MonotonicityProbe(densities=dens, nondecreasing=bool((diffs >= -tol).all()))
