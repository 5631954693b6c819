"""Regular-grid scalar fields and superlevel-set topology.

A field stores density values at cell centers of a rectangle.  Thresholding
at a level gives a binary image; foreground components use 8-connectivity
and background uses 4-connectivity, the standard pairing that avoids the
digital-topology paradox.  Holes are bounded background components (those
not touching the field border).  A minimum-component-area filter suppresses
single-cell numerical speckle in counts; it never affects which cells are
foreground.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, ProbeOutsideDomainError
from .geometry import DataGeneratingManifold

Domain = tuple[float, float, float, float]  # x_lo, x_hi, y_lo, y_hi


@dataclass(frozen=True)
class ScalarField:
    domain: Domain
    values: np.ndarray  # shape (nx, ny), cell centers

    def __post_init__(self):
        if self.values.ndim != 2 or min(self.values.shape) < 2:
            raise ValueError("field needs at least 2x2 cells")
        if not np.isfinite(self.values).all() or (self.values < 0).any():
            raise NonFiniteError("field values must be finite and >= 0")

    @property
    def resolution(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def cell_size(self) -> tuple[float, float]:
        x_lo, x_hi, y_lo, y_hi = self.domain
        nx, ny = self.values.shape
        return (x_hi - x_lo) / nx, (y_hi - y_lo) / ny

    def centers(self) -> np.ndarray:
        """Cell centers as an (nx*ny, 2) array, x-major order."""
        x_lo, x_hi, y_lo, y_hi = self.domain
        nx, ny = self.values.shape
        xs = x_lo + (np.arange(nx) + 0.5) * (x_hi - x_lo) / nx
        ys = y_lo + (np.arange(ny) + 0.5) * (y_hi - y_lo) / ny
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def cell_of(self, point) -> tuple[int, int]:
        x, y = float(point[0]), float(point[1])
        x_lo, x_hi, y_lo, y_hi = self.domain
        if not (x_lo <= x <= x_hi and y_lo <= y <= y_hi):
            raise ProbeOutsideDomainError(f"point ({x}, {y}) outside {self.domain}")
        nx, ny = self.values.shape
        ix = min(int((x - x_lo) / (x_hi - x_lo) * nx), nx - 1)
        iy = min(int((y - y_lo) / (y_hi - y_lo) * ny), ny - 1)
        return ix, iy


def rasterize(f, domain: Domain, resolution: tuple[int, int], workers: int = 1) -> ScalarField:
    """Evaluate a vectorized density f((n,2)) -> (n,) at cell centers."""
    nx, ny = resolution
    if nx < 2 or ny < 2:
        raise ValueError("resolution must be at least 2x2")
    x_lo, x_hi, y_lo, y_hi = domain
    xs = x_lo + (np.arange(nx) + 0.5) * (x_hi - x_lo) / nx
    ys = y_lo + (np.arange(ny) + 0.5) * (y_hi - y_lo) / ny
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    if workers > 1:
        chunks = np.array_split(np.arange(len(pts)), workers * 4)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda idx: f(pts[idx]), chunks))
        vals = np.concatenate(parts)
    else:
        vals = f(pts)
    vals = np.asarray(vals, dtype=float).reshape(nx, ny)
    if not np.isfinite(vals).all():
        raise NonFiniteError("non-finite value during rasterization")
    return ScalarField(domain=domain, values=vals)


# ---------------------------------------------------------------------------
# union-find labeling


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        p = self.parent
        root = x
        while p[root] != root:
            root = p[root]
        while p[x] != root:
            p[x], x = root, p[x]
        return root

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def label_components(mask: np.ndarray, connectivity: int) -> tuple[np.ndarray, int]:
    """Label True cells of a binary grid; returns (labels, count).

    labels is -1 on background, otherwise a 0-based component id in
    raster-scan order of first appearance.  connectivity is 4 or 8.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    nx, ny = mask.shape
    uf = _UnionFind(nx * ny)
    idx = np.arange(nx * ny).reshape(nx, ny)
    for i in range(nx):
        row = mask[i]
        for j in range(ny):
            if not row[j]:
                continue
            me = idx[i, j]
            if j > 0 and row[j - 1]:
                uf.union(me, idx[i, j - 1])
            if i > 0:
                if mask[i - 1, j]:
                    uf.union(me, idx[i - 1, j])
                if connectivity == 8:
                    if j > 0 and mask[i - 1, j - 1]:
                        uf.union(me, idx[i - 1, j - 1])
                    if j + 1 < ny and mask[i - 1, j + 1]:
                        uf.union(me, idx[i - 1, j + 1])
    labels = np.full((nx, ny), -1, dtype=int)
    remap: dict[int, int] = {}
    for i in range(nx):
        for j in range(ny):
            if mask[i, j]:
                root = uf.find(idx[i, j])
                if root not in remap:
                    remap[root] = len(remap)
                labels[i, j] = remap[root]
    return labels, len(remap)


@dataclass(frozen=True)
class LevelSetReport:
    lam: float
    n_components: int
    n_holes: int | None = None
    includes_manifold: bool | None = None
    separates_classes: bool | None = None
    component_of_class: tuple[int | None, ...] | None = None
    min_area: int = 1

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "n_components": self.n_components,
            "n_holes": self.n_holes,
            "includes_manifold": self.includes_manifold,
            "separates_classes": self.separates_classes,
            "component_of_class": list(self.component_of_class)
            if self.component_of_class is not None
            else None,
            "min_area": self.min_area,
        }


def _filtered_count(labels: np.ndarray, count: int, min_area: int) -> int:
    if count == 0 or min_area <= 1:
        return count
    areas = np.bincount(labels[labels >= 0].ravel(), minlength=count)
    return int((areas >= min_area).sum())


def superlevel_components(field: ScalarField, lam: float, min_area: int = 1) -> LevelSetReport:
    """Count foreground components of {density >= lam} (8-connectivity)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    labels, count = label_components(field.values >= lam, 8)
    return LevelSetReport(
        lam=lam, n_components=_filtered_count(labels, count, min_area), min_area=min_area
    )


def hole_count(field: ScalarField, lam: float, min_area: int = 1) -> int:
    """Bounded background components of the thresholded field (4-connectivity)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    bg = field.values < lam
    labels, count = label_components(bg, 4)
    if count == 0:
        return 0
    border = np.zeros(count, dtype=bool)
    for edge in (labels[0], labels[-1], labels[:, 0], labels[:, -1]):
        ids = edge[edge >= 0]
        border[ids] = True
    areas = np.bincount(labels[labels >= 0].ravel(), minlength=count)
    return int((~border & (areas >= min_area)).sum())


def check_inclusion_separation(
    field: ScalarField,
    lam: float,
    m: DataGeneratingManifold,
    probes_per_class: int,
    min_area: int = 1,
) -> LevelSetReport:
    """Probe manifold points against the thresholded field.

    includes_manifold: every probe lands in a foreground cell.
    separates_classes: component ids hit by different classes are disjoint.
    Separation uses the unfiltered labeling; min_area only affects the count.
    """
    labels, count = label_components(field.values >= lam, 8)
    per_class_ids: list[set[int]] = []
    includes = True
    for curve in m.curves:
        us = np.linspace(*curve.param_range, probes_per_class)
        pts = curve.point(us)
        ids: set[int] = set()
        for p in pts:
            ix, iy = field.cell_of(p)
            lab = int(labels[ix, iy])
            if lab < 0:
                includes = False
            else:
                ids.add(lab)
        per_class_ids.append(ids)
    separates = True
    for i in range(len(per_class_ids)):
        for j in range(i + 1, len(per_class_ids)):
            if per_class_ids[i] & per_class_ids[j]:
                separates = False
    comp_of_class = tuple(
        ids.copy().pop() if len(ids) == 1 else None for ids in per_class_ids
    )
    return LevelSetReport(
        lam=lam,
        n_components=_filtered_count(labels, count, min_area),
        n_holes=hole_count(field, lam, min_area),
        includes_manifold=includes,
        separates_classes=separates,
        component_of_class=comp_of_class,
        min_area=min_area,
    )
