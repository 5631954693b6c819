"""Experiment harness: projection benchmark, level-set reports, failure
traces, decision-boundary comparison, and the latent-alignment scenario.

All randomness derives from a master seed through named substreams
(dataset / init / batch / inc / tiebreak), so any stage can be re-run in
isolation and reports are bit-reproducible given (seed, platform).

The projection benchmark follows the perturbation protocol: 100 uniform
source points per class, each offset by +-0.2 along the curve normal, both
projection variants run on the same adversarial set, errors measured to the
known source point in the model's standardized coordinates and in raw data
units.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .flow import FlowModel
from .geometry import (
    DataGeneratingManifold,
    make_dataset,
    nearest_point_batch,
    perturb_normal,
    sample_uniform,
)
from .inc import IncConfig, project_aware_batch, project_ideal, project_ignorant_batch
from .latent import standard_mixture
from .noise import DEFAULT_SIGMA, NoiseModel, radius_of_level
from .rng import substream
from .svm import SvmModel
from .topofield import LevelSetReport, ScalarField, check_inclusion_separation, rasterize
from .train import TrainConfig, train


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    sigma: float = DEFAULT_SIGMA
    train: TrainConfig = field(default_factory=TrainConfig)
    inc: IncConfig = field(default_factory=IncConfig)
    latent_rotation: float = 0.0
    n_sources_per_class: int = 100
    perturbation: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.latent_rotation < 2.0 * np.pi + 1e-12:
            raise ValueError("rotation must lie in [0, 2 pi)")


@dataclass(frozen=True)
class ProjectionBenchReport:
    dataset: str
    variant: str
    mean_error: float
    std_error: float
    mean_error_raw: float
    std_error_raw: float
    n_trials: int
    seed: int
    errors: np.ndarray  # standardized units
    errors_raw: np.ndarray

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "variant": self.variant,
            "mean_error": self.mean_error,
            "std_error": self.std_error,
            "mean_error_raw": self.mean_error_raw,
            "std_error_raw": self.std_error_raw,
            "n_trials": self.n_trials,
            "seed": self.seed,
            "errors": self.errors.tolist(),
            "errors_raw": self.errors_raw.tolist(),
        }


def train_variant(
    dataset: str,
    class_aware: bool,
    cfg: TrainConfig,
    latent_rotation: float = 0.0,
) -> FlowModel:
    """Train one flow for a dataset: l latent components when class-aware,
    l - 1 otherwise (batch 300 for the three-class spirals, else 200)."""
    m = make_dataset(dataset)
    l = m.n_classes
    n_z = l if class_aware else max(1, l - 1)
    latent = standard_mixture(n_z, rotation=latent_rotation)
    cfg = replace(cfg, class_aware=class_aware, batch=300 if dataset == "spirals" else cfg.batch)
    return train(m, cfg, latent, metadata={"dataset": dataset, "n_z": n_z})


def adversarial_set(cfg: ExperimentConfig, m: DataGeneratingManifold):
    """The +-r normal-offset adversarial points with their sources."""
    adv_seed = int(substream(cfg.seed, "dataset").integers(2**63))
    sources = sample_uniform(m, cfg.n_sources_per_class, rng_seed=adv_seed)
    plus = perturb_normal(m, sources, cfg.perturbation, +1)
    minus = perturb_normal(m, sources, cfg.perturbation, -1)
    return plus + minus


def _project_batchwise(model, queries_std, inc_cfg, variant, n_classes, chunk=4096):
    xs = []
    for s in range(0, len(queries_std), chunk):
        q = queries_std[s : s + chunk]
        idx = np.arange(s, s + len(q))
        if variant == "ignorant":
            x, _, _, _, _ = project_ignorant_batch(model, q, inc_cfg, query_indices=idx)
        else:
            x, _, _, _, _ = project_aware_batch(
                model, q, inc_cfg, query_indices=idx, n_classes=n_classes
            )
        xs.append(x)
    return np.concatenate(xs)


def run_projection_bench(
    cfg: ExperimentConfig,
    model_ignorant: FlowModel,
    model_aware: FlowModel,
) -> tuple[ProjectionBenchReport, ProjectionBenchReport]:
    m = make_dataset(cfg.dataset)
    adv = adversarial_set(cfg, m)
    queries = np.stack([a.point for a in adv])
    sources = np.stack([a.source for a in adv])
    n_trials = len(adv)
    assert n_trials == 2 * cfg.n_sources_per_class * m.n_classes

    reports = []
    for variant, model in (("ignorant", model_ignorant), ("aware", model_aware)):
        inc_cfg = cfg.inc if cfg.inc.restarts is not None else replace(cfg.inc, restarts=m.n_classes)
        q_std = model.standardizer.apply(queries)
        s_std = model.standardizer.apply(sources)
        x_std = _project_batchwise(
            model, q_std, inc_cfg, variant, n_classes=m.n_classes
        )
        x_raw = model.standardizer.invert(x_std)
        err_std = np.linalg.norm(x_std - s_std, axis=1)
        err_raw = np.linalg.norm(x_raw - sources, axis=1)
        reports.append(
            ProjectionBenchReport(
                dataset=cfg.dataset,
                variant=f"class-{variant}",
                mean_error=float(err_std.mean()),
                std_error=float(err_std.std()),
                mean_error_raw=float(err_raw.mean()),
                std_error_raw=float(err_raw.std()),
                n_trials=n_trials,
                seed=cfg.seed,
                errors=err_std,
                errors_raw=err_raw,
            )
        )
    return reports[0], reports[1]


# ---------------------------------------------------------------------------
# level-set reports


@dataclass(frozen=True)
class LevelsetRun:
    report: LevelSetReport
    field: ScalarField
    max_foreground_manifold_distance: float | None = None
    n_foreground_beyond_delta: int | None = None


def run_levelset_report(
    model: FlowModel,
    lam: float = 0.01,
    domain=(-3.0, 3.0, -3.0, 3.0),
    resolution=(300, 300),
    min_area: int = 4,
    manifold: DataGeneratingManifold | None = None,
    sigma: float = DEFAULT_SIGMA,
    workers: int = 1,
) -> LevelsetRun:
    """Threshold the model density (standardized coordinates) on a grid.

    With a manifold, foreground cells are mapped back to raw coordinates and
    their exact manifold distances are compared against the bounding radius
    of the level, locating generable points far from the manifold.
    """

    def dens(pts):
        return np.exp(model.log_pdf(pts))

    f = rasterize(dens, domain, resolution, workers=workers)
    if manifold is None:
        from .topofield import hole_count, superlevel_components

        rep = superlevel_components(f, lam, min_area)
        rep = LevelSetReport(
            lam=lam,
            n_components=rep.n_components,
            n_holes=hole_count(f, lam, min_area),
            min_area=min_area,
        )
        return LevelsetRun(report=rep, field=f)

    centers = f.centers()
    fg = f.values.ravel() >= lam
    max_dist = None
    beyond = None
    if fg.any():
        raw = model.standardizer.invert(centers[fg])
        _, _, _, dist = nearest_point_batch(manifold, raw, grid=2048)
        delta = radius_of_level(NoiseModel(sigma), lam)
        max_dist = float(dist.max())
        beyond = int((dist > delta).sum())
    std_curves = _standardized_manifold(manifold, model)
    rep = check_inclusion_separation(f, lam, std_curves, probes_per_class=256, min_area=min_area)
    return LevelsetRun(
        report=rep,
        field=f,
        max_foreground_manifold_distance=max_dist,
        n_foreground_beyond_delta=beyond,
    )


def _standardized_manifold(m: DataGeneratingManifold, model: FlowModel) -> DataGeneratingManifold:
    """The manifold mapped through the model's standardizer.

    Positions and velocities are exact; the anisotropic scaling invalidates
    the closed-form arc lengths, so the result is only used for position
    probes, never for arc-length computations.
    """
    from .geometry import CurveManifold

    mean, std = model.standardizer.mean, model.standardizer.std
    curves = []
    for c in m.curves:
        curves.append(
            CurveManifold(
                label=c.label,
                param_range=c.param_range,
                position=lambda u, c=c: (c.position(u) - mean) / std,
                velocity=lambda u, c=c: c.velocity(u) / std,
                arclength_to=c.arclength_to,
                param_at_arclength=c.param_at_arclength,
                closed=c.closed,
            )
        )
    return DataGeneratingManifold(m.name + "-standardized", curves, m.priors)


# ---------------------------------------------------------------------------
# failure traces


@dataclass(frozen=True)
class FailureTrace:
    tag: str  # converged-near-source | wrong-manifold | out-of-manifold
    x_star_raw: np.ndarray
    source: np.ndarray
    source_label: int
    distance_to_manifold: float
    nearest_label: int


def capture_failure_traces(
    model: FlowModel,
    m: DataGeneratingManifold,
    adversarial,
    cfg: IncConfig,
    lam: float = 0.01,
    sigma: float = DEFAULT_SIGMA,
    variant: str = "ignorant",
) -> list[FailureTrace]:
    """Tag projections by their failure mode using exact geometry.

    out-of-manifold: the projection lands farther than the bounding radius
    of lam from the manifold.  wrong-manifold: it lands near a curve of a
    different class than the source.  Otherwise converged-near-source.
    The ignorant variant runs single-start (restarts=1) to expose
    initialization failures, mirroring the trace figures.
    """
    delta = radius_of_level(NoiseModel(sigma), lam)
    queries = np.stack([a.point for a in adversarial])
    q_std = model.standardizer.apply(queries)
    if variant == "ignorant":
        run_cfg = replace(cfg, restarts=1)
        x_std, _, _, _, _ = project_ignorant_batch(model, q_std, run_cfg)
    else:
        x_std, _, _, _, _ = project_aware_batch(model, q_std, cfg, n_classes=m.n_classes)
    x_raw = model.standardizer.invert(x_std)
    _, _, nlabel, ndist = nearest_point_batch(m, x_raw, grid=2048)
    out = []
    for k, a in enumerate(adversarial):
        if ndist[k] > delta:
            tag = "out-of-manifold"
        elif int(nlabel[k]) != a.label:
            tag = "wrong-manifold"
        else:
            tag = "converged-near-source"
        out.append(
            FailureTrace(
                tag=tag,
                x_star_raw=x_raw[k],
                source=a.source,
                source_label=a.label,
                distance_to_manifold=float(ndist[k]),
                nearest_label=int(nlabel[k]),
            )
        )
    return out


# ---------------------------------------------------------------------------
# alignment scenario


def run_alignment_scenario(
    rotation: float,
    cfg: TrainConfig,
    dataset: str = "two-moons",
    lam: float = 0.01,
    resolution=(300, 300),
    workers: int = 1,
) -> LevelsetRun:
    """Class-aware training with the latent arrangement rotated.

    Emits the level-set report only; a quarter-turn rotation aligns the two
    components horizontally, the configuration reported to produce a
    connection artifact.  No assertion is made about failure.
    """
    model = train_variant(dataset, class_aware=True, cfg=cfg, latent_rotation=rotation)
    return run_levelset_report(
        model, lam=lam, resolution=resolution, manifold=make_dataset(dataset), workers=workers
    )


# ---------------------------------------------------------------------------
# decision boundaries


@dataclass(frozen=True)
class BoundaryGrid:
    domain: tuple[float, float, float, float]
    resolution: tuple[int, int]
    labels: dict  # variant name -> (nx, ny) int array

    def agreement(self, a: str, b: str) -> float:
        return float((self.labels[a] == self.labels[b]).mean())


def boundary_eval(
    svm: SvmModel,
    defense: str,
    manifold: DataGeneratingManifold | None = None,
    model: FlowModel | None = None,
    domain=(-3.0, 3.0, -3.0, 3.0),
    resolution=(100, 100),
    inc_cfg: IncConfig | None = None,
    workers: int = 1,
) -> BoundaryGrid:
    """Classify every grid cell, optionally after an INC projection."""
    nx, ny = resolution
    x_lo, x_hi, y_lo, y_hi = domain
    xs = x_lo + (np.arange(nx) + 0.5) * (x_hi - x_lo) / nx
    ys = y_lo + (np.arange(ny) + 0.5) * (y_hi - y_lo) / ny
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)

    if defense == "none":
        proj = pts
    elif defense == "ideal":
        if manifold is None:
            raise ValueError("ideal defense needs the manifold")
        proj, _, _, _ = nearest_point_batch(manifold, pts, grid=2048)
    elif defense in ("ignorant", "aware"):
        if model is None:
            raise ValueError(f"{defense} defense needs a trained model")
        cfg = inc_cfg or IncConfig()
        if cfg.restarts is None and manifold is not None:
            cfg = replace(cfg, restarts=manifold.n_classes)
        q_std = model.standardizer.apply(pts)
        n_classes = manifold.n_classes if manifold is not None else None
        x_std = _project_batchwise(model, q_std, cfg, defense, n_classes)
        proj = model.standardizer.invert(x_std)
    else:
        raise ValueError(f"unknown defense {defense!r}")

    labels = svm.predict(proj).reshape(nx, ny)
    return BoundaryGrid(domain=domain, resolution=resolution, labels={defense: labels})


def merge_boundary_grids(grids) -> BoundaryGrid:
    first = grids[0]
    labels = {}
    for g in grids:
        labels.update(g.labels)
    return BoundaryGrid(domain=first.domain, resolution=first.resolution, labels=labels)
