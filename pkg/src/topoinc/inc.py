"""Invert-and-classify projection onto the learned (or exact) manifold.

Three variants:

  ideal      nearest point on the data-generating manifold (geometry oracle).
  ignorant   latent search on the trained flow: minimize
             |G(z) - q| + alpha * (M - p_Z(z))
             over z, Adam from several latent draws; the regularizer blocks
             the trivial solution z = G^{-1}(q).  M is the peak latent
             density, a constant that only shifts the objective.
  aware      one start per latent component i with the component-specific
             regularizer alpha * (M_i - p_{Z,i}(z)); the candidate with the
             smallest distance to the query wins, ties broken by a seeded
             random draw.

Queries, outputs and distances for the flow-backed variants live in the
model's standardized coordinate system; callers standardize and invert.
Restart seeds split deterministically by (query index, restart index), so
batched projection is bit-identical to one-at-a-time projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LatentClassMismatchError, NonFiniteError
from .flow import FlowModel
from .geometry import DataGeneratingManifold, nearest_point
from .rng import substream


@dataclass(frozen=True)
class IncConfig:
    alpha: float = 1.0
    steps: int = 100
    learning_rate: float = 0.01
    restarts: int | None = None  # None: one per latent component
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


@dataclass(frozen=True)
class IncResult:
    x_star: np.ndarray
    z_star: np.ndarray
    objective: float
    trace_z: np.ndarray  # (steps+1, 2)
    trace_x: np.ndarray  # (steps+1, 2)
    trace_objective: np.ndarray  # (steps+1,)
    chosen_start: int
    variant: str


def project_ideal(m: DataGeneratingManifold, query) -> IncResult:
    """Geometric projection; the trace is the single solution point."""
    query = np.asarray(query, dtype=float)
    np_res = nearest_point(m, query)
    p = np_res.point
    return IncResult(
        x_star=p,
        z_star=p.copy(),
        objective=np_res.distance,
        trace_z=p[None, :],
        trace_x=p[None, :],
        trace_objective=np.array([np_res.distance]),
        chosen_start=0,
        variant="ideal",
    )


def _objective_batch(model: FlowModel, z, queries, alpha, mconst, component):
    """Objective, x, distance and the z-gradient for a batch."""
    x, _, tape = model.forward(z, with_tape=True)
    diff = x - queries
    dist = np.sqrt((diff**2).sum(axis=1))
    if component is None:
        pz = np.exp(model.latent.log_pdf(z))
        gz = model.latent.grad_pdf(z)
    else:
        pz = np.exp(model.latent.log_pdf_component(component, z))
        gz = pz[:, None] * model.latent.grad_log_pdf_component(component, z)
    obj = dist + alpha * (mconst - pz)
    safe = np.maximum(dist, 1e-300)
    dx = np.where(dist[:, None] > 0.0, diff / safe[:, None], 0.0)
    dz, _ = model.forward_backward(tape, dx, np.zeros(len(z)))
    dz -= alpha * gz
    return obj, x, dist, dz


def _adam_on_z(model, z0, queries, cfg: IncConfig, mconst, component, keep_trace):
    """cfg.steps Adam iterations on z for a batch of queries."""
    z = z0.copy()
    n = len(z)
    m1 = np.zeros_like(z)
    v1 = np.zeros_like(z)
    b1, b2 = cfg.betas
    traces = None
    obj, x, dist, dz = _objective_batch(model, z, queries, cfg.alpha, mconst, component)
    if keep_trace:
        traces = (
            np.empty((n, cfg.steps + 1, 2)),
            np.empty((n, cfg.steps + 1, 2)),
            np.empty((n, cfg.steps + 1)),
        )
        traces[0][:, 0] = z
        traces[1][:, 0] = x
        traces[2][:, 0] = obj
    for t in range(1, cfg.steps + 1):
        if not np.isfinite(obj).all():
            raise NonFiniteError("non-finite projection objective")
        m1 = b1 * m1 + (1.0 - b1) * dz
        v1 = b2 * v1 + (1.0 - b2) * dz * dz
        mh = m1 / (1.0 - b1**t)
        vh = v1 / (1.0 - b2**t)
        z = z - cfg.learning_rate * mh / (np.sqrt(vh) + cfg.eps)
        obj, x, dist, dz = _objective_batch(model, z, queries, cfg.alpha, mconst, component)
        if keep_trace:
            traces[0][:, t] = z
            traces[1][:, t] = x
            traces[2][:, t] = obj
    if not np.isfinite(obj).all():
        raise NonFiniteError("non-finite projection objective")
    return z, x, obj, dist, traces


def _restart_z0(model: FlowModel, cfg: IncConfig, query_indices, restart: int, component):
    z0 = np.empty((len(query_indices), 2))
    for row, qi in enumerate(query_indices):
        rng = substream(cfg.seed, "inc", int(qi), restart)
        if component is None:
            z0[row] = model.latent.sample(rng, 1)[0]
        else:
            z0[row] = model.latent.sample_component(component, rng, 1)[0]
    return z0


def project_ignorant_batch(
    model: FlowModel,
    queries: np.ndarray,
    cfg: IncConfig,
    query_indices=None,
    keep_trace: bool = False,
    initial_z: np.ndarray | None = None,
):
    """Batched class-ignorant projection in standardized coordinates.

    Returns (x_star, z_star, objective, chosen_start, traces) where traces is
    None unless keep_trace, in which case it holds the chosen restart's
    (z, x, objective) paths per query.  initial_z, shape (restarts, n, 2),
    overrides the latent draws (used to probe specific initializations).
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    nq = len(queries)
    if query_indices is None:
        query_indices = np.arange(nq)
    restarts = cfg.restarts or model.latent.n_components
    mconst = model.latent.max_density

    best = None
    for r in range(restarts):
        if initial_z is not None:
            z0 = np.atleast_2d(np.asarray(initial_z[r], dtype=float))
        else:
            z0 = _restart_z0(model, cfg, query_indices, r, None)
        z, x, obj, dist, traces = _adam_on_z(model, z0, queries, cfg, mconst, None, keep_trace)
        if best is None:
            best = [z, x, obj, np.zeros(nq, dtype=int), traces]
        else:
            upd = obj < best[2]
            best[0] = np.where(upd[:, None], z, best[0])
            best[1] = np.where(upd[:, None], x, best[1])
            best[2] = np.where(upd, obj, best[2])
            best[3] = np.where(upd, r, best[3])
            if keep_trace:
                for part in range(3):
                    best[4][part][upd] = traces[part][upd]
    return best[0], best[1], best[2], best[3], best[4]


def project_ignorant(model: FlowModel, query, cfg: IncConfig, query_index: int = 0) -> IncResult:
    query = np.asarray(query, dtype=float)
    z, x, obj, chosen, traces = project_ignorant_batch(
        model, query[None, :], cfg, query_indices=[query_index], keep_trace=True
    )
    return IncResult(
        x_star=x[0],
        z_star=z[0],
        objective=float(obj[0]),
        trace_z=traces[0][0],
        trace_x=traces[1][0],
        trace_objective=traces[2][0],
        chosen_start=int(chosen[0]),
        variant="class-ignorant",
    )


def project_aware_batch(
    model: FlowModel,
    queries: np.ndarray,
    cfg: IncConfig,
    query_indices=None,
    keep_trace: bool = False,
    n_classes: int | None = None,
    initial_z: np.ndarray | None = None,
):
    """Batched class-aware projection: one start per latent component.

    The winning candidate minimizes the distance to the query (not the
    regularized objective); ties within 1e-12 break by a seeded draw.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    nq = len(queries)
    if query_indices is None:
        query_indices = np.arange(nq)
    k = model.latent.n_components
    if n_classes is not None and n_classes != k:
        raise LatentClassMismatchError(
            f"class-aware projection needs {n_classes} latent components, model has {k}"
        )
    cand = []
    for i in range(k):
        if initial_z is not None:
            z0 = np.atleast_2d(np.asarray(initial_z[i], dtype=float))
        else:
            z0 = _restart_z0(model, cfg, query_indices, i, i)
        mconst = model.latent.component_peak(i)
        cand.append(_adam_on_z(model, z0, queries, cfg, mconst, i, keep_trace))

    dists = np.stack([c[3] for c in cand], axis=1)  # (nq, k)
    dmin = dists.min(axis=1)
    chosen = np.empty(nq, dtype=int)
    for row, qi in enumerate(query_indices):
        tied = np.flatnonzero(dists[row] <= dmin[row] + 1e-12)
        if len(tied) == 1:
            chosen[row] = tied[0]
        else:
            rng = substream(cfg.seed, "tiebreak", int(qi))
            chosen[row] = int(rng.choice(tied))
    rows = np.arange(nq)
    z = np.stack([cand[c][0][r] for r, c in zip(rows, chosen)])
    x = np.stack([cand[c][1][r] for r, c in zip(rows, chosen)])
    obj = np.array([cand[c][2][r] for r, c in zip(rows, chosen)])
    traces = None
    if keep_trace:
        traces = (
            np.stack([cand[c][4][0][r] for r, c in zip(rows, chosen)]),
            np.stack([cand[c][4][1][r] for r, c in zip(rows, chosen)]),
            np.stack([cand[c][4][2][r] for r, c in zip(rows, chosen)]),
        )
    return x, z, obj, chosen, traces


def project_aware(
    model: FlowModel, query, cfg: IncConfig, query_index: int = 0, n_classes: int | None = None
) -> IncResult:
    query = np.asarray(query, dtype=float)
    x, z, obj, chosen, traces = project_aware_batch(
        model, query[None, :], cfg, query_indices=[query_index],
        keep_trace=True, n_classes=n_classes,
    )
    return IncResult(
        x_star=x[0],
        z_star=z[0],
        objective=float(obj[0]),
        trace_z=traces[0][0],
        trace_x=traces[1][0],
        trace_objective=traces[2][0],
        chosen_start=int(chosen[0]),
        variant="class-aware",
    )
