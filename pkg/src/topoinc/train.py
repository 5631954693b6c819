"""Flow training: Adam on minibatch negative log-likelihood.

Training data comes either from a manifold (uniform samples plus isotropic
Gaussian noise, as in the experiments) or from a CSV dataset.  Points are
standardized by a per-dimension mean/std fitted on the training set; the
model is trained in standardized coordinates.  Random streams derive from
the config seed via named substreams (dataset / init / batch), so runs are
bit-reproducible on one platform.

If the loss turns non-finite the loop aborts and returns the parameters of
the most recent finite checkpoint (taken every 100 iterations).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError
from .flow import FlowModel, Standardizer, loss_and_gradients, new_model
from .geometry import DataGeneratingManifold, sample_uniform
from .latent import LatentMixture
from .noise import DEFAULT_SIGMA
from .rng import substream


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 30_000
    batch: int = 200
    learning_rate: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    class_aware: bool = False
    seed: int = 0
    n_per_class: int = 1000
    sigma: float = DEFAULT_SIGMA
    checkpoint_every: int = 100

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.batch < 2:
            raise ValueError("batch must be >= 2")


class Adam:
    """Adam with bias correction; state per parameter array."""

    def __init__(self, params: list[np.ndarray], lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        b1t = 1.0 - self.b1**self.t
        b2t = 1.0 - self.b2**self.t
        # p -= lr * (m/b1t) / (sqrt(v/b2t) + eps), refactored to avoid temporaries
        scale = self.lr * np.sqrt(b2t) / b1t
        eps_eff = self.eps * np.sqrt(b2t)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            denom = np.sqrt(v)
            denom += eps_eff
            p -= scale * m / denom


def make_training_set(
    m: DataGeneratingManifold, cfg: TrainConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform manifold samples perturbed by isotropic Gaussian noise."""
    samples = sample_uniform(m, cfg.n_per_class, rng_seed=cfg.seed)
    pts = np.stack([s.point for s in samples])
    labels = np.array([s.label for s in samples], dtype=int)
    if cfg.sigma > 0:
        rng = substream(cfg.seed, "dataset", "noise")
        pts = pts + cfg.sigma * rng.standard_normal(pts.shape)
    return pts, labels


def train(
    data: DataGeneratingManifold | tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    latent: LatentMixture,
    metadata: dict | None = None,
) -> FlowModel:
    """Fit a flow; deterministic given cfg.seed."""
    if isinstance(data, DataGeneratingManifold):
        points, labels = make_training_set(data, cfg)
        dataset_id = data.name
    else:
        points, labels = data
        points = np.asarray(points, dtype=float)
        labels = np.asarray(labels, dtype=int)
        dataset_id = (metadata or {}).get("dataset", "csv")
    if cfg.class_aware and labels.max() + 1 != latent.n_components:
        raise ValueError(
            f"class-aware training needs one latent component per class "
            f"({labels.max() + 1} classes, {latent.n_components} components)"
        )

    std = Standardizer.fit(points)
    x = std.apply(points)

    meta = dict(metadata or {})
    meta.update(
        dataset=dataset_id,
        seed=cfg.seed,
        iterations=cfg.iterations,
        class_aware=cfg.class_aware,
        batch=cfg.batch,
        learning_rate=cfg.learning_rate,
    )
    model = new_model(latent, substream(cfg.seed, "init"), standardizer=std, metadata=meta)

    if cfg.iterations == 0:
        model.loss_trace = np.zeros(0)
        return model

    opt = Adam(model.all_params(), cfg.learning_rate, cfg.betas, cfg.eps)
    batch_rng = substream(cfg.seed, "batch")
    n = len(x)
    trace = np.empty(cfg.iterations)
    checkpoint = model.copy_params()
    for it in range(cfg.iterations):
        idx = batch_rng.choice(n, size=min(cfg.batch, n), replace=False)
        try:
            loss, grads = loss_and_gradients(model, x[idx], labels[idx], cfg.class_aware)
        except NonFiniteError:
            model.set_all_params([p.copy() for p in checkpoint])
            model.metadata["aborted_at"] = it
            trace = trace[:it]
            break
        trace[it] = loss
        opt.step(grads)
        if (it + 1) % cfg.checkpoint_every == 0:
            if np.isfinite(loss) and all(np.isfinite(p).all() for p in model.all_params()):
                checkpoint = model.copy_params()
            else:
                model.set_all_params([p.copy() for p in checkpoint])
                model.metadata["aborted_at"] = it
                trace = trace[: it + 1]
                break
    model.loss_trace = trace
    model.metadata["final_loss"] = float(trace[-1]) if len(trace) else None
    return model
