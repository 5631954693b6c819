"""Affine-coupling flow with exact densities and hand-rolled gradients.

Architecture: eight coupling layers alternating the conditioned coordinate
(layer k conditions on coordinate k mod 2), which is the swap-interleaved
stack with the bookkeeping permutations folded into the layers; unlike a
stack with an odd number of physical swaps, it is exactly the identity at
zero initialization.  Each layer keeps one coordinate a fixed and maps the
other as b' = b * exp(s(a)) + t(a), where (t, raw) come from a perceptron
with two hidden layers of 128 rectifier units on the scalar a, and the
log-scale is squashed as s = c * tanh(raw / c) with c = 2 for stability.
The map is exactly invertible and the log-determinant is the sum of s over
layers (negated for the inverse direction).

Densities follow the change of variables formula
log p_X(x) = log p_Z(z) + logdet_inverse with z the inverse image of x;
the class-conditional variant uses a single latent component in place of the
mixture.  Reverse-mode gradients are implemented directly for this fixed
architecture, in both directions:

  inverse_backward  gradients of losses of (z, logdet_inverse) w.r.t. the
                    layer parameters (training path),
  forward_backward  gradients of objectives of x = G(z) w.r.t. z and the
                    parameters (latent-search path).

Output layers initialize to zero, so a fresh model is the identity map with
zero log-determinant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError
from .latent import LatentMixture

N_LAYERS = 8
HIDDEN = 128
LOG_SCALE_CLAMP = 2.0


class CouplingLayer:
    """Parameters of one coupling transform; conditioned_index passes through."""

    __slots__ = ("w1", "b1", "w2", "b2", "w3", "b3", "conditioned_index", "clamp")

    def __init__(self, w1, b1, w2, b2, w3, b3, conditioned_index=0, clamp=LOG_SCALE_CLAMP):
        self.w1 = w1  # (H,)
        self.b1 = b1  # (H,)
        self.w2 = w2  # (H, H)
        self.b2 = b2  # (H,)
        self.w3 = w3  # (H, 2) -> (shift, raw log-scale)
        self.b3 = b3  # (2,)
        self.conditioned_index = conditioned_index
        self.clamp = clamp

    @classmethod
    def initialize(cls, rng: np.random.Generator, hidden: int = HIDDEN) -> "CouplingLayer":
        lim1 = 1.0  # fan_in = 1
        lim2 = 1.0 / math.sqrt(hidden)
        return cls(
            w1=rng.uniform(-lim1, lim1, hidden),
            b1=rng.uniform(-lim1, lim1, hidden),
            w2=rng.uniform(-lim2, lim2, (hidden, hidden)),
            b2=rng.uniform(-lim2, lim2, hidden),
            w3=np.zeros((hidden, 2)),
            b3=np.zeros(2),
        )

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def set_params(self, arrays):
        self.w1, self.b1, self.w2, self.b2, self.w3, self.b3 = arrays

    def net(self, a: np.ndarray):
        """(t, s, cache) for scalar batch a of shape (n,)."""
        h1 = np.maximum(a[:, None] * self.w1 + self.b1, 0.0)
        h2 = np.maximum(h1 @ self.w2 + self.b2, 0.0)
        out = h2 @ self.w3 + self.b3
        t = out[:, 0]
        tanh_u = np.tanh(out[:, 1] / self.clamp)
        s = self.clamp * tanh_u
        return t, s, (a, h1, h2, tanh_u)

    def net_backward(self, cache, dt: np.ndarray, ds: np.ndarray):
        """Backprop (dt, ds) through the net; returns (da, param grads)."""
        a, h1, h2, tanh_u = cache
        draw = ds * (1.0 - tanh_u**2)
        dout = np.stack([dt, draw], axis=1)
        dw3 = h2.T @ dout
        db3 = dout.sum(axis=0)
        dh2 = dout @ self.w3.T
        dh2 *= h2 > 0.0
        dw2 = h1.T @ dh2
        db2 = dh2.sum(axis=0)
        dh1 = dh2 @ self.w2.T
        dh1 *= h1 > 0.0
        dw1 = dh1.T @ a
        db1 = dh1.sum(axis=0)
        da = dh1 @ self.w1
        return da, [dw1, db1, dw2, db2, dw3, db3]


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, points: np.ndarray) -> "Standardizer":
        return cls(mean=points.mean(axis=0), std=points.std(axis=0))

    @classmethod
    def identity(cls) -> "Standardizer":
        return cls(mean=np.zeros(2), std=np.ones(2))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def invert(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean

    @property
    def log_jacobian(self) -> float:
        # log-density correction between raw and standardized coordinates
        return -float(np.log(self.std).sum())


class FlowModel:
    def __init__(
        self,
        layers: list[CouplingLayer],
        latent: LatentMixture,
        standardizer: Standardizer,
        metadata: dict | None = None,
    ):
        self.layers = layers
        self.latent = latent
        self.standardizer = standardizer
        self.metadata = metadata or {}
        self.loss_trace: np.ndarray | None = None

    # -- transforms ---------------------------------------------------------

    def forward(self, z, with_tape: bool = False):
        """x = G(z) and the forward log-determinant (per sample)."""
        z2 = np.atleast_2d(np.asarray(z, dtype=float))
        y = z2.copy()
        logdet = np.zeros(y.shape[0])
        tape = []
        for layer in self.layers:
            ci = layer.conditioned_index
            a = y[:, ci]
            b = y[:, 1 - ci]
            t, s, cache = layer.net(a)
            es = np.exp(s)
            bp = b * es + t
            logdet += s
            if with_tape:
                tape.append((cache, s, es, b))
            y = y.copy()
            y[:, 1 - ci] = bp
        if not np.isfinite(y).all():
            raise NonFiniteError("non-finite value in forward pass")
        if np.ndim(z) == 1:
            return (y[0], logdet[0], tape) if with_tape else (y[0], logdet[0])
        return (y, logdet, tape) if with_tape else (y, logdet)

    def forward_backward(self, tape, dx: np.ndarray, dlogdet: np.ndarray):
        """Backprop through forward: returns (dz, per-layer param grads)."""
        dy = dx.copy()
        grads = [None] * len(self.layers)
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            ci = layer.conditioned_index
            cache, s, es, b = tape[k]
            da_pass = dy[:, ci]
            dbp = dy[:, 1 - ci]
            db = dbp * es
            ds = dbp * b * es + dlogdet
            dt = dbp
            da_net, g = layer.net_backward(cache, dt, ds)
            grads[k] = g
            dy = dy.copy()
            dy[:, ci] = da_pass + da_net
            dy[:, 1 - ci] = db
        return dy, grads

    def inverse(self, x, with_tape: bool = False):
        """z = G^{-1}(x) and the inverse log-determinant (per sample)."""
        x2 = np.atleast_2d(np.asarray(x, dtype=float))
        y = x2.copy()
        logdet = np.zeros(y.shape[0])
        tape = [None] * len(self.layers)
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            ci = layer.conditioned_index
            a = y[:, ci]
            bp = y[:, 1 - ci]
            t, s, cache = layer.net(a)
            ens = np.exp(-s)
            b = (bp - t) * ens
            logdet -= s
            if with_tape:
                tape[k] = (cache, s, ens, b)
            y = y.copy()
            y[:, 1 - ci] = b
        if not np.isfinite(y).all():
            raise NonFiniteError("non-finite value in inverse pass")
        if np.ndim(x) == 1:
            return (y[0], logdet[0], tape) if with_tape else (y[0], logdet[0])
        return (y, logdet, tape) if with_tape else (y, logdet)

    def inverse_backward(self, tape, dz: np.ndarray, dlogdet: np.ndarray):
        """Backprop through inverse: returns (dx, per-layer param grads)."""
        dy = dz.copy()
        grads = [None] * len(self.layers)
        for k in range(len(self.layers)):
            layer = self.layers[k]
            ci = layer.conditioned_index
            cache, s, ens, b = tape[k]
            da_pass = dy[:, ci]
            db = dy[:, 1 - ci]
            dbp = db * ens
            dt = -dbp
            ds = -db * b - dlogdet
            da_net, g = layer.net_backward(cache, dt, ds)
            grads[k] = g
            dy = dy.copy()
            dy[:, ci] = da_pass + da_net
            dy[:, 1 - ci] = dbp
        return dy, grads

    # -- densities ----------------------------------------------------------

    def log_pdf(self, x, raw: bool = False):
        """Log density in standardized coordinates (raw=True converts)."""
        x2 = np.atleast_2d(np.asarray(x, dtype=float))
        if raw:
            x2 = self.standardizer.apply(x2)
        z, logdet = self.inverse(x2)
        out = self.latent.log_pdf(z) + logdet
        if raw:
            out = out + self.standardizer.log_jacobian
        return out[0] if np.ndim(x) == 1 else out

    def log_pdf_component(self, i: int, x, raw: bool = False):
        x2 = np.atleast_2d(np.asarray(x, dtype=float))
        if raw:
            x2 = self.standardizer.apply(x2)
        z, logdet = self.inverse(x2)
        out = self.latent.log_pdf_component(i, z) + logdet
        if raw:
            out = out + self.standardizer.log_jacobian
        return out[0] if np.ndim(x) == 1 else out

    # -- parameter plumbing --------------------------------------------------

    def all_params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def set_all_params(self, arrays: list[np.ndarray]):
        k = 0
        for layer in self.layers:
            layer.set_params(arrays[k : k + 6])
            k += 6

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.all_params()]

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "architecture": {
                "n_layers": len(self.layers),
                "hidden_units": HIDDEN,
                "hidden_layers": 2,
                "log_scale_clamp": self.layers[0].clamp,
                "conditioned_indices": [l.conditioned_index for l in self.layers],
            },
            "standardizer": {
                "mean": self.standardizer.mean.tolist(),
                "std": self.standardizer.std.tolist(),
            },
            "latent": self.latent.to_dict(),
            "layers": [
                {
                    "w1": l.w1.tolist(),
                    "b1": l.b1.tolist(),
                    "w2": l.w2.ravel().tolist(),
                    "b2": l.b2.tolist(),
                    "w3": l.w3.ravel().tolist(),
                    "b3": l.b3.tolist(),
                }
                for l in self.layers
            ],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlowModel":
        arch = d["architecture"]
        h = arch["hidden_units"]
        layers = []
        for spec, ci in zip(d["layers"], arch["conditioned_indices"]):
            layers.append(
                CouplingLayer(
                    w1=np.asarray(spec["w1"], dtype=float),
                    b1=np.asarray(spec["b1"], dtype=float),
                    w2=np.asarray(spec["w2"], dtype=float).reshape(h, h),
                    b2=np.asarray(spec["b2"], dtype=float),
                    w3=np.asarray(spec["w3"], dtype=float).reshape(h, 2),
                    b3=np.asarray(spec["b3"], dtype=float),
                    conditioned_index=ci,
                    clamp=arch["log_scale_clamp"],
                )
            )
        std = d["standardizer"]
        model = cls(
            layers=layers,
            latent=LatentMixture.from_dict(d["latent"]),
            standardizer=Standardizer(
                mean=np.asarray(std["mean"], dtype=float),
                std=np.asarray(std["std"], dtype=float),
            ),
            metadata=d.get("metadata", {}),
        )
        return model


def new_model(
    latent: LatentMixture,
    rng: np.random.Generator,
    standardizer: Standardizer | None = None,
    n_layers: int = N_LAYERS,
    metadata: dict | None = None,
) -> FlowModel:
    layers = [CouplingLayer.initialize(rng) for _ in range(n_layers)]
    for k, layer in enumerate(layers):
        layer.conditioned_index = k % 2
    return FlowModel(
        layers=layers,
        latent=latent,
        standardizer=standardizer or Standardizer.identity(),
        metadata=metadata,
    )


# ---------------------------------------------------------------------------
# losses and gradients


def loss_and_gradients(model: FlowModel, points: np.ndarray, labels, class_aware: bool):
    """Loss and exact parameter gradients on a standardized batch.

    Class-ignorant: mean negative log-likelihood under the full mixture.
    Class-aware: sum over classes of Pr[y=i] times the class-i mean negative
    conditional log-likelihood; uniform Pr[y=i] = 1/l.  A class absent from
    the batch contributes zero.
    """
    x = np.asarray(points, dtype=float)
    n = x.shape[0]
    z, logdet, tape = model.inverse(x, with_tape=True)
    if not class_aware:
        ll = model.latent.log_pdf(z) + logdet
        loss = -ll.mean()
        coeff = np.full(n, -1.0 / n)
        dz = coeff[:, None] * model.latent.grad_log_pdf(z)
    else:
        labels = np.asarray(labels, dtype=int)
        k = model.latent.n_components
        loss = 0.0
        coeff = np.zeros(n)
        dz = np.zeros_like(z)
        for i in range(k):
            mask = labels == i
            mi = int(mask.sum())
            if mi == 0:
                warnings.warn(f"class {i} absent from batch; contributes zero loss")
                continue
            lli = model.latent.log_pdf_component(i, z[mask]) + logdet[mask]
            loss += (1.0 / k) * (-lli.mean())
            c = -(1.0 / k) / mi
            coeff[mask] = c
            dz[mask] = c * model.latent.grad_log_pdf_component(i, z[mask])
    if not np.isfinite(loss):
        raise NonFiniteError("non-finite training loss")
    _, grads = model.inverse_backward(tape, dz, coeff)
    flat = []
    for g in grads:
        flat.extend(g)
    return float(loss), flat


def gradient_wrt_input(model: FlowModel, objective: str, z, **extras) -> np.ndarray:
    """Exact input gradient through the forward pass.

    objective "sqdist": |G(z) - target|^2.
    objective "inc": |G(z) - query| + alpha * (M - p_Z(z)) with p_Z either the
    full mixture or a single component (latent_component).
    """
    z2 = np.atleast_2d(np.asarray(z, dtype=float))
    x, _, tape = model.forward(z2, with_tape=True)
    if objective == "sqdist":
        target = np.atleast_2d(np.asarray(extras["target"], dtype=float))
        dx = 2.0 * (x - target)
        dz, _ = model.forward_backward(tape, dx, np.zeros(len(z2)))
    elif objective == "inc":
        query = np.atleast_2d(np.asarray(extras["query"], dtype=float))
        alpha = float(extras.get("alpha", 1.0))
        comp = extras.get("latent_component")
        diff = x - query
        dist = np.sqrt((diff**2).sum(axis=1))
        safe = np.maximum(dist, 1e-300)
        dx = np.where(dist[:, None] > 0.0, diff / safe[:, None], 0.0)
        dz, _ = model.forward_backward(tape, dx, np.zeros(len(z2)))
        if comp is None:
            dz = dz - alpha * model.latent.grad_pdf(z2)
        else:
            pz = np.exp(model.latent.log_pdf_component(comp, z2))
            dz = dz - alpha * pz[:, None] * model.latent.grad_log_pdf_component(comp, z2)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    return dz[0] if np.ndim(z) == 1 else dz
