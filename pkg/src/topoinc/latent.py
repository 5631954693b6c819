"""Gaussian-mixture latent distributions.

The standard arrangement places n component means on a circle of radius 2.5,
mean i at (-R sin(2 pi i / n), R cos(2 pi i / n)) for i = 1..n, with
sigma 0.5 for n = 2 and 0.3 for n = 3; n = 1 is the standard normal.
Component j (0-based) of the arrangement corresponds to class j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LATENT_RADIUS = 2.5
_SIGMA_BY_N = {2: 0.5, 3: 0.3}


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    hi = a.max(axis=axis, keepdims=True)
    return (hi + np.log(np.exp(a - hi).sum(axis=axis, keepdims=True))).squeeze(axis)


@dataclass(frozen=True)
class LatentMixture:
    means: np.ndarray  # (k, 2)
    sigmas: np.ndarray  # (k,)
    weights: np.ndarray  # (k,)

    def __post_init__(self):
        if abs(self.weights.sum() - 1.0) > 1e-12 or (self.weights <= 0).any():
            raise ValueError("weights must be positive and sum to 1")
        if (self.sigmas <= 0).any():
            raise ValueError("sigmas must be positive")

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def _component_logs(self, z: np.ndarray) -> np.ndarray:
        # (n, k) per-component Gaussian log densities (no weights)
        d2 = ((z[:, None, :] - self.means[None, :, :]) ** 2).sum(-1)
        s2 = self.sigmas**2
        return -np.log(2.0 * math.pi * s2)[None, :] - d2 / (2.0 * s2)[None, :]

    def log_pdf(self, z) -> np.ndarray:
        z2 = np.atleast_2d(np.asarray(z, dtype=float))
        lg = self._component_logs(z2) + np.log(self.weights)[None, :]
        out = _logsumexp(lg, axis=1)
        return out[0] if np.ndim(z) == 1 else out

    def log_pdf_component(self, i: int, z) -> np.ndarray:
        z2 = np.atleast_2d(np.asarray(z, dtype=float))
        out = self._component_logs(z2)[:, i]
        return out[0] if np.ndim(z) == 1 else out

    def pdf(self, z) -> np.ndarray:
        return np.exp(self.log_pdf(z))

    def grad_log_pdf(self, z: np.ndarray) -> np.ndarray:
        """Gradient of log pdf: responsibility-weighted component gradients."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        lg = self._component_logs(z) + np.log(self.weights)[None, :]
        resp = np.exp(lg - _logsumexp(lg, axis=1)[:, None])  # (n, k)
        comp = -(z[:, None, :] - self.means[None, :, :]) / (self.sigmas**2)[None, :, None]
        return (resp[:, :, None] * comp).sum(axis=1)

    def grad_pdf(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.exp(self.log_pdf(z))[:, None] * self.grad_log_pdf(z)

    def grad_log_pdf_component(self, i: int, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return -(z - self.means[i][None, :]) / self.sigmas[i] ** 2

    def component_peak(self, i: int) -> float:
        return 1.0 / (2.0 * math.pi * self.sigmas[i] ** 2)

    @property
    def max_density(self) -> float:
        """Max over component peaks weighted by mixture weights.

        Equals the mixture maximum for a single component and is within the
        cross-component tail mass of it when components are well separated.
        """
        return float(max(self.weights[i] * self.component_peak(i) for i in range(self.n_components)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        eps = rng.standard_normal((n, 2))
        return self.means[comp] + self.sigmas[comp, None] * eps

    def sample_component(self, i: int, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.means[i] + self.sigmas[i] * rng.standard_normal((n, 2))

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "sigmas": self.sigmas.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LatentMixture":
        return cls(
            means=np.asarray(d["means"], dtype=float),
            sigmas=np.asarray(d["sigmas"], dtype=float),
            weights=np.asarray(d["weights"], dtype=float),
        )


def standard_mixture(n_components: int, rotation: float = 0.0, sigma: float | None = None) -> LatentMixture:
    """The circle arrangement used by the experiments; n = 1 is N(0, I)."""
    if n_components < 1:
        raise ValueError("need at least one component")
    if n_components == 1:
        return LatentMixture(
            means=np.zeros((1, 2)), sigmas=np.ones(1), weights=np.ones(1)
        )
    if sigma is None:
        sigma = _SIGMA_BY_N.get(n_components, 0.3)
    idx = np.arange(1, n_components + 1)
    ang = 2.0 * math.pi * idx / n_components
    means = LATENT_RADIUS * np.stack([-np.sin(ang), np.cos(ang)], axis=1)
    if rotation != 0.0:
        c, s = math.cos(rotation), math.sin(rotation)
        rot = np.array([[c, -s], [s, c]])
        means = means @ rot.T
    k = n_components
    return LatentMixture(means=means, sigmas=np.full(k, sigma), weights=np.full(k, 1.0 / k))
