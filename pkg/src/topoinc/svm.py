"""RBF-kernel SVM trained by sequential minimal optimization.

One-vs-rest binary machines; each solves the soft-margin dual with Platt's
two-loop SMO using deterministic pair selection (second choice maximizes
|E1 - E2|, ties to the lowest index; sweeps run in index order).  Decision
values are f(x) = sum alpha_i y_i K(x_i, x) + b and multi-class prediction
is the argmax over per-class machines, ties to the lowest label.

The experiments intentionally ill-train this classifier with a very high
kernel coefficient; the solver itself converges to a configurable KKT
tolerance (default 1e-3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingleClassError


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return np.exp(-gamma * d2)


@dataclass(frozen=True)
class BinarySvm:
    support_x: np.ndarray
    support_coef: np.ndarray  # alpha_i * y_i for support vectors
    bias: float
    gamma: float
    support_idx: np.ndarray | None = None  # indices into the training set

    def decision(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return rbf_kernel(x, self.support_x, self.gamma) @ self.support_coef + self.bias


@dataclass(frozen=True)
class SvmModel:
    binaries: tuple[BinarySvm, ...]  # one-vs-rest, index = class label
    gamma: float
    c_reg: float

    @property
    def n_classes(self) -> int:
        return len(self.binaries)

    def decision_values(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack([b.decision(x) for b in self.binaries], axis=1)

    def predict(self, x) -> np.ndarray:
        x2 = np.atleast_2d(np.asarray(x, dtype=float))
        out = self.decision_values(x2).argmax(axis=1)  # first max: lowest label
        return out[0] if np.ndim(x) == 1 else out


class _Smo:
    def __init__(self, K, y, c_reg, tol):
        self.K = K
        self.y = y
        self.C = c_reg
        self.tol = tol
        n = len(y)
        self.alpha = np.zeros(n)
        self.b = 0.0
        self.E = -y.astype(float)  # f=0 initially

    def _take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        a1, a2 = self.alpha[i1], self.alpha[i2]
        y1, y2 = self.y[i1], self.y[i2]
        E1, E2 = self.E[i1], self.E[i2]
        s = y1 * y2
        if s > 0:
            L, H = max(0.0, a1 + a2 - self.C), min(self.C, a1 + a2)
        else:
            L, H = max(0.0, a2 - a1), min(self.C, self.C + a2 - a1)
        if H - L < 1e-12:
            return False
        k11, k12, k22 = self.K[i1, i1], self.K[i1, i2], self.K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta <= 1e-12:
            return False  # duplicate points under an RBF kernel
        a2_new = a2 + y2 * (E1 - E2) / eta
        a2_new = min(max(a2_new, L), H)
        if abs(a2_new - a2) < 1e-12 * (a2_new + a2 + 1e-12):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        d1 = y1 * (a1_new - a1)
        d2 = y2 * (a2_new - a2)
        b1 = self.b - E1 - d1 * k11 - d2 * k12
        b2 = self.b - E2 - d1 * k12 - d2 * k22
        if 0.0 < a1_new < self.C:
            b_new = b1
        elif 0.0 < a2_new < self.C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        self.E += d1 * self.K[i1] + d2 * self.K[i2] + (b_new - self.b)
        self.alpha[i1] = a1_new
        self.alpha[i2] = a2_new
        self.b = b_new
        return True

    def _second_choice(self, i2: int) -> int:
        nb = np.flatnonzero((self.alpha > 0.0) & (self.alpha < self.C))
        pool = nb if len(nb) > 1 else np.arange(len(self.y))
        gaps = np.abs(self.E[pool] - self.E[i2])
        return int(pool[int(gaps.argmax())])

    def _examine(self, i2: int) -> bool:
        y2, a2, E2 = self.y[i2], self.alpha[i2], self.E[i2]
        r2 = E2 * y2
        if (r2 < -self.tol and a2 < self.C) or (r2 > self.tol and a2 > 0.0):
            if self._take_step(self._second_choice(i2), i2):
                return True
            nb = np.flatnonzero((self.alpha > 0.0) & (self.alpha < self.C))
            for i1 in nb:
                if self._take_step(int(i1), i2):
                    return True
            for i1 in range(len(self.y)):
                if self._take_step(i1, i2):
                    return True
        return False

    def solve(self, max_passes: int = 1000) -> tuple[np.ndarray, float]:
        n = len(self.y)
        examine_all = True
        for _ in range(max_passes):
            changed = 0
            if examine_all:
                for i in range(n):
                    changed += self._examine(i)
            else:
                for i in np.flatnonzero((self.alpha > 0.0) & (self.alpha < self.C)):
                    changed += self._examine(int(i))
            if examine_all:
                if changed == 0:
                    break
                examine_all = False
            elif changed == 0:
                examine_all = True
        return self.alpha, self.b


def svm_train(
    points: np.ndarray,
    labels: np.ndarray,
    gamma: float,
    c_reg: float = 1.0,
    tol: float = 1e-3,
) -> SvmModel:
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise SingleClassError("svm training needs at least two classes")
    if list(classes) != list(range(len(classes))):
        raise ValueError("labels must be contiguous from 0")
    K = rbf_kernel(points, points, gamma)
    binaries = []
    for cls in classes:
        y = np.where(labels == cls, 1.0, -1.0)
        smo = _Smo(K, y, c_reg, tol)
        alpha, b = smo.solve()
        sv = alpha > 0.0
        binaries.append(
            BinarySvm(
                support_x=points[sv],
                support_coef=alpha[sv] * y[sv],
                bias=float(b),
                gamma=gamma,
                support_idx=np.flatnonzero(sv),
            )
        )
    return SvmModel(binaries=tuple(binaries), gamma=gamma, c_reg=c_reg)


def kkt_residual(model: SvmModel, points: np.ndarray, labels: np.ndarray) -> float:
    """Worst KKT violation of the trained machines over the training set."""
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int)
    worst = 0.0
    for cls, binary in enumerate(model.binaries):
        y = np.where(labels == cls, 1.0, -1.0)
        f = binary.decision(points)
        margins = y * f
        # recover alpha from stored coef (coef = alpha * y on support vectors)
        alpha = np.zeros(len(points))
        alpha[binary.support_idx] = np.abs(binary.support_coef)
        free = (alpha > 1e-12) & (alpha < model.c_reg - 1e-12)
        at_zero = alpha <= 1e-12
        at_c = alpha >= model.c_reg - 1e-12
        v = 0.0
        if at_zero.any():
            v = max(v, float(np.maximum(1.0 - margins[at_zero], 0.0).max()))
        if at_c.any():
            v = max(v, float(np.maximum(margins[at_c] - 1.0, 0.0).max()))
        if free.any():
            v = max(v, float(np.abs(margins[free] - 1.0).max()))
        worst = max(worst, v)
    return worst
