"""Synthetic image classification data for desk-scale training runs.

Classes 0..n-2 are sinusoidal stripes at evenly spaced orientations with a
random phase and period; the last class is Gaussian blobs at random places.
Random phase and placement leave no usable per-pixel mean, so a linear
classifier on raw pixels does poorly while a small conv/attention net does not.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import Rng


@dataclass(frozen=True)
class SyntheticDataset:
    seed: int = 42
    num_classes: int = 4
    image_size: int = 32
    per_class: int = 128
    noise: float = 0.5

    def generate(self) -> tuple[np.ndarray, np.ndarray]:
        """Images ``[N, 3, S, S]`` (float64) and integer labels, shuffled."""
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        rng = Rng(self.seed)
        s = self.image_size
        yy, xx = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
        images, labels = [], []
        for c in range(self.num_classes):
            for _ in range(self.per_class):
                if c < self.num_classes - 1:
                    plane = _stripes(rng, xx, yy, np.pi * c / (self.num_classes - 1))
                else:
                    plane = _blobs(rng, xx, yy, s)
                tint = rng.uniform(3, 0.5, 1.5)
                img = tint[:, None, None] * plane[None] + rng.normal((3, s, s), self.noise)
                images.append(img)
                labels.append(c)
        order = rng.permutation(len(labels))
        return np.stack(images)[order], np.asarray(labels)[order]


def _stripes(rng: Rng, xx, yy, theta: float) -> np.ndarray:
    period = rng.uniform((), 4.0, 8.0)
    phase = rng.uniform((), 0.0, 2 * np.pi)
    u = xx * np.cos(theta) + yy * np.sin(theta)
    return np.sin(2 * np.pi * u / period + phase)


def _blobs(rng: Rng, xx, yy, s: int) -> np.ndarray:
    plane = np.zeros(xx.shape)
    for _ in range(int(rng.integers(1, 4))):
        cy, cx = rng.uniform(2, 0, s)
        sigma = rng.uniform((), 2.0, 4.0)
        sign = 1.0 if rng.uniform(()) < 0.5 else -1.0
        plane += sign * 2.0 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
    return plane


def linear_probe_accuracy(train: tuple[np.ndarray, np.ndarray], test: tuple[np.ndarray, np.ndarray],
                          ridge: float = 1.0) -> float:
    """Held-out accuracy of a ridge-regression classifier on raw pixels."""
    (xtr, ytr), (xte, yte) = train, test
    n_cls = int(max(ytr.max(), yte.max())) + 1
    a = np.c_[xtr.reshape(len(xtr), -1), np.ones(len(xtr))]
    b = np.eye(n_cls)[ytr]
    w = np.linalg.solve(a.T @ a + ridge * np.eye(a.shape[1]), a.T @ b)
    pred = (np.c_[xte.reshape(len(xte), -1), np.ones(len(xte))] @ w).argmax(axis=1)
    return float((pred == yte).mean())
