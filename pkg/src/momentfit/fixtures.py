"""Seeded synthetic data sets used by the tests, the CLI demos and the README."""

from __future__ import annotations

import numpy as np

from .moments import WeightedSample

WAVY_SEED = 1
WAVY_N = 5000
WAVY_NOISE = 0.2
WAVY_OPTIMUM = 16  # degree minimising the expected loss on the shipped fixture


def wavy_mean(x):
    """Smooth oscillating curve on (-0.9, 0.9); needs a high-degree polynomial."""
    x = np.asarray(x, dtype=float)
    return np.sin(6 * x) + 0.5 * np.cos(13.8 * x + 0.4) + 0.8 * x


def wavy_sample(seed: int = WAVY_SEED, n: int = WAVY_N, noise: float = WAVY_NOISE) -> WeightedSample:
    """x uniform in (-0.9, 0.9), y Gaussian-smeared around :func:`wavy_mean`."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-0.9, 0.9, n)
    y = wavy_mean(x) + rng.normal(0.0, noise, n)
    return WeightedSample(x, y, None)


def step_sample(seed: int = 7, n: int = 2000, noise: float = 0.05) -> WeightedSample:
    """``y = sign(x) + noise`` with x uniform in (-1, 1)."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, n)
    y = np.sign(x) + rng.normal(0.0, noise, n)
    return WeightedSample(x, y, None)


def linear_sample(seed: int = 0, n: int = 2000, noise: float = 0.3, a: float = 1.0, b: float = 2.0) -> WeightedSample:
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, n)
    return WeightedSample(x, a + b * x + rng.normal(0.0, noise, n), None)


def two_tone_image(width: int = 32, height: int = 64, low: int = 50, high: int = 200) -> np.ndarray:
    """Left half ``low``, right half ``high``.

    Pixel coordinates are scaled to [-1, 1] on both axes, where the axis with
    fewer pixels has the slightly larger variance; keeping the image taller
    than wide makes the principal axis horizontal, so the first cut is vertical.
    """
    img = np.full((height, width), low, dtype=np.uint8)
    img[:, width // 2:] = high
    return img


def blob_image(width: int = 48, height: int = 40, seed: int = 3) -> np.ndarray:
    """Smooth gradient plus a Gaussian blob and a little pixel noise."""
    rng = np.random.default_rng(seed)
    r, c = np.mgrid[0:height, 0:width]
    u = 2 * c / (width - 1) - 1
    v = 2 * r / (height - 1) - 1
    img = 60 + 50 * u + 120 * np.exp(-((u - 0.3) ** 2 + (v + 0.2) ** 2) / 0.08) + rng.normal(0, 2, u.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)
