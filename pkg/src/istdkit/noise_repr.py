"""Gaussian perturbation of samples and the consistency/segmentation losses.

Noise is expressed in normalized [0, 1] intensity units: an image is scaled
down, perturbed with zero-mean Gaussian samples of standard deviation
``alpha``, and scaled back. Draws come from a counter-based generator
(Philox) keyed by the seed, with pixel ``i`` consuming stream positions
``2i`` and ``2i+1``, so the value at a pixel is a pure function of
(seed, pixel index) no matter how generation is chunked.

The multi-scale consistency loss compares four-level average-pooling
pyramids of a clean image and its noisy copy; any external feature maps of
matching shape can be scored through the same loss. Binary cross-entropy
over prediction maps and the unit-weighted sum of the two terms complete
the loss family.
"""

import math
from dataclasses import dataclass

import numpy as np

from .dataset_io import as_binary_mask, as_gray_image

BCE_EPSILON = 1e-7
PYRAMID_LEVELS = 4
MIN_PYRAMID_SIDE = 8


@dataclass(frozen=True)
class NoiseConfig:
    """Noise amplitude (std in normalized units), seed and clamp switch."""

    alpha: float
    seed: int
    clamp: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 0.0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")


@dataclass(frozen=True)
class FeaturePyramid:
    """Four grids, each level half the previous resolution (ceil division)."""

    levels: tuple

    def __post_init__(self):
        if len(self.levels) != PYRAMID_LEVELS:
            raise ValueError(f"expected {PYRAMID_LEVELS} levels, got {len(self.levels)}")
        for coarse, fine in zip(self.levels[1:], self.levels[:-1]):
            expected = (math.ceil(fine.shape[0] / 2), math.ceil(fine.shape[1] / 2))
            if coarse.shape != expected:
                raise ValueError(
                    f"level shape {coarse.shape} does not halve {fine.shape}"
                )


def as_prediction_map(scores) -> np.ndarray:
    """Validate a 2-D prediction map with scores in [0, 1]."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"prediction map must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all() or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("prediction scores must lie in [0, 1]")
    return arr


def _standard_normal_field(seed: int, count: int) -> np.ndarray:
    """Box-Muller normals; element i uses Philox stream draws 2i and 2i+1."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    u = rng.random(2 * count)
    u1 = 1.0 - u[0::2]  # (0, 1]: keeps the logarithm finite
    u2 = u[1::2]
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def add_noise(image: np.ndarray, config: NoiseConfig) -> np.ndarray:
    """Perturb an image with deterministic Gaussian noise.

    ``alpha`` is the noise standard deviation after normalizing intensities
    to [0, 1]; alpha = 0 returns the input unchanged. The result is clamped
    back to [0, 255] unless ``config.clamp`` is False (useful for
    statistics on the raw field).
    """
    img = as_gray_image(image)
    if config.alpha == 0.0:
        return img.copy()
    normals = _standard_normal_field(config.seed, img.size).reshape(img.shape)
    out = img + 255.0 * config.alpha * normals
    if config.clamp:
        out = np.clip(out, 0.0, 255.0)
    return out


def _pool2(a: np.ndarray) -> np.ndarray:
    """2x2 average pooling; edge cells average whatever pixels exist."""
    h, w = a.shape
    rows = np.arange(0, h, 2)
    cols = np.arange(0, w, 2)
    sums = np.add.reduceat(np.add.reduceat(a, rows, axis=0), cols, axis=1)
    row_sizes = np.minimum(rows + 2, h) - rows
    col_sizes = np.minimum(cols + 2, w) - cols
    return sums / np.outer(row_sizes, col_sizes)


def feature_pyramid(image: np.ndarray) -> FeaturePyramid:
    """Four-level average-pooling pyramid of a normalized image.

    Level 1 is the image scaled to [0, 1]; each further level halves the
    resolution with 2x2 mean pooling (ceil division at odd edges). Images
    smaller than 8x8 are rejected as degenerate.
    """
    img = as_gray_image(image)
    if img.shape[0] < MIN_PYRAMID_SIDE or img.shape[1] < MIN_PYRAMID_SIDE:
        raise ValueError(f"image must be at least 8x8 for a 4-level pyramid, got {img.shape}")
    levels = [img / 255.0]
    for _ in range(PYRAMID_LEVELS - 1):
        levels.append(_pool2(levels[-1]))
    return FeaturePyramid(levels=tuple(levels))


def noise_loss(clean: FeaturePyramid, noisy: FeaturePyramid) -> float:
    """Mean squared difference pooled over all pyramid levels."""
    total = 0.0
    count = 0
    for a, b in zip(clean.levels, noisy.levels):
        if a.shape != b.shape:
            raise ValueError(f"pyramid level shapes differ: {a.shape} vs {b.shape}")
        diff = a - b
        total += float((diff * diff).sum())
        count += diff.size
    return total / count


def bce_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Binary cross-entropy between a prediction map and a binary mask.

    Scores are clipped to [1e-7, 1 - 1e-7] before the logarithms.
    """
    scores = as_prediction_map(pred)
    mask = as_binary_mask(target)
    if scores.shape != mask.shape:
        raise ValueError(f"bce_loss: shape mismatch {scores.shape} vs {mask.shape}")
    p = np.clip(scores, BCE_EPSILON, 1.0 - BCE_EPSILON)
    y = mask.astype(np.float64)
    terms = y * np.log(p) + (1.0 - y) * np.log(1.0 - p)
    return float(-np.mean(terms))


def total_loss(bce: float, noise: float) -> float:
    """Unit-weighted sum of the segmentation and consistency terms."""
    return bce + noise
