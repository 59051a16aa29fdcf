"""Dataset-level gamma alignment between a source and a target image set.

One gamma factor is derived for the whole source dataset so that its mean
intensity lands on the target dataset's mean, then every source image is
corrected with ``out = 255 * (in / 255) ** (1 / gamma)``. The closed form
matches means of means; because the power law is nonlinear, an optional
bisection refinement matches the mean of the corrected dataset instead.
"""

import math
from dataclasses import dataclass

import numpy as np

from .dataset_io import LabeledSample, DatasetStats, dataset_stats

GAMMA_BRACKET = (1.0 / 64.0, 64.0)


@dataclass(frozen=True)
class GammaParams:
    """Gamma factor plus a flag recording whether it was refined."""

    gamma: float
    refined: bool

    def __post_init__(self):
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")


def compute_gamma(source_mean: float, target_mean: float) -> GammaParams:
    """Closed-form gamma mapping ``source_mean`` onto ``target_mean``.

    Solves ``(source_mean/255) ** (1/gamma) == target_mean/255`` exactly:
    ``gamma = ln(source_mean/255) / ln(target_mean/255)``. Both means must
    lie strictly inside (0, 255); the logarithms degenerate at the ends.
    """
    for name, value in (("source_mean", source_mean), ("target_mean", target_mean)):
        if not (0.0 < value < 255.0):
            raise ValueError(f"{name} must lie strictly inside (0, 255), got {value}")
    gamma = math.log(source_mean / 255.0) / math.log(target_mean / 255.0)
    return GammaParams(gamma=gamma, refined=False)


def apply_gamma(image: np.ndarray, params: GammaParams) -> np.ndarray:
    """Gamma-correct an image: ``255 * (I/255) ** (1/gamma)``, clamped."""
    img = np.asarray(image, dtype=np.float64)
    if params.gamma == 1.0:
        return img.copy()
    out = 255.0 * np.power(img / 255.0, 1.0 / params.gamma)
    return np.clip(out, 0.0, 255.0)


def _value_counts(samples: list[LabeledSample]) -> tuple[np.ndarray, np.ndarray]:
    pixels = np.concatenate([s.image.ravel() for s in samples])
    return np.unique(pixels, return_counts=True)


def _mean_after(values: np.ndarray, counts: np.ndarray, gamma: float) -> float:
    corrected = 255.0 * np.power(values / 255.0, 1.0 / gamma)
    return float(np.sum(corrected * counts) / np.sum(counts))


def refine_gamma(
    source_samples: list[LabeledSample],
    target_mean: float,
    tolerance: float,
    max_iters: int = 64,
) -> GammaParams:
    """Find the gamma whose corrected dataset mean hits ``target_mean``.

    The corrected mean is monotone in gamma, so the root is bracketed in
    [1/64, 64] and bisected with geometric midpoints. The closed-form gamma
    is tried first and returned when it already meets the tolerance (for a
    constant-valued dataset the two definitions coincide). If the bracket
    cannot reach the target mean, a ValueError reports the achievable range.

    Returns the best iterate after ``max_iters`` when the tolerance is not
    reached earlier; ``refined`` is always True on the result.
    """
    if not source_samples:
        raise ValueError("refine_gamma: empty source set")
    if not (0.0 < target_mean < 255.0):
        raise ValueError(f"target_mean must lie strictly inside (0, 255), got {target_mean}")
    if not tolerance > 0.0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")

    values, counts = _value_counts(source_samples)
    lo, hi = GAMMA_BRACKET
    mean_lo = _mean_after(values, counts, lo)
    mean_hi = _mean_after(values, counts, hi)
    if target_mean < mean_lo - tolerance or target_mean > mean_hi + tolerance:
        raise ValueError(
            f"target mean {target_mean:.4f} unreachable by gamma correction; "
            f"achievable range is [{mean_lo:.4f}, {mean_hi:.4f}]"
        )

    source_mean = dataset_stats(source_samples).mean_intensity
    if 0.0 < source_mean < 255.0:
        closed = compute_gamma(source_mean, target_mean).gamma
        if lo <= closed <= hi and abs(_mean_after(values, counts, closed) - target_mean) <= tolerance:
            return GammaParams(gamma=closed, refined=True)

    best_gamma, best_err = lo, abs(mean_lo - target_mean)
    if abs(mean_hi - target_mean) < best_err:
        best_gamma, best_err = hi, abs(mean_hi - target_mean)
    for _ in range(max_iters):
        if best_err <= tolerance:
            break
        mid = math.sqrt(lo * hi)
        mean_mid = _mean_after(values, counts, mid)
        err = abs(mean_mid - target_mean)
        if err < best_err:
            best_gamma, best_err = mid, err
        if mean_mid < target_mean:
            lo = mid
        else:
            hi = mid
    return GammaParams(gamma=best_gamma, refined=True)


def align_dataset(
    source: list[LabeledSample],
    target_stats: DatasetStats,
    refine: bool,
    tolerance: float = 0.5,
    max_iters: int = 64,
) -> list[LabeledSample]:
    """Gamma-correct every source image toward the target dataset mean.

    A single dataset-level gamma is used (closed form, or bisection-refined
    when ``refine`` is True). Masks pass through untouched and the sample
    count is preserved.
    """
    if not source:
        raise ValueError("align_dataset: empty source set")
    if refine:
        params = refine_gamma(source, target_stats.mean_intensity, tolerance, max_iters)
    else:
        source_mean = dataset_stats(source).mean_intensity
        params = compute_gamma(source_mean, target_stats.mean_intensity)
    return [
        LabeledSample(s.id, apply_gamma(s.image, params), s.mask) for s in source
    ]
