"""Loading, validation and persistence of image/mask sample pairs.

Pixel conventions used across the package:

* a grayscale image is a 2-D ``float64`` array with intensities in [0, 255];
* a binary mask is a 2-D ``bool`` array of the same shape (True = target);
* quantisation to 8 bits happens only when a sample is written to disk, so
  intermediate stages keep full float precision.

On-disk layout is ``DATASET/images/*.png`` plus ``DATASET/masks/*.png`` with
identical file names; only 8-bit single-channel PNGs are accepted.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


class DatasetError(ValueError):
    """Raised for malformed datasets, files or pixel containers."""


MASK_THRESHOLD = 127  # stored mask values above this count as target pixels


def as_gray_image(pixels) -> np.ndarray:
    """Validate and return a grayscale image as a float64 array in [0, 255]."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DatasetError(f"grayscale image must be 2-D and non-empty, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DatasetError("grayscale image contains non-finite intensities")
    if arr.min() < 0.0 or arr.max() > 255.0:
        raise DatasetError(
            f"intensities outside [0, 255]: min {arr.min():.6g}, max {arr.max():.6g}"
        )
    return arr


def as_binary_mask(bits) -> np.ndarray:
    """Validate and return a binary mask as a 2-D bool array."""
    arr = np.asarray(bits)
    if arr.dtype != np.bool_:
        arr = arr.astype(bool)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DatasetError(f"mask must be 2-D and non-empty, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class LabeledSample:
    """An image/mask pair with an opaque identifier."""

    id: str
    image: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "image", as_gray_image(self.image))
        object.__setattr__(self, "mask", as_binary_mask(self.mask))
        if self.image.shape != self.mask.shape:
            raise DatasetError(
                f"sample '{self.id}': image shape {self.image.shape} "
                f"!= mask shape {self.mask.shape}"
            )

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]


@dataclass(frozen=True)
class DatasetStats:
    """Sample count and grand mean intensity of a dataset."""

    sample_count: int
    mean_intensity: float


def _open_gray_png(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode != "L":
            raise DatasetError(
                f"{path}: expected 8-bit single-channel PNG, got mode '{img.mode}'"
            )
        return np.asarray(img, dtype=np.uint8)


def load_gray_png(path) -> np.ndarray:
    """Read an 8-bit grayscale PNG as a float64 image."""
    return _open_gray_png(Path(path)).astype(np.float64)


def load_mask_png(path) -> np.ndarray:
    """Read an 8-bit grayscale PNG as a binary mask (values > 127 are True)."""
    return _open_gray_png(Path(path)) > MASK_THRESHOLD


def save_gray_png(path, image: np.ndarray) -> None:
    """Write a float image as 8-bit grayscale PNG, round-half-to-even."""
    arr = as_gray_image(image)
    quantised = np.rint(arr).astype(np.uint8)
    Image.fromarray(quantised, mode="L").save(Path(path), format="PNG")


def save_mask_png(path, mask: np.ndarray) -> None:
    """Write a binary mask as a 0/255 grayscale PNG."""
    arr = as_binary_mask(mask)
    Image.fromarray(arr.astype(np.uint8) * 255, mode="L").save(Path(path), format="PNG")


def load_dataset(root) -> list[LabeledSample]:
    """Load every image/mask pair under ``root``.

    Parameters
    ----------
    root : path-like
        Directory with ``images/`` and ``masks/`` subdirectories holding
        identically named 8-bit grayscale PNGs.

    Returns
    -------
    list of LabeledSample
        One sample per matched name, ordered lexicographically by id.
        Mask pixels above 127 map to True.

    Raises
    ------
    DatasetError
        If a file is missing its counterpart (all orphans are listed), if a
        pair's dimensions disagree, or if an input is not 8-bit grayscale.
    """
    root = Path(root)
    images_dir = root / "images"
    masks_dir = root / "masks"
    if not images_dir.is_dir() or not masks_dir.is_dir():
        raise DatasetError(f"{root}: expected 'images/' and 'masks/' subdirectories")

    image_names = {p.name for p in images_dir.glob("*.png")}
    mask_names = {p.name for p in masks_dir.glob("*.png")}
    orphans = sorted(image_names.symmetric_difference(mask_names))
    if orphans:
        detail = ", ".join(Path(n).stem for n in orphans)
        raise DatasetError(f"{root}: unmatched image/mask files: {detail}")

    samples = []
    for name in sorted(image_names):
        sample_id = Path(name).stem
        image = load_gray_png(images_dir / name)
        mask = load_mask_png(masks_dir / name)
        if image.shape != mask.shape:
            raise DatasetError(
                f"sample '{sample_id}': image is {image.shape[1]}x{image.shape[0]} "
                f"but mask is {mask.shape[1]}x{mask.shape[0]}"
            )
        image.setflags(write=False)
        mask.setflags(write=False)
        samples.append(LabeledSample(id=sample_id, image=image, mask=mask))
    return samples


def dataset_stats(samples: list[LabeledSample]) -> DatasetStats:
    """Compute the sample count and grand mean intensity over all pixels.

    The mean is the sum of every pixel of every image divided by the total
    pixel count. Per-image sums are combined with exact (compensated)
    summation so the result does not depend on aggregation order.
    """
    if not samples:
        raise DatasetError("dataset_stats: empty sample list, mean undefined")
    total = math.fsum(float(np.sum(s.image)) for s in samples)
    count = sum(s.image.size for s in samples)
    return DatasetStats(sample_count=len(samples), mean_intensity=total / count)


def save_sample(sample: LabeledSample, out_dir) -> None:
    """Write a sample as PNG pair under ``out_dir/images`` and ``out_dir/masks``.

    Intensities are quantised round-half-to-even; reloading reproduces the
    quantised values exactly.
    """
    out_dir = Path(out_dir)
    try:
        (out_dir / "images").mkdir(parents=True, exist_ok=True)
        (out_dir / "masks").mkdir(parents=True, exist_ok=True)
        save_gray_png(out_dir / "images" / f"{sample.id}.png", sample.image)
        save_mask_png(out_dir / "masks" / f"{sample.id}.png", sample.mask)
    except OSError as exc:
        raise DatasetError(f"failed to write sample '{sample.id}' under {out_dir}: {exc}") from exc
