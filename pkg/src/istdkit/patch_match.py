"""Target patch extraction and structural-similarity window matching.

Patches are cut around each 8-connected mask component. A sliding window
scores every stride-aligned position of a host image against a patch with
the single-window SSIM (uniform statistics, K1=0.01, K2=0.03, L=255), and
a greedy top-k pass keeps the best mutually separated positions.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .dataset_io import (
    LabeledSample,
    as_binary_mask,
    as_gray_image,
    load_gray_png,
    load_mask_png,
    save_gray_png,
    save_mask_png,
)

SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class TargetPatch:
    """A cropped target region: pixels, per-component mask and provenance."""

    patch_id: str
    image: np.ndarray
    mask: np.ndarray
    origin_sample: str
    origin_bbox: tuple[int, int, int, int]  # (x, y, w, h) of the crop in the source frame
    padding: int

    def __post_init__(self):
        object.__setattr__(self, "image", as_gray_image(self.image))
        object.__setattr__(self, "mask", as_binary_mask(self.mask))
        if self.image.shape != self.mask.shape:
            raise ValueError(f"patch '{self.patch_id}': image/mask shape mismatch")
        x, y, w, h = self.origin_bbox
        if (h, w) != self.image.shape:
            raise ValueError(
                f"patch '{self.patch_id}': bbox {self.origin_bbox} does not match "
                f"crop shape {self.image.shape}"
            )
        if not self.mask.any():
            raise ValueError(f"patch '{self.patch_id}': mask has no target pixels")


@dataclass(frozen=True)
class MatchCandidate:
    """A window position (top-left corner) with its SSIM score."""

    x: int
    y: int
    score: float


@dataclass(frozen=True)
class MatchConfig:
    """Sliding-window matching parameters.

    ``min_separation`` is the minimum Euclidean distance between the centres
    of selected windows; ``None`` means "resolve to max(patch width, patch
    height)", which drivers do before selection.
    """

    k: int
    min_separation: float | None
    stride: int = 4
    exclude_target_overlap: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.min_separation is not None and not self.min_separation > 0:
            raise ValueError(f"min_separation must be positive, got {self.min_separation}")


def extract_patches(sample: LabeledSample, padding: int) -> list[TargetPatch]:
    """Cut one patch per 8-connected mask component of ``sample``.

    Each component's tight bounding box is grown by ``padding`` pixels per
    side and clipped to the frame; ``origin_bbox`` records the resulting
    crop rectangle. The patch mask keeps only its own component's pixels.
    Patches are ordered by (bbox y, bbox x); an empty mask yields an empty
    list.
    """
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    labels, count = ndimage.label(sample.mask, structure=EIGHT_CONNECTED)
    if count == 0:
        return []
    height, width = sample.mask.shape
    crops = []
    for index, slices in enumerate(ndimage.find_objects(labels), start=1):
        y0 = max(0, slices[0].start - padding)
        y1 = min(height, slices[0].stop + padding)
        x0 = max(0, slices[1].start - padding)
        x1 = min(width, slices[1].stop + padding)
        crops.append((y0, x0, y1, x1, index))
    crops.sort(key=lambda c: (c[0], c[1]))

    patches = []
    for order, (y0, x0, y1, x1, label_index) in enumerate(crops):
        patches.append(
            TargetPatch(
                patch_id=f"{sample.id}-t{order}",
                image=sample.image[y0:y1, x0:x1].copy(),
                mask=labels[y0:y1, x0:x1] == label_index,
                origin_sample=sample.id,
                origin_bbox=(x0, y0, x1 - x0, y1 - y0),
                padding=padding,
            )
        )
    return patches


def _window_stats(window: np.ndarray) -> tuple[float, np.ndarray, float]:
    mu = float(window.mean())
    delta = window - mu
    var = float((delta * delta).mean())
    return mu, delta, var


def _ssim_from_stats(mu_a, delta_a, var_a, mu_b, delta_b, var_b) -> float:
    cov = float((delta_a * delta_b).mean())
    numerator = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    denominator = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return numerator / denominator


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Whole-window SSIM with uniform weighting; result in [-1, 1].

    Uses the canonical constants C1=(0.01*255)^2, C2=(0.03*255)^2 and
    population (divide-by-N) window statistics.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    return _ssim_from_stats(*_window_stats(a), *_window_stats(b))


def _mask_prefix_sums(mask: np.ndarray) -> np.ndarray:
    prefix = np.zeros((mask.shape[0] + 1, mask.shape[1] + 1), dtype=np.int64)
    prefix[1:, 1:] = mask.astype(np.int64).cumsum(axis=0).cumsum(axis=1)
    return prefix


def _rect_sum(prefix: np.ndarray, y0: int, x0: int, y1: int, x1: int) -> int:
    return int(prefix[y1, x1] - prefix[y0, x1] - prefix[y1, x0] + prefix[y0, x0])


def _rects_overlap(ax, ay, aw, ah, bx, by, bw, bh) -> bool:
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def sliding_match(
    image: np.ndarray,
    mask: np.ndarray,
    patch: TargetPatch,
    config: MatchConfig,
    image_id: str | None = None,
) -> list[MatchCandidate]:
    """Score every admissible window of ``image`` against ``patch``.

    Windows start on the stride grid (x, y in {0, stride, 2*stride, ...})
    and must fit inside the image. With ``exclude_target_overlap`` set,
    windows covering any True pixel of ``mask`` are dropped, as is anything
    overlapping the patch's own origin rectangle when ``image_id`` names the
    patch's source sample. Candidates come back in grid (row-major) order.
    """
    img = as_gray_image(image)
    host_mask = as_binary_mask(mask)
    if img.shape != host_mask.shape:
        raise ValueError(f"sliding_match: image {img.shape} vs mask {host_mask.shape}")
    ph, pw = patch.image.shape
    height, width = img.shape
    if ph > height or pw > width:
        raise ValueError(
            f"patch {pw}x{ph} does not fit inside image {width}x{height}"
        )

    exclude = config.exclude_target_overlap
    prefix = _mask_prefix_sums(host_mask) if exclude else None
    own_bbox = None
    if exclude and image_id is not None and image_id == patch.origin_sample:
        own_bbox = patch.origin_bbox

    patch_stats = _window_stats(np.ascontiguousarray(patch.image))
    candidates = []
    for y in range(0, height - ph + 1, config.stride):
        for x in range(0, width - pw + 1, config.stride):
            if exclude:
                if _rect_sum(prefix, y, x, y + ph, x + pw) > 0:
                    continue
                if own_bbox is not None and _rects_overlap(x, y, pw, ph, *own_bbox):
                    continue
            window = np.ascontiguousarray(img[y : y + ph, x : x + pw])
            score = _ssim_from_stats(*_window_stats(window), *patch_stats)
            candidates.append(MatchCandidate(x=x, y=y, score=score))
    return candidates


def top_k(candidates: list[MatchCandidate], config: MatchConfig) -> list[MatchCandidate]:
    """Greedy top-k selection with a minimum separation between picks.

    Candidates are visited in (score desc, y asc, x asc) order; one is kept
    iff its position is at least ``min_separation`` away (Euclidean) from
    every kept candidate. Window centres and corners differ by a constant
    offset, so corner distances equal centre distances. Returns at most k
    candidates, already sorted by the visiting order.
    """
    if config.min_separation is None:
        raise ValueError(
            "min_separation is unresolved; fill it (e.g. max(patch_w, patch_h)) first"
        )
    separation_sq = config.min_separation**2
    chosen: list[MatchCandidate] = []
    for cand in sorted(candidates, key=lambda c: (-c.score, c.y, c.x)):
        if len(chosen) == config.k:
            break
        if all(
            (cand.x - kept.x) ** 2 + (cand.y - kept.y) ** 2 >= separation_sq
            for kept in chosen
        ):
            chosen.append(cand)
    return chosen


def resolve_min_separation(config: MatchConfig, patch: TargetPatch) -> MatchConfig:
    """Fill an unresolved min_separation with max(patch width, patch height)."""
    if config.min_separation is not None:
        return config
    ph, pw = patch.image.shape
    return MatchConfig(
        k=config.k,
        min_separation=float(max(pw, ph)),
        stride=config.stride,
        exclude_target_overlap=config.exclude_target_overlap,
    )


# -- patch persistence: <id>.png + <id>_mask.png + <id>.json sidecar --------

def save_patch(patch: TargetPatch, out_dir) -> None:
    """Write a patch as paired PNGs plus a JSON sidecar with its origin."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_gray_png(out_dir / f"{patch.patch_id}.png", patch.image)
    save_mask_png(out_dir / f"{patch.patch_id}_mask.png", patch.mask)
    meta = {
        "patch_id": patch.patch_id,
        "origin_sample": patch.origin_sample,
        "origin_bbox": list(patch.origin_bbox),
        "padding": patch.padding,
    }
    (out_dir / f"{patch.patch_id}.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_patches(patch_dir) -> list[TargetPatch]:
    """Load every patch stored under ``patch_dir``, ordered by patch id."""
    patch_dir = Path(patch_dir)
    patches = []
    for sidecar in sorted(patch_dir.glob("*.json")):
        meta = json.loads(sidecar.read_text())
        pid = meta["patch_id"]
        patches.append(
            TargetPatch(
                patch_id=pid,
                image=load_gray_png(patch_dir / f"{pid}.png"),
                mask=load_mask_png(patch_dir / f"{pid}_mask.png"),
                origin_sample=meta["origin_sample"],
                origin_bbox=tuple(meta["origin_bbox"]),
                padding=meta["padding"],
            )
        )
    return patches
