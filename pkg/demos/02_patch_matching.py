"""Walkthrough: finding the background windows that best host a target.

A small bright blob is planted in a structured synthetic frame. The blob is
cut out with its surroundings, every stride-aligned window of a second
frame is scored against it with single-window SSIM, and a greedy top-k pass
keeps the best mutually separated positions.
"""

import numpy as np

from istdkit import LabeledSample, MatchConfig, extract_patches, sliding_match, ssim, top_k

rng = np.random.default_rng(7)


def structured_frame(shape, phase):
    """Smooth gradient plus banded texture, loosely like cluttered sky."""
    ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]].astype(float)
    base = 90 + 50 * np.sin(xs / 17.0 + phase) + 30 * np.cos(ys / 23.0)
    return np.clip(base + rng.normal(0, 6, shape), 0, 255)


print("=== donor frame: one 4x4 target on clutter ===")
donor_img = structured_frame((96, 96), phase=0.0)
donor_mask = np.zeros((96, 96), bool)
donor_img[40:44, 50:54] = 240.0
donor_mask[40:44, 50:54] = True
donor = LabeledSample("donor", donor_img, donor_mask)

(patch,) = extract_patches(donor, padding=3)
print(f"patch {patch.patch_id}: crop {patch.image.shape}, bbox {patch.origin_bbox}, "
      f"{int(patch.mask.sum())} target pixels")

print()
print("=== scan a clean host frame ===")
host = structured_frame((96, 96), phase=1.3)
config = MatchConfig(k=4, min_separation=float(max(patch.image.shape)), stride=2)
candidates = sliding_match(host, np.zeros((96, 96), bool), patch, config)
scores = [c.score for c in candidates]
print(f"{len(candidates)} windows scored; ssim range [{min(scores):.4f}, {max(scores):.4f}]")

best = top_k(candidates, config)
print()
print("top-k paste sites (score desc, mutually separated):")
for rank, cand in enumerate(best, start=1):
    print(f"  #{rank}: window at ({cand.x:2d},{cand.y:2d})  ssim {cand.score:.4f}")

print()
print("=== sanity: ssim of a window against itself is exactly 1 ===")
window = host[best[0].y : best[0].y + patch.image.shape[0],
              best[0].x : best[0].x + patch.image.shape[1]]
print(f"ssim(window, window) = {ssim(window, window)}")
print(f"ssim(window, patch)  = {ssim(window, patch.image):.4f}")
