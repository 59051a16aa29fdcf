"""Walkthrough: seamless compositing versus naive copy-paste.

A bright patch is pasted into a darker background twice: once by direct
pixel copy and once through the gradient-domain solve. The seam contrast
and the gradient-matching energy show why the solve wins; the fused frames
are written as PNGs for eyeballing.
"""

from pathlib import Path

import numpy as np

from istdkit import (
    LabeledSample,
    extract_patches,
    fusion_energy,
    guidance_field,
    seamless_clone,
)
from istdkit.dataset_io import save_gray_png

rng = np.random.default_rng(3)
out_dir = Path(__file__).parent / "demo_output"
out_dir.mkdir(exist_ok=True)

print("=== donor patch from a bright frame ===")
donor_img = np.clip(rng.normal(190, 8, (40, 40)), 0, 255)
donor_img[17:21, 17:21] = 250.0
donor_mask = np.zeros((40, 40), bool)
donor_mask[17:21, 17:21] = True
(patch,) = extract_patches(LabeledSample("donor", donor_img, donor_mask), padding=4)
print(f"patch crop {patch.image.shape}, mean intensity {patch.image.mean():.1f}")

print()
print("=== dark background ===")
background = np.clip(rng.normal(80, 6, (64, 64)), 0, 255)
paste = (24, 30)
print(f"background mean {background.mean():.1f}, paste at {paste}")

ph, pw = patch.image.shape
x, y = paste
region = background[y : y + ph, x : x + pw]

naive = background.copy()
naive[y : y + ph, x : x + pw] = patch.image

result = seamless_clone(background, patch, paste, tolerance=1e-8)
save_gray_png(out_dir / "fusion_background.png", background)
save_gray_png(out_dir / "fusion_naive.png", naive)
save_gray_png(out_dir / "fusion_seamless.png", result.image)

print()
print("=== seam contrast: |pixel just inside - just outside| on the left edge ===")
naive_seam = float(np.mean(np.abs(naive[y : y + ph, x] - naive[y : y + ph, x - 1])))
fused_seam = float(np.mean(np.abs(result.image[y : y + ph, x] - result.image[y : y + ph, x - 1])))
print(f"naive copy-paste: {naive_seam:7.2f} intensity levels")
print(f"seamless clone:   {fused_seam:7.2f} intensity levels")

print()
print("=== gradient-matching energy over the paste rectangle ===")
# Feasible candidates share the rectangle's border with the background (the
# seam always belongs to the composite); among those, the solve is optimal.
field = guidance_field(patch.image)
fused_rect = result.image[y : y + ph, x : x + pw]
hard_paste = region.copy()
hard_paste[1:-1, 1:-1] = patch.image[1:-1, 1:-1]
print(f"background, no target:        {fusion_energy(region, field):12.1f}")
print(f"patch copied inside the seam: {fusion_energy(hard_paste, field):12.1f}")
print(f"seamless clone:               {fusion_energy(fused_rect, field):12.1f}  <- minimiser")

print()
print(f"solver: {result.provenance['solver_iterations']} CG iterations, "
      f"residual {result.provenance['final_residual']:.2e}")
print(f"PNGs written under {out_dir}/")
