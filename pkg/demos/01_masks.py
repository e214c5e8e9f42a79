"""Gradient magnitude and the two photometric weightings on one scene.

Run: python demos/01_masks.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from gamdepth.gradmask import (
    KEYPOINT_THRESHOLD,
    MaskConfig,
    gradient_aware_mask,
    keypoint_binary_mask,
    sobel_magnitude,
)
from gamdepth.io import write_pgm
from gamdepth.scenes import make_plane_scene

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

# A slanted plane with a flat band covering 40% of the view.
scene = make_plane_scene(seed=5, size=(64, 64), textureless_fraction=0.4)
band = scene.textureless_mask > 0.5
print(f"band covers {band.mean():.0%} of the target")

# Sobel magnitude on 0-255 luma. The band is nearly flat, the texture is not.
m = sobel_magnitude(scene.target)
print(f"median |grad| in band {np.median(m[band]):7.1f}, outside {np.median(m[~band]):7.1f}")

# The binary baseline drops the band entirely; the soft mask keeps a floor of beta.
key = keypoint_binary_mask(m)
gam = gradient_aware_mask(m, MaskConfig())
print(f"pixels above the {KEYPOINT_THRESHOLD:.0f} threshold: {key.mean():.0%}")
print(f"mean weight in band  key {key[band].mean():.3f}  gam {gam[band].mean():.3f}")
print(f"mean weight outside  key {key[~band].mean():.3f}  gam {gam[~band].mean():.3f}")

# Gray-level renders: brighter means more weight.
write_pgm(out / "mask_gam.pgm", np.round(gam * 255).astype(np.uint8))
write_pgm(out / "mask_key.pgm", np.round(key * 255).astype(np.uint8))
write_pgm(out / "sobel.pgm", np.round(np.clip(m / m.max(), 0, 1) * 255).astype(np.uint8))
print(f"wrote masks to {out}/")
