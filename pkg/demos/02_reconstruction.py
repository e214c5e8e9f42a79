"""Why photometric error can supervise depth: the true depth reconstructs the
target from its neighbours, a wrong depth does not.

Run: python demos/02_reconstruction.py
"""

import numpy as np

from gamdepth.geometry import synthesize_view
from gamdepth.photometric import min_reprojection, photometric_map
from gamdepth.scenes import make_box_scene, make_plane_scene


def reprojection_error(scene, depth):
    maps = []
    for ref, pose in zip(scene.references, scene.gt_poses):
        warped, valid = synthesize_view(ref, depth, pose, scene.intrinsics)
        maps.append(photometric_map(scene.target, warped, 0.85, valid))
    best = min_reprojection(maps)
    return best.values()[best.valid].mean()


for name, scene in [("plane", make_plane_scene(0, (64, 64))), ("boxes", make_box_scene(0, (64, 64)))]:
    print(name)
    for scale in (0.8, 0.9, 1.0, 1.1, 1.2):
        err = reprojection_error(scene, scene.gt_depth * scale)
        print(f"  depth x {scale:.1f}: mean min-reprojection {err:.4f}")

# The minimum over both references hides pixels occluded in one of them.
scene = make_box_scene(0, (64, 64))
per_ref = []
for ref, pose in zip(scene.references, scene.gt_poses):
    warped, valid = synthesize_view(ref, scene.gt_depth, pose, scene.intrinsics)
    per_ref.append(photometric_map(scene.target, warped, 0.85, valid))
single = per_ref[0].values()[per_ref[0].valid].mean()
both = min_reprojection(per_ref)
print(f"boxes, true depth: first reference alone {single:.4f}, min over both {both.values()[both.valid].mean():.4f}")
