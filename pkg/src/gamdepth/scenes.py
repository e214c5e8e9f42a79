"""
Synthetic two-view scenes with exact ground truth.

Images are rendered by casting one ray per pixel and intersecting it
analytically with planes and axis-aligned boxes, so depth and pixel
correspondences are exact. Surface albedo is band-limited noise: a coarse
random grid smoothed by cubic spline interpolation, which keeps bilinear
resampling error small.

Rendered intensities are quantised to 8 bits and depths to float32 at
generation time so that a saved scene reloads bit-for-bit.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geometry import CameraIntrinsics, PoseSE3, se3_from_axis_angle
from .io import FormatError, read_pfm, read_pnm, write_pfm, write_pgm, write_ppm
from .semantics import DEFAULT_NUM_CLASSES, LabelGrid, load_proxy_labels, save_proxy_labels

__all__ = [
    "SceneSample",
    "default_intrinsics",
    "make_plane_scene",
    "make_box_scene",
    "crop_scene",
    "reconstruction_ratio",
    "save_scene",
    "load_scene",
]


@dataclass
class SceneSample:
    target: np.ndarray
    references: list
    gt_depth: np.ndarray
    gt_poses: list
    intrinsics: CameraIntrinsics
    gt_labels: LabelGrid
    textureless_mask: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.references) != len(self.gt_poses) or not self.references:
            raise ValueError("a scene needs one pose per reference frame and at least one reference")
        if np.any(self.gt_depth <= 0):
            raise ValueError("ground-truth depth must be positive")

    @property
    def shape(self):
        return self.gt_depth.shape


def default_intrinsics(height: int, width: int) -> CameraIntrinsics:
    f = 0.9 * width
    return CameraIntrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0)


# ----------------------------------------------------------------------
# surfaces
# ----------------------------------------------------------------------


class _Texture:
    """Smooth random albedo over 2-D surface coordinates (metres)."""

    def __init__(self, rng, spacing, extent=4.0, chroma=0.12):
        n = int(np.ceil(2 * extent / spacing)) + 8
        self.spacing = spacing
        self.origin = -extent - 4 * spacing
        luma = rng.uniform(0.0, 1.0, size=(n, n))
        tint = rng.uniform(-1.0, 1.0, size=(3, n, n)) * chroma
        self.grids = [luma + tint[c] for c in range(3)]

    def __call__(self, a, b):
        ia = (a - self.origin) / self.spacing
        ib = (b - self.origin) / self.spacing
        out = [ndimage.map_coordinates(g, [ia, ib], order=3, mode="nearest") for g in self.grids]
        return np.clip(np.stack(out, axis=-1), 0.0, 1.0)


class _Plane:
    def __init__(self, normal, point, texture, label, band=None, band_color=None, band_label=None, ramp=0.0):
        self.n = normal / np.linalg.norm(normal)
        self.c = float(self.n @ point)
        ref = np.array([1.0, 0.0, 0.0])
        e1 = ref - (ref @ self.n) * self.n
        self.e1 = e1 / np.linalg.norm(e1)
        self.e2 = np.cross(self.n, self.e1)
        self.texture = texture
        self.label = label
        self.band = band
        self.band_color = band_color
        self.band_label = band_label
        self.ramp = ramp

    def intersect(self, o, d):
        denom = d @ self.n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.c - o @ self.n) / denom
        return np.where((np.abs(denom) > 1e-12) & (t > 1e-9), t, np.inf)

    def in_band(self, pts):
        if self.band is None:
            return np.zeros(len(pts), dtype=bool)
        a = pts @ self.e1
        return (a >= self.band[0]) & (a <= self.band[1])

    def _band_weight(self, a):
        # 1 inside the band, smoothstep to 0 over ``ramp`` metres outside it
        lo, hi = self.band
        dist = np.maximum(lo - a, a - hi).clip(min=0.0)
        if self.ramp <= 0:
            return (dist == 0).astype(float)
        x = np.clip(1.0 - dist / self.ramp, 0.0, 1.0)
        return x * x * (3.0 - 2.0 * x)

    def shade(self, pts):
        rgb = self.texture(pts @ self.e1, pts @ self.e2)
        band = self.in_band(pts)
        if self.band is not None:
            wgt = self._band_weight(pts @ self.e1)[:, None]
            rgb = (1.0 - wgt) * rgb + wgt * self.band_color
            rgb[band] = self.band_color
        labels = np.where(band, self.band_label if self.band_label is not None else self.label, self.label)
        return rgb, labels, band


class _Box:
    def __init__(self, lo, hi, texture, label):
        self.lo, self.hi = np.asarray(lo, float), np.asarray(hi, float)
        self.texture = texture
        self.label = label

    def intersect(self, o, d):
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (self.lo - o) * inv
            t2 = (self.hi - o) * inv
        tmin = np.nanmax(np.minimum(t1, t2), axis=-1)
        tmax = np.nanmin(np.maximum(t1, t2), axis=-1)
        hit = (tmax >= tmin) & (tmin > 1e-9)
        return np.where(hit, tmin, np.inf)

    def shade(self, pts):
        # surface coordinates from the face the point lies on
        dist = np.minimum(np.abs(pts - self.lo), np.abs(pts - self.hi))
        axis = np.argmin(dist, axis=-1)
        a = np.where(axis == 0, pts[:, 2], pts[:, 0])
        b = np.where(axis == 1, pts[:, 2], pts[:, 1])
        rgb = self.texture(a, b)
        return rgb, np.full(len(pts), self.label), np.zeros(len(pts), dtype=bool)


def _trace(objects, origins, dirs):
    """Nearest hit per ray: (t, point, rgb, label, band flag)."""
    ts = np.stack([obj.intersect(origins, dirs) for obj in objects])
    which = np.argmin(ts, axis=0)
    t = ts[which, np.arange(len(dirs))]
    if not np.all(np.isfinite(t)):
        raise RuntimeError("scene does not cover the field of view")
    pts = origins + t[:, None] * dirs
    rgb = np.zeros((len(dirs), 3))
    labels = np.zeros(len(dirs), dtype=np.int64)
    band = np.zeros(len(dirs), dtype=bool)
    for k, obj in enumerate(objects):
        sel = which == k
        if sel.any():
            rgb[sel], labels[sel], band[sel] = obj.shade(pts[sel])
    return t, pts, rgb, labels, band


def _render(objects, K, shape, pose: PoseSE3):
    """Render the camera whose target->camera transform is ``pose``."""
    h, w = shape
    rays = K.rays(h, w).reshape(-1, 3)
    r = np.asarray(pose.rotation)
    origin = -r.T @ np.asarray(pose.translation)
    dirs = rays @ r  # R^T applied to each row
    t, pts, rgb, labels, band = _trace(objects, np.broadcast_to(origin, dirs.shape), dirs)
    return t, rgb.reshape(h, w, 3), labels.reshape(h, w), band.reshape(h, w)


def _quantise(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def _reference_poses(rng, n_refs=2, baseline=(0.14, 0.19), max_rot_deg=3.0):
    poses = []
    for k in range(n_refs):
        side = 1.0 if k % 2 == 0 else -1.0
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = np.deg2rad(rng.uniform(0.5, max_rot_deg))
        shift = np.array(
            [side * rng.uniform(*baseline), rng.uniform(-0.04, 0.04), rng.uniform(-0.05, 0.05)]
        )
        poses.append(se3_from_axis_angle(axis * angle, shift))
    return poses


def _check_size(size):
    h, w = size
    if h < 16 or w < 16:
        raise ValueError(f"scene size must be at least 16x16, got {h}x{w}")
    return int(h), int(w)


def _finish(objects, K, shape, rng, poses, textureless, meta):
    t, target, labels, band = _render(objects, K, shape, PoseSE3.identity())
    depth = t.reshape(shape)  # target rays have unit z, so ray length parameter == depth
    depth = depth.astype(np.float32).astype(np.float64)
    refs = [_quantise(_render(objects, K, shape, p)[1]) for p in poses]
    mask = band.astype(np.float64) if textureless else np.zeros(shape)
    return SceneSample(
        target=_quantise(target),
        references=refs,
        gt_depth=depth,
        gt_poses=poses,
        intrinsics=K,
        gt_labels=LabelGrid(labels, DEFAULT_NUM_CLASSES),
        textureless_mask=mask,
        meta=meta,
    )


def make_plane_scene(seed: int, size=(64, 64), textureless_fraction: float = 0.0, cell_px: float = 4.0):
    """A slanted textured plane, optionally crossed by a constant-albedo band.

    The band is a strip of the plane (bounded along its in-plane horizontal
    axis) chosen so that it covers ``textureless_fraction`` of the target
    image. Labels: 0 for textured plane, 1 for the band.
    """
    if not 0.0 <= textureless_fraction <= 1.0:
        raise ValueError(f"textureless_fraction must lie in [0, 1], got {textureless_fraction}")
    h, w = _check_size(size)
    rng = np.random.default_rng(seed)
    K = default_intrinsics(h, w)

    z0 = rng.uniform(1.3, 1.7)
    tilt = np.deg2rad(rng.uniform(10.0, 25.0))
    phi = rng.uniform(0, 2 * np.pi)
    normal = np.array([np.sin(tilt) * np.cos(phi), np.sin(tilt) * np.sin(phi), -np.cos(tilt)])
    point = np.array([0.0, 0.0, z0])
    texture = _Texture(rng, spacing=cell_px * z0 / K.fx)
    plane = _Plane(normal, point, texture, label=0)

    band_color = rng.uniform(0.3, 0.7, size=3)
    poses = _reference_poses(rng)
    n_band = int(round(textureless_fraction * h * w))
    if n_band > 0:
        t, pts, *_ = _trace([plane], np.zeros((h * w, 3)), K.rays(h, w).reshape(-1, 3))
        a = np.sort(pts @ plane.e1)
        start = int(rng.integers(0, h * w - n_band + 1))
        plane.band = (a[start], a[start + n_band - 1])
        plane.band_color = _quantise(band_color)
        plane.band_label = 1
        plane.ramp = 2.5 * z0 / K.fx
    meta = {"kind": "plane", "seed": seed, "textureless_fraction": textureless_fraction}
    return _finish([plane], K, (h, w), rng, poses, n_band > 0, meta)


def make_box_scene(seed: int, size=(64, 64), n_boxes=None, box_depths=None, background_depth=None, cell_px=4.0):
    """Fronto-parallel textured background with 1-3 textured boxes in front.

    Boxes sit at distinct depths (gaps of at least 0.5 m) and are shallow
    (at most 0.15 m deep). Labels: 0 background, ``k + 1`` for box ``k``.

    Randomly drawn layouts are checked for well-posedness: the photometric
    reconstruction error with the true depth must be at least
    ``WELL_POSED_RATIO`` times smaller than with the depth scaled by 1.2.
    Layouts failing this (silhouette pixels dominate the error) are redrawn
    from a derived stream. Fully explicit layouts, and renders smaller than
    ``WELL_POSED_MIN_SIZE`` (where the parallax of a 20% depth error is
    under a pixel), are returned as drawn.
    """
    explicit = n_boxes is not None and box_depths is not None and background_depth is not None
    checked = not explicit and min(size) >= WELL_POSED_MIN_SIZE
    for attempt in range(_MAX_LAYOUT_ATTEMPTS):
        rng = np.random.default_rng(seed if attempt == 0 else [seed, attempt])
        scene = _box_layout(rng, size, n_boxes, box_depths, background_depth, cell_px)
        scene.meta.update(seed=seed, attempt=attempt)
        if not checked or reconstruction_ratio(scene) >= WELL_POSED_RATIO:
            return scene
    raise RuntimeError(f"no well-posed box layout for seed {seed} in {_MAX_LAYOUT_ATTEMPTS} attempts")


WELL_POSED_RATIO = 10.0
WELL_POSED_MIN_SIZE = 64
_MAX_LAYOUT_ATTEMPTS = 50


def reconstruction_ratio(scene: SceneSample, scale: float = 1.2, alpha: float = 0.85) -> float:
    """Mean min-reprojection error with depth ``scale * D`` over that with ``D``."""
    from .geometry import synthesize_view
    from .photometric import min_reprojection, photometric_map

    def error(s):
        maps = []
        for img, T in zip(scene.references, scene.gt_poses):
            warped, valid = synthesize_view(img, scene.gt_depth * s, T, scene.intrinsics)
            maps.append(photometric_map(scene.target, warped, alpha, valid))
        m = min_reprojection(maps)
        return float(m.values()[m.valid].mean())

    return error(scale) / error(1.0)


def _box_layout(rng, size, n_boxes, box_depths, background_depth, cell_px):
    h, w = _check_size(size)
    K = default_intrinsics(h, w)
    zb = rng.uniform(1.8, 2.2) if background_depth is None else float(background_depth)
    n = int(rng.integers(1, 4)) if n_boxes is None else int(n_boxes)
    explicit = box_depths is not None
    if box_depths is None:
        candidates = np.arange(1.0, zb - 0.5 + 1e-9, 0.5)
        n = min(n, len(candidates))
        box_depths = np.sort(rng.choice(candidates, size=n, replace=False))
    box_depths = [float(z) for z in box_depths]
    if len(box_depths) != n or any(z >= zb for z in box_depths):
        raise ValueError("box depths must be n values in front of the background")

    objects = [_Plane(np.array([0.0, 0.0, -1.0]), np.array([0.0, 0.0, zb]), _Texture(rng, cell_px * zb / K.fx), 0)]
    for k, z in enumerate(box_depths):
        # half-extent in the image of 10-25% of the width, centre inside the central 60%
        half = rng.uniform(0.10, 0.25) * w / K.fx * z
        cx, cy = rng.uniform(-0.3, 0.3, size=2) * np.array([w, h]) / K.fx * z
        if explicit and n == 1:
            cx = cy = 0.0
        depth_extent = rng.uniform(0.05, 0.15)
        lo = [cx - half, cy - half, z]
        hi = [cx + half, cy + half, z + depth_extent]
        objects.append(_Box(lo, hi, _Texture(rng, cell_px * z / K.fx), k + 1))
    poses = _reference_poses(rng)
    meta = {"kind": "box", "box_depths": box_depths, "background_depth": zb}
    return _finish(objects, K, (h, w), rng, poses, False, meta)


def crop_scene(scene: SceneSample, top: int, left: int, height: int, width: int) -> SceneSample:
    """Same window of every raster, with the principal point shifted to match.

    Gives tiny but geometrically consistent scenes (e.g. 8x8 for gradient
    checks) without rendering at a resolution too coarse for the texture.
    """
    h, w = scene.shape
    if height < 2 or width < 2 or top < 0 or left < 0 or top + height > h or left + width > w:
        raise ValueError(f"crop {height}x{width} at ({top}, {left}) does not fit a {h}x{w} scene")
    win = (slice(top, top + height), slice(left, left + width))
    K = scene.intrinsics
    return SceneSample(
        target=scene.target[win].copy(),
        references=[r[win].copy() for r in scene.references],
        gt_depth=scene.gt_depth[win].copy(),
        gt_poses=list(scene.gt_poses),
        intrinsics=CameraIntrinsics(K.fx, K.fy, K.cx - left, K.cy - top),
        gt_labels=LabelGrid(scene.gt_labels.labels[win].copy(), scene.gt_labels.num_classes),
        textureless_mask=scene.textureless_mask[win].copy(),
        meta={**scene.meta, "crop": (top, left, height, width)},
    )


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------


def _write_floats(path, values):
    Path(path).write_text(" ".join(repr(float(v)) for v in values) + "\n")


def _read_floats(path, count, field_name):
    try:
        parts = Path(path).read_text().split()
        vals = [float(p) for p in parts]
    except FileNotFoundError:
        raise FormatError(f"missing scene file {field_name}") from None
    except ValueError:
        raise FormatError(f"{field_name}: non-numeric entry") from None
    if len(vals) != count:
        raise FormatError(f"{field_name}: expected {count} numbers, found {len(vals)}")
    return np.array(vals)


def save_scene(scene: SceneSample, path):
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    write_ppm(d / "target.ppm", scene.target)
    for i, (img, pose) in enumerate(zip(scene.references, scene.gt_poses)):
        write_ppm(d / f"ref_{i}.ppm", img)
        _write_floats(d / f"pose_{i}.txt", list(np.asarray(pose.rotation).ravel()) + list(np.asarray(pose.translation)))
    write_pfm(d / "depth.pfm", scene.gt_depth)
    save_proxy_labels(d / "labels.pgm", scene.gt_labels)
    K = scene.intrinsics
    _write_floats(d / "intrinsics.txt", [K.fx, K.fy, K.cx, K.cy])
    write_pgm(d / "textureless.pgm", (np.asarray(scene.textureless_mask) > 0).astype(np.uint8) * 255)


def _need(d: Path, name: str) -> Path:
    p = d / name
    if not p.is_file():
        raise FormatError(f"missing scene file {name} in {os.fspath(d)}")
    return p


def _read_rgb(path, name):
    try:
        arr, maxval, _ = read_pnm(path)
    except FormatError as exc:
        raise FormatError(f"{name}: {exc}") from None
    if arr.ndim != 3:
        raise FormatError(f"{name}: expected an RGB (P6) image")
    return arr / float(maxval)


def load_scene(path) -> SceneSample:
    d = Path(path)
    if not d.is_dir():
        raise FormatError(f"scene directory {os.fspath(d)} does not exist")
    target = _read_rgb(_need(d, "target.ppm"), "target.ppm")
    try:
        depth = read_pfm(_need(d, "depth.pfm"))
    except FormatError as exc:
        raise FormatError(f"depth.pfm: {exc}") from None
    refs, poses = [], []
    i = 0
    while (d / f"ref_{i}.ppm").exists():
        refs.append(_read_rgb(d / f"ref_{i}.ppm", f"ref_{i}.ppm"))
        vals = _read_floats(d / f"pose_{i}.txt", 12, f"pose_{i}.txt")
        poses.append(PoseSE3(vals[:9].reshape(3, 3), vals[9:]))
        i += 1
    if not refs:
        raise FormatError(f"missing scene file ref_0.ppm in {os.fspath(d)}")
    fx, fy, cx, cy = _read_floats(_need(d, "intrinsics.txt"), 4, "intrinsics.txt")
    labels = load_proxy_labels(_need(d, "labels.pgm"))
    tl, _, _ = read_pnm(_need(d, "textureless.pgm"))
    for name, arr in (("target.ppm", target), ("labels.pgm", labels.labels), ("textureless.pgm", tl)):
        if arr.shape[:2] != depth.shape:
            raise FormatError(f"{name}: size {arr.shape[:2]} does not match depth.pfm {depth.shape}")
    if depth.ndim != 2:
        raise FormatError("depth.pfm: expected a single-channel PFM")
    return SceneSample(
        target=target,
        references=refs,
        gt_depth=depth,
        gt_poses=poses,
        intrinsics=CameraIntrinsics(fx, fy, cx, cy),
        gt_labels=labels,
        textureless_mask=(tl > 0).astype(np.float64),
        meta={"path": os.fspath(d)},
    )
