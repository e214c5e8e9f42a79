"""
Pinhole camera, rigid poses and differentiable inverse warping.

Pixel coordinates are measured at pixel centres with ``(0, 0)`` at the
top-left pixel; ``u`` runs along columns and ``v`` along rows. A pose
``T`` maps points from the target camera frame into the source camera
frame: ``X_s = R @ X_t + t``.

All warping functions accept either plain arrays or :class:`Node` values
so the same code path serves evaluation and optimisation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridcore import Node, as_node, record, register_op, unwrap
from .gridcore import ad
from .gridcore.grids import check_image, check_scalar_grid, pixel_grid

__all__ = [
    "CameraIntrinsics",
    "PoseSE3",
    "CoordGrid",
    "rodrigues",
    "se3_from_axis_angle",
    "compose_residual",
    "warp_coordinates",
    "bilinear_sample",
    "synthesize_view",
]


def _val(x):
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def rays(self, height: int, width: int) -> np.ndarray:
        """Back-projected pixel rays ``K^-1 [u, v, 1]``, shape ``(H, W, 3)``."""
        u, v = pixel_grid(height, width)
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)


@dataclass
class PoseSE3:
    """Rigid transform; fields may be arrays or graph nodes."""

    rotation: np.ndarray | Node
    translation: np.ndarray | Node

    def __post_init__(self):
        if not isinstance(self.rotation, Node):
            self.rotation = np.asarray(self.rotation, dtype=np.float64)
        if not isinstance(self.translation, Node):
            self.translation = np.asarray(self.translation, dtype=np.float64)
        if _val(self.rotation).shape != (3, 3) or _val(self.translation).shape != (3,):
            raise ValueError(
                f"pose needs a 3x3 rotation and a 3-vector, got {_val(self.rotation).shape} "
                f"and {_val(self.translation).shape}"
            )

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = _val(self.rotation)
        m[:3, 3] = _val(self.translation)
        return m

    def inverse(self) -> "PoseSE3":
        r = _val(self.rotation)
        return PoseSE3(r.T, -r.T @ _val(self.translation))

    def detach(self) -> "PoseSE3":
        return PoseSE3(_val(self.rotation).copy(), _val(self.translation).copy())

    def orthonormality_error(self) -> float:
        r = _val(self.rotation)
        return max(np.abs(r.T @ r - np.eye(3)).max(), abs(np.linalg.det(r) - 1.0))


@dataclass
class CoordGrid:
    """Continuous source coordinates per target pixel plus a validity flag."""

    u: np.ndarray | Node
    v: np.ndarray | Node
    valid: np.ndarray

    @property
    def shape(self):
        return self.valid.shape


# ----------------------------------------------------------------------
# rotations
# ----------------------------------------------------------------------


def _skew(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


_BASIS_SKEW = [_skew(e) for e in np.eye(3)]


@register_op("rodrigues")
def _rodrigues(omega):
    if omega.shape != (3,):
        raise ValueError(f"axis-angle vector must have shape (3,), got {omega.shape}")
    theta2 = float(omega @ omega)
    theta = np.sqrt(theta2)
    k = _skew(omega)
    if theta < 1e-6:
        a, b = 1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0
    else:
        a, b = np.sin(theta) / theta, (1.0 - np.cos(theta)) / theta2
    rot = np.eye(3) + a * k + b * (k @ k)

    def bw(g):
        out = np.empty(3)
        if theta < 1e-6:
            for i, e in enumerate(_BASIS_SKEW):
                d = e + 0.5 * (e @ k + k @ e)
                out[i] = np.sum(g * d)
        else:
            # dR/dw_i = (w_i [w]x + [w x (I - R) e_i]x) R / |w|^2
            i_minus_r = np.eye(3) - rot
            for i in range(3):
                d = (omega[i] * k + _skew(np.cross(omega, i_minus_r[:, i]))) @ rot / theta2
                out[i] = np.sum(g * d)
        return (out,)

    return rot, bw, None


def rodrigues(omega):
    """Rotation matrix ``exp([omega]x)``; differentiable, well defined at zero."""
    return record("rodrigues", [omega])


def se3_from_axis_angle(omega, t) -> PoseSE3:
    """Pose from an axis-angle rotation (radians) and a translation (metres)."""
    w = _val(omega)
    if np.linalg.norm(w) >= np.pi:
        raise ValueError(f"rotation angle must be below pi, got {np.linalg.norm(w)}")
    rot = rodrigues(omega)
    trans = t if isinstance(t, Node) else np.asarray(t, dtype=np.float64)
    if not isinstance(omega, Node):
        rot = rot.value
    return PoseSE3(rot, trans)


def _either(node_fn, arrays_fn, *xs):
    if any(isinstance(x, Node) for x in xs):
        return node_fn(*[as_node(x) for x in xs])
    return arrays_fn(*[np.asarray(x) for x in xs])


def compose_residual(T_init: PoseSE3, T_res: PoseSE3) -> PoseSE3:
    """Apply ``T_res`` after ``T_init``: ``X -> R_res (R_init X + t_init) + t_res``."""
    rot = _either(lambda a, b: ad.einsum("ij,jk->ik", a, b), np.matmul, T_res.rotation, T_init.rotation)
    trans = _either(
        lambda r, t0, t1: ad.einsum("ij,j->i", r, t0) + t1,
        lambda r, t0, t1: r @ t0 + t1,
        T_res.rotation,
        T_init.translation,
        T_res.translation,
    )
    return PoseSE3(rot, trans)


# ----------------------------------------------------------------------
# inverse warp
# ----------------------------------------------------------------------


def warp_coordinates(depth, pose: PoseSE3, K: CameraIntrinsics, source_shape=None) -> CoordGrid:
    """Source-frame pixel coordinates of every target pixel.

    Back-projects each target pixel with its depth, moves it with ``pose``
    and projects it with ``K``. Pixels with non-positive depth, points that
    land behind the source camera, and coordinates outside the source raster
    are flagged invalid.
    """
    check_scalar_grid(depth, "depth")
    h, w = _val(depth).shape
    hs, ws = (h, w) if source_shape is None else source_shape[:2]
    rays = K.rays(h, w)
    dval = _val(depth)
    # projected as an offset from the pixel grid so the identity warp is exact
    ug, vg = pixel_grid(h, w)

    if isinstance(depth, Node) or isinstance(pose.rotation, Node) or isinstance(pose.translation, Node):
        d = as_node(depth)
        pts = ad.einsum("hw,hwj->hwj", d, rays)
        cam = ad.einsum("ij,hwj->hwi", pose.rotation, pts) + pose.translation
        z = cam[..., 2]
        front = z.value > 0
        z_safe = z * front + (~front)
        u = (cam[..., 0] - cam[..., 2] * rays[..., 0]) / z_safe * K.fx + ug
        v = (cam[..., 1] - cam[..., 2] * rays[..., 1]) / z_safe * K.fy + vg
        uv, vv = u.value, v.value
    else:
        pts = dval[..., None] * rays
        cam = pts @ np.asarray(pose.rotation).T + np.asarray(pose.translation)
        z = cam[..., 2]
        front = z > 0
        z_safe = np.where(front, z, 1.0)
        u = (cam[..., 0] - z * rays[..., 0]) / z_safe * K.fx + ug
        v = (cam[..., 1] - z * rays[..., 1]) / z_safe * K.fy + vg
        uv, vv = u, v

    valid = front & (dval > 0) & (uv >= 0) & (uv <= ws - 1) & (vv >= 0) & (vv <= hs - 1)
    return CoordGrid(u, v, valid)


@register_op("bilinear_sample")
def _bilinear(src, u, v, valid):
    valid = np.asarray(valid, dtype=bool)
    hs, ws, c = src.shape
    uu = np.where(valid, u, 0.0)
    vv = np.where(valid, v, 0.0)
    x0 = np.clip(np.floor(uu), 0, max(ws - 2, 0)).astype(np.int64)
    y0 = np.clip(np.floor(vv), 0, max(hs - 2, 0)).astype(np.int64)
    x1 = np.minimum(x0 + 1, ws - 1)
    y1 = np.minimum(y0 + 1, hs - 1)
    wx = (uu - x0)[..., None]
    wy = (vv - y0)[..., None]
    s00, s01, s10, s11 = src[y0, x0], src[y0, x1], src[y1, x0], src[y1, x1]
    m = valid[..., None]
    out = ((1 - wx) * (1 - wy) * s00 + wx * (1 - wy) * s01 + (1 - wx) * wy * s10 + wx * wy * s11) * m

    def bw(g):
        g = g * m
        gu = np.sum(g * ((1 - wy) * (s01 - s00) + wy * (s11 - s10)), axis=-1)
        gv = np.sum(g * ((1 - wx) * (s10 - s00) + wx * (s11 - s01)), axis=-1)
        gsrc = np.zeros((hs * ws, c))
        for yy, xx, wgt in (
            (y0, x0, (1 - wx) * (1 - wy)),
            (y0, x1, wx * (1 - wy)),
            (y1, x0, (1 - wx) * wy),
            (y1, x1, wx * wy),
        ):
            flat = (yy * ws + xx).ravel()
            contrib = (g * wgt).reshape(-1, c)
            for ch in range(c):
                gsrc[:, ch] += np.bincount(flat, weights=contrib[:, ch], minlength=hs * ws)
        return gsrc.reshape(hs, ws, c), gu, gv

    branch = np.stack([x0, y0, valid.astype(np.int64)])
    return out, bw, branch


def bilinear_sample(source, coords: CoordGrid):
    """Sample ``source`` at ``coords``; invalid pixels come back as zeros.

    Differentiable with respect to the source values and both coordinate
    fields. At integer coordinates the result equals the source pixel exactly.
    """
    check_image(source, "source")
    return unwrap(record("bilinear_sample", [source, coords.u, coords.v], valid=coords.valid))


def synthesize_view(I_s, depth, pose: PoseSE3, K: CameraIntrinsics):
    """Reconstruct the target view from source image ``I_s``.

    Returns ``(warped, valid)`` where ``valid`` is a boolean ``(H, W)`` grid.
    """
    check_image(I_s, "I_s")
    coords = warp_coordinates(depth, pose, K, source_shape=_val(I_s).shape)
    return bilinear_sample(I_s, coords), coords.valid
