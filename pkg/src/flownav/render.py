"""Nadir camera rendering of a procedurally textured flat ground plane.

The camera is body-aligned: image x (columns) along body x, image y (rows)
along body y, optical axis along body z (down).  Each pixel casts a pinhole
ray, rotates it into NED, and intersects the z = 0 ground plane; the ground
texture supplies the intensity.  Rays at or above the horizon cannot hit
the ground and render as 0.5 with the frame flagged degraded.
"""

from __future__ import annotations

import numpy as np

from . import geom
from .optflow import CameraIntrinsics, ImageFrame
from .texture import GroundTexture

MIN_RENDER_ALTITUDE = 0.5


def default_intrinsics(width: int = 48, height: int = 48, focal_px: float = 42.0) -> CameraIntrinsics:
    return CameraIntrinsics(
        focal_px=focal_px,
        cx=(width - 1) / 2.0,
        cy=(height - 1) / 2.0,
        width=width,
        height=height,
    )


def render_ground_image(
    pose: tuple,
    texture: GroundTexture,
    intr: CameraIntrinsics,
    timestamp: float = 0.0,
) -> ImageFrame:
    """Render one frame at pose = (position NED, attitude quaternion)."""
    pos, quat = pose
    pos = np.asarray(pos, dtype=float)
    altitude = -pos[2]
    if altitude <= MIN_RENDER_ALTITUDE:
        raise ValueError(
            f"altitude {altitude:.2f} m too low to render (needs > {MIN_RENDER_ALTITUDE})"
        )
    h, w = intr.height, intr.width
    dx = (np.arange(w) - intr.cx) / intr.focal_px
    dy = (np.arange(h) - intr.cy) / intr.focal_px
    d_cam = np.empty((h, w, 3))
    d_cam[..., 0] = dx[None, :]
    d_cam[..., 1] = dy[:, None]
    d_cam[..., 2] = 1.0
    rot = geom.quat_to_rot(np.asarray(quat, dtype=float))
    d_ned = np.einsum("ij,hwj->hwi", rot, d_cam)

    down = d_ned[..., 2]
    valid = down > 1e-9
    safe_down = np.where(valid, down, 1.0)
    t_ray = altitude / safe_down
    gx = pos[0] + t_ray * d_ned[..., 0]
    gy = pos[1] + t_ray * d_ned[..., 1]
    pixels = np.where(valid, texture.sample(gx, gy), 0.5)
    return ImageFrame(
        pixels=pixels, timestamp=timestamp, degraded=bool(np.any(~valid))
    )
