"""Dense two-frame optical flow via polynomial expansion.

Each neighborhood of both frames is approximated by a quadratic polynomial
f(x) ~ x'Ax + b'x + c fit under a Gaussian applicability window; the
displacement field then solves, pixel by pixel, the 2x2 normal equations of
the constraint relating the two frames' coefficients.  A Gaussian blur +
subsample pyramid makes displacements beyond the quadratic model's reach
recoverable coarse-to-fine.

Axis conventions: arrays are indexed [row, col]; vx is the column (x)
displacement, vy the row (y) displacement, both in pixels of the frame that
produced them.  A feature moving right by two pixels between f1 and f2
yields vx = +2.

Everything is float64 and uses fixed summation order, so identical inputs
give bit-identical fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ImageFrame:
    """Grayscale frame, intensities in [0,1], row-major (height, width)."""

    pixels: np.ndarray
    timestamp: float = 0.0
    degraded: bool = False  # some pixels could not be observed (e.g. horizon)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim != 2:
            raise ValueError("pixels must be a 2-D array")
        h, w = self.pixels.shape
        if h < 16 or w < 16:
            raise ValueError(f"frame too small: {w}x{h}, minimum 16x16")
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("non-finite intensities")
        if self.pixels.min() < -1e-9 or self.pixels.max() > 1.0 + 1e-9:
            raise ValueError("intensities outside [0, 1]")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class PolyField:
    """Per-pixel quadratic coefficients.

    a[..., k] holds (axx, axy, ayy) of the symmetric 2x2 matrix A,
    b[..., k] holds (bx, by), c the constant term.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if self.a.shape[:2] != self.c.shape or self.b.shape[:2] != self.c.shape:
            raise ValueError("coefficient grids disagree in shape")
        if self.a.shape[2] != 3 or self.b.shape[2] != 2:
            raise ValueError("expected 3 A components and 2 b components")

    @property
    def shape(self):
        return self.c.shape


@dataclass
class FlowField:
    """Per-pixel displacement in pixels per frame, plus the frame interval.

    quality is the interior average of the 2x2 solve determinant, a texture
    strength score the fusion layer uses to skip near-degenerate frames.
    """

    vx: np.ndarray
    vy: np.ndarray
    dt: float
    quality: float = 0.0

    def __post_init__(self):
        if self.vx.shape != self.vy.shape:
            raise ValueError("vx/vy shape mismatch")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def shape(self):
        return self.vx.shape


@dataclass
class FlowParams:
    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    iterations_per_level: int = 3
    expansion_window: int = 7
    expansion_sigma: float = 1.5
    averaging_window: int = 15
    max_displacement: float = 32.0

    def __post_init__(self):
        for name in ("expansion_window", "averaging_window"):
            v = getattr(self, name)
            if v < 3 or v % 2 == 0:
                raise ValueError(f"{name} must be odd and >= 3, got {v}")
        if not 0.0 < self.pyramid_scale < 1.0:
            raise ValueError("pyramid_scale must be in (0, 1)")
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.iterations_per_level < 1:
            raise ValueError("iterations_per_level must be >= 1")
        if self.expansion_sigma <= 0:
            raise ValueError("expansion_sigma must be positive")
        if self.max_displacement <= 0:
            raise ValueError("max_displacement must be positive")


@dataclass
class CameraIntrinsics:
    """Pinhole model; focal length and principal point in pixels."""

    focal_px: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.focal_px <= 0:
            raise ValueError("focal length must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")


def _pixels(img) -> np.ndarray:
    return img.pixels if isinstance(img, ImageFrame) else np.asarray(img, dtype=float)


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian, odd size."""
    if size % 2 == 0 or size < 1:
        raise ValueError("kernel size must be odd")
    x = np.arange(size, dtype=float) - (size - 1) / 2.0
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def _correlate1d(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Correlation along one axis with replicated borders, fixed tap order."""
    half = (len(kernel) - 1) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (half, half)
    padded = np.pad(img, pad, mode="edge")
    out = np.zeros_like(img)
    sl = [slice(None), slice(None)]
    for i, k in enumerate(kernel):
        sl[axis] = slice(i, i + img.shape[axis])
        out += k * padded[tuple(sl)]
    return out


def _blur(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return _correlate1d(_correlate1d(img, kernel, 0), kernel, 1)


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-aligned centers, edges clamped."""
    in_h, in_w = img.shape
    if (in_h, in_w) == (out_h, out_w):
        return img.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * in_h / out_h - 0.5, 0.0, in_h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * in_w / out_w - 0.5, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = (1.0 - wx) * img[np.ix_(y0, x0)] + wx * img[np.ix_(y0, x1)]
    bot = (1.0 - wx) * img[np.ix_(y1, x0)] + wx * img[np.ix_(y1, x1)]
    return (1.0 - wy) * top + wy * bot


def poly_expansion(img, n: int, sigma: float) -> PolyField:
    """Weighted least-squares quadratic fit at every pixel.

    Separable Gaussian-weighted moment correlations over the n-by-n window
    feed a single shared 6x6 normal-equation inverse; borders replicate.
    """
    if n % 2 == 0 or n < 3:
        raise ValueError(f"expansion window must be odd and >= 3, got {n}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    pix = _pixels(img)
    if n > min(pix.shape):
        raise ValueError("expansion window exceeds image size")

    half = (n - 1) // 2
    coords = np.arange(-half, half + 1, dtype=float)
    g = np.exp(-(coords**2) / (2.0 * sigma**2))

    # normal-equation matrix for basis [1, x, y, x^2, y^2, xy]; identical at
    # every pixel so it is inverted once
    dy, dx = np.meshgrid(coords, coords, indexing="ij")
    w2 = (g[:, None] * g[None, :]).ravel()
    basis = np.stack(
        [
            np.ones(n * n),
            dx.ravel(),
            dy.ravel(),
            dx.ravel() ** 2,
            dy.ravel() ** 2,
            (dx * dy).ravel(),
        ],
        axis=1,
    )
    g_inv = np.linalg.inv(basis.T @ (w2[:, None] * basis))

    ry0 = _correlate1d(pix, g, 0)
    ry1 = _correlate1d(pix, coords * g, 0)
    ry2 = _correlate1d(pix, coords**2 * g, 0)
    moments = np.stack(
        [
            _correlate1d(ry0, g, 1),  # m00
            _correlate1d(ry0, coords * g, 1),  # m10
            _correlate1d(ry1, g, 1),  # m01
            _correlate1d(ry0, coords**2 * g, 1),  # m20
            _correlate1d(ry2, g, 1),  # m02
            _correlate1d(ry1, coords * g, 1),  # m11
        ]
    )
    coef = np.einsum("ij,jhw->ihw", g_inv, moments)
    a = np.stack([coef[3], coef[5] / 2.0, coef[4]], axis=-1)
    b = np.stack([coef[1], coef[2]], axis=-1)
    return PolyField(a=a, b=b, c=coef[0])


def flow_iteration(p1: PolyField, p2: PolyField, prior: FlowField, w: int) -> FlowField:
    """One displacement refinement from a pair of polynomial expansions.

    p2 coefficients are sampled at the prior displacement rounded to integer
    pixels (clamped to the image); the averaged-A constraint is then solved
    over a Gaussian window of width w.  Pixels whose 2x2 system determinant
    falls below 1e-12 keep the prior displacement.
    """
    if p1.shape != p2.shape or prior.shape != p1.shape:
        raise ValueError("field dimensions disagree")
    if w % 2 == 0 or w < 3:
        raise ValueError(f"averaging window must be odd and >= 3, got {w}")
    h, width = p1.shape

    dxr = np.rint(prior.vx)
    dyr = np.rint(prior.vy)
    yy, xx = np.meshgrid(np.arange(h), np.arange(width), indexing="ij")
    gx = np.clip(xx + dxr.astype(int), 0, width - 1)
    gy = np.clip(yy + dyr.astype(int), 0, h - 1)

    a2 = p2.a[gy, gx]
    b2 = p2.b[gy, gx]
    axx = 0.5 * (p1.a[..., 0] + a2[..., 0])
    axy = 0.5 * (p1.a[..., 1] + a2[..., 1])
    ayy = 0.5 * (p1.a[..., 2] + a2[..., 2])
    db_x = -0.5 * (b2[..., 0] - p1.b[..., 0]) + axx * dxr + axy * dyr
    db_y = -0.5 * (b2[..., 1] - p1.b[..., 1]) + axy * dxr + ayy * dyr

    # window-weighted normal equations (sum g A'A) d = sum g A'db; weights
    # peak at 1 (not normalized) so the 1e-12 determinant gate means the
    # same thing at every window size
    x = np.arange(w, dtype=float) - (w - 1) / 2.0
    kern = np.exp(-(x**2) / (2.0 * (0.15 * w) ** 2))
    s11 = _blur(axx * axx + axy * axy, kern)
    s12 = _blur(axy * (axx + ayy), kern)
    s22 = _blur(axy * axy + ayy * ayy, kern)
    h1 = _blur(axx * db_x + axy * db_y, kern)
    h2 = _blur(axy * db_x + ayy * db_y, kern)

    det = s11 * s22 - s12 * s12
    good = det >= 1e-12
    safe = np.where(good, det, 1.0)
    vx = np.where(good, (s22 * h1 - s12 * h2) / safe, prior.vx)
    vy = np.where(good, (s11 * h2 - s12 * h1) / safe, prior.vy)

    m = w // 2
    interior = det[m : h - m, m : width - m]
    quality = float(interior.mean()) if interior.size else 0.0
    return FlowField(vx=vx, vy=vy, dt=prior.dt, quality=quality)


@dataclass
class FramePyramid:
    """Per-level polynomial expansions of one frame, finest level first."""

    fields: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    timestamp: float = 0.0


def _level_count(shape, params: FlowParams) -> int:
    # drop levels whose smoothed image would shrink below the minimum frame
    levels = params.pyramid_levels
    while levels > 1:
        s = params.pyramid_scale ** (levels - 1)
        if round(min(shape) * s) >= 16:
            break
        levels -= 1
    return levels


def frame_pyramid(frame: ImageFrame, params: FlowParams) -> FramePyramid:
    """Blur + subsample pyramid with a polynomial expansion per level.

    Level k is the original blurred at sigma = (scale**-k - 1)/2 and resized
    to round(dim * scale**k); level 0 is the untouched frame.
    """
    pix = _pixels(frame)
    pyr = FramePyramid(timestamp=frame.timestamp if isinstance(frame, ImageFrame) else 0.0)
    for k in range(_level_count(pix.shape, params)):
        scale = params.pyramid_scale**k
        if k == 0:
            level = pix
        else:
            sigma = (1.0 / scale - 1.0) * 0.5
            ksize = max(int(round(sigma * 5.0)) | 1, 3)
            blurred = _blur(pix, gaussian_kernel(ksize, sigma))
            level = _resize_bilinear(
                blurred,
                max(int(round(pix.shape[0] * scale)), 16),
                max(int(round(pix.shape[1] * scale)), 16),
            )
        pyr.fields.append(
            poly_expansion(level, params.expansion_window, params.expansion_sigma)
        )
        pyr.sizes.append(level.shape)
    return pyr


def flow_from_pyramids(
    pyr1: FramePyramid, pyr2: FramePyramid, params: FlowParams, dt: float
) -> FlowField:
    """Coarse-to-fine solve over two precomputed frame pyramids."""
    if pyr1.sizes != pyr2.sizes:
        raise ValueError("pyramids disagree in level sizes")
    flow = None
    for k in reversed(range(len(pyr1.fields))):
        h, w = pyr1.sizes[k]
        if flow is None:
            vx = np.zeros((h, w))
            vy = np.zeros((h, w))
        else:
            prev_h, prev_w = flow.shape
            vx = _resize_bilinear(flow.vx, h, w) * (w / prev_w)
            vy = _resize_bilinear(flow.vy, h, w) * (h / prev_h)
        flow = FlowField(vx=vx, vy=vy, dt=dt)
        for _ in range(params.iterations_per_level):
            flow = flow_iteration(pyr1.fields[k], pyr2.fields[k], flow, params.averaging_window)
            np.clip(flow.vx, -params.max_displacement, params.max_displacement, out=flow.vx)
            np.clip(flow.vy, -params.max_displacement, params.max_displacement, out=flow.vy)
    return flow


def farneback_flow(
    f1: ImageFrame, f2: ImageFrame, params: FlowParams | None = None
) -> FlowField:
    """Dense displacement of f2 relative to f1 (positive = feature motion)."""
    if params is None:
        params = FlowParams()
    if f1.pixels.shape != f2.pixels.shape:
        raise ValueError("frame dimensions disagree")
    if f2.timestamp <= f1.timestamp:
        raise ValueError("f2 must be later than f1")
    dt = f2.timestamp - f1.timestamp
    return flow_from_pyramids(
        frame_pyramid(f1, params), frame_pyramid(f2, params), params, dt
    )


def mean_flow_rate(flow: FlowField, border_margin: int):
    """Component-wise interior median of the field, per second.

    The median keeps locally failed matches from dragging the estimate.
    """
    if border_margin < 0:
        raise ValueError("border margin must be >= 0")
    h, w = flow.shape
    if 2 * border_margin >= min(h, w):
        raise ValueError("border margin leaves no interior pixels")
    sl = (slice(border_margin, h - border_margin), slice(border_margin, w - border_margin))
    return np.array(
        [np.median(flow.vx[sl]) / flow.dt, np.median(flow.vy[sl]) / flow.dt]
    )


def rotation_flow_rate(intr: CameraIntrinsics, omega) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel angular flow rate (px/s) induced by pure body rotation.

    For a point at normalized coordinates (x, y) and body rates w:
      u_dot/f = -wy (1 + x^2) + wz y + wx x y
      v_dot/f =  wx (1 + y^2) - wz x - wy x y
    which reduces to (-f wy, f wx) at the image center.
    """
    wx, wy, wz = (float(c) for c in omega)
    xs = (np.arange(intr.width) - intr.cx) / intr.focal_px
    ys = (np.arange(intr.height) - intr.cy) / intr.focal_px
    xh, yh = np.meshgrid(xs, ys)
    u_rot = intr.focal_px * (-wy * (1.0 + xh * xh) + wz * yh + wx * xh * yh)
    v_rot = intr.focal_px * (wx * (1.0 + yh * yh) - wz * xh - wy * xh * yh)
    return u_rot, v_rot


def mean_translation_rate(
    flow: FlowField, omega, intr: CameraIntrinsics, border_margin: int
):
    """Interior median flow rate with the rotational field removed per pixel.

    Subtracting the full projective rotation flow before the median keeps
    attitude rates from leaking into the velocity estimate; the scalar
    center-pixel correction alone leaves O(w * (x/f)^2) residuals.
    """
    if border_margin < 0:
        raise ValueError("border margin must be >= 0")
    h, w = flow.shape
    if 2 * border_margin >= min(h, w):
        raise ValueError("border margin leaves no interior pixels")
    u_rot, v_rot = rotation_flow_rate(intr, omega)
    sl = (
        slice(border_margin, h - border_margin),
        slice(border_margin, w - border_margin),
    )
    return np.array(
        [
            np.median(flow.vx[sl] / flow.dt - u_rot[sl]),
            np.median(flow.vy[sl] / flow.dt - v_rot[sl]),
        ]
    )


def flow_to_body_velocity(
    rate, gyro, h_agl: float, intr: CameraIntrinsics, min_altitude: float = 0.1
):
    """Body-frame horizontal velocity from an image flow rate.

    Nadir camera aligned with the body axes: the angular flow rate/f is the
    sum of a translation term -v/h and the attitude-rate term (-wy, wx);
    subtracting the gyro contribution and scaling by height gives velocity.
    Forward motion over static ground produces negative image x flow.
    Returns None when h_agl is too low for the ground-plane model.
    """
    if h_agl <= min_altitude:
        return None
    rate = np.asarray(rate, dtype=float)
    gyro = np.asarray(gyro, dtype=float)
    angular = rate / intr.focal_px
    translational = angular - np.array([-gyro[1], gyro[0]])
    return -h_agl * translational
