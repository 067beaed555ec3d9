"""Binary PGM frame I/O plus CSV / SVG export of flow fields."""

from __future__ import annotations

import numpy as np

from .optflow import FlowField, ImageFrame


def write_pgm(path, pixels) -> None:
    """8-bit binary (P5) PGM; intensities in [0,1] quantized by rounding."""
    pix = pixels.pixels if isinstance(pixels, ImageFrame) else np.asarray(pixels)
    data = np.rint(np.clip(pix, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM into float intensities in [0, 1].

    Handles comment lines and arbitrary header whitespace; raises ValueError
    on anything that is not an 8-bit P5 file.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # header = magic + width + height + maxval, tokens separated by
    # whitespace, '#' starts a comment running to end of line
    tokens = []
    pos = 2
    while len(tokens) < 3:
        if pos >= len(raw):
            raise ValueError(f"{path}: truncated PGM header")
        ch = raw[pos : pos + 1]
        if ch == b"#":
            pos = raw.index(b"\n", pos) + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(raw) and not raw[end : end + 1].isspace():
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed PGM header") from exc
    if maxval <= 0 or maxval > 255:
        raise ValueError(f"{path}: unsupported PGM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    data = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    if data.size != width * height:
        raise ValueError(f"{path}: truncated PGM pixel data")
    return data.reshape(height, width).astype(float) / float(maxval)


def read_frame(path, timestamp: float = 0.0) -> ImageFrame:
    return ImageFrame(pixels=read_pgm(path), timestamp=timestamp)


def write_flow_csv(path, flow: FlowField) -> None:
    """One row per pixel: x, y, vx, vy (pixels)."""
    h, w = flow.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write("x,y,vx,vy\n")
        for y in range(h):
            for x in range(w):
                fh.write(f"{x},{y},{flow.vx[y, x]:.12g},{flow.vy[y, x]:.12g}\n")


def write_flow_svg(path, flow: FlowField, step: int = 8, gain: float = 3.0) -> None:
    """Quiver rendering: green displacement vectors on a subsampled grid."""
    h, w = flow.shape
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        '<g stroke="green" stroke-width="0.6">',
    ]
    for y in range(step // 2, h, step):
        for x in range(step // 2, w, step):
            x2 = x + gain * flow.vx[y, x]
            y2 = y + gain * flow.vy[y, x]
            lines.append(
                f'<line x1="{x}" y1="{y}" x2="{x2:.3f}" y2="{y2:.3f}"/>'
            )
    lines.append("</g>")
    lines.append("</svg>")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
