"""Synthetic face frames with exact nostril ground truth.

Test fixture quality rendering, not photorealism: a skin-coloured field
with a mild deterministic texture, two dark nostril pits, and a mouth
drawn as a lip ring around a dark cavity whose height follows the
opening amount. Everything is analytic so tests can compare tracker
output against closed-form truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .vision import Frame

SKIN = (205, 160, 140)
NOSTRIL = (45, 28, 24)
CAVITY = (130, 30, 28)
LIP = (160, 70, 60)

# nostril pit semi-axes in units of the spacing; slightly taller than wide
# so the pits stay prominent in a projection over a tall window
_NOSTRIL_RX = 0.125
_NOSTRIL_RY = 0.18

_MOUTH_DOWN = 1.5         # mouth center below the nostril midpoint, units of d
_MOUTH_RX = 0.55          # cavity half width, units of d
_MOUTH_RY = 0.35          # cavity half height at full opening, units of d
_LIP_PAD = 3.0            # lip ring thickness, px


@dataclass(frozen=True)
class FaceSpec:
    """Pose and articulation of one rendered face."""
    c_n: tuple = (320.0, 130.0)   # nostril midpoint
    d_n: float = 44.0             # nostril spacing, px
    roll: float = 0.0             # radians CCW
    mouth_open: float = 0.6       # 0 closed .. 1 fully open
    nostril_radius: float | None = None


def nostril_truth(spec: FaceSpec):
    """Exact nostril centers implied by the spec, left then right."""
    cx, cy = spec.c_n
    hx = 0.5 * spec.d_n * math.cos(spec.roll)
    hy = 0.5 * spec.d_n * math.sin(spec.roll)
    return (cx - hx, cy - hy), (cx + hx, cy + hy)


def _paint_ellipse(img: np.ndarray, center, rx: float, ry: float,
                   theta: float, color) -> None:
    """Alpha-blend a rotated ellipse with a ~1 px soft edge, in place."""
    h, w = img.shape[:2]
    cx, cy = center
    extent = max(rx, ry) + 2.0
    x0 = max(0, int(math.floor(cx - extent)))
    x1 = min(w, int(math.ceil(cx + extent)) + 1)
    y0 = max(0, int(math.floor(cy - extent)))
    y1 = min(h, int(math.ceil(cy + extent)) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    dx = xs - cx
    dy = ys - cy
    cos, sin = math.cos(theta), math.sin(theta)
    u = dx * cos + dy * sin
    v = -dx * sin + dy * cos
    rho = np.sqrt((u / rx) ** 2 + (v / ry) ** 2)
    # signed distance to the boundary, approximated for mild eccentricity
    cov = np.clip(0.5 - (rho - 1.0) * min(rx, ry), 0.0, 1.0)
    patch = img[y0:y1, x0:x1]
    patch += cov[..., None] * (np.asarray(color, dtype=np.float64) - patch)


def render_face(spec: FaceSpec, width: int = 640, height: int = 480,
                seq: int = 0, fps: float = 30.0, texture: bool = True,
                noise: float = 0.0, rng=None) -> Frame:
    """Render one frame of the synthetic face.

    `noise` adds Gaussian pixel noise of that sigma (needs `rng`);
    `texture` toggles the deterministic skin modulation.
    """
    img = np.empty((height, width, 3), dtype=np.float64)
    img[:] = SKIN
    if texture:
        xs = np.arange(width, dtype=np.float64)
        ys = np.arange(height, dtype=np.float64)
        tex = 3.0 * np.outer(np.cos(2.0 * math.pi * ys / 31.0),
                             np.sin(2.0 * math.pi * xs / 53.0))
        img += tex[..., None]

    d = spec.d_n
    cos, sin = math.cos(spec.roll), math.sin(spec.roll)
    mouth_c = (spec.c_n[0] - _MOUTH_DOWN * d * sin,
               spec.c_n[1] + _MOUTH_DOWN * d * cos)
    cav_rx = _MOUTH_RX * d
    cav_ry = _MOUTH_RY * d * spec.mouth_open
    _paint_ellipse(img, mouth_c, cav_rx + _LIP_PAD,
                   max(cav_ry, 0.0) + _LIP_PAD, spec.roll, LIP)
    if cav_ry >= 0.5:
        _paint_ellipse(img, mouth_c, cav_rx, cav_ry, spec.roll, CAVITY)

    if spec.nostril_radius is not None:
        n_rx = max(1.0, spec.nostril_radius)
        n_ry = max(1.0, 1.44 * spec.nostril_radius)
    else:
        n_rx = max(1.0, _NOSTRIL_RX * d)
        n_ry = max(1.0, _NOSTRIL_RY * d)
    for p in nostril_truth(spec):
        _paint_ellipse(img, p, n_rx, n_ry, spec.roll, NOSTRIL)

    if noise > 0.0:
        if rng is None:
            raise ValueError("pixel noise requires an rng")
        img += rng.normal(0.0, noise, size=img.shape)

    pixels = np.clip(np.rint(img), 0.0, 255.0).astype(np.uint8)
    return Frame(width=width, height=height, pixels=pixels, seq=seq,
                 timestamp=seq / fps)
