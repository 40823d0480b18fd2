"""Nostril detection and tracking from image projections.

The nostrils are the two dominant dark pits in a search window below the
nose: their columns produce two local minima in the horizontal intensity
projection, and each nostril's row produces a minimum in the vertical
projection of a narrow column slice around it. Tracking re-detects every
frame inside a rotated window predicted from the motion of the nostril
midpoint, so the whole tracker carries no appearance model at all.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegeneratePair,
    EmptyRegion,
    MouthClosed,
    NostrilsNotFound,
    TrackingLost,
)
from .segment import (
    SegmentationThresholds,
    largest_component,
    segment_mouth,
    shape_features,
    vote_filter,
)


@dataclass(frozen=True)
class VisionParams:
    """Tunable constants of the tracker; defaults are the documented ones."""
    alpha: float = 1.0            # constant-velocity prediction gain
    beta_d: float = 0.5           # spacing smoothing weight (new sample)
    beta_a: float = 0.5           # angle smoothing weight
    smooth_window: int = 5        # moving-average width for projections
    prominence: float = 10.0      # minimum depth below the higher flank
    search_kw: float = 0.9        # nostril search half width, units of d_n
    search_kh: float = 0.5
    mouth_k_down: float = 1.5     # mouth center offset below c_n, units of d_n
    mouth_k_w: float = 1.0
    mouth_k_h: float = 0.75
    min_track_d: float = 8.0      # below this the face is too small to use
    lock_lo: float = 0.5          # sanity band around the initial spacing
    lock_hi: float = 2.0
    init_x0: float = 0.25         # fixed top-central init window, fractions
    init_x1: float = 0.75
    init_y0: float = 0.05
    init_y1: float = 0.35


DEFAULT_PARAMS = VisionParams()


@dataclass(frozen=True)
class Frame:
    width: int
    height: int
    pixels: np.ndarray            # (height, width, 3) uint8, row-major
    seq: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        if self.width < 64 or self.height < 48:
            raise ValueError("frame must be at least 64x48 for the "
                             "initialization window to exist")
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(f"pixel array {self.pixels.shape} does not "
                             f"match {self.height}x{self.width}x3")


@dataclass(frozen=True)
class RotatedRegion:
    center: tuple
    half_width: float
    half_height: float
    angle: float                  # radians CCW from the image horizontal

    def __post_init__(self):
        if not (self.half_width > 0 and self.half_height > 0):
            raise ValueError("region half sizes must be positive")


@dataclass(frozen=True)
class NostrilPair:
    """Two nostril centers, canonically ordered left-to-right."""
    n1: tuple
    n2: tuple

    def __post_init__(self):
        a = (float(self.n1[0]), float(self.n1[1]))
        b = (float(self.n2[0]), float(self.n2[1]))
        if b < a:
            a, b = b, a
        object.__setattr__(self, "n1", a)
        object.__setattr__(self, "n2", b)


@dataclass(frozen=True)
class NostrilGeometry:
    d_n: float                    # spacing, px
    c_n: tuple                    # midpoint
    a_n: float                    # roll angle, radians in (-pi/2, pi/2]


@dataclass(frozen=True)
class TrackState:
    geometry: NostrilGeometry     # smoothed d_n/a_n, raw c_n
    pair: NostrilPair             # raw positions from the last frame
    c_prev: tuple                 # midpoint one frame earlier
    d_init: float                 # spacing at initialization (lock band)
    alpha: float = 1.0
    beta_d: float = 0.5
    beta_a: float = 0.5
    frames_since_lock: int = 0


# projections and minima

def _to_gray(sub: np.ndarray) -> np.ndarray:
    sub = np.asarray(sub, dtype=np.float64)
    if sub.ndim == 3:
        return sub.mean(axis=2)
    return sub


def project_and_smooth(sub, axis: str, window: int = 5) -> np.ndarray:
    """Mean-intensity projection of a region, moving-average smoothed.

    "horizontal" projects onto the x axis (one value per column);
    "vertical" onto y (one per row). Edges are replicated so the output
    keeps the projection's length.
    """
    gray = _to_gray(sub)
    if gray.size == 0:
        raise EmptyRegion("projection over zero pixels")
    if axis == "horizontal":
        proj = gray.mean(axis=0)
    elif axis == "vertical":
        proj = gray.mean(axis=1)
    else:
        raise ValueError(f"axis must be horizontal or vertical, got {axis!r}")
    if window < 1 or window % 2 == 0:
        raise ValueError(f"smoothing window must be odd and >= 1, got {window}")
    if window > len(proj):
        raise ValueError("smoothing window longer than the projection")
    if window == 1:
        return proj
    half = window // 2
    padded = np.pad(proj, half, mode="edge")
    kernel = np.full(window, 1.0 / window)
    return np.convolve(padded, kernel, mode="valid")


def _local_minima(p: np.ndarray, prominence: float) -> list:
    """Interior local minima at least `prominence` below the higher of
    their flanking maxima. Returns indices."""
    n = len(p)
    mins = [i for i in range(1, n - 1) if p[i] < p[i - 1] and p[i] <= p[i + 1]]
    out = []
    for k, i in enumerate(mins):
        lo = mins[k - 1] if k > 0 else 0
        hi = mins[k + 1] if k + 1 < len(mins) else n - 1
        left_flank = p[lo:i + 1].max()
        right_flank = p[i:hi + 1].max()
        if max(left_flank, right_flank) - p[i] >= prominence:
            out.append(i)
    return out


def _parabolic(p: np.ndarray, i: int) -> float:
    if i <= 0 or i >= len(p) - 1:
        return float(i)
    den = p[i - 1] - 2.0 * p[i] + p[i + 1]
    if den <= 0.0:
        return float(i)
    d = 0.5 * (p[i - 1] - p[i + 1]) / den
    return float(i) + float(np.clip(d, -0.5, 0.5))


def _odd_at_most(window: int, n: int) -> int:
    w = min(window, n)
    if w % 2 == 0:
        w -= 1
    return max(w, 1)


def find_nostril_minima(gray, origin=(0.0, 0.0), *, smooth_window: int = 5,
                        prominence: float = 10.0) -> NostrilPair:
    """Locate the two nostril pits in a grayscale search window.

    The two deepest qualifying minima of the horizontal projection give
    the x coordinates; each nostril's y comes from the minimum of a
    vertical projection over a column slice a quarter-spacing wide around
    its x. Positions are subpixel (parabolic fit) and mapped to image
    space through the window origin.
    """
    gray = _to_gray(gray)
    h, w = gray.shape
    if h < 1 or w < 3:
        raise NostrilsNotFound("search window too small")
    wx = _odd_at_most(smooth_window, w)
    h_proj = project_and_smooth(gray, "horizontal", wx)
    cand = _local_minima(h_proj, prominence)
    if len(cand) < 2:
        raise NostrilsNotFound(f"{len(cand)} qualifying minima, need 2")
    cand.sort(key=lambda i: h_proj[i])
    i1, i2 = sorted(cand[:2])
    x1 = _parabolic(h_proj, i1)
    x2 = _parabolic(h_proj, i2)
    d_est = x2 - x1

    def slice_y(xc: float) -> float:
        c0 = int(math.floor(xc - d_est / 4.0))
        c1 = int(math.ceil(xc + d_est / 4.0)) + 1
        c0 = max(0, c0)
        c1 = min(w, max(c1, c0 + 1))
        wy = _odd_at_most(smooth_window, h)
        v_proj = project_and_smooth(gray[:, c0:c1], "vertical", wy)
        j = int(np.argmin(v_proj))
        return _parabolic(v_proj, j)

    y1 = slice_y(x1)
    y2 = slice_y(x2)
    ox, oy = float(origin[0]), float(origin[1])
    return NostrilPair((ox + x1, oy + y1), (ox + x2, oy + y2))


# geometry and prediction

def nostril_geometry(pair: NostrilPair) -> NostrilGeometry:
    """Spacing, midpoint and roll angle of a nostril pair."""
    if pair.n1 == pair.n2:
        raise DegeneratePair("identical nostril coordinates")
    dx = pair.n2[0] - pair.n1[0]
    dy = pair.n2[1] - pair.n1[1]
    a = math.atan2(dy, dx)
    # canonical ordering keeps dx >= 0, so a is already in [-pi/2, pi/2];
    # fold the single excluded endpoint
    if a <= -math.pi / 2.0:
        a += math.pi
    return NostrilGeometry(
        d_n=math.hypot(dx, dy),
        c_n=(0.5 * (pair.n1[0] + pair.n2[0]),
             0.5 * (pair.n1[1] + pair.n2[1])),
        a_n=a,
    )


def predict_center(c_t, c_tm1, alpha: float):
    """Constant-velocity midpoint prediction for the next frame."""
    return (c_t[0] + alpha * (c_t[0] - c_tm1[0]),
            c_t[1] + alpha * (c_t[1] - c_tm1[1]))


# rotated window extraction

def region_corners(region: RotatedRegion) -> list:
    cx, cy = region.center
    cos = math.cos(region.angle)
    sin = math.sin(region.angle)
    out = []
    for u, v in ((-region.half_width, -region.half_height),
                 (region.half_width, -region.half_height),
                 (region.half_width, region.half_height),
                 (-region.half_width, region.half_height)):
        out.append((cx + u * cos - v * sin, cy + u * sin + v * cos))
    return out


def region_inside(region: RotatedRegion, width: int, height: int) -> bool:
    return all(0.0 <= x <= width - 1 and 0.0 <= y <= height - 1
               for x, y in region_corners(region))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def extract_region(pixels, region: RotatedRegion) -> np.ndarray:
    """Bilinear resample of a rotated window into an upright float array.

    Output pixel (i, j) samples the image at
    center + R(angle) . (i - (W-1)/2, j - (H-1)/2), so the window's local
    +u axis lies along the nostril line. Samples outside the pixel grid
    read as black with a hard cut (no partial fade).
    """
    pixels = np.asarray(pixels)
    rgb = pixels.ndim == 3
    h, w = pixels.shape[:2]
    wo = max(1, _round_half_up(2.0 * region.half_width))
    ho = max(1, _round_half_up(2.0 * region.half_height))
    u = np.arange(wo, dtype=np.float64) - (wo - 1) / 2.0
    v = np.arange(ho, dtype=np.float64) - (ho - 1) / 2.0
    cos = math.cos(region.angle)
    sin = math.sin(region.angle)
    x = region.center[0] + u[None, :] * cos - v[:, None] * sin
    y = region.center[1] + u[None, :] * sin + v[:, None] * cos
    valid = (x >= 0.0) & (x <= w - 1) & (y >= 0.0) & (y <= h - 1)
    xc = np.clip(x, 0.0, w - 1)
    yc = np.clip(y, 0.0, h - 1)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    if rgb:
        fx = fx[..., None]
        fy = fy[..., None]
        valid_b = valid[..., None]
    else:
        valid_b = valid
    p00 = pixels[y0, x0].astype(np.float64)
    p01 = pixels[y0, x1].astype(np.float64)
    p10 = pixels[y1, x0].astype(np.float64)
    p11 = pixels[y1, x1].astype(np.float64)
    out = ((1.0 - fy) * ((1.0 - fx) * p00 + fx * p01)
           + fy * ((1.0 - fx) * p10 + fx * p11))
    return np.where(valid_b, out, 0.0)


# initialization and tracking

def _init_window(frame: Frame, params: VisionParams, click=None):
    x0 = _round_half_up(params.init_x0 * frame.width)
    x1 = _round_half_up(params.init_x1 * frame.width)
    y0 = _round_half_up(params.init_y0 * frame.height)
    y1 = _round_half_up(params.init_y1 * frame.height)
    if click is not None:
        # same-size window recentred on the user's click, clamped inside
        ww, hh = x1 - x0, y1 - y0
        x0 = int(np.clip(_round_half_up(click[0] - ww / 2.0),
                         0, frame.width - ww))
        y0 = int(np.clip(_round_half_up(click[1] - hh / 2.0),
                         0, frame.height - hh))
        x1, y1 = x0 + ww, y0 + hh
    return x0, x1, y0, y1


def initialize(frame: Frame, click=None,
               params: VisionParams = DEFAULT_PARAMS) -> TrackState:
    """Build a fresh track state from the top-central window.

    The user gesture only triggers this call; with a click position the
    window is recentred there (same size), otherwise the fixed window is
    used. NostrilsNotFound propagates so the caller can ask the user to
    reposition.
    """
    x0, x1, y0, y1 = _init_window(frame, params, click)
    gray = _to_gray(frame.pixels[y0:y1, x0:x1])
    pair = find_nostril_minima(gray, origin=(float(x0), float(y0)),
                               smooth_window=params.smooth_window,
                               prominence=params.prominence)
    geo = nostril_geometry(pair)
    return TrackState(geometry=geo, pair=pair, c_prev=geo.c_n,
                      d_init=geo.d_n, alpha=params.alpha,
                      beta_d=params.beta_d, beta_a=params.beta_a,
                      frames_since_lock=0)


def track_step(frame: Frame, state: TrackState,
               params: VisionParams = DEFAULT_PARAMS) -> TrackState:
    """Re-detect the nostrils inside the predicted, de-rotated window.

    Raises TrackingLost when the window leaves the image, the pits are
    not found, or the smoothed spacing exits its sanity band.
    """
    geo = state.geometry
    pred = predict_center(geo.c_n, state.c_prev, state.alpha)
    region = RotatedRegion(center=pred,
                           half_width=params.search_kw * geo.d_n,
                           half_height=params.search_kh * geo.d_n,
                           angle=geo.a_n)
    if not region_inside(region, frame.width, frame.height):
        raise TrackingLost("nostril search window left the image")
    sub = extract_region(frame.pixels, region)
    gray = _to_gray(sub)
    try:
        local = find_nostril_minima(gray, origin=(0.0, 0.0),
                                    smooth_window=params.smooth_window,
                                    prominence=params.prominence)
    except NostrilsNotFound as e:
        raise TrackingLost(str(e)) from e

    # window coordinates back to image space through the region transform
    ho, wo = gray.shape
    cos = math.cos(region.angle)
    sin = math.sin(region.angle)

    def to_image(p):
        u = p[0] - (wo - 1) / 2.0
        v = p[1] - (ho - 1) / 2.0
        return (region.center[0] + u * cos - v * sin,
                region.center[1] + u * sin + v * cos)

    pair = NostrilPair(to_image(local.n1), to_image(local.n2))
    raw = nostril_geometry(pair)
    d_new = state.beta_d * raw.d_n + (1.0 - state.beta_d) * geo.d_n
    # plain blend: the face roll domain is far from the +-pi/2 wrap
    a_new = state.beta_a * raw.a_n + (1.0 - state.beta_a) * geo.a_n
    if not (params.lock_lo * state.d_init <= d_new
            <= params.lock_hi * state.d_init):
        raise TrackingLost(f"spacing {d_new:.1f} px left the lock band")
    if d_new < params.min_track_d:
        raise TrackingLost(f"face too small to track ({d_new:.1f} px)")
    new_geo = NostrilGeometry(d_n=d_new, c_n=raw.c_n, a_n=a_new)
    return replace(state, geometry=new_geo, pair=pair, c_prev=geo.c_n,
                   frames_since_lock=state.frames_since_lock + 1)


def mouth_window(geometry: NostrilGeometry,
                 params: VisionParams = DEFAULT_PARAMS) -> RotatedRegion:
    """Mouth region: below the nostril midpoint along the face normal,
    sized and rotated with the nostril line."""
    d = geometry.d_n
    down = (-math.sin(geometry.a_n), math.cos(geometry.a_n))
    cx = geometry.c_n[0] + params.mouth_k_down * d * down[0]
    cy = geometry.c_n[1] + params.mouth_k_down * d * down[1]
    return RotatedRegion(center=(cx, cy),
                         half_width=params.mouth_k_w * d,
                         half_height=params.mouth_k_h * d,
                         angle=geometry.a_n)


def analyze_frame(frame: Frame, state: TrackState,
                  thresholds: SegmentationThresholds,
                  params: VisionParams = DEFAULT_PARAMS):
    """One full vision step: track, extract mouth, segment, measure.

    Returns (new_state, features, mask, mouth_region). TrackingLost
    propagates; the caller owns the hold-and-reinit policy.
    """
    new_state = track_step(frame, state, params)
    region = mouth_window(new_state.geometry, params)
    sub = extract_region(frame.pixels, region)
    mask = vote_filter(segment_mouth(sub, thresholds))
    try:
        blob = largest_component(mask)
    except MouthClosed:
        blob = None
    features = shape_features(blob, new_state.geometry)
    return new_state, features, mask, region
