"""Open-mouth shadow segmentation and shape measurement.

Pipeline: color/intensity threshold -> local voting cleanup -> largest
8-connected blob -> area and coordinate-spread features. Everything
operates on the de-rotated mouth window, so the standard deviations read
directly as mouth height and width.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import MouthClosed

# neighborhood of the voting rules: 5 wide, 3 tall, center included
VOTE_HALF_W = 2
VOTE_HALF_H = 1
VOTE_CLEAR_BELOW = 4   # set pixel cleared when neighborhood count < 4
VOTE_SET_ABOVE = 4     # clear pixel set when neighborhood count > 4

WIDTH_FLOOR = 0.25     # px, guards the H/W ratio when W collapses
ASPECT_MAX = 4.0

_EIGHT = np.ones((3, 3), dtype=np.uint8)


@dataclass(frozen=True)
class SegmentationThresholds:
    red_min: int = 100
    intensity_max: int = 90

    def validate(self) -> "SegmentationThresholds":
        for name, v in (("red_min", self.red_min),
                        ("intensity_max", self.intensity_max)):
            if not 0 <= v <= 255:
                raise ValueError(f"{name} must be in [0, 255], got {v}")
        return self


@dataclass(frozen=True)
class Blob:
    """Pixel coordinate cloud of one connected component (window space)."""
    xs: np.ndarray
    ys: np.ndarray

    @property
    def count(self) -> int:
        return len(self.xs)

    @property
    def pixel_coords(self) -> list:
        return list(zip(self.xs.tolist(), self.ys.tolist()))


@dataclass(frozen=True)
class MouthFeatures:
    """Shape parameters of the open-mouth region plus tracker context."""
    area: int
    height: float
    width: float
    aspect: float
    c_n: tuple
    a_n: float

    def as_dict(self) -> dict:
        """Flat mapping-layer inputs (nostril midpoint split into cx/cy)."""
        return {"area": float(self.area), "height": self.height,
                "width": self.width, "aspect": self.aspect,
                "cx": self.c_n[0], "cy": self.c_n[1]}


def segment_mouth(sub, thr: SegmentationThresholds) -> np.ndarray:
    """Threshold an RGB mouth window into the cavity-candidate mask.

    A pixel is selected when its red channel exceeds red_min and its
    intensity (floored channel mean) is below intensity_max. Float input
    (from bilinear extraction) is handled with the same floor semantics.
    """
    sub = np.asarray(sub)
    if sub.size == 0:
        return np.zeros(sub.shape[:2], dtype=bool)
    r = sub[:, :, 0].astype(np.float64)
    s = sub.astype(np.float64).sum(axis=2)
    intensity = np.floor(s / 3.0)
    return (r > thr.red_min) & (intensity < thr.intensity_max)


def _neighborhood_counts(mask: np.ndarray) -> np.ndarray:
    """Set-pixel count in each 5x3 neighborhood; outside cells count 0."""
    padded = np.pad(mask.astype(np.int32),
                    ((VOTE_HALF_H, VOTE_HALF_H), (VOTE_HALF_W, VOTE_HALF_W)))
    # integral image: rectangle sums in O(1) per pixel
    ii = padded.cumsum(axis=0).cumsum(axis=1)
    ii = np.pad(ii, ((1, 0), (1, 0)))
    h, w = mask.shape
    fh = 2 * VOTE_HALF_H + 1
    fw = 2 * VOTE_HALF_W + 1
    return (ii[fh:fh + h, fw:fw + w] - ii[fh:fh + h, :w]
            - ii[:h, fw:fw + w] + ii[:h, :w])


def vote_filter(mask: np.ndarray) -> np.ndarray:
    """One simultaneous voting pass over the input mask.

    Set pixels with fewer than 4 set neighbors (5x3 box, self included)
    are cleared; clear pixels with more than 4 are set. Both rules read
    the input mask only, so no cascade happens within the pass.
    """
    mask = np.asarray(mask, dtype=bool)
    cnt = _neighborhood_counts(mask)
    return (mask & (cnt >= VOTE_CLEAR_BELOW)) | (~mask & (cnt > VOTE_SET_ABOVE))


def largest_component(mask: np.ndarray) -> Blob:
    """Largest 8-connected component; ties go to the one whose first
    pixel comes earliest in row-major order."""
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=_EIGHT)
    if n == 0:
        raise MouthClosed("no set pixels in mouth mask")
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    best_size = counts.max()
    candidates = np.flatnonzero(counts == best_size)
    if len(candidates) == 1:
        best = candidates[0]
    else:
        flat = labels.ravel()
        best = min(candidates,
                   key=lambda lb: int(np.flatnonzero(flat == lb)[0]))
    ys, xs = np.nonzero(labels == best)
    return Blob(xs=xs.astype(np.int64), ys=ys.astype(np.int64))


def shape_features(blob: Blob | None, geometry) -> MouthFeatures:
    """Area and coordinate-spread features of the blob.

    height/width are population standard deviations of the y/x pixel
    coordinates. None (closed mouth) reads as all-zero shape values; the
    nostril midpoint and roll angle ride along either way.
    """
    if blob is None or isinstance(blob, MouthClosed) or blob.count == 0:
        return MouthFeatures(area=0, height=0.0, width=0.0, aspect=0.0,
                             c_n=geometry.c_n, a_n=geometry.a_n)
    height = float(np.std(blob.ys))
    width = float(np.std(blob.xs))
    aspect = height / max(width, WIDTH_FLOOR)
    aspect = min(ASPECT_MAX, max(0.0, aspect))
    return MouthFeatures(area=blob.count, height=height, width=width,
                         aspect=aspect, c_n=geometry.c_n, a_n=geometry.a_n)
