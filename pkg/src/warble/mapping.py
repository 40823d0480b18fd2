"""Feature -> control mapping.

Normalizes mouth features against a calibration, then routes them through
configurable curves onto synth controls and MIDI control changes. All
functions here are pure; Router is the one stateful wrapper (per-route
output smoothing at control rate).
"""
from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field, replace

from .errors import EmptyCapture, RouteConflict
from .syrinx import SyrinxControls

FEATURES = ("area", "height", "width", "aspect", "cx", "cy")

SYRINX_TARGETS = (
    "p_lung",
    "tension_left",
    "tension_right",
    "trachea_length_scale",
    "trachea_radius_scale",
)

# Fallback ranges used for uncalibrated features and for features whose
# captured spread is too small to be meaningful.
DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "area": (0.0, 800.0),
    "height": (0.0, 20.0),
    "width": (0.0, 20.0),
    "aspect": (0.0, 4.0),
    "cx": (0.0, 640.0),
    "cy": (0.0, 480.0),
}

CAL_MARGIN = 0.05          # widen captured ranges by 5% of span on both ends
CAL_MIN_SPREAD = 1e-9      # below this the capture is treated as constant

_MIDI_RE = re.compile(r"^midi_cc\((\d{1,3})\)$")


@dataclass(frozen=True)
class Calibration:
    """Per-feature (min, max) observed ranges, already margin-widened."""

    ranges: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_RANGES))

    def __post_init__(self):
        for name, (lo, hi) in self.ranges.items():
            if name not in FEATURES:
                raise ValueError(f"unknown feature {name!r}")
            if not lo < hi:
                raise ValueError(f"calibration for {name}: min must be < max")


@dataclass
class MapRoute:
    source: str
    target: str
    out_min: float
    out_max: float
    curve: str = "linear"
    invert: bool = False
    smoothing_ms: float = 0.0

    def validate(self) -> "MapRoute":
        if self.source not in FEATURES:
            raise ValueError(f"route source {self.source!r} unknown")
        if self.target not in SYRINX_TARGETS and self.midi_cc() is None:
            raise ValueError(f"route target {self.target!r} unknown")
        if not self.out_min < self.out_max:
            raise ValueError("route needs out_min < out_max (use invert "
                             "to reverse direction)")
        if self.curve not in ("linear", "exponential"):
            raise ValueError(f"unknown curve {self.curve!r}")
        if self.curve == "exponential" and self.out_min <= 0.0:
            raise ValueError("exponential curve requires out_min > 0")
        if self.smoothing_ms < 0.0:
            raise ValueError("smoothing_ms must be >= 0")
        return self

    def midi_cc(self) -> int | None:
        m = _MIDI_RE.match(self.target)
        if not m:
            return None
        n = int(m.group(1))
        if not 0 <= n <= 127:
            raise ValueError(f"midi cc number {n} outside [0, 127]")
        return n

    def shape(self, n: float) -> float:
        """Map a normalized value in [0,1] to target units."""
        if self.invert:
            n = 1.0 - n
        if self.curve == "exponential":
            return self.out_min * (self.out_max / self.out_min) ** n
        return self.out_min + n * (self.out_max - self.out_min)


@dataclass
class ControlFrame:
    seq: int
    time_s: float
    syrinx: SyrinxControls
    midi: list[tuple[int, int]] = field(default_factory=list)


def validate_routes(routes: list[MapRoute]) -> list[MapRoute]:
    """Validate each route and reject duplicate targets (load-time check)."""
    seen: set[str] = set()
    for r in routes:
        r.validate()
        if r.target in seen:
            raise RouteConflict(f"two routes target {r.target}")
        seen.add(r.target)
    return routes


def normalize(features: dict[str, float], cal: Calibration) -> dict[str, float]:
    """Clamp each feature into [0,1] against its calibrated range."""
    out = {}
    for name in FEATURES:
        lo, hi = cal.ranges.get(name, DEFAULT_RANGES[name])
        n = (features[name] - lo) / (hi - lo)
        out[name] = min(1.0, max(0.0, n))
    return out


def apply_routes(normalized: dict[str, float], routes: list[MapRoute],
                 defaults: SyrinxControls, seq: int, time_s: float,
                 ) -> ControlFrame:
    """Pure route application: unrouted synth targets keep their defaults.

    MIDI targets quantize the (possibly inverted) normalized value directly:
    value = floor(n * 127 + 0.5); curve and out range do not apply to them.
    """
    controls = replace(defaults)
    midi: list[tuple[int, int]] = []
    for r in routes:
        n = normalized[r.source]
        cc = r.midi_cc()
        if cc is not None:
            v = n if not r.invert else 1.0 - n
            midi.append((cc, int(math.floor(v * 127.0 + 0.5))))
        else:
            setattr(controls, r.target, r.shape(n))
    return ControlFrame(seq=seq, time_s=time_s, syrinx=controls, midi=midi)


def calibrate_capture(stream, duration_s: float | None = None) -> Calibration:
    """Running min/max over a feature-dict stream, widened by 5% margins.

    Features whose captured spread is below CAL_MIN_SPREAD fall back to
    their default ranges. duration_s is accepted for interface symmetry
    with the live capture path; the stream is consumed in full either way.
    """
    lo = {k: math.inf for k in FEATURES}
    hi = {k: -math.inf for k in FEATURES}
    count = 0
    for features in stream:
        count += 1
        for k in FEATURES:
            v = float(features[k])
            if v < lo[k]:
                lo[k] = v
            if v > hi[k]:
                hi[k] = v
    if count == 0:
        raise EmptyCapture("calibration capture saw no frames")
    ranges = {}
    for k in FEATURES:
        span = hi[k] - lo[k]
        if span < CAL_MIN_SPREAD:
            ranges[k] = DEFAULT_RANGES[k]
        else:
            m = CAL_MARGIN * span
            ranges[k] = (lo[k] - m, hi[k] + m)
    return Calibration(ranges=ranges)


class Router:
    """Stateful mapping front end: apply_routes plus per-route smoothing.

    Smoothing is a one-pole EMA on the routed output value, stepped once
    per control frame; smoothing_ms = 0 passes values straight through.
    MIDI routes smooth the pre-quantization value and floor at emit.
    """

    def __init__(self, routes: list[MapRoute], defaults: SyrinxControls,
                 fps: float):
        self.routes = validate_routes(list(routes))
        self.defaults = defaults
        dt = 1.0 / float(fps)
        self._k = []
        self._state: list[float | None] = []
        for r in self.routes:
            if r.smoothing_ms <= 0.0:
                self._k.append(1.0)
            else:
                self._k.append(1.0 - math.exp(-dt / (r.smoothing_ms / 1000.0)))
            if r.midi_cc() is None:
                self._state.append(float(getattr(defaults, r.target)))
            else:
                self._state.append(None)  # first value initializes

    def step(self, normalized: dict[str, float], seq: int, time_s: float,
             ) -> ControlFrame:
        raw = apply_routes(normalized, self.routes, self.defaults, seq, time_s)
        midi_iter = iter(raw.midi)
        midi_out: list[tuple[int, int]] = []
        for i, r in enumerate(self.routes):
            k = self._k[i]
            cc = r.midi_cc()
            if cc is None:
                target = getattr(raw.syrinx, r.target)
                s = self._state[i]
                s += k * (target - s)
                self._state[i] = s
                setattr(raw.syrinx, r.target, s)
            else:
                _, qv = next(midi_iter)
                n = normalized[r.source]
                if r.invert:
                    n = 1.0 - n
                s = self._state[i]
                s = n if s is None else s + k * (n - s)
                self._state[i] = s
                midi_out.append((cc, int(math.floor(s * 127.0 + 0.5))))
        raw.midi = midi_out
        return raw
