"""Engine configuration: flat sectioned `key = value` text.

Four sections: [vision], [syrinx], [mapping], [io]. Values are typed per
key and range-checked at the offending line; unknown sections or keys
are rejected with their line number. `route` is the one repeatable key.
The serializer writes every key explicitly in a canonical order, so
parse -> serialize -> parse is a fixed point and configs diff cleanly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigParseError, NotFound
from .mapping import (
    Calibration,
    DEFAULT_RANGES,
    FEATURES,
    MapRoute,
    validate_routes,
)
from .segment import SegmentationThresholds
from .syrinx import (
    AirConfig,
    MembraneConfig,
    SyrinxConfig,
    SyrinxControls,
    derive_coefficients,
)
from .vision import VisionParams

SECTIONS = ("vision", "syrinx", "mapping", "io")

DEFAULT_PORT = 8765
DEFAULT_FPS = 30.0


def _default_routes() -> list[MapRoute]:
    return [
        MapRoute("area", "p_lung", 0.0, 600.0),
        MapRoute("aspect", "tension_left", 0.5, 2.5, curve="exponential"),
        MapRoute("width", "trachea_length_scale", 0.8, 1.25, invert=True),
    ]


@dataclass
class EngineConfig:
    vision: VisionParams = field(default_factory=VisionParams)
    thresholds: SegmentationThresholds = field(
        default_factory=SegmentationThresholds)
    syrinx: SyrinxConfig = field(default_factory=SyrinxConfig)
    oversample: int = 1
    routes: list[MapRoute] = field(default_factory=_default_routes)
    calibration: Calibration = field(default_factory=Calibration)
    fps: float = DEFAULT_FPS
    port: int = DEFAULT_PORT


def default_config() -> EngineConfig:
    return EngineConfig()


# key tables: name -> (converter, validator, validator message)

def _conv_int(s: str) -> int:
    t = s.strip()
    sign = t[1:] if t[:1] in "+-" else t
    if not sign.isdigit():
        raise ValueError(f"expected an integer, got {s!r}")
    return int(t)


def _conv_float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise ValueError(f"expected a number, got {s!r}") from None
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {s!r}")
    return v


def _conv_area(s: str):
    if s.strip() == "auto":
        return None
    v = _conv_float(s)
    if v <= 0:
        raise ValueError("drive area must be positive or auto")
    return v


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _unit(v):
    return 0.0 <= v <= 1.0


def _byte(v):
    return 0 <= v <= 255


_VISION_KEYS = {
    "red_min": (_conv_int, _byte, "must be in [0, 255]"),
    "intensity_max": (_conv_int, _byte, "must be in [0, 255]"),
    "alpha": (_conv_float, _nonneg, "must be >= 0"),
    "beta_d": (_conv_float, _unit, "must be in [0, 1]"),
    "beta_a": (_conv_float, _unit, "must be in [0, 1]"),
    "smooth_window": (_conv_int, lambda v: v >= 1 and v % 2 == 1,
                      "must be odd and >= 1"),
    "prominence": (_conv_float, _pos, "must be > 0"),
    "search_kw": (_conv_float, _pos, "must be > 0"),
    "search_kh": (_conv_float, _pos, "must be > 0"),
    "mouth_k_down": (_conv_float, _pos, "must be > 0"),
    "mouth_k_w": (_conv_float, _pos, "must be > 0"),
    "mouth_k_h": (_conv_float, _pos, "must be > 0"),
    "min_track_d": (_conv_float, _pos, "must be > 0"),
    "lock_lo": (_conv_float, _pos, "must be > 0"),
    "lock_hi": (_conv_float, _pos, "must be > 0"),
    "init_x0": (_conv_float, _unit, "must be in [0, 1]"),
    "init_x1": (_conv_float, _unit, "must be in [0, 1]"),
    "init_y0": (_conv_float, _unit, "must be in [0, 1]"),
    "init_y1": (_conv_float, _unit, "must be in [0, 1]"),
}

_SYRINX_KEYS = {
    "n_valves": (_conv_int, lambda v: v in (1, 2), "must be 1 or 2"),
    "trachea_length": (_conv_float, _pos, "must be > 0"),
    "trachea_radius": (_conv_float, _pos, "must be > 0"),
    "bronchus_length": (_conv_float, _pos, "must be > 0"),
    "bronchus_radius": (_conv_float, _pos, "must be > 0"),
    "beak_reflection": (_conv_float, lambda v: 0.0 <= v < 1.0,
                        "must be in [0, 1)"),
    "h_min": (_conv_float, _pos, "must be > 0"),
    "membrane_mass": (_conv_float, _pos, "must be > 0"),
    "membrane_rest_gap": (_conv_float, _pos, "must be > 0"),
    "membrane_width": (_conv_float, _pos, "must be > 0"),
    "membrane_damping_ratio": (_conv_float, _nonneg, "must be >= 0"),
    "membrane_f_ref": (_conv_float, _pos, "must be > 0"),
    "membrane_t_ref": (_conv_float, _pos, "must be > 0"),
    "membrane_drive_area": (_conv_area, lambda v: True, ""),
    "air_rho": (_conv_float, _pos, "must be > 0"),
    "air_c": (_conv_float, _pos, "must be > 0"),
    "oversample": (_conv_int, lambda v: 1 <= v <= 8, "must be in [1, 8]"),
}

_IO_KEYS = {
    "fps": (_conv_float, _pos, "must be > 0"),
    "sample_rate": (_conv_int, lambda v: v >= 1000, "must be >= 1000"),
    "port": (_conv_int, lambda v: 0 <= v <= 65535, "must be in [0, 65535]"),
}

_SCALAR_KEYS = {"vision": _VISION_KEYS, "syrinx": _SYRINX_KEYS,
                "io": _IO_KEYS}


def _parse_route(val: str) -> MapRoute:
    toks = val.split()
    if len(toks) < 6 or toks[1] != "->":
        raise ValueError(
            "route syntax: SOURCE -> TARGET CURVE OUT_MIN OUT_MAX "
            "[invert] [smooth=MS]")
    route = MapRoute(source=toks[0], target=toks[2], curve=toks[3],
                     out_min=_conv_float(toks[4]),
                     out_max=_conv_float(toks[5]))
    for tok in toks[6:]:
        if tok == "invert":
            route.invert = True
        elif tok.startswith("smooth="):
            route.smoothing_ms = _conv_float(tok[len("smooth="):])
        else:
            raise ValueError(f"unknown route flag {tok!r}")
    route.validate()
    return route


def parse_config(text: str) -> EngineConfig:
    section = None
    seen: set[tuple[str, str]] = set()
    scalars: dict[tuple[str, str], object] = {}
    routes: list[MapRoute] = []
    route_targets: dict[str, int] = {}
    cal_ranges: dict[str, tuple[float, float]] = {}

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in SECTIONS:
                raise ConfigParseError(lineno, f"unknown section [{name}]")
            section = name
            continue
        if "=" not in line:
            raise ConfigParseError(lineno, "expected `key = value`")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if section is None:
            raise ConfigParseError(lineno, f"key {key!r} outside any section")

        if section == "mapping":
            if key == "route":
                try:
                    route = _parse_route(val)
                except ValueError as e:
                    raise ConfigParseError(lineno, str(e)) from None
                if route.target in route_targets:
                    raise ConfigParseError(
                        lineno, f"two routes target {route.target} (first at "
                        f"line {route_targets[route.target]})")
                route_targets[route.target] = lineno
                routes.append(route)
                continue
            if key.startswith("cal_"):
                feat = key[4:]
                if feat not in FEATURES:
                    raise ConfigParseError(lineno, f"unknown feature {feat!r}")
                if (section, key) in seen:
                    raise ConfigParseError(lineno, f"duplicate key {key!r}")
                parts = val.split()
                if len(parts) != 2:
                    raise ConfigParseError(
                        lineno, f"{key} needs two values: MIN MAX")
                try:
                    lo, hi = _conv_float(parts[0]), _conv_float(parts[1])
                except ValueError as e:
                    raise ConfigParseError(lineno, str(e)) from None
                if not lo < hi:
                    raise ConfigParseError(lineno, f"{key}: MIN must be < MAX")
                seen.add((section, key))
                cal_ranges[feat] = (lo, hi)
                continue
            raise ConfigParseError(lineno, f"unknown key {key!r} in [mapping]")

        table = _SCALAR_KEYS[section]
        if key not in table:
            raise ConfigParseError(
                lineno, f"unknown key {key!r} in [{section}]")
        if (section, key) in seen:
            raise ConfigParseError(lineno, f"duplicate key {key!r}")
        seen.add((section, key))
        conv, check, msg = table[key]
        try:
            v = conv(val)
        except ValueError as e:
            raise ConfigParseError(lineno, f"{key}: {e}") from None
        if not check(v):
            raise ConfigParseError(lineno, f"{key} {msg}, got {val}")
        scalars[(section, key)] = v

    return _build(scalars, routes, cal_ranges)


def _build(scalars, routes, cal_ranges) -> EngineConfig:
    def get(section, key, dflt):
        return scalars.get((section, key), dflt)

    vp = VisionParams()
    vision = replace(
        vp, **{k: get("vision", k, getattr(vp, k)) for k in _VISION_KEYS
               if k not in ("red_min", "intensity_max")})
    thr = SegmentationThresholds(
        red_min=get("vision", "red_min", 100),
        intensity_max=get("vision", "intensity_max", 90)).validate()

    mem = MembraneConfig()
    mem = replace(mem, **{k[len("membrane_"):]: get("syrinx", k,
                                                    getattr(mem, k[9:]))
                          for k in _SYRINX_KEYS if k.startswith("membrane_")})
    air = AirConfig(rho=get("syrinx", "air_rho", 1.2),
                    c=get("syrinx", "air_c", 347.0))
    sc = SyrinxConfig(membrane=mem, air=air)
    syrinx_fields = ("n_valves", "trachea_length", "trachea_radius",
                     "bronchus_length", "bronchus_radius",
                     "beak_reflection", "h_min")
    sc = replace(sc, **{k: get("syrinx", k, getattr(sc, k))
                        for k in syrinx_fields})
    sc.sample_rate = float(get("io", "sample_rate", int(sc.sample_rate)))
    sc.validate()
    oversample = get("syrinx", "oversample", 1)
    # prove the waveguides are resolvable at nominal controls (delay >= 1
    # sample); too-short tubes fail here instead of at first render
    derive_coefficients(sc, SyrinxControls(), oversample)

    if not routes:
        routes = _default_routes()
    validate_routes(routes)

    ranges = dict(DEFAULT_RANGES)
    ranges.update(cal_ranges)

    return EngineConfig(
        vision=vision,
        thresholds=thr,
        syrinx=sc,
        oversample=oversample,
        routes=routes,
        calibration=Calibration(ranges=ranges),
        fps=get("io", "fps", DEFAULT_FPS),
        port=get("io", "port", DEFAULT_PORT),
    )


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def _fmt_route(r: MapRoute) -> str:
    s = (f"{r.source} -> {r.target} {r.curve} "
         f"{_fmt(r.out_min)} {_fmt(r.out_max)}")
    if r.invert:
        s += " invert"
    if r.smoothing_ms > 0:
        s += f" smooth={_fmt(r.smoothing_ms)}"
    return s


def serialize_config(cfg: EngineConfig) -> str:
    lines = ["[vision]"]
    lines.append(f"red_min = {cfg.thresholds.red_min}")
    lines.append(f"intensity_max = {cfg.thresholds.intensity_max}")
    for k in _VISION_KEYS:
        if k in ("red_min", "intensity_max"):
            continue
        lines.append(f"{k} = {_fmt(getattr(cfg.vision, k))}")

    lines.append("")
    lines.append("[syrinx]")
    for k in _SYRINX_KEYS:
        if k == "oversample":
            v = cfg.oversample
        elif k.startswith("membrane_"):
            v = getattr(cfg.syrinx.membrane, k[len("membrane_"):])
        elif k.startswith("air_"):
            v = getattr(cfg.syrinx.air, k[len("air_"):])
        else:
            v = getattr(cfg.syrinx, k)
        if k == "membrane_drive_area" and v is None:
            lines.append(f"{k} = auto")
        else:
            lines.append(f"{k} = {_fmt(v)}")

    lines.append("")
    lines.append("[mapping]")
    for r in cfg.routes:
        lines.append(f"route = {_fmt_route(r)}")
    for feat in FEATURES:
        lo, hi = cfg.calibration.ranges[feat]
        lines.append(f"cal_{feat} = {_fmt(lo)} {_fmt(hi)}")

    lines.append("")
    lines.append("[io]")
    lines.append(f"fps = {_fmt(cfg.fps)}")
    lines.append(f"sample_rate = {int(round(cfg.syrinx.sample_rate))}")
    lines.append(f"port = {cfg.port}")
    lines.append("")
    return "\n".join(lines)


def load_config(path) -> EngineConfig:
    p = Path(path)
    if not p.is_file():
        raise NotFound(f"config file {p} does not exist")
    return parse_config(p.read_text())


def save_config(cfg: EngineConfig, path) -> None:
    Path(path).write_text(serialize_config(cfg))
