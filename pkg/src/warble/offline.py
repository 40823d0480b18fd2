"""Deterministic offline pipeline: frames in, audio and a control log out.

Controls update once per video frame and are rendered for a per-frame
sample quantum; quanta use largest-remainder rounding so any prefix of
the stream has an exactly reproducible sample count. Tracking loss never
aborts a render: the affected frames hold the last good controls (live
instrument semantics) and the event log records them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegeneratePair,
    EmptyRegion,
    InitFailed,
    NostrilsNotFound,
    NotFound,
    TrackingLost,
)
from .mapping import ControlFrame, Router, normalize
from .segment import shape_features
from .syrinx import Synth, SyrinxControls
from .vision import analyze_frame, initialize

CSV_HEADER = ("frame_seq", "time_s", "A", "H", "W", "R", "cx", "cy",
              "a_n", "p_lung", "tension_left", "tension_right", "midi")


@dataclass
class ControlLogRow:
    frame_seq: int
    time_s: float
    A: int
    H: float
    W: float
    R: float
    cx: float
    cy: float
    a_n: float
    p_lung: float
    tension_left: float
    tension_right: float
    midi: list = field(default_factory=list)


@dataclass
class OfflineResult:
    samples: np.ndarray
    rows: list
    events: list


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def quantum_samples(k: int, sample_rate: float, fps: float) -> int:
    """Sample count of frame quantum k; prefix sums are exact."""
    q = sample_rate / fps
    return _round_half_up((k + 1) * q) - _round_half_up(k * q)


def per_frame_sample_counts(n_frames: int, sample_rate: float,
                            fps: float) -> list:
    return [quantum_samples(k, sample_rate, fps) for k in range(n_frames)]


def _row_from(feats, controls: ControlFrame, seq: int,
              time_s: float) -> ControlLogRow:
    return ControlLogRow(
        frame_seq=seq, time_s=time_s,
        A=feats.area, H=feats.height, W=feats.width, R=feats.aspect,
        cx=feats.c_n[0], cy=feats.c_n[1], a_n=feats.a_n,
        p_lung=controls.syrinx.p_lung,
        tension_left=controls.syrinx.tension_left,
        tension_right=controls.syrinx.tension_right,
        midi=list(controls.midi))


def run_offline(config, frames, init_click=None) -> OfflineResult:
    """Render a frame sequence to audio samples plus a control log.

    Initialization happens on frame 0 (recentred at init_click when
    given); every output byte is a pure function of (config, frames,
    init_click).
    """
    if not frames:
        raise NotFound("no frames to render")
    params = config.vision
    thr = config.thresholds
    try:
        state = initialize(frames[0], click=init_click, params=params)
    except (NostrilsNotFound, EmptyRegion, DegeneratePair) as e:
        raise InitFailed(f"initialization on frame 0 failed: {e}") from e

    router = Router(config.routes, SyrinxControls(), config.fps)
    synth = Synth(config.syrinx, oversample=config.oversample)
    cal = config.calibration
    rows = []
    events = []
    chunks = []
    # degenerate fallback only; overwritten by the first tracked frame
    held = None
    held_controls = ControlFrame(seq=-1, time_s=0.0,
                                 syrinx=SyrinxControls(), midi=[])

    for k, frame in enumerate(frames):
        feats = None
        try:
            state, feats, mask, region = analyze_frame(frame, state, thr,
                                                       params)
        except TrackingLost as e:
            events.append(f"frame {frame.seq}: tracking lost ({e})")
            try:
                state = initialize(frame, click=init_click, params=params)
                state, feats, mask, region = analyze_frame(frame, state,
                                                           thr, params)
                events.append(f"frame {frame.seq}: re-initialized")
            except (NostrilsNotFound, TrackingLost, EmptyRegion,
                    DegeneratePair):
                feats = None

        if feats is not None:
            controls = router.step(normalize(feats.as_dict(), cal),
                                   frame.seq, frame.timestamp)
            held, held_controls = feats, controls
        else:
            # hold: freeze both the logged features and the control values
            feats, controls = held, held_controls
        if feats is None:
            feats = shape_features(None, state.geometry)
        rows.append(_row_from(feats, controls, frame.seq, frame.timestamp))
        n = quantum_samples(k, config.syrinx.sample_rate, config.fps)
        chunks.append(synth.process_block(n, controls.syrinx))

    samples = np.concatenate(chunks) if chunks else np.zeros(0)
    return OfflineResult(samples=samples, rows=rows, events=events)


def _cell(v) -> str:
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def control_log_text(rows) -> str:
    """CSV serialization; float cells use repr so rendering is
    byte-deterministic."""
    lines = [",".join(CSV_HEADER)]
    for r in rows:
        midi = ";".join(f"{cc}:{v}" for cc, v in r.midi)
        lines.append(",".join([
            str(r.frame_seq), _cell(r.time_s), _cell(r.A), _cell(r.H),
            _cell(r.W), _cell(r.R), _cell(r.cx), _cell(r.cy), _cell(r.a_n),
            _cell(r.p_lung), _cell(r.tension_left), _cell(r.tension_right),
            midi]))
    return "\n".join(lines) + "\n"


def write_control_log(rows, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(control_log_text(rows))
