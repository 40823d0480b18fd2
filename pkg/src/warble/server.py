"""WebSocket service: one client drives the instrument with raw frames
and control messages, and receives features, mask overlays, and audio.

Wire format (integers little-endian):
  client frame:  "FRM0" u16 width u16 height u32 seq, then RGB bytes
  client text:   JSON init / thresholds / route / calibrate
  server text:   JSON features / ack / error
  server mask:   "MSK0" u32 seq u16 w u16 h, u16 run lengths (clear first)
  server audio:  "PCM0" u32 seq u32 nsamples, i16 mono samples

Processing is lockstep: messages are handled strictly in arrival order
and each frame produces its features, overlay, and audio quantum before
the next message is read. That makes a live session byte-reproducible
against the offline renderer for the same message timeline, at the cost
of the free-running worker split described in the concurrency notes.
"""
from __future__ import annotations

import asyncio
import json
import math
import struct

import numpy as np

from .errors import BindError, EngineError, TrackingLost
from .mapping import (
    ControlFrame,
    MapRoute,
    Router,
    calibrate_capture,
    normalize,
)
from .offline import quantum_samples
from .segment import SegmentationThresholds
from .syrinx import Synth, SyrinxControls
from .vision import Frame, analyze_frame, initialize
from .wavio import samples_to_i16

MAGIC_FRAME = b"FRM0"
MAGIC_MASK = b"MSK0"
MAGIC_PCM = b"PCM0"

_RUN_MAX = 0xFFFF


def pack_frame(pixels: np.ndarray, seq: int) -> bytes:
    """Client-side FRM0 encoder (used by tests and tooling)."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape[:2]
    return struct.pack("<4sHHI", MAGIC_FRAME, w, h, seq) + pixels.tobytes()


def encode_mask_rle(mask: np.ndarray) -> bytes:
    """Run-length encode a binary mask, row-major, clear run first.

    Runs longer than 65535 continue as 65535 followed by a zero-length
    run of the opposite polarity.
    """
    flat = np.asarray(mask, dtype=bool).ravel()
    n = len(flat)
    if n == 0:
        return b""
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges, [n]))
    out: list[int] = []
    polarity = False                      # the polarity the next run encodes
    for s, e in zip(starts, ends):
        if bool(flat[s]) != polarity:
            out.append(0)                 # zero-length run to switch polarity
            polarity = not polarity
        length = int(e - s)
        while length > _RUN_MAX:
            out.extend((_RUN_MAX, 0))     # continuation, polarity unchanged
            length -= _RUN_MAX
        out.append(length)
        polarity = not polarity
    return struct.pack(f"<{len(out)}H", *out)


def decode_mask_rle(data: bytes, width: int, height: int) -> np.ndarray:
    runs = np.frombuffer(data, dtype="<u2")
    flat = np.zeros(width * height, dtype=bool)
    pos = 0
    val = False
    for r in runs:
        r = int(r)
        if pos + r > len(flat):
            raise ValueError("mask runs overflow the stated dimensions")
        flat[pos:pos + r] = val
        pos += r
        val = not val
    if pos != len(flat):
        raise ValueError(f"mask runs cover {pos} of {len(flat)} pixels")
    return flat.reshape(height, width)


def _text(type_: str, msg: str) -> str:
    return json.dumps({"type": type_, "msg": msg})


class _Session:
    """Per-connection engine state; handle() maps one client message to
    the ordered list of replies it produces."""

    def __init__(self, config):
        self.cfg = config
        self.params = config.vision
        self.thr = config.thresholds
        self.cal = config.calibration
        self.routes = [MapRoute(**vars(r)) for r in config.routes]
        self.router = Router(self.routes, SyrinxControls(), config.fps)
        self.synth = Synth(config.syrinx, oversample=config.oversample)
        self.state = None
        self.last_frame: Frame | None = None
        self.dims: tuple | None = None
        self.quantum = 0                  # audio quantum index
        self.last_emitted_seq: int | None = None
        self.held_feats = None
        self.held_controls = ControlFrame(seq=-1, time_s=0.0,
                                          syrinx=SyrinxControls(), midi=[])
        self.cal_frames_left = 0
        self.cal_collected: list[dict] = []

    # message entry point

    def handle(self, message) -> list:
        if isinstance(message, (bytes, bytearray)):
            return self._on_binary(bytes(message))
        try:
            obj = json.loads(message)
            if not isinstance(obj, dict):
                raise ValueError("expected a JSON object")
        except ValueError as e:
            return [_text("error", f"malformed message: {e}")]
        mtype = obj.get("type")
        handler = {
            "init": self._on_init,
            "thresholds": self._on_thresholds,
            "route": self._on_route,
            "calibrate": self._on_calibrate,
        }.get(mtype)
        if handler is None:
            return [_text("error", f"unknown message type {mtype!r}")]
        try:
            return handler(obj)
        except EngineError as e:
            return [_text("error", str(e))]
        except (KeyError, TypeError, ValueError) as e:
            return [_text("error", f"bad {mtype} message: {e}")]

    # binary frames

    def _on_binary(self, data: bytes) -> list:
        if len(data) < 12 or data[:4] != MAGIC_FRAME:
            return [_text("error", "bad binary message: expected FRM0")]
        w, h, seq = struct.unpack("<HHI", data[4:12])
        payload = data[12:]
        if len(payload) != w * h * 3:
            return [_text("error",
                          f"frame {seq}: payload {len(payload)} bytes, "
                          f"expected {w * h * 3}")]
        if self.dims is None:
            self.dims = (w, h)
        elif self.dims != (w, h):
            return [_text("error",
                          f"frame {seq}: {w}x{h} after "
                          f"{self.dims[0]}x{self.dims[1]}")]
        pixels = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
        try:
            frame = Frame(width=w, height=h, pixels=pixels, seq=seq,
                          timestamp=seq / self.cfg.fps)
        except ValueError as e:
            return [_text("error", f"frame {seq}: {e}")]
        self.last_frame = frame
        if self.state is None:
            return []            # buffered; waiting for the init gesture
        return self._process(frame)

    # frame pipeline

    def _process(self, frame: Frame) -> list:
        lost = False
        feats = None
        mask = None
        try:
            self.state, feats, mask, _region = analyze_frame(
                frame, self.state, self.thr, self.params)
        except TrackingLost:
            lost = True

        if not lost:
            controls = self.router.step(normalize(feats.as_dict(), self.cal),
                                        frame.seq, frame.timestamp)
            self.held_feats = feats
            self.held_controls = controls
            if self.cal_frames_left > 0:
                self.cal_collected.append(feats.as_dict())
                self.cal_frames_left -= 1
                if self.cal_frames_left == 0:
                    self.cal = calibrate_capture(self.cal_collected)
                    self.cal_collected = []
        else:
            controls = self.held_controls

        replies = [self._features_json(frame.seq, lost)]
        if mask is not None:
            replies.append(struct.pack("<4sIHH", MAGIC_MASK, frame.seq,
                                       mask.shape[1], mask.shape[0])
                           + encode_mask_rle(mask))
        n = quantum_samples(self.quantum, self.cfg.syrinx.sample_rate,
                            self.cfg.fps)
        self.quantum += 1
        samples = self.synth.process_block(n, controls.syrinx)
        replies.append(struct.pack("<4sII", MAGIC_PCM, frame.seq, n)
                       + samples_to_i16(samples).astype("<i2").tobytes())
        self.last_emitted_seq = frame.seq
        return replies

    def _features_json(self, seq: int, lost: bool) -> str:
        f = self.held_feats
        pair = self.state.pair if self.state is not None else None
        return json.dumps({
            "type": "features",
            "seq": int(seq),
            "A": 0 if f is None else f.area,
            "H": 0.0 if f is None else f.height,
            "W": 0.0 if f is None else f.width,
            "R": 0.0 if f is None else f.aspect,
            "n1": [0.0, 0.0] if pair is None else list(pair.n1),
            "n2": [0.0, 0.0] if pair is None else list(pair.n2),
            "angle": 0.0 if f is None else f.a_n,
            "lost": bool(lost),
        })

    # text messages

    def _on_init(self, obj) -> list:
        if self.last_frame is None:
            return [_text("error", "no frame yet: send a frame, then init")]
        x, y = int(obj["x"]), int(obj["y"])
        self.state = initialize(self.last_frame, click=(x, y),
                                params=self.params)
        replies = [_text("ack", f"initialized at ({x}, {y})")]
        # process the armed frame right away so the click gets instant
        # feedback, unless it already produced output
        if (self.last_emitted_seq is None
                or self.last_frame.seq > self.last_emitted_seq):
            replies.extend(self._process(self.last_frame))
        return replies

    def _on_thresholds(self, obj) -> list:
        thr = SegmentationThresholds(
            red_min=int(obj["red_min"]),
            intensity_max=int(obj["intensity_max"])).validate()
        self.thr = thr
        return [_text("ack",
                      f"thresholds red_min={thr.red_min} "
                      f"intensity_max={thr.intensity_max}")]

    def _on_route(self, obj) -> list:
        route = MapRoute(
            source=obj["source"], target=obj["target"],
            out_min=float(obj["out_min"]), out_max=float(obj["out_max"]),
            curve=obj.get("curve", "linear"),
            invert=bool(obj.get("invert", False)),
            smoothing_ms=float(obj.get("smoothing_ms", 0.0))).validate()
        routes = [r for r in self.routes if r.target != route.target]
        routes.append(route)
        # the new router restarts its output smoothing from the defaults
        self.router = Router(routes, SyrinxControls(), self.cfg.fps)
        self.routes = routes
        return [_text("ack", f"route {route.source} -> {route.target}")]

    def _on_calibrate(self, obj) -> list:
        seconds = float(obj["seconds"])
        if not seconds > 0:
            raise ValueError("seconds must be > 0")
        self.cal_frames_left = max(1, math.ceil(seconds * self.cfg.fps))
        self.cal_collected = []
        return [_text("ack",
                      f"calibrating over the next "
                      f"{self.cal_frames_left} tracked frames")]


class EngineServer:
    """One-client WebSocket front end around a _Session."""

    def __init__(self, config, server):
        self._config = config
        self._server = server
        self._client_connected = False
        self.port = server.sockets[0].getsockname()[1]

    @classmethod
    async def start(cls, config, port: int | None = None,
                    host: str = "127.0.0.1") -> "EngineServer":
        from websockets.asyncio.server import serve as ws_serve
        if port is None:
            port = config.port
        self_ref: dict = {}

        async def handler(ws):
            await self_ref["srv"]._handle(ws)

        try:
            server = await ws_serve(handler, host, port, max_size=None)
        except OSError as e:
            raise BindError(f"cannot bind {host}:{port}: {e}") from e
        srv = cls(config, server)
        self_ref["srv"] = srv
        return srv

    async def _handle(self, ws):
        if self._client_connected:
            await ws.send(_text("error", "busy: another client is connected"))
            await ws.close()
            return
        self._client_connected = True
        try:
            session = _Session(self._config)
            async for message in ws:
                for reply in session.handle(message):
                    await ws.send(reply)
        finally:
            self._client_connected = False

    async def stop(self):
        self._server.close()
        await self._server.wait_closed()

    async def serve_forever(self):
        await self._server.wait_closed()


def serve_blocking(config, port: int | None = None,
                   host: str = "0.0.0.0") -> None:
    """CLI entry: run the service until interrupted."""

    async def go():
        srv = await EngineServer.start(config, port=port, host=host)
        print(f"engine listening on ws://{host}:{srv.port}")
        try:
            await srv.serve_forever()
        finally:
            await srv.stop()

    asyncio.run(go())
