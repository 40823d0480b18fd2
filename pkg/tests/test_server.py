"""Protocol oracles for the WebSocket service.

Each test runs a real server on an ephemeral localhost port and drives
it with a scripted client, lockstep (send, await reply), so message
ordering is exact and assertions are deterministic.
"""
import asyncio
import json
import struct
from dataclasses import replace

import numpy as np
import pytest

from warble.config import default_config, parse_config
from warble.errors import BindError
from warble.offline import per_frame_sample_counts, run_offline
from warble.server import (
    EngineServer,
    decode_mask_rle,
    encode_mask_rle,
    pack_frame,
)
from warble.synthetic import FaceSpec, render_face
from warble.wavio import samples_to_i16

CLICK = (320, 100)          # just above the nostrils at the default pose


def _cfg():
    cfg = default_config()
    return replace(cfg, syrinx=replace(cfg.syrinx, sample_rate=22050))


def _frames(n, open_fn=lambda k: 0.6):
    return [render_face(FaceSpec(mouth_open=open_fn(k)), seq=k)
            for k in range(n)]


def _run(coro):
    asyncio.run(asyncio.wait_for(coro, timeout=30))


async def _connect(port):
    from websockets.asyncio.client import connect
    return await connect(f"ws://127.0.0.1:{port}", max_size=None)


async def _send_json(ws, obj):
    await ws.send(json.dumps(obj))


async def _recv_json(ws):
    msg = await ws.recv()
    assert isinstance(msg, str), f"expected text, got {len(msg)} bytes"
    return json.loads(msg)


async def _drive_frame(ws, frame):
    """Send one frame and collect its features/MSK0/PCM0 replies."""
    await ws.send(pack_frame(frame.pixels, frame.seq))
    feats = await _recv_json(ws)
    assert feats["type"] == "features"
    mask = None
    if not feats["lost"]:
        mask = await ws.recv()
        assert isinstance(mask, bytes) and mask[:4] == b"MSK0"
    pcm = await ws.recv()
    assert isinstance(pcm, bytes) and pcm[:4] == b"PCM0"
    return feats, mask, pcm


def _parse_msk(data):
    seq, w, h = struct.unpack("<IHH", data[4:12])
    return seq, decode_mask_rle(data[12:], w, h)


def _parse_pcm(data):
    seq, n = struct.unpack("<II", data[4:12])
    samples = np.frombuffer(data[12:], dtype="<i2")
    assert len(samples) == n
    return seq, samples


# mask run-length encoding

def test_rle_examples():
    # 8-wide single row with pixels 5,6,7 set: clear run 5, set run 3
    mask = np.zeros((1, 8), dtype=bool)
    mask[0, 5:8] = True
    assert encode_mask_rle(mask) == struct.pack("<2H", 5, 3)
    # all clear: one full-length clear run
    assert encode_mask_rle(np.zeros((2, 3), dtype=bool)) == struct.pack("<H", 6)
    # starts set: leading zero-length clear run
    assert encode_mask_rle(np.ones((1, 2), dtype=bool)) == struct.pack("<2H", 0, 2)


def test_rle_long_run_continuation():
    # a set run longer than u16 emits 65535 then a zero-length clear run
    mask = np.ones((300, 300), dtype=bool)
    runs = struct.unpack("<4H", encode_mask_rle(mask))
    assert runs == (0, 65535, 0, 90000 - 65535)
    assert np.array_equal(decode_mask_rle(encode_mask_rle(mask), 300, 300),
                          mask)


def test_rle_round_trip_random():
    rng = np.random.default_rng(12)
    for _ in range(50):
        h = int(rng.integers(1, 40))
        w = int(rng.integers(1, 40))
        mask = rng.random((h, w)) < rng.uniform(0.05, 0.95)
        data = encode_mask_rle(mask)
        assert np.array_equal(decode_mask_rle(data, w, h), mask)


# connection management

def test_second_client_rejected():
    async def go():
        srv = await EngineServer.start(_cfg(), port=0)
        try:
            a = await _connect(srv.port)
            b = await _connect(srv.port)
            msg = json.loads(await b.recv())
            assert msg["type"] == "error"
            assert "busy" in msg["msg"].lower()
            with pytest.raises(Exception):
                await b.recv()          # server closed the second socket
            # the first client is unaffected
            await _send_json(a, {"type": "thresholds", "red_min": 90,
                                 "intensity_max": 100})
            assert (await _recv_json(a))["type"] == "ack"
            await a.close()
        finally:
            await srv.stop()
    _run(go())


def test_bind_error():
    async def go():
        srv = await EngineServer.start(_cfg(), port=0)
        try:
            with pytest.raises(BindError):
                await EngineServer.start(_cfg(), port=srv.port)
        finally:
            await srv.stop()
    _run(go())


def test_client_slot_frees_after_disconnect():
    async def go():
        srv = await EngineServer.start(_cfg(), port=0)
        try:
            a = await _connect(srv.port)
            await a.close()
            b = await _connect(srv.port)
            await _send_json(b, {"type": "thresholds", "red_min": 90,
                                 "intensity_max": 100})
            assert (await _recv_json(b))["type"] == "ack"
            await b.close()
        finally:
            await srv.stop()
    _run(go())


# message handling

def test_init_without_frame_is_error():
    async def go():
        srv = await EngineServer.start(_cfg(), port=0)
        try:
            ws = await _connect(srv.port)
            await _send_json(ws, {"type": "init", "x": 320, "y": 100})
            msg = await _recv_json(ws)
            assert msg["type"] == "error"
            assert "no frame" in msg["msg"].lower()
            await ws.close()
        finally:
            await srv.stop()
    _run(go())


def test_malformed_messages_keep_session():
    async def go():
        srv = await EngineServer.start(_cfg(), port=0)
        try:
            ws = await _connect(srv.port)
            await ws.send("this is not json")
            assert (await _recv_json(ws))["type"] == "error"
            await _send_json(ws, {"type": "wibble"})
            assert (await _recv_json(ws))["type"] == "error"
            await ws.send(b"XXXX" + bytes(20))
            assert (await _recv_json(ws))["type"] == "error"
            # truncated FRM0 payload
            await ws.send(struct.pack("<4sHHI", b"FRM0", 64, 48, 0) + bytes(7))
            assert (await _recv_json(ws))["type"] == "error"
            # the session still works
            await _send_json(ws, {"type": "thresholds", "red_min": 90,
                                  "intensity_max": 100})
            assert (await _recv_json(ws))["type"] == "ack"
            await ws.close()
        finally:
            await srv.stop()
    _run(go())


def test_bad_control_values_are_errors():
    async def go():
        srv = await EngineServer.start(_cfg(), port=0)
        try:
            ws = await _connect(srv.port)
            await _send_json(ws, {"type": "thresholds", "red_min": 300,
                                  "intensity_max": 100})
            assert (await _recv_json(ws))["type"] == "error"
            await _send_json(ws, {"type": "route", "source": "bogus",
                                  "target": "p_lung", "out_min": 0,
                                  "out_max": 1})
            assert (await _recv_json(ws))["type"] == "error"
            await _send_json(ws, {"type": "calibrate", "seconds": -1})
            assert (await _recv_json(ws))["type"] == "error"
            await ws.close()
        finally:
            await srv.stop()
    _run(go())


def test_init_failure_reported():
    async def go():
        srv = await EngineServer.start(_cfg(), port=0)
        try:
            ws = await _connect(srv.port)
            blank = np.full((480, 640, 3), 255, dtype=np.uint8)
            await ws.send(pack_frame(blank, 0))
            await _send_json(ws, {"type": "init", "x": 320, "y": 100})
            msg = await _recv_json(ws)
            assert msg["type"] == "error"
            await ws.close()
        finally:
            await srv.stop()
    _run(go())


# the full loop

def test_features_stream_and_audio_lockstep():
    cfg = _cfg()
    frames = _frames(6, lambda k: 0.3 + 0.1 * k)
    counts = per_frame_sample_counts(6, cfg.syrinx.sample_rate, cfg.fps)

    async def go():
        srv = await EngineServer.start(cfg, port=0)
        try:
            ws = await _connect(srv.port)
            await ws.send(pack_frame(frames[0].pixels, 0))
            await _send_json(ws, {"type": "init",
                                  "x": CLICK[0], "y": CLICK[1]})
            msg = await _recv_json(ws)
            assert msg["type"] == "ack"
            # init immediately processes the armed frame
            feats0 = await _recv_json(ws)
            assert feats0["type"] == "features" and feats0["seq"] == 0
            assert not feats0["lost"]
            msk = await ws.recv()
            pcm = await ws.recv()
            seq, m0 = _parse_msk(msk)
            assert seq == 0
            pseq, s0 = _parse_pcm(pcm)
            assert pseq == 0 and len(s0) == counts[0]

            seqs = [0]
            areas = [feats0["A"]]
            pcm_all = [s0]
            for fr in frames[1:]:
                feats, mask, pcm = await _drive_frame(ws, fr)
                seqs.append(feats["seq"])
                areas.append(feats["A"])
                pcm_all.append(_parse_pcm(pcm)[1])
                for key in ("A", "H", "W", "R", "angle"):
                    assert isinstance(feats[key], (int, float))
                assert len(feats["n1"]) == 2 and len(feats["n2"]) == 2
            assert seqs == [0, 1, 2, 3, 4, 5]
            assert areas[-1] > areas[0]
            assert [len(s) for s in pcm_all] == list(counts)

            # lockstep audio equals the offline render bit for bit
            res = run_offline(cfg, frames, init_click=CLICK)
            offline = samples_to_i16(res.samples)
            live = np.concatenate(pcm_all)
            assert np.max(np.abs(live.astype(int) - offline.astype(int))) <= 1
            await ws.close()
        finally:
            await srv.stop()
    _run(go())


def test_thresholds_change_reflects_in_masks():
    cfg = _cfg()
    frames = _frames(6)

    async def go():
        srv = await EngineServer.start(cfg, port=0)
        try:
            ws = await _connect(srv.port)
            await ws.send(pack_frame(frames[0].pixels, 0))
            await _send_json(ws, {"type": "init",
                                  "x": CLICK[0], "y": CLICK[1]})
            assert (await _recv_json(ws))["type"] == "ack"
            await _recv_json(ws)        # features for the init frame
            await ws.recv()             # MSK0
            await ws.recv()             # PCM0

            _, m_before, _ = await _drive_frame(ws, frames[1])
            n_before = int(_parse_msk(m_before)[1].sum())

            await _send_json(ws, {"type": "thresholds", "red_min": 0,
                                  "intensity_max": 250})
            assert (await _recv_json(ws))["type"] == "ack"

            after_counts = []
            for fr in frames[2:]:
                _, m, _ = await _drive_frame(ws, fr)
                after_counts.append(int(_parse_msk(m)[1].sum()))
            # every overlay after the ack reflects the looser thresholds
            assert all(n > 2 * n_before for n in after_counts)
            await ws.close()
        finally:
            await srv.stop()
    _run(go())


def test_route_update_changes_controls():
    cfg = _cfg()
    frames = _frames(8)

    async def go():
        srv = await EngineServer.start(cfg, port=0)
        try:
            ws = await _connect(srv.port)
            await ws.send(pack_frame(frames[0].pixels, 0))
            await _send_json(ws, {"type": "init",
                                  "x": CLICK[0], "y": CLICK[1]})
            assert (await _recv_json(ws))["type"] == "ack"
            await _recv_json(ws)
            await ws.recv()
            await ws.recv()
            rms = []
            for fr in frames[1:4]:
                _, _, pcm = await _drive_frame(ws, fr)
                rms.append(float(np.sqrt(np.mean(
                    _parse_pcm(pcm)[1].astype(float) ** 2))))
            # silence the instrument by routing area to a zero-pressure range
            await _send_json(ws, {"type": "route", "source": "area",
                                  "target": "p_lung", "out_min": 0.0,
                                  "out_max": 1e-6})
            assert (await _recv_json(ws))["type"] == "ack"
            for fr in frames[4:]:
                _, _, pcm = await _drive_frame(ws, fr)
                rms.append(float(np.sqrt(np.mean(
                    _parse_pcm(pcm)[1].astype(float) ** 2))))
            assert rms[-1] < max(rms[:3])
            await ws.close()
        finally:
            await srv.stop()
    _run(go())


def test_tracking_lost_features_flag():
    cfg = _cfg()
    frames = _frames(3)

    async def go():
        srv = await EngineServer.start(cfg, port=0)
        try:
            ws = await _connect(srv.port)
            await ws.send(pack_frame(frames[0].pixels, 0))
            await _send_json(ws, {"type": "init",
                                  "x": CLICK[0], "y": CLICK[1]})
            assert (await _recv_json(ws))["type"] == "ack"
            await _recv_json(ws)
            await ws.recv()
            await ws.recv()
            await _drive_frame(ws, frames[1])
            blank = np.full((480, 640, 3), 255, dtype=np.uint8)
            await ws.send(pack_frame(blank, 2))
            feats = await _recv_json(ws)
            assert feats["lost"] is True
            assert feats["seq"] == 2
            # audio keeps flowing with held controls; no mask for lost frames
            pcm = await ws.recv()
            assert isinstance(pcm, bytes) and pcm[:4] == b"PCM0"
            await ws.close()
        finally:
            await srv.stop()
    _run(go())


def test_calibrate_ack_and_effect():
    cfg = _cfg()
    frames = _frames(10, lambda k: 0.2 + 0.07 * k)

    async def go():
        srv = await EngineServer.start(cfg, port=0)
        try:
            ws = await _connect(srv.port)
            await ws.send(pack_frame(frames[0].pixels, 0))
            await _send_json(ws, {"type": "init",
                                  "x": CLICK[0], "y": CLICK[1]})
            assert (await _recv_json(ws))["type"] == "ack"
            await _recv_json(ws)
            await ws.recv()
            await ws.recv()
            # capture spans the next few frames at 30 fps
            await _send_json(ws, {"type": "calibrate", "seconds": 0.12})
            assert (await _recv_json(ws))["type"] == "ack"
            for fr in frames[1:]:
                await _drive_frame(ws, fr)
            await ws.close()
        finally:
            await srv.stop()
    _run(go())
