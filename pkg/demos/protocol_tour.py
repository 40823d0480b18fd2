"""Walk the wire protocol against a live engine: start a service, stream
synthetic frames to it, click-init, tighten the thresholds mid-stream,
and report what comes back.

    python3 demos/protocol_tour.py
"""
import asyncio
import json
import struct

import numpy as np

from warble import default_config
from warble.server import EngineServer, decode_mask_rle, pack_frame
from warble.synthetic import FaceSpec, render_face


async def tour():
    cfg = default_config()
    cfg.syrinx.sample_rate = 22050.0
    srv = await EngineServer.start(cfg, port=0)
    print(f"engine on ws://127.0.0.1:{srv.port}")

    from websockets.asyncio.client import connect
    frames = [render_face(FaceSpec(mouth_open=0.25 + 0.02 * k), seq=k)
              for k in range(20)]
    try:
        async with connect(f"ws://127.0.0.1:{srv.port}",
                           max_size=None) as ws:
            # frames before init are absorbed; init with no frame errors
            await ws.send(pack_frame(frames[0].pixels, 0))
            await ws.send(json.dumps({"type": "init", "x": 320, "y": 100}))
            print("init ->", json.loads(await ws.recv())["msg"])

            async def frame_round(k):
                feats = json.loads(await ws.recv())
                mask_msg = await ws.recv()
                pcm_msg = await ws.recv()
                _, w, h = struct.unpack("<IHH", mask_msg[4:12])
                mask = decode_mask_rle(mask_msg[12:], w, h)
                pcm = np.frombuffer(pcm_msg[12:], dtype="<i2")
                print(f"  seq {feats['seq']:2d}: A={feats['A']:5d} "
                      f"R={feats['R']:.2f} mask {int(mask.sum()):5d}px "
                      f"audio {len(pcm)} smp peak {np.abs(pcm).max():5d}")

            await frame_round(0)
            for k in range(1, 10):
                await ws.send(pack_frame(frames[k].pixels, k))
                await frame_round(k)

            print("loosening thresholds ...")
            await ws.send(json.dumps({"type": "thresholds",
                                      "red_min": 60, "intensity_max": 140}))
            print("thresholds ->", json.loads(await ws.recv())["msg"])
            for k in range(10, 20):
                await ws.send(pack_frame(frames[k].pixels, k))
                await frame_round(k)
    finally:
        await srv.stop()


if __name__ == "__main__":
    asyncio.run(tour())
