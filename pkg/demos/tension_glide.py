"""Hear the tension-to-pitch law: a slow membrane-tension glide at the
documented operating pressure, with the measured f0 ladder printed.

    python3 demos/tension_glide.py [out.wav]
"""
import sys

import numpy as np

from warble import (
    OPERATING_PRESSURE,
    Synth,
    SyrinxControls,
    default_config,
    estimate_pitch,
    write_wav,
)


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "glide.wav"
    cfg = default_config().syrinx
    fs = cfg.sample_rate
    synth = Synth(cfg)

    # 6 s glide, tension 0.5 -> 2.0, stepped per 64-sample block; the
    # model's own control smoothing turns the steps into a glissando
    seconds = 6.0
    blocks = int(seconds * fs) // 64
    chunks = []
    for b in range(blocks):
        t = 0.5 + 1.5 * b / (blocks - 1)
        chunks.append(synth.process_block(
            64, SyrinxControls(p_lung=OPERATING_PRESSURE,
                               tension_left=t, tension_right=t)))
    samples = np.concatenate(chunks)
    write_wav(samples, fs, out)
    print(f"wrote {out}: {len(samples)} samples")

    # measure the ladder the glide walked through
    print("tension   f0")
    for t in np.linspace(0.5, 2.0, 7):
        probe = Synth(cfg)
        buf = probe.process_block(
            int(1.2 * fs),
            SyrinxControls(p_lung=OPERATING_PRESSURE,
                           tension_left=float(t), tension_right=float(t)))
        f0 = estimate_pitch(buf[int(0.6 * fs):], fs)
        print(f"  {t:5.2f}   {f0:6.1f} Hz" if f0 else f"  {t:5.2f}   unvoiced")


if __name__ == "__main__":
    main()
