"""WAV output: RIFF/WAVE, PCM, mono, 16-bit little-endian.

Sample conversion is round-half-up so full scale 1.0 lands exactly on
32767; out-of-range input clamps instead of wrapping.
"""
from __future__ import annotations

import wave

import numpy as np


def samples_to_i16(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    q = np.floor(x * 32767.0 + 0.5)
    return np.clip(q, -32768.0, 32767.0).astype(np.int16)


def write_wav(samples, sample_rate: int, path) -> None:
    data = samples_to_i16(samples)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(data.astype("<i2").tobytes())


def read_wav(path) -> tuple[np.ndarray, int]:
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise ValueError("expected mono 16-bit PCM")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    return np.frombuffer(raw, dtype="<i2"), rate
