"""Frame-sequence ingestion: PPM (P6) and PNG directories, or a single
packed raw-RGB file with a JSON sidecar carrying the dimensions.

P6 is parsed by hand from the format definition (binary PPM: "P6",
whitespace-separated width/height/maxval with # comments, one whitespace
byte, then rows of RGB bytes). PNG decoding is delegated to Pillow.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import MalformedImage, MixedDimensions, NotFound
from .vision import Frame

_IMAGE_SUFFIXES = (".ppm", ".png")


def write_ppm(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"need an (h, w, 3) array, got {pixels.shape}")
    h, w = pixels.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def _ppm_tokens(data: bytes, path):
    """Yield header tokens, skipping whitespace and # comments."""
    i = 2  # past the magic
    for _ in range(3):
        while i < len(data) and (data[i:i + 1].isspace() or
                                 data[i:i + 1] == b"#"):
            if data[i:i + 1] == b"#":
                while i < len(data) and data[i] not in (10, 13):
                    i += 1
            else:
                i += 1
        start = i
        while i < len(data) and not data[i:i + 1].isspace():
            i += 1
        tok = data[start:i]
        if not tok.isdigit():
            raise MalformedImage(f"{path}: bad header token {tok!r}")
        yield int(tok)
    # exactly one whitespace byte separates the header from the payload
    if i >= len(data) or not data[i:i + 1].isspace():
        raise MalformedImage(f"{path}: missing header terminator")
    yield i + 1


def read_ppm(path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    if data[:2] != b"P6":
        raise MalformedImage(f"{path.name}: not a binary PPM (P6) file")
    w, h, maxval, offset = _ppm_tokens(data, path.name)
    if maxval != 255:
        raise MalformedImage(f"{path.name}: only maxval 255 supported, "
                             f"got {maxval}")
    need = w * h * 3
    payload = data[offset:offset + need]
    if len(payload) < need:
        raise MalformedImage(f"{path.name}: payload truncated "
                             f"({len(payload)} of {need} bytes)")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()


def _read_png(path) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as e:
        raise MalformedImage(f"{Path(path).name}: {e}") from e


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return read_ppm(path)
    if path.suffix.lower() == ".png":
        return _read_png(path)
    raise MalformedImage(f"{path.name}: unsupported image type")


def write_packed(path, arrays, fps: float = 30.0) -> None:
    """Write frames as one raw-RGB blob plus a JSON dimension sidecar."""
    path = Path(path)
    arrays = [np.asarray(a, dtype=np.uint8) for a in arrays]
    if not arrays:
        raise ValueError("no frames to pack")
    h, w = arrays[0].shape[:2]
    with open(path, "wb") as f:
        for a in arrays:
            if a.shape != (h, w, 3):
                raise ValueError("packed frames must share dimensions")
            f.write(a.tobytes())
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps({"width": w, "height": h, "fps": fps}))


def _load_packed(path: Path, fps):
    sidecar = path.with_suffix(".json")
    if not sidecar.is_file():
        raise NotFound(f"packed frames need a sidecar: {sidecar} missing")
    try:
        meta = json.loads(sidecar.read_text())
        w, h = int(meta["width"]), int(meta["height"])
    except (ValueError, KeyError, TypeError) as e:
        raise MalformedImage(f"{sidecar.name}: bad sidecar ({e})") from e
    if fps is None:
        fps = float(meta.get("fps", 30.0))
    data = path.read_bytes()
    stride = w * h * 3
    if stride == 0 or len(data) % stride != 0:
        raise MalformedImage(f"{path.name}: size {len(data)} is not a "
                             f"multiple of {w}x{h}x3")
    n = len(data) // stride
    arr = np.frombuffer(data, dtype=np.uint8).reshape(n, h, w, 3)
    return [arr[i].copy() for i in range(n)], fps


def load_frames(path, fps: float | None = None) -> list[Frame]:
    """Load an ordered frame sequence from a directory or a packed file.

    Directories take PPM/PNG files in lexicographic filename order.
    Explicit fps wins over the packed sidecar's; the fallback is 30.
    """
    path = Path(path)
    if path.is_file():
        arrays, fps = _load_packed(path, fps)
        names = [path.name] * len(arrays)
    elif path.is_dir():
        files = sorted(p for p in path.iterdir()
                       if p.suffix.lower() in _IMAGE_SUFFIXES)
        if not files:
            raise NotFound(f"no PPM or PNG files in {path}")
        arrays = [read_image(p) for p in files]
        names = [p.name for p in files]
        if fps is None:
            fps = 30.0
    else:
        raise NotFound(f"{path} does not exist")

    shape = arrays[0].shape
    frames = []
    for i, (a, name) in enumerate(zip(arrays, names)):
        if a.shape != shape:
            raise MixedDimensions(
                f"{name}: {a.shape[1]}x{a.shape[0]} after "
                f"{shape[1]}x{shape[0]}")
        try:
            frames.append(Frame(width=a.shape[1], height=a.shape[0],
                                pixels=a, seq=i, timestamp=i / fps))
        except ValueError as e:
            raise MalformedImage(f"{name}: {e}") from e
    return frames
