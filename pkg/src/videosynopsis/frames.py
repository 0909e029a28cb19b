"""Frame sources and minimal image file I/O.

Two on-disk layouts are supported: a directory of numbered image files, and
a raw 24-bit RGB stream whose geometry comes from the video metadata.  PPM
(P6) files are read and written natively; other image formats work when
Pillow is installed.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterator, Protocol, Sequence

import numpy as np

try:
    from PIL import Image as _PILImage
except ImportError:
    _PILImage = None

__all__ = [
    "FrameSequence",
    "ArrayFrames",
    "ImageDirectoryFrames",
    "RawVideoFrames",
    "read_image",
    "write_image",
]


class FrameSequence(Protocol):
    """Random-access, iterable sequence of video frames."""

    def __len__(self) -> int: ...

    def frame(self, index: int) -> np.ndarray: ...

    def __iter__(self) -> Iterator[np.ndarray]: ...


def _read_ppm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    # header: magic, width, height, maxval, separated by whitespace/comments
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic not in (b"P6", b"P5") or maxval != 255:
        raise ValueError(f"{path}: unsupported PNM variant ({magic!r}, maxval {maxval})")
    channels = 3 if magic == b"P6" else 1
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height * channels, offset=pos)
    if channels == 1:
        return pixels.reshape(height, width).copy()
    return pixels.reshape(height, width, 3).copy()


def _write_ppm(path: Path, pixels: np.ndarray) -> None:
    arr = np.ascontiguousarray(pixels.astype(np.uint8))
    if arr.ndim == 2:
        header = f"P5 {arr.shape[1]} {arr.shape[0]} 255\n"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = f"P6 {arr.shape[1]} {arr.shape[0]} 255\n"
    else:
        raise ValueError(f"cannot write array of shape {arr.shape} as PNM")
    path.write_bytes(header.encode("ascii") + arr.tobytes())


def read_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pgm", ".pnm"):
        return _read_ppm(path)
    if _PILImage is None:
        raise ValueError(f"{path}: only PNM images are readable without Pillow installed")
    with _PILImage.open(path) as img:
        return np.asarray(img.convert("RGB"))


def write_image(path: str | Path, pixels: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pgm", ".pnm"):
        _write_ppm(path, pixels)
        return
    if _PILImage is None:
        raise ValueError(f"{path}: only PNM images are writable without Pillow installed")
    _PILImage.fromarray(pixels.astype(np.uint8)).save(path)


class ArrayFrames:
    """In-memory frame sequence (tests, synthetic videos)."""

    def __init__(self, frames: Sequence[np.ndarray]):
        self._frames = list(frames)

    def __len__(self) -> int:
        return len(self._frames)

    def frame(self, index: int) -> np.ndarray:
        if not 0 <= index < len(self._frames):
            raise IndexError(f"no frame {index} (have {len(self._frames)})")
        return self._frames[index]

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self._frames)


_NUMBERED = re.compile(r"(\d+)\.(?:ppm|pgm|pnm|png|jpg|jpeg|bmp)$", re.IGNORECASE)


class ImageDirectoryFrames:
    """Directory of numbered image files, ordered by their number."""

    def __init__(self, directory: str | Path):
        directory = Path(directory)
        if not directory.is_dir():
            raise FileNotFoundError(f"frame directory not found: {directory}")
        numbered = []
        for entry in directory.iterdir():
            m = _NUMBERED.search(entry.name)
            if m:
                numbered.append((int(m.group(1)), entry))
        numbered.sort()
        if not numbered:
            raise FileNotFoundError(f"no numbered image files in {directory}")
        self._paths = [p for _, p in numbered]

    def __len__(self) -> int:
        return len(self._paths)

    def frame(self, index: int) -> np.ndarray:
        if not 0 <= index < len(self._paths):
            raise IndexError(f"no frame {index} (have {len(self._paths)})")
        return read_image(self._paths[index])

    def __iter__(self) -> Iterator[np.ndarray]:
        for path in self._paths:
            yield read_image(path)


class RawVideoFrames:
    """Raw interleaved RGB24 stream with fixed frame geometry."""

    def __init__(self, path: str | Path, width: int, height: int):
        self.path = Path(path)
        if not self.path.is_file():
            raise FileNotFoundError(f"raw video not found: {path}")
        self.width = width
        self.height = height
        self._frame_bytes = width * height * 3
        size = self.path.stat().st_size
        if size % self._frame_bytes:
            raise ValueError(
                f"{path}: size {size} is not a multiple of the {width}x{height} frame size"
            )
        self._count = size // self._frame_bytes

    def __len__(self) -> int:
        return self._count

    def frame(self, index: int) -> np.ndarray:
        if not 0 <= index < self._count:
            raise IndexError(f"no frame {index} (have {self._count})")
        with open(self.path, "rb") as fh:
            fh.seek(index * self._frame_bytes)
            buf = fh.read(self._frame_bytes)
        return np.frombuffer(buf, dtype=np.uint8).reshape(self.height, self.width, 3)

    def __iter__(self) -> Iterator[np.ndarray]:
        with open(self.path, "rb") as fh:
            for _ in range(self._count):
                buf = fh.read(self._frame_bytes)
                yield np.frombuffer(buf, dtype=np.uint8).reshape(self.height, self.width, 3)
