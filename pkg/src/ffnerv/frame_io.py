"""PNG frame sequence I/O. Lexicographic filename order defines the time
axis; pixel values map to [0, 1] via /255."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


class FrameIOError(ValueError):
    pass


def read_frames(directory: str | Path) -> np.ndarray:
    """Load a directory of uniform-size 8-bit images as (T,3,H,W) in [0,1]."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FrameIOError(f"not a directory: {directory}")
    paths = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"))
    if not paths:
        raise FrameIOError(f"no image frames found in {directory}")
    frames = []
    shape = None
    for p in paths:
        try:
            img = np.asarray(Image.open(p).convert("RGB"))
        except Exception as exc:
            raise FrameIOError(f"unreadable frame {p}: {exc}") from exc
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise FrameIOError(
                f"inconsistent frame size: {p} is {img.shape[:2]}, expected "
                f"{shape[:2]}")
        frames.append(img.transpose(2, 0, 1))
    arr = np.stack(frames).astype(np.float32) / 255.0
    return np.ascontiguousarray(arr)


def write_frame(path: str | Path, frame: np.ndarray) -> None:
    """Write a (3,H,W) or (1,H,W) [0,1] array as an 8-bit PNG."""
    arr = np.clip(np.asarray(frame), 0.0, 1.0)
    img = np.round(arr * 255.0).astype(np.uint8)
    if img.shape[0] == 1:
        Image.fromarray(img[0], mode="L").save(path)
    else:
        Image.fromarray(img.transpose(1, 2, 0), mode="RGB").save(path)


def write_frames(directory: str | Path, frames: np.ndarray,
                 start_index: int = 0) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        p = directory / f"frame_{start_index + i:05d}.png"
        write_frame(p, frame)
        paths.append(p)
    return paths
