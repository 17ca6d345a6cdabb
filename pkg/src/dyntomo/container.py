"""Bit-exact binary tensor container.

Layout of one block:
  bytes 0..7     magic, ASCII "DWTENSR1"
  bytes 8..127   header, ASCII, space padded to 120 bytes:
                 "f32 LE <ndim> <d0> <d1> ..."
  bytes 128..    payload, row-major little-endian float32

A ``.dwt`` file holds exactly one block.  Checkpoint files hold a one-line
JSON manifest followed by one block per named tensor, in manifest order.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import BinaryIO

import numpy as np

MAGIC = b"DWTENSR1"
HEADER_LEN = 120


def _encode_header(shape: tuple[int, ...]) -> bytes:
    text = "f32 LE " + str(len(shape)) + "".join(f" {d}" for d in shape)
    raw = text.encode("ascii")
    if len(raw) > HEADER_LEN:
        raise ValueError(f"tensor rank/dims too large for header: {text!r}")
    return raw.ljust(HEADER_LEN, b" ")


def write_block(fh: BinaryIO, array: np.ndarray) -> None:
    """Append one container block for ``array`` (cast to float32)."""
    data = np.ascontiguousarray(array, dtype="<f4")
    fh.write(MAGIC)
    fh.write(_encode_header(data.shape))
    fh.write(data.tobytes())


def read_block(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(8)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
    header = fh.read(HEADER_LEN).decode("ascii").split()
    if header[:2] != ["f32", "LE"]:
        raise ValueError(f"unsupported header {header!r}")
    ndim = int(header[2])
    shape = tuple(int(d) for d in header[3 : 3 + ndim])
    count = int(np.prod(shape)) if shape else 1
    payload = fh.read(4 * count)
    if len(payload) != 4 * count:
        raise ValueError("truncated payload")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()


def save_tensor(path: str | Path, array: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_block(fh, array)


def load_tensor(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_block(fh)


def save_checkpoint(path: str | Path, manifest: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write a JSON manifest line plus one block per tensor.

    The manifest's ``tensors`` key is (re)written with the block order.
    """
    manifest = dict(manifest)
    manifest["tensors"] = list(tensors.keys())
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in manifest["tensors"]:
            write_block(fh, tensors[name])


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        manifest = json.loads(fh.readline().decode("utf-8"))
        tensors = {name: read_block(fh) for name in manifest["tensors"]}
    return manifest, tensors
