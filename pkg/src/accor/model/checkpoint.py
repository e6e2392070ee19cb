"""Model checkpoint files.

Layout (little-endian)::

    magic      8 bytes  b"ACCORCK1"
    version    u16
    width      u8       bytes per real component (4 or 8)
    config     u32 length + UTF-8 JSON of the ModelConfig
    n_tensors  u32
    tensors    n_tensors x (u16 name length, UTF-8 name, u8 is_complex,
                            u8 ndim, ndim x u32 extents, payload)

Complex payloads interleave real and imaginary parts like the dataset
container.  At width 8 a save/load cycle is bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .network import AccorNetwork, ModelConfig

MAGIC = b"ACCORCK1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(net: AccorNetwork, path, width: int = 8) -> None:
    if width not in (4, 8):
        raise ValueError("width must be 4 or 8 bytes")
    real_dt = np.dtype("<f8" if width == 8 else "<f4")
    cfg = json.dumps(net.config.to_dict(), sort_keys=True).encode("utf-8")
    state = net.state_dict()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<8sHB", MAGIC, VERSION, width))
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", len(state)))
        for name in sorted(state):
            arr = np.asarray(state[name])
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            is_complex = np.iscomplexobj(arr)
            fh.write(struct.pack("<BB", int(is_complex), arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            if is_complex:
                payload = np.stack([arr.real, arr.imag], axis=-1)
            else:
                payload = arr
            fh.write(np.ascontiguousarray(payload, dtype=real_dt).tobytes())


def load_checkpoint(path) -> AccorNetwork:
    raw = Path(path).read_bytes()
    try:
        magic, version, width = struct.unpack_from("<8sHB", raw, 0)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        if width not in (4, 8):
            raise CheckpointError(f"{path}: invalid width {width}")
        real_dt = np.dtype("<f8" if width == 8 else "<f4")
        off = 11
        (clen,) = struct.unpack_from("<I", raw, off)
        off += 4
        config = ModelConfig.from_dict(json.loads(raw[off : off + clen].decode("utf-8")))
        off += clen
        (count,) = struct.unpack_from("<I", raw, off)
        off += 4
        state = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off : off + nlen].decode("utf-8")
            off += nlen
            is_complex, ndim = struct.unpack_from("<BB", raw, off)
            off += 2
            shape = struct.unpack_from(f"<{ndim}I", raw, off)
            off += 4 * ndim
            n_real = int(np.prod(shape)) * (2 if is_complex else 1)
            nbytes = n_real * width
            if off + nbytes > len(raw):
                raise CheckpointError(f"{path}: truncated in tensor {name!r}")
            vals = np.frombuffer(raw, dtype=real_dt, count=n_real, offset=off).astype(np.float64)
            off += nbytes
            if is_complex:
                pairs = vals.reshape(tuple(shape) + (2,))
                state[name] = pairs[..., 0] + 1j * pairs[..., 1]
            else:
                state[name] = vals.reshape(shape)
        if off != len(raw):
            raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes")
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated checkpoint ({exc})") from None
    net = AccorNetwork.init(config, seed=0)
    try:
        net.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    return net
