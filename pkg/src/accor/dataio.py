"""Binary dataset container, external-layout importer and train/test splitting.

Container layout (little-endian throughout)::

    magic        8 bytes  b"ACCORIQ1"
    version      u16
    band_ghz     f64
    n_rx         u32
    n_tx         u32
    n_samples    u32      samples per channel
    n_frames     u32
    n_classes    u16
    class names  n_classes x (u16 byte length + UTF-8 bytes)
    frames       n_frames x (label u16, band u8, n_rx*n_tx*n_samples x (I f32, Q f32))

Frame samples are channel-major: all samples of channel 0, then channel 1, ...
"""

from __future__ import annotations

import configparser
import fnmatch
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .frames import FRAME_SHAPE, N_RX, N_SAMPLES, N_TX, Band, Dataset, IQFrame

MAGIC = b"ACCORIQ1"
VERSION = 1
_HEADER = struct.Struct("<8sHdIIIIH")
_FRAME_HEAD = struct.Struct("<HB")


class DatasetFormatError(ValueError):
    """A dataset or layout file does not match the expected format."""


__all__ = [
    "Dataset",
    "DatasetFormatError",
    "IQFrame",
    "LayoutDescriptor",
    "SplitSpec",
    "export_external",
    "import_external",
    "read_dataset",
    "split_train_test",
    "write_dataset",
]


# -- canonical container -------------------------------------------------------
def _frame_bytes(n_channels: int, n_samples: int) -> int:
    return _FRAME_HEAD.size + n_channels * n_samples * 8


def write_dataset(dataset: Dataset, path) -> None:
    dataset.validate()
    n, n_ch, n_s = dataset.data.shape
    if n_ch != dataset.n_rx * dataset.n_tx:
        raise DatasetFormatError("channel count disagrees with n_rx * n_tx")
    limits = {"n_rx": dataset.n_rx, "n_tx": dataset.n_tx, "n_samples": n_s, "n_frames": n}
    for key, value in limits.items():
        if not 0 <= value < 2**32:
            raise DatasetFormatError(f"{key}={value} does not fit the header")
    if dataset.n_classes >= 2**16:
        raise DatasetFormatError("too many classes for the header")
    names = [name.encode("utf-8") for name in dataset.class_names]
    if any(len(b) >= 2**16 for b in names):
        raise DatasetFormatError("class name longer than 65535 bytes")

    header = _HEADER.pack(
        MAGIC, VERSION, float(int(dataset.band)), dataset.n_rx, dataset.n_tx, n_s, n, dataset.n_classes
    )
    payload = np.empty((n_ch * n_s, 2), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(header)
        for b in names:
            fh.write(struct.pack("<H", len(b)))
            fh.write(b)
        for i in range(n):
            fh.write(_FRAME_HEAD.pack(int(dataset.labels[i]), int(dataset.bands[i])))
            flat = dataset.data[i].reshape(-1)
            payload[:, 0] = flat.real
            payload[:, 1] = flat.imag
            fh.write(payload.tobytes())


def read_dataset(path) -> Dataset:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"{path}: file too short for a header")
    magic, version, band_ghz, n_rx, n_tx, n_s, n, n_classes = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    if n_classes < 2:
        raise DatasetFormatError(f"{path}: header declares {n_classes} classes (need >= 2)")
    offset = _HEADER.size
    names = []
    for c in range(n_classes):
        if offset + 2 > len(raw):
            raise DatasetFormatError(f"{path}: truncated in class name {c}")
        (length,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        if offset + length > len(raw):
            raise DatasetFormatError(f"{path}: truncated in class name {c}")
        names.append(raw[offset : offset + length].decode("utf-8"))
        offset += length

    n_ch = n_rx * n_tx
    fsize = _frame_bytes(n_ch, n_s)
    body = len(raw) - offset
    if body != n * fsize:
        if body < n * fsize:
            frame = body // fsize
            raise DatasetFormatError(
                f"{path}: truncated in frame {frame} (expected {n} frames of {fsize} bytes, "
                f"found {body} bytes)"
            )
        raise DatasetFormatError(
            f"{path}: payload length {body} does not match {n} frames of {n_ch}x{n_s} samples"
        )
    rec = np.dtype([("label", "<u2"), ("band", "u1"), ("iq", "<f4", (n_ch * n_s, 2))])
    frames = np.frombuffer(raw, dtype=rec, count=n, offset=offset)
    labels = frames["label"].astype(np.int64)
    bad = np.nonzero(labels >= n_classes)[0]
    if len(bad):
        raise DatasetFormatError(f"{path}: frame {bad[0]} has label {labels[bad[0]]} >= {n_classes}")
    bands = frames["band"].astype(np.int64)
    try:
        for b in np.unique(bands):
            Band(int(b))
        band = Band(int(round(band_ghz)))
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None
    iq = frames["iq"]
    data = (iq[..., 0] + 1j * iq[..., 1]).astype(np.complex64).reshape(n, n_ch, n_s)
    return Dataset(data=data, labels=labels, class_names=names, band=band, bands=bands, n_rx=n_rx, n_tx=n_tx)


# -- external layouts ------------------------------------------------------------
_DTYPES = {"float32": "f4", "float64": "f8", "int16": "i2", "int32": "i4"}
_ENCODINGS = ("interleaved", "planar")


@dataclass
class LayoutDescriptor:
    """How externally published IQ files are laid out.

    Each matching file holds one or more consecutive frames of ``shape``
    (channels x samples).  ``interleaved`` stores I,Q pairs per sample;
    ``planar`` stores the whole real plane of a frame followed by the
    imaginary plane.  ``label_map`` maps a class key to a label; a file's key
    is its parent directory name, falling back to the file-name prefix
    before the first ``_``.
    """

    shape: tuple[int, int] = FRAME_SHAPE
    encoding: str = "interleaved"
    dtype: str = "float32"
    byte_order: str = "little"
    label_map: dict[str, int] | None = None
    pattern: str = "*.bin"
    band: Band = Band.GHZ64

    def __post_init__(self):
        self.shape = tuple(int(v) for v in self.shape)
        if self.encoding not in _ENCODINGS:
            raise DatasetFormatError(f"unknown encoding {self.encoding!r}; use {_ENCODINGS}")
        if self.dtype not in _DTYPES:
            raise DatasetFormatError(f"unknown dtype {self.dtype!r}; use {sorted(_DTYPES)}")
        if self.byte_order not in ("little", "big"):
            raise DatasetFormatError(f"unknown byte_order {self.byte_order!r}")
        self.band = Band.parse(self.band)

    @property
    def numpy_dtype(self) -> np.dtype:
        return np.dtype(("<" if self.byte_order == "little" else ">") + _DTYPES[self.dtype])

    @classmethod
    def from_text(cls, text: str) -> "LayoutDescriptor":
        """Parse ``key = value`` lines (an optional ``[layout]`` header is allowed)."""
        parser = configparser.ConfigParser()
        if not text.lstrip().startswith("["):
            text = "[layout]\n" + text
        parser.read_string(text)
        section = parser[parser.sections()[0]]
        known = {"shape", "encoding", "dtype", "byte_order", "label_map", "pattern", "band"}
        unknown = set(section) - known
        if unknown:
            raise DatasetFormatError(f"unknown layout keys: {sorted(unknown)}")
        kwargs = {}
        if "shape" in section:
            kwargs["shape"] = tuple(int(v) for v in section["shape"].lower().replace("x", ",").split(","))
        for key in ("encoding", "dtype", "byte_order", "pattern", "band"):
            if key in section:
                kwargs[key] = section[key].strip()
        if "label_map" in section:
            mapping = {}
            for item in section["label_map"].split(","):
                if item.strip():
                    key, _, value = item.partition(":")
                    mapping[key.strip()] = int(value)
            kwargs["label_map"] = mapping
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "LayoutDescriptor":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        lines = [
            "[layout]",
            f"shape = {self.shape[0]}x{self.shape[1]}",
            f"encoding = {self.encoding}",
            f"dtype = {self.dtype}",
            f"byte_order = {self.byte_order}",
            f"pattern = {self.pattern}",
            f"band = {int(self.band)}",
        ]
        if self.label_map:
            lines.append("label_map = " + ", ".join(f"{k}:{v}" for k, v in self.label_map.items()))
        return "\n".join(lines) + "\n"


def _decode_frames(raw: bytes, layout: LayoutDescriptor, source) -> np.ndarray:
    dt = layout.numpy_dtype
    n_ch, n_s = layout.shape
    per_frame = n_ch * n_s * 2
    values = np.frombuffer(raw, dtype=dt)
    if len(raw) % dt.itemsize or len(values) % per_frame:
        raise DatasetFormatError(
            f"{source}: {len(raw)} bytes is not a whole number of {n_ch}x{n_s} {layout.dtype} frames"
        )
    values = values.astype(np.float64).reshape(-1, per_frame)
    if layout.encoding == "interleaved":
        pairs = values.reshape(-1, n_ch * n_s, 2)
        frames = pairs[..., 0] + 1j * pairs[..., 1]
    else:
        planes = values.reshape(-1, 2, n_ch * n_s)
        frames = planes[:, 0] + 1j * planes[:, 1]
    return frames.reshape(-1, n_ch, n_s)


def _encode_frames(frames: np.ndarray, layout: LayoutDescriptor) -> bytes:
    flat = frames.reshape(len(frames), -1)
    if layout.encoding == "interleaved":
        values = np.stack([flat.real, flat.imag], axis=-1)
    else:
        values = np.stack([flat.real, flat.imag], axis=1)
    dt = layout.numpy_dtype
    if dt.kind == "i":
        values = np.rint(values)
    return values.astype(dt).tobytes()


def _class_key(rel: Path) -> str:
    if len(rel.parts) > 1:
        return rel.parts[-2]
    return rel.stem.split("_", 1)[0]


def import_external(path, layout: LayoutDescriptor) -> Dataset:
    """Convert a directory (or single file) of external IQ files into a Dataset.

    Files are visited in sorted relative-path order.
    """
    root = Path(path)
    if tuple(layout.shape) != FRAME_SHAPE:
        raise DatasetFormatError(f"declared shape {layout.shape} does not match {FRAME_SHAPE}")
    if root.is_file():
        files = [root]
        root = root.parent
    else:
        files = sorted(
            p for p in root.rglob("*") if p.is_file() and fnmatch.fnmatch(p.name, layout.pattern)
        )
    if not files:
        raise DatasetFormatError(f"no files matching {layout.pattern!r} under {root}")
    keys = sorted({_class_key(f.relative_to(root)) for f in files})
    label_map = dict(layout.label_map) if layout.label_map else {k: i for i, k in enumerate(keys)}
    n_classes = max(label_map.values()) + 1
    names = [f"class_{c}" for c in range(n_classes)]
    for k, v in label_map.items():
        names[v] = k

    chunks, labels = [], []
    for f in files:
        key = _class_key(f.relative_to(root))
        if key not in label_map:
            raise DatasetFormatError(f"{f}: class key {key!r} missing from label_map")
        frames = _decode_frames(f.read_bytes(), layout, f)
        chunks.append(frames)
        labels.extend([label_map[key]] * len(frames))
    data = np.concatenate(chunks)
    return Dataset(data=data, labels=labels, class_names=names, band=layout.band)


def export_external(dataset: Dataset, root, layout: LayoutDescriptor) -> list[Path]:
    """Write one file per frame as ``root/<class name>/frame_<i>.<ext>``."""
    root = Path(root)
    ext = layout.pattern.rsplit(".", 1)[-1] if "." in layout.pattern else "bin"
    written = []
    for i in range(len(dataset)):
        cls_dir = root / dataset.class_names[int(dataset.labels[i])]
        cls_dir.mkdir(parents=True, exist_ok=True)
        out = cls_dir / f"frame_{i:06d}.{ext}"
        out.write_bytes(_encode_frames(dataset.data[i : i + 1], layout))
        written.append(out)
    return written


# -- splitting -------------------------------------------------------------------
@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def _largest_remainder(sizes: np.ndarray, fraction: float) -> np.ndarray:
    """Per-group test counts whose total is the rounded overall test share."""
    exact = sizes * (1.0 - fraction)
    base = np.floor(exact).astype(int)
    total = int(np.floor(sizes.sum() * (1.0 - fraction) + 0.5))
    total = max(total, 1)
    order = np.lexsort((np.arange(len(sizes)), -(exact - base)))
    extra = total - base.sum()
    for g in order:
        if extra <= 0:
            break
        if base[g] < sizes[g]:
            base[g] += 1
            extra -= 1
    return base


def split_train_test(dataset, spec: SplitSpec | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint sorted train/test index arrays covering every frame.

    The test set always receives at least one frame; stratified splits round
    per-class test counts by largest remainder.
    """
    spec = spec or SplitSpec()
    labels = np.asarray(dataset.labels if hasattr(dataset, "labels") else dataset).reshape(-1)
    n = len(labels)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        classes = np.unique(labels)
        groups = [np.nonzero(labels == c)[0] for c in classes]
        n_test = _largest_remainder(np.array([len(g) for g in groups]), spec.train_fraction)
        test = np.concatenate([rng.permutation(g)[:k] for g, k in zip(groups, n_test)])
    else:
        k = max(1, int(np.floor(n * (1.0 - spec.train_fraction) + 0.5)))
        test = rng.permutation(n)[:k]
    test = np.sort(test)
    train = np.setdiff1d(np.arange(n), test)
    return train, test
