"""Radar frame and dataset containers shared by the simulator and file I/O."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterator, Sequence

import numpy as np

N_TX = 20
N_RX = 20
N_VIRTUAL = N_TX * N_RX
N_SAMPLES = 100
FRAME_SHAPE = (N_VIRTUAL, N_SAMPLES)


class Band(IntEnum):
    """Centre-frequency band tag; the value is the frequency in GHz."""

    GHZ64 = 64
    GHZ67 = 67

    @property
    def frequency(self) -> float:
        return float(self.value) * 1e9

    @classmethod
    def parse(cls, value) -> "Band":
        if isinstance(value, Band):
            return value
        text = str(value).strip().lower().removesuffix("ghz").strip()
        try:
            return cls(int(round(float(text))))
        except ValueError:
            raise ValueError(f"unknown band {value!r}; expected 64 or 67") from None


@dataclass
class IQFrame:
    """One radar shot: ``(virtual channels, samples)`` complex IQ data."""

    data: np.ndarray
    label: int
    band: Band = Band.GHZ64

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.shape != FRAME_SHAPE:
            raise ValueError(f"IQ frame must have shape {FRAME_SHAPE}, got {self.data.shape}")
        self.label = int(self.label)
        self.band = Band.parse(self.band)


@dataclass
class Dataset:
    """Labelled frames stored as one ``(n_frames, channels, samples)`` array.

    Samples are held as complex64, the canonical storage precision.
    Indexing yields :class:`IQFrame` objects.
    """

    data: np.ndarray
    labels: np.ndarray
    class_names: list[str]
    band: Band = Band.GHZ64
    bands: np.ndarray | None = None
    n_rx: int = N_RX
    n_tx: int = N_TX
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex64)
        if self.data.ndim != 3:
            self.data = self.data.reshape((-1,) + FRAME_SHAPE)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.band = Band.parse(self.band)
        if self.bands is None:
            self.bands = np.full(len(self.labels), int(self.band), dtype=np.int64)
        self.bands = np.asarray(self.bands, dtype=np.int64).reshape(-1)
        self.class_names = [str(n) for n in self.class_names]
        self.validate()

    def validate(self) -> None:
        n = len(self.labels)
        if self.data.shape[0] != n or len(self.bands) != n:
            raise ValueError("frame, label and band counts differ")
        if self.data.shape[1] != self.n_rx * self.n_tx:
            raise ValueError(
                f"frames have {self.data.shape[1]} channels, header says {self.n_rx}x{self.n_tx}"
            )
        if len(self.class_names) < 2:
            raise ValueError("a dataset needs at least 2 classes")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    @classmethod
    def from_frames(cls, frames: Sequence[IQFrame], class_names: Sequence[str], band=None) -> "Dataset":
        if frames:
            data = np.stack([f.data for f in frames])
        else:
            data = np.zeros((0,) + FRAME_SHAPE, dtype=np.complex128)
        band = Band.parse(band) if band is not None else (frames[0].band if frames else Band.GHZ64)
        return cls(
            data=data,
            labels=[f.label for f in frames],
            class_names=list(class_names),
            band=band,
            bands=[int(f.band) for f in frames],
        )

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> IQFrame:
        return IQFrame(self.data[i], int(self.labels[i]), Band(int(self.bands[i])))

    def __iter__(self) -> Iterator[IQFrame]:
        for i in range(len(self)):
            yield self[i]

    def class_counts(self) -> dict[int, int]:
        counts = Counter(int(v) for v in self.labels)
        return {c: counts.get(c, 0) for c in range(self.n_classes)}

    def subset(self, ids) -> "Dataset":
        ids = np.asarray(ids, dtype=np.int64)
        return Dataset(
            data=self.data[ids],
            labels=self.labels[ids],
            class_names=self.class_names,
            band=self.band,
            bands=self.bands[ids],
            n_rx=self.n_rx,
            n_tx=self.n_tx,
        )
