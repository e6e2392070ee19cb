"""FMCW MIMO sensing model: array geometry, frame synthesis and range profiles.

The receive chain is a stretch-processing approximation: every scatterer
contributes one beat tone whose frequency is proportional to its round-trip
delay.  All receive-chain constants are synthetic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .ctensor import fft
from .frames import FRAME_SHAPE, N_RX, N_SAMPLES, N_TX, Band, Dataset, IQFrame

C_LIGHT = 299_792_458.0


class AliasingError(ValueError):
    """A scatterer's beat tone would wrap past the last range bin."""


@dataclass(frozen=True)
class ChirpParams:
    center_frequency: float = 64e9
    bandwidth: float = 4e9
    n_samples: int = N_SAMPLES
    amplitude: float = 1.0
    chirp_duration: float = 100e-6

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if not self.chirp_duration > 0:
            raise ValueError("chirp_duration must be positive")

    @classmethod
    def for_band(cls, band, **kwargs) -> "ChirpParams":
        return cls(center_frequency=Band.parse(band).frequency, **kwargs)

    @property
    def range_resolution(self) -> float:
        return C_LIGHT / (2.0 * self.bandwidth)

    @property
    def max_range(self) -> float:
        """One-way range at which the beat tone reaches bin ``n_samples``."""
        return self.n_samples * self.range_resolution

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.center_frequency


@dataclass(frozen=True)
class AntennaArray:
    """L-shaped array: Rx elements on one line, Tx elements on an orthogonal line."""

    tx_positions: np.ndarray
    rx_positions: np.ndarray
    spacing: float

    def __post_init__(self):
        tx = np.asarray(self.tx_positions, dtype=float)
        rx = np.asarray(self.rx_positions, dtype=float)
        object.__setattr__(self, "tx_positions", tx)
        object.__setattr__(self, "rx_positions", rx)
        if tx.shape != (N_TX, 3) or rx.shape != (N_RX, 3):
            raise ValueError(f"need {N_TX} Tx and {N_RX} Rx 3-D positions")
        u, v = _line_direction(tx), _line_direction(rx)
        if u is None or v is None:
            raise ValueError("Tx and Rx elements must each lie on a straight line")
        if abs(float(u @ v)) > 1e-9:
            raise ValueError("Tx and Rx lines must be orthogonal")

    @classmethod
    def l_shaped(cls, spacing: float | None = None, center_frequency: float = 64e9) -> "AntennaArray":
        """Standard layout in the z=0 plane facing +z.

        Rx run along x on the top edge, Tx run along y on the right edge;
        ``spacing`` defaults to half a wavelength.
        """
        d = spacing if spacing is not None else C_LIGHT / center_frequency / 2.0
        i = np.arange(N_RX)
        j = np.arange(N_TX)
        rx = np.stack([(i - (N_RX - 1) / 2) * d, np.full(N_RX, N_TX / 2 * d), np.zeros(N_RX)], axis=1)
        tx = np.stack([np.full(N_TX, N_RX / 2 * d), ((N_TX - 1) / 2 - j) * d, np.zeros(N_TX)], axis=1)
        return cls(tx_positions=tx, rx_positions=rx, spacing=d)


def _line_direction(points: np.ndarray) -> np.ndarray | None:
    delta = points - points[0]
    norms = np.linalg.norm(delta, axis=1)
    if norms.max() == 0:
        return None
    u = delta[norms.argmax()] / norms.max()
    residual = delta - np.outer(delta @ u, u)
    if np.abs(residual).max() > 1e-9 * max(1.0, norms.max()):
        return None
    return u


@dataclass(frozen=True)
class VirtualChannel:
    index: int
    tx: int
    rx: int
    tx_position: np.ndarray
    rx_position: np.ndarray
    midpoint: np.ndarray


def build_virtual_array(array: AntennaArray) -> list[VirtualChannel]:
    """All Tx/Rx pairs, Tx-major: channel ``c = tx * 20 + rx``."""
    channels = []
    for t in range(N_TX):
        for r in range(N_RX):
            pt, pr = array.tx_positions[t], array.rx_positions[r]
            channels.append(VirtualChannel(t * N_RX + r, t, r, pt, pr, (pt + pr) / 2.0))
    return channels


def _channel_positions(array: AntennaArray) -> tuple[np.ndarray, np.ndarray]:
    tx = np.repeat(array.tx_positions, N_RX, axis=0)
    rx = np.tile(array.rx_positions, (N_TX, 1))
    return tx, rx


@dataclass(frozen=True)
class Scatterer:
    position: tuple[float, float, float]
    reflectivity: complex = 1.0

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 3:
            raise ValueError("scatterer position must be 3-D")
        if not pos[2] > 0:
            raise ValueError(f"scatterer at {pos} is not in front of the array")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "reflectivity", complex(self.reflectivity))


@dataclass(frozen=True)
class SceneConfig:
    scatterers: tuple[Scatterer, ...] = ()
    box_attenuation: float = 1.0
    noise_snr_db: float | None = None
    class_label: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        if not 0 < self.box_attenuation <= 1:
            raise ValueError("box_attenuation must lie in (0, 1]")
        if self.class_label < 0:
            raise ValueError("class_label must be non-negative")


def max_beat_bin(scene: SceneConfig, chirp: ChirpParams, array: AntennaArray) -> float:
    """Largest beat-tone bin (fractional) over all channels and scatterers."""
    if not scene.scatterers:
        return 0.0
    tx, rx = _channel_positions(array)
    q = np.array([s.position for s in scene.scatterers])
    d = np.linalg.norm(tx[:, None] - q[None], axis=2) + np.linalg.norm(rx[:, None] - q[None], axis=2)
    return float(d.max() / C_LIGHT * chirp.bandwidth)


def check_unambiguous(scene: SceneConfig, chirp: ChirpParams, array: AntennaArray) -> None:
    top = max_beat_bin(scene, chirp, array)
    if top >= chirp.n_samples:
        label = scene.name or f"class {scene.class_label}"
        raise AliasingError(
            f"scene {label!r} reaches beat bin {top:.1f} >= {chirp.n_samples} "
            f"(one-way range limit {chirp.max_range:.3f} m)"
        )


def beat_signal(scene: SceneConfig, chirp: ChirpParams, array: AntennaArray) -> np.ndarray:
    """Noise-free ``(400, n_samples)`` beat signal of a scene."""
    out = np.zeros((N_TX * N_RX, chirp.n_samples), dtype=np.complex128)
    if not scene.scatterers:
        return out
    tx, rx = _channel_positions(array)
    n = np.arange(chirp.n_samples)
    slope = chirp.bandwidth / chirp.chirp_duration
    dt = chirp.chirp_duration / chirp.n_samples
    for s in scene.scatterers:
        q = np.asarray(s.position)
        tau = (np.linalg.norm(tx - q, axis=1) + np.linalg.norm(rx - q, axis=1)) / C_LIGHT
        phase = chirp.center_frequency * tau[:, None] + slope * tau[:, None] * n[None, :] * dt
        out += s.reflectivity * np.exp(2j * np.pi * phase)
    return out * (scene.box_attenuation * chirp.amplitude)


def add_noise(signal: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add circular white Gaussian noise at ``snr_db`` relative to the mean signal power."""
    power = float(np.mean(np.abs(signal) ** 2))
    sigma = np.sqrt(power / 10.0 ** (snr_db / 10.0) / 2.0)
    noise = rng.standard_normal(signal.shape) + 1j * rng.standard_normal(signal.shape)
    return signal + sigma * noise


def simulate_frame(
    scene: SceneConfig,
    chirp: ChirpParams | None = None,
    array: AntennaArray | None = None,
    seed=None,
    band=None,
) -> IQFrame:
    chirp = chirp or ChirpParams()
    array = array or AntennaArray.l_shaped(center_frequency=chirp.center_frequency)
    if chirp.n_samples != N_SAMPLES:
        raise ValueError(f"frames carry {N_SAMPLES} samples per channel")
    check_unambiguous(scene, chirp, array)
    data = beat_signal(scene, chirp, array)
    if scene.noise_snr_db is not None:
        data = add_noise(data, scene.noise_snr_db, np.random.default_rng(seed))
    return IQFrame(data, scene.class_label, band if band is not None else _band_of(chirp))


def _band_of(chirp: ChirpParams) -> Band:
    return Band.GHZ67 if abs(chirp.center_frequency - 67e9) < 1.5e9 else Band.GHZ64


def range_profile(frame) -> np.ndarray:
    """DFT of every channel along the sample axis.

    Accepts an :class:`IQFrame` or any array whose last axis holds samples
    (a batch of frames is transformed in one call).
    """
    data = frame.data if isinstance(frame, IQFrame) else np.asarray(frame)
    return fft(data, axis=-1)


@dataclass(frozen=True)
class JitterSpec:
    """Per-frame perturbation emulating different object orientations.

    Positions get isotropic Gaussian jitter (metres); reflectivity magnitudes
    are multiplied by a log-normal factor ``exp(N(0, reflectivity_sigma**2))``.
    """

    position_sigma: float = 0.01
    reflectivity_sigma: float = 0.1

    def __post_init__(self):
        if self.position_sigma < 0 or self.reflectivity_sigma < 0:
            raise ValueError("jitter spreads must be non-negative")


def jitter_scene(scene: SceneConfig, jitter: JitterSpec, rng: np.random.Generator) -> SceneConfig:
    moved = []
    for s in scene.scatterers:
        offset = rng.normal(0.0, 1.0, 3) * jitter.position_sigma
        gain = np.exp(rng.normal(0.0, 1.0) * jitter.reflectivity_sigma)
        pos = np.asarray(s.position) + offset
        # keep jittered points in front of the array
        pos[2] = max(pos[2], 1e-3)
        moved.append(Scatterer(tuple(pos), s.reflectivity * gain))
    return replace(scene, scatterers=tuple(moved))


def generate_dataset(
    classes: Sequence[SceneConfig],
    per_class: int,
    jitter: JitterSpec | None = None,
    seed: int = 0,
    chirp: ChirpParams | None = None,
    array: AntennaArray | None = None,
    band=None,
) -> Dataset:
    """Draw ``per_class`` jittered frames from each scene template.

    Frame ``i`` (class-major order) uses the generator seeded by
    ``(seed, i)``, so any subset of frames can be regenerated independently.
    """
    if not classes:
        raise ValueError("at least one scene template is required")
    if len(classes) < 2:
        raise ValueError("at least two classes are required")
    if per_class < 1:
        raise ValueError("per_class must be at least 1")
    labels = sorted(t.class_label for t in classes)
    if labels != list(range(len(classes))):
        raise ValueError("template class labels must be exactly 0..C-1")
    jitter = jitter or JitterSpec()
    chirp = chirp or (ChirpParams.for_band(band) if band is not None else ChirpParams())
    array = array or AntennaArray.l_shaped(center_frequency=chirp.center_frequency)
    for t in classes:
        check_unambiguous(t, chirp, array)
    band = Band.parse(band) if band is not None else _band_of(chirp)

    data = np.empty((len(classes) * per_class,) + FRAME_SHAPE, dtype=np.complex64)
    out_labels = np.empty(len(data), dtype=np.int64)
    i = 0
    for template in classes:
        for _ in range(per_class):
            rng = np.random.default_rng([seed, i])
            scene = jitter_scene(template, jitter, rng)
            data[i] = simulate_frame(scene, chirp, array, seed=rng, band=band).data
            out_labels[i] = template.class_label
            i += 1
    names = [t.name or f"class_{t.class_label}" for t in sorted(classes, key=lambda t: t.class_label)]
    return Dataset(data=data, labels=out_labels, class_names=names, band=band)


OBJECT_NAMES = (
    "hammer",
    "screwdriver",
    "deodorant",
    "calculator",
    "water_bottle",
    "plastic_cup",
    "coiled_cable",
    "ball",
    "mug",
    "tape_roll",
)


def _ring(z: float, radius: float, count: int, rho: float, phase0: float = 0.0):
    angles = phase0 + 2 * np.pi * np.arange(count) / count
    return [Scatterer((radius * np.cos(a), radius * np.sin(a), z), rho) for a in angles]


def _line(p0, p1, count: int, rho: float):
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    return [Scatterer(tuple(p0 + t * (p1 - p0)), rho) for t in np.linspace(0.0, 1.0, count)]


def _grid(z: float, xs, ys, rho: float):
    return [Scatterer((x, y, z), rho) for x in xs for y in ys]


def default_object_scatterers() -> dict[str, list[Scatterer]]:
    """Coarse point-scatterer sketches of ten packaged household objects.

    The box top sits at 0.40 m below the sensor and its floor at 0.60 m.
    Each sketch differs from the others in depth profile, lateral extent or
    orientation by at least one resolution cell.
    """
    return {
        "hammer": [Scatterer((0.06, 0.0, 0.46), 1.0), Scatterer((0.06, 0.02, 0.46), 0.6)]
        + _line((-0.08, 0.0, 0.50), (0.03, 0.0, 0.50), 4, 0.25),
        "screwdriver": _line((0.0, -0.09, 0.52), (0.0, 0.07, 0.52), 5, 0.3),
        "deodorant": _line((0.0, 0.06, 0.44), (0.0, 0.06, 0.58), 6, 0.45),
        "calculator": _grid(0.575, (-0.05, 0.0, 0.05), (-0.08, 0.0, 0.08), 0.35),
        "water_bottle": [Scatterer((0.0, 0.0, 0.45), 0.9), Scatterer((0.0, 0.0, 0.585), 0.9)],
        "plastic_cup": _ring(0.48, 0.03, 4, 0.2) + [Scatterer((0.0, 0.0, 0.55), 0.25)],
        "coiled_cable": _ring(0.535, 0.065, 8, 0.3),
        "ball": [Scatterer((0.0, 0.0, 0.50), 1.4)],
        "mug": _ring(0.505, 0.04, 4, 0.4, 0.3) + [Scatterer((-0.08, 0.0, 0.505), 0.5)],
        "tape_roll": _ring(0.44, 0.05, 6, 0.35),
    }


def box_scatterers(reflectivity: float = 0.08) -> list[Scatterer]:
    """Weak returns from the top and floor faces of the packaging box."""
    return [Scatterer((0.0, 0.0, 0.40), reflectivity), Scatterer((0.0, 0.0, 0.60), reflectivity)]


def default_templates(
    n_classes: int = 10,
    box_attenuation: float = 0.7,
    noise_snr_db: float | None = 20.0,
) -> list[SceneConfig]:
    """Scene templates for the synthetic benchmark (one object per class)."""
    objects = default_object_scatterers()
    if not 2 <= n_classes <= len(OBJECT_NAMES):
        raise ValueError(f"n_classes must lie in [2, {len(OBJECT_NAMES)}]")
    return [
        SceneConfig(
            scatterers=tuple(objects[name] + box_scatterers()),
            box_attenuation=box_attenuation,
            noise_snr_db=noise_snr_db,
            class_label=c,
            name=name,
        )
        for c, name in enumerate(OBJECT_NAMES[:n_classes])
    ]
