"""INI configuration files for the command-line tools.

Files are flat ``key = value`` lines grouped in sections.  Every key is
checked against a schema; an unknown key or a bad value raises
:class:`ConfigError` naming ``[section] key``.  ``resolve_*`` functions
return plain dicts with every default filled in (these are what manifests
record) and ``build_*`` functions turn such a dict into library objects.

Synthetic-scene file (``gen-synth``)::

    [dataset]
    per_class = 200          ; frames per class
    seed = 0
    n_classes = 10           ; built-in objects used when no [class.*] section exists
    band = 64                ; 64 or 67 (sets the centre frequency)
    box_attenuation = 0.7
    noise_snr_db = 20        ; or "none"

    [chirp]
    bandwidth = 4e9
    n_samples = 100
    chirp_duration = 100e-6
    amplitude = 1.0

    [jitter]
    position_sigma = 0.01    ; metres
    reflectivity_sigma = 0.1

    [class.my_object]        ; optional custom templates, one section per class
    label = 0
    scatterers = 0.0,0.0,0.5,1.0; 0.02,0.0,0.52,0.5   ; x,y,z,reflectivity
    include_box = true
    box_attenuation = 0.7    ; defaults to [dataset]
    noise_snr_db = 20        ; defaults to [dataset]

Training file (``train``/``eval``/``ablate``) sections ``[model]``,
``[loss]``, ``[train]`` and ``[split]`` whose keys mirror the fields of
ModelConfig, LossConfig, TrainConfig and SplitSpec.
"""

from __future__ import annotations

import configparser
from pathlib import Path
from typing import Any, Callable

from .frames import Band, N_SAMPLES
from .signal import (
    ChirpParams,
    JitterSpec,
    Scatterer,
    SceneConfig,
    box_scatterers,
    default_templates,
)


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("none", "") else float(text)


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _band(text: str) -> int:
    return int(Band.parse(text))


def _class_weights(text: str):
    lowered = text.strip().lower()
    if lowered in ("none", "uniform", ""):
        return None
    if lowered in ("inverse_frequency", "balanced"):
        return "inverse_frequency"
    return _float_list(text)


def _scatterers(text: str) -> list[list[float]]:
    out = []
    for item in text.split(";"):
        if not item.strip():
            continue
        vals = [float(v) for v in item.split(",")]
        if len(vals) != 4:
            raise ValueError(f"scatterer {item.strip()!r} needs x,y,z,reflectivity")
        out.append(vals)
    return out


Schema = dict[str, tuple[Callable[[str], Any], Any]]

SYNTH_SCHEMA: dict[str, Schema] = {
    "dataset": {
        "per_class": (int, 200),
        "seed": (int, 0),
        "n_classes": (int, 10),
        "band": (_band, 64),
        "box_attenuation": (float, 0.7),
        "noise_snr_db": (_opt_float, 20.0),
    },
    "chirp": {
        "bandwidth": (float, 4e9),
        "n_samples": (int, N_SAMPLES),
        "chirp_duration": (float, 100e-6),
        "amplitude": (float, 1.0),
    },
    "jitter": {
        "position_sigma": (float, 0.01),
        "reflectivity_sigma": (float, 0.1),
    },
}
CLASS_SCHEMA: Schema = {
    "label": (int, None),
    "scatterers": (_scatterers, None),
    "include_box": (_bool, True),
    "box_attenuation": (_opt_float, None),
    "noise_snr_db": (_opt_float, "inherit"),
}

TRAIN_SCHEMA: dict[str, Schema] = {
    "model": {
        "conv_channels": (_int_list, [32, 64, 128]),
        "kernel_size": (int, 5),
        "embed_dim": (int, 256),
        "attention_heads": (int, 16),
        "token_mode": (str, "spatial_tokens"),
        "pool_window": (int, 10),
        "conv_dims": (int, 1),
        "bn_epsilon": (float, 1e-5),
        "bn_momentum": (float, 0.1),
    },
    "loss": {
        "alpha": (float, 0.4),
        "tau": (float, 0.1),
        "class_weights": (_class_weights, None),
    },
    "train": {
        "epochs": (int, 60),
        "batch_size": (int, 32),
        "learning_rate": (float, 1e-3),
        "optimizer": (str, "adam"),
        "shuffle": (_bool, True),
        "divergence_threshold": (float, 1e6),
    },
    "split": {
        "train_fraction": (float, 0.8),
        "stratified": (_bool, True),
    },
}


def parse_ini(text: str, source: str = "<config>") -> configparser.ConfigParser:
    """Parse INI text; ``;`` and ``#`` start comments, keys are case-sensitive."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return parser


def read_ini(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_ini(path.read_text(), str(path))


def _resolve_section(parser, name: str, schema: Schema, overrides: dict | None = None) -> dict:
    values = {k: default for k, (_, default) in schema.items()}
    if parser is not None and parser.has_section(name):
        for key, raw in parser.items(name):
            if key not in schema:
                raise ConfigError(f"unknown key [{name}] {key}")
            try:
                values[key] = schema[key][0](raw)
            except ValueError as exc:
                raise ConfigError(f"invalid value for [{name}] {key}: {exc}") from None
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return values


def _check_sections(parser, allowed: set[str], prefix: str | None = None) -> None:
    if parser is None:
        return
    for section in parser.sections():
        if section in allowed or (prefix and section.startswith(prefix)):
            continue
        raise ConfigError(f"unknown section [{section}]")


def resolve_synth(parser=None, seed=None, band=None) -> dict:
    _check_sections(parser, set(SYNTH_SCHEMA), prefix="class.")
    out = {
        name: _resolve_section(parser, name, schema)
        for name, schema in SYNTH_SCHEMA.items()
    }
    if seed is not None:
        out["dataset"]["seed"] = int(seed)
    if band is not None:
        out["dataset"]["band"] = int(Band.parse(band))
    classes = []
    for section in parser.sections() if parser is not None else []:
        if not section.startswith("class."):
            continue
        values = _resolve_section(parser, section, CLASS_SCHEMA)
        for key in ("label", "scatterers"):
            if values[key] is None:
                raise ConfigError(f"missing key [{section}] {key}")
        if values["box_attenuation"] is None:
            values["box_attenuation"] = out["dataset"]["box_attenuation"]
        if values["noise_snr_db"] == "inherit":
            values["noise_snr_db"] = out["dataset"]["noise_snr_db"]
        values["name"] = section.split(".", 1)[1]
        classes.append(values)
    out["classes"] = sorted(classes, key=lambda c: c["label"])
    return out


def build_synth(resolved: dict):
    """Return ``(templates, per_class, jitter, seed, chirp, band)``."""
    ds, ch, jt = resolved["dataset"], resolved["chirp"], resolved["jitter"]
    band = Band.parse(ds["band"])
    try:
        chirp = ChirpParams.for_band(band, **ch)
        jitter = JitterSpec(**jt)
        if resolved["classes"]:
            templates = []
            for c in resolved["classes"]:
                scat = [Scatterer(tuple(s[:3]), s[3]) for s in c["scatterers"]]
                if c["include_box"]:
                    scat += box_scatterers()
                templates.append(
                    SceneConfig(
                        scatterers=tuple(scat),
                        box_attenuation=c["box_attenuation"],
                        noise_snr_db=c["noise_snr_db"],
                        class_label=c["label"],
                        name=c["name"],
                    )
                )
        else:
            templates = default_templates(ds["n_classes"], ds["box_attenuation"], ds["noise_snr_db"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return templates, ds["per_class"], jitter, ds["seed"], chirp, band


def resolve_train(parser=None, overrides: dict | None = None) -> dict:
    """Resolved training config; ``overrides`` maps section -> {key: value}."""
    _check_sections(parser, set(TRAIN_SCHEMA))
    overrides = overrides or {}
    return {
        name: _resolve_section(parser, name, schema, overrides.get(name))
        for name, schema in TRAIN_SCHEMA.items()
    }
