"""Plain-text run configuration.

Files are sectioned key=value text (INI syntax).  All physical values
carry their unit in the key name: frequencies are entered as linear MHz
(kappa_mhz, gamma_mhz, detuning_mhz), durations as microseconds
(tau_spinwave_us, *_us) and dark rates as counts per second (*_cps).
Internally everything is angular frequency in rad/s and seconds.

Every key is optional and falls back to the documented default; unknown
sections or keys are errors, as are values violating a parameter
invariant (reported with the offending field name).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict
from pathlib import Path

from .engine import (DetectionChain, GatePulse, PumpingModel, RunConfig,
                     SourceDrive, TimingSequence)
from .qed import AtomParams, CavityParams, CooperativityModel

MHZ = 2.0 * math.pi * 1e6
US = 1e-6


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "cavity": {
        "kappa_mhz": 1.0,
        "mirror_transmission": 6.6e-6,
        "mirror_loss": 3.4e-6,
    },
    "atoms": {
        "gamma_mhz": 5.2,
        "eta0": 8.6,
        "tau_spinwave_us": 2.1,
        "optical_depth": 0.9,
    },
    "cooperativity": {
        "standing_wave": True,
        "geometric_weight": 2.8 / 4.3,
        "levels": "",
    },
    "timing": {
        "storage_ramp_us": 1.0,
        "hold_before_source_us": 0.0,
        "source_window_us": 24.0,
        "hold_before_retrieval_us": 0.0,
    },
    "gate": {
        "mean_incident_photons": 1.0,
        "storage_efficiency": 0.15,
        "retrieval_efficiency": 0.3219859280039968,
    },
    "source": {
        "mean_photons": 60.0,
        "detuning_mhz": 0.0,
    },
    "pumping": {
        "hop_prob_per_scatter": 1.0,
        "eta_ratio_after_hop": 0.992,
    },
    "detection": {
        "gate_path_efficiency": 0.9,
        "source_path_efficiency": 0.43,
        "gate_dark_cps": 0.0,
        "source_dark_cps": 0.0,
    },
    "run": {
        "n_shots": 1000,
        "master_seed": 12345,
        "retrieval_mode": False,
    },
}

_BOOL_KEYS = {"standing_wave", "retrieval_mode"}
_INT_KEYS = {"n_shots", "master_seed"}


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"cannot parse boolean value {raw!r} for key {key}")


def _parse_levels(raw: str) -> tuple[tuple[float, float], ...] | None:
    raw = raw.strip()
    if not raw:
        return None
    pairs = []
    for item in raw.split(","):
        try:
            eta_s, prob_s = item.split(":")
            pairs.append((float(eta_s), float(prob_s)))
        except ValueError as exc:
            raise ConfigError(f"cannot parse levels entry {item.strip()!r}; "
                              "expected eta:probability") from exc
    return tuple(pairs)


def _format_levels(levels) -> str:
    if not levels:
        return ""
    return ",".join(f"{eta!r}:{prob!r}" for eta, prob in levels)


def _read_values(path: str | Path) -> dict[str, dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"parse error in {path}: {exc}") from exc

    values = {sec: dict(defaults) for sec, defaults in DEFAULTS.items()}
    for section in parser.sections():
        if section not in values:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            if key in _BOOL_KEYS:
                values[section][key] = _parse_bool(raw, key)
            elif key in _INT_KEYS:
                try:
                    values[section][key] = int(raw)
                except ValueError as exc:
                    raise ConfigError(f"cannot parse integer {raw!r} for {key}") from exc
            elif key == "levels":
                values[section][key] = raw
            else:
                try:
                    values[section][key] = float(raw)
                except ValueError as exc:
                    raise ConfigError(f"cannot parse number {raw!r} for {key}") from exc
    return values


def _build(values: dict[str, dict]) -> RunConfig:
    cav, atm = values["cavity"], values["atoms"]
    coop, tim = values["cooperativity"], values["timing"]
    gat, src = values["gate"], values["source"]
    pmp, det, run = values["pumping"], values["detection"], values["run"]
    try:
        cavity = CavityParams(
            kappa=cav["kappa_mhz"] * MHZ,
            mirror_transmission=cav["mirror_transmission"],
            mirror_loss=cav["mirror_loss"],
        )
        atoms = AtomParams(
            gamma=atm["gamma_mhz"] * MHZ,
            eta0=atm["eta0"],
            tau_spinwave=atm["tau_spinwave_us"] * US,
            optical_depth=atm["optical_depth"],
        )
        levels = coop["levels"]
        if isinstance(levels, str):
            levels = _parse_levels(levels)
        model = CooperativityModel(
            eta0=atm["eta0"],
            standing_wave=coop["standing_wave"],
            geometric_weight=coop["geometric_weight"],
            levels=levels,
        )
        timing = TimingSequence(
            storage_ramp=tim["storage_ramp_us"] * US,
            hold_before_source=tim["hold_before_source_us"] * US,
            source_window=tim["source_window_us"] * US,
            hold_before_retrieval=tim["hold_before_retrieval_us"] * US,
        )
        gate = GatePulse(
            mean_incident_photons=gat["mean_incident_photons"],
            storage_efficiency=gat["storage_efficiency"],
            retrieval_efficiency=gat["retrieval_efficiency"],
        )
        source = SourceDrive(
            mean_source_photons=src["mean_photons"],
            detuning=src["detuning_mhz"] * MHZ,
        )
        pumping = PumpingModel(
            hop_prob_per_scatter=pmp["hop_prob_per_scatter"],
            eta_ratio_after_hop=pmp["eta_ratio_after_hop"],
        )
        detection = DetectionChain(
            gate_path_efficiency=det["gate_path_efficiency"],
            source_path_efficiency=det["source_path_efficiency"],
            gate_dark_rate=det["gate_dark_cps"],
            source_dark_rate=det["source_dark_cps"],
        )
        return RunConfig(
            cavity=cavity, atoms=atoms, coop=model, timing=timing, gate=gate,
            source=source, pumping=pumping, detection=detection,
            n_shots=run["n_shots"], master_seed=run["master_seed"],
            retrieval_mode=run["retrieval_mode"],
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    """Parse a config file into a validated RunConfig.  Missing keys use
    the documented defaults; unknown keys, unparsable values and
    invariant violations raise ConfigError."""
    return _build(_read_values(path))


def default_config() -> RunConfig:
    return _build({sec: dict(vals) for sec, vals in DEFAULTS.items()})


def config_to_values(config: RunConfig) -> dict[str, dict]:
    """RunConfig back to the boundary-unit key/value form."""
    return {
        "cavity": {
            "kappa_mhz": config.cavity.kappa / MHZ,
            "mirror_transmission": config.cavity.mirror_transmission,
            "mirror_loss": config.cavity.mirror_loss,
        },
        "atoms": {
            "gamma_mhz": config.atoms.gamma / MHZ,
            "eta0": config.atoms.eta0,
            "tau_spinwave_us": config.atoms.tau_spinwave / US,
            "optical_depth": config.atoms.optical_depth,
        },
        "cooperativity": {
            "standing_wave": config.coop.standing_wave,
            "geometric_weight": config.coop.geometric_weight,
            "levels": _format_levels(config.coop.levels),
        },
        "timing": {
            "storage_ramp_us": config.timing.storage_ramp / US,
            "hold_before_source_us": config.timing.hold_before_source / US,
            "source_window_us": config.timing.source_window / US,
            "hold_before_retrieval_us": config.timing.hold_before_retrieval / US,
        },
        "gate": {
            "mean_incident_photons": config.gate.mean_incident_photons,
            "storage_efficiency": config.gate.storage_efficiency,
            "retrieval_efficiency": config.gate.retrieval_efficiency,
        },
        "source": {
            "mean_photons": config.source.mean_source_photons,
            "detuning_mhz": config.source.detuning / MHZ,
        },
        "pumping": {
            "hop_prob_per_scatter": config.pumping.hop_prob_per_scatter,
            "eta_ratio_after_hop": config.pumping.eta_ratio_after_hop,
        },
        "detection": {
            "gate_path_efficiency": config.detection.gate_path_efficiency,
            "source_path_efficiency": config.detection.source_path_efficiency,
            "gate_dark_cps": config.detection.gate_dark_rate,
            "source_dark_cps": config.detection.source_dark_rate,
        },
        "run": {
            "n_shots": config.n_shots,
            "master_seed": config.master_seed,
            "retrieval_mode": config.retrieval_mode,
        },
    }


def write_config(config: RunConfig, path: str | Path) -> None:
    """Serialize a RunConfig to the text format; load_config(write_config(c))
    reproduces c exactly (floats are written with full repr precision)."""
    values = config_to_values(config)
    lines = []
    for section, pairs in values.items():
        lines.append(f"[{section}]")
        for key, val in pairs.items():
            if isinstance(val, bool):
                out = "true" if val else "false"
            elif isinstance(val, float):
                out = repr(val)
            else:
                out = str(val)
            lines.append(f"{key} = {out}")
        lines.append("")
    Path(path).write_text("\n".join(lines))


def config_as_dict(config: RunConfig) -> dict:
    """JSON-ready dump of the fully resolved configuration (SI units)."""
    raw = asdict(config)
    coop = raw["coop"]
    if coop["levels"] is not None:
        coop["levels"] = [list(pair) for pair in coop["levels"]]
    return raw
