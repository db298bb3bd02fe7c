"""Experiment configuration: one JSON document drives every pipeline.

A config fully determines a run (detector, probe grid, statistics,
method, solver knobs), so artifacts embed the config's hash and rerunning
a command with the same inputs reproduces them bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import hashlib
import json

import numpy as np

from .baseline import DEFAULT_CUTOFF, PhaseSpaceGrid
from .detector import DetectorSpec
from .errors import ConfigError
from .probes import ProbeGrid
from .recursive import ReconConfig

__all__ = [
    "ExperimentConfig",
    "SweepSpec",
    "METHODS",
    "SWEEP_AXES",
    "PRESETS",
    "preset",
    "load_config",
]

METHODS = ("recursive", "full-joint", "pfunction")

# sweepable scalar axes and where they land in the config
SWEEP_AXES = ("gamma", "phases", "trials", "eta", "reflectivity")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis {self.axis!r} not one of {SWEEP_AXES}")
        if len(self.values) == 0:
            raise ConfigError("sweep values must be non-empty")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs, in plain scalars.

    dim is shared by the ground-truth model and the reconstruction; the
    probe grid should stay cold enough for it (max_intensity plus a few
    standard deviations of photon number below dim), otherwise truncated
    probes lose norm and every method inherits the model error.
    """

    reflectivity: float = 0.5
    eta_apd: float = 0.6
    lo_intensity: float = 5.0
    dim: int = 60
    max_intensity: float = 30.0
    intensity_step: float = 0.5
    phases: int = 40
    trials: int = 100_000
    seed: int = 20260816
    method: str = "recursive"
    gamma: float = 1.0
    l_max: int = 6
    # pfunction-only knobs
    lattice_half_width: float = 10.0
    lattice_step: float = 0.05
    block_size: int = 5
    cutoff: float = DEFAULT_CUTOFF
    sweep: SweepSpec | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method {self.method!r} not one of {METHODS}")
        for name in ("trials", "dim", "phases", "block_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not 0.0 < self.reflectivity < 1.0:
            raise ConfigError("reflectivity must be in (0, 1)")
        if not 0.0 <= self.eta_apd <= 1.0:
            raise ConfigError("eta_apd must be in [0, 1]")
        if self.lo_intensity < 0 or self.max_intensity <= 0 or self.intensity_step <= 0:
            raise ConfigError("intensities must be positive")
        if self.gamma < 0:
            raise ConfigError("gamma must be nonnegative")
        if not 0 <= self.l_max < self.dim:
            raise ConfigError("l_max must be in [0, dim)")

    # constructors for the domain objects

    def detector(self) -> DetectorSpec:
        return DetectorSpec(
            reflectivity=self.reflectivity,
            eta_apd=self.eta_apd,
            lo_amplitude=float(np.sqrt(self.lo_intensity)),
            dim=self.dim,
        )

    def grid(self) -> ProbeGrid:
        return ProbeGrid.from_intensity_range(
            self.max_intensity, self.intensity_step, self.phases
        )

    def recon(self) -> ReconConfig:
        return ReconConfig(dim=self.dim, gamma=self.gamma, l_max=self.l_max)

    def lattice(self) -> PhaseSpaceGrid:
        return PhaseSpaceGrid(self.lattice_half_width, self.lattice_step)

    # serialization

    def to_dict(self) -> dict:
        out = {
            "reflectivity": self.reflectivity,
            "eta_apd": self.eta_apd,
            "lo_intensity": self.lo_intensity,
            "dim": self.dim,
            "max_intensity": self.max_intensity,
            "intensity_step": self.intensity_step,
            "phases": self.phases,
            "trials": self.trials,
            "seed": self.seed,
            "method": self.method,
            "gamma": self.gamma,
            "l_max": self.l_max,
            "lattice_half_width": self.lattice_half_width,
            "lattice_step": self.lattice_step,
            "block_size": self.block_size,
            "cutoff": self.cutoff,
        }
        if self.sweep is not None:
            out["sweep"] = {"axis": self.sweep.axis, "values": list(self.sweep.values)}
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        sweep = obj.pop("sweep", None)
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if sweep is not None:
            sweep = SweepSpec(str(sweep["axis"]), tuple(sweep["values"]))
        return cls(**obj, sweep=sweep)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        """Hex hash of the canonical form; artifacts embed and are named by it."""
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]

    def with_axis(self, axis: str, value) -> "ExperimentConfig":
        """Copy with one sweep axis substituted (sweep itself dropped)."""
        mapping = {
            "gamma": ("gamma", float),
            "phases": ("phases", int),
            "trials": ("trials", int),
            "eta": ("eta_apd", float),
            "reflectivity": ("reflectivity", float),
        }
        if axis not in mapping:
            raise ConfigError(f"sweep axis {axis!r} not one of {SWEEP_AXES}")
        name, cast = mapping[axis]
        return replace(self, **{name: cast(value), "sweep": None})


# Named presets. desk is scaled to finish a full pipeline in minutes;
# paper matches the published grid and truncation and takes much longer.
PRESETS = {
    "desk": ExperimentConfig(),
    "paper": ExperimentConfig(dim=150, max_intensity=100.0),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None


def load_config(path) -> ExperimentConfig:
    """Read one JSON config document."""
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    try:
        return ExperimentConfig.from_dict(obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config {path}: {exc}") from exc
