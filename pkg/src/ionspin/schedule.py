"""Pulse schedules: timed MW/RF rotations, free evolution and frame updates."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Union

import numpy as np

SCHEDULE_SCHEMA = "ionspin.schedule/1"
ALL = "ALL"
BOTH = "BOTH"


@dataclass(frozen=True)
class PulseSpec:
    """One resonant rotation.

    ``condition`` is the spectator quantum number that selects the line:
    m_I of the target ion for MW pulses, m_S for RF pulses (``"BOTH"``
    drives both electron manifolds). ``spectator`` optionally adds an
    electron of another ion, ``(ion, m_S)``, for J-resolved lines.
    ``frequency`` is the signed rotating-frame frequency in Hz and
    ``phase`` the rotation-axis azimuth in that frame.
    """

    channel: str
    target: Union[int, str]
    condition: Union[float, str]
    angle: float
    phase: float
    rabi: float
    frequency: float
    spectator: tuple | None = None

    def __post_init__(self):
        if self.channel not in ("MW", "RF"):
            raise ValueError(f"unknown channel {self.channel!r}")
        if not 0 < self.angle <= 2 * math.pi + 1e-12:
            raise ValueError(f"pulse angle {self.angle} outside (0, 2pi]")
        if self.rabi <= 0:
            raise ValueError("pulse Rabi frequency must be positive")
        if self.channel == "MW" and (self.target == ALL or self.condition == BOTH):
            raise ValueError("MW pulses are always ion- and line-selective")
        if self.target == ALL and abs(self.angle - math.pi) > 1e-12:
            raise ValueError("nonselective RF pulses must be pi pulses")
        if self.spectator is not None:
            object.__setattr__(self, "spectator", (int(self.spectator[0]), float(self.spectator[1])))

    @property
    def duration(self) -> float:
        return self.angle / (2 * math.pi * self.rabi)


@dataclass(frozen=True)
class Pulse:
    spec: PulseSpec
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("pulse duration must be positive")


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("delay duration must be positive")


@dataclass(frozen=True)
class FrameZ:
    """Zero-duration z rotation exp(-i angle Z/2) of one qubit's frame."""

    ion: int
    spin: str  # "S" or "I"
    angle: float

    def __post_init__(self):
        if self.spin not in ("S", "I"):
            raise ValueError("FrameZ spin must be 'S' or 'I'")

    duration = 0.0


Item = Union[Pulse, Delay, FrameZ]


def pulse(spec: PulseSpec) -> Pulse:
    return Pulse(spec, spec.duration)


@dataclass(frozen=True)
class Schedule:
    items: tuple = ()
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def duration(self) -> float:
        return float(sum(it.duration for it in self.items))

    @property
    def n_ions(self) -> int:
        return int(self.metadata.get("n_ions", 1))

    def pulses(self):
        return [it for it in self.items if isinstance(it, Pulse)]

    def __len__(self):
        return len(self.items)

    def to_dict(self) -> dict:
        return {"schema": SCHEDULE_SCHEMA, "metadata": _jsonable(self.metadata), "items": [item_to_dict(it) for it in self.items]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        if d.get("schema") != SCHEDULE_SCHEMA:
            raise ValueError(f"unsupported schedule schema {d.get('schema')!r}")
        return cls(tuple(item_from_dict(x) for x in d["items"]), d.get("metadata", {}))

    @classmethod
    def from_json(cls, text: str) -> "Schedule":
        return cls.from_dict(json.loads(text))


def item_to_dict(it: Item) -> dict:
    if isinstance(it, Pulse):
        s = it.spec
        return {
            "type": "pulse",
            "channel": s.channel,
            "target": s.target,
            "condition": s.condition,
            "spectator": list(s.spectator) if s.spectator else None,
            "angle_rad": s.angle,
            "phase_rad": s.phase,
            "rabi_hz": s.rabi,
            "frequency_hz": s.frequency,
            "duration_s": it.duration,
        }
    if isinstance(it, Delay):
        return {"type": "delay", "duration_s": it.duration}
    return {"type": "frame_z", "ion": it.ion, "spin": it.spin, "angle_rad": it.angle, "duration_s": 0.0}


def item_from_dict(d: dict) -> Item:
    t = d["type"]
    if t == "pulse":
        spec = PulseSpec(
            d["channel"], d["target"], d["condition"], d["angle_rad"], d["phase_rad"],
            d["rabi_hz"], d["frequency_hz"], tuple(d["spectator"]) if d.get("spectator") else None,
        )
        return Pulse(spec, d["duration_s"])
    if t == "delay":
        return Delay(d["duration_s"])
    if t == "frame_z":
        return FrameZ(d["ion"], d["spin"], d["angle_rad"])
    raise ValueError(f"unknown schedule item type {t!r}")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def metadata_for(layout, circuit=(), **extra) -> dict:
    """Frame definitions and register snapshot stored with a schedule."""
    sp = layout.species
    md = {
        "n_ions": layout.n_ions,
        "species": {
            "name": sp.name,
            "mass": sp.mass,
            "nuclear_spin": str(sp.nuclear_spin),
            "hyperfine_a": sp.hyperfine_a,
            "electron_gamma": sp.electron_gamma,
            "nuclear_gamma": sp.nuclear_gamma,
        },
        "B0": layout.B0,
        "gradient_b": layout.gradient_b,
        "positions": list(layout.positions),
        "j_matrix": None if layout.j_matrix is None else np.asarray(layout.j_matrix).tolist(),
        "circuit": [g.to_dict() for g in circuit],
    }
    md.update(extra)
    return _jsonable(md)


def layout_from_metadata(md: dict):
    from fractions import Fraction
    from .ion import IonSpecies, SystemLayout

    s = md["species"]
    sp = IonSpecies(s["name"], s["mass"], Fraction(s["nuclear_spin"]), s["hyperfine_a"], s["electron_gamma"], s["nuclear_gamma"])
    j = md.get("j_matrix")
    return SystemLayout(sp, md["n_ions"], md["B0"], md["gradient_b"], tuple(md.get("positions") or ()), None if j is None else np.array(j))
