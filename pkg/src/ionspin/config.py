"""Run configuration: flat ``section.key = value`` text or JSON.

Every key has a typed default; unknown keys and malformed values raise
:class:`ConfigError`. Emitting and re-parsing a configuration gives an
equal object, and :func:`config_hash` is computed from the canonical
emission so it does not depend on key order or formatting of the input.
"""

from __future__ import annotations

import hashlib
import json
import math
import dataclasses as dc
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path

from .ion import IonSpecies, SystemLayout, ca43_defaults
from .trap import EPS_MAX_DEFAULT, KAPPA_DEFAULT, MARGIN_DEFAULT, TrapParams

_CA = ca43_defaults()


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SpeciesSection:
    name: str = _CA.name
    mass: float = _CA.mass
    nuclear_spin: str = str(_CA.nuclear_spin)
    hyperfine_a: float = _CA.hyperfine_a
    electron_gamma: float = _CA.electron_gamma
    nuclear_gamma: float = _CA.nuclear_gamma


@dataclass(frozen=True)
class FieldSection:
    B0: float = 1.0


@dataclass(frozen=True)
class TrapSection:
    nu1_hz: float = 1e6
    n_ions: int = 1
    gradient_b: float = 450.0
    kappa: float = KAPPA_DEFAULT


@dataclass(frozen=True)
class DriveSection:
    rabi_mw: float = 1e6
    rabi_rf: float = 300e3


@dataclass(frozen=True)
class CompilerSection:
    nonselective_rf: bool = True
    swap_order: str = "SI-IS-SI"
    cnot_method: str = "two_pulse_delay"
    refocus: bool = True
    verify: bool = True
    rf_reference: str = "mean"
    rf_pairing: str = "same"


@dataclass(frozen=True)
class FeasibilitySection:
    gate_time_s: float = 1e-3
    margin: float = MARGIN_DEFAULT
    eps_max: float = EPS_MAX_DEFAULT


@dataclass(frozen=True)
class SimulateSection:
    mode: str = "ideal"
    delta_b_rms: float = 0.0
    trials: int = 16
    labframe_scale: float = 1e4


@dataclass(frozen=True)
class ScanSection:
    ion: int = 0
    m_i: float = 3.5
    rabi_min: float = 1e5
    rabi_max: float = 1e6
    points: int = 41


@dataclass(frozen=True)
class SpectrumSection:
    channel: str = "both"
    directed: bool = False


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    format: str = ""


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    force: bool = False


SECTIONS = {
    "species": SpeciesSection,
    "field": FieldSection,
    "trap": TrapSection,
    "drive": DriveSection,
    "compiler": CompilerSection,
    "feasibility": FeasibilitySection,
    "simulate": SimulateSection,
    "scan": ScanSection,
    "spectrum": SpectrumSection,
    "output": OutputSection,
    "run": RunSection,
}

_CHOICES = {
    "simulate.mode": ("ideal", "physical", "labframe"),
    "spectrum.channel": ("mw", "rf", "both"),
    "output.format": ("", "csv", "json", "text"),
}


@dataclass(frozen=True)
class RunConfig:
    species: SpeciesSection = dc.field(default_factory=SpeciesSection)
    field: FieldSection = dc.field(default_factory=FieldSection)
    trap: TrapSection = dc.field(default_factory=TrapSection)
    drive: DriveSection = dc.field(default_factory=DriveSection)
    compiler: CompilerSection = dc.field(default_factory=CompilerSection)
    feasibility: FeasibilitySection = dc.field(default_factory=FeasibilitySection)
    simulate: SimulateSection = dc.field(default_factory=SimulateSection)
    scan: ScanSection = dc.field(default_factory=ScanSection)
    spectrum: SpectrumSection = dc.field(default_factory=SpectrumSection)
    output: OutputSection = dc.field(default_factory=OutputSection)
    run: RunSection = dc.field(default_factory=RunSection)

    # -- flat view ------------------------------------------------------------
    def flat(self) -> dict:
        out = {}
        for sec in SECTIONS:
            obj = getattr(self, sec)
            for f in fields(obj):
                out[f"{sec}.{f.name}"] = getattr(obj, f.name)
        return out

    def get(self, key: str):
        sec, name = _split(key)
        return getattr(getattr(self, sec), name)

    def updated(self, values: dict) -> "RunConfig":
        """Copy with dotted ``values`` applied (strings are parsed)."""
        secs = {s: {} for s in SECTIONS}
        for key, raw in values.items():
            sec, name = _split(key)
            secs[sec][name] = _coerce(key, raw)
        cfg = replace(self, **{s: replace(getattr(self, s), **kw) for s, kw in secs.items() if kw})
        cfg.validate()
        return cfg

    def validate(self):
        for key, allowed in _CHOICES.items():
            if self.get(key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {self.get(key)!r}")
        try:
            Fraction(self.species.nuclear_spin)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"species.nuclear_spin: {exc}") from None
        if not 1 <= self.trap.n_ions <= 10:
            raise ConfigError("trap.n_ions must be between 1 and 10")
        for key in ("trap.nu1_hz", "field.B0", "drive.rabi_mw", "drive.rabi_rf", "feasibility.gate_time_s",
                    "feasibility.margin", "scan.rabi_min", "scan.rabi_max", "simulate.labframe_scale"):
            if not self.get(key) > 0:
                raise ConfigError(f"{key} must be positive")
        if self.simulate.delta_b_rms < 0:
            raise ConfigError("simulate.delta_b_rms must be >= 0")
        if self.simulate.trials < 1 or self.scan.points < 1:
            raise ConfigError("simulate.trials and scan.points must be >= 1")

    # -- domain objects -----------------------------------------------------------
    def ion_species(self) -> IonSpecies:
        s = self.species
        return IonSpecies(s.name, s.mass, Fraction(s.nuclear_spin), s.hyperfine_a, s.electron_gamma, s.nuclear_gamma)

    def trap_params(self) -> TrapParams:
        t = self.trap
        return TrapParams(2 * math.pi * t.nu1_hz, t.n_ions, self.ion_species(), t.gradient_b, self.field.B0)

    def layout(self) -> SystemLayout:
        from .compiler import build_layout

        return build_layout(self.trap_params(), self.trap.kappa)

    def compile_options(self, force: bool | None = None):
        from .compiler import CompileOptions

        c = self.compiler
        return CompileOptions(
            rabi_mw=self.drive.rabi_mw, rabi_rf=self.drive.rabi_rf, nonselective_rf=c.nonselective_rf,
            swap_order=c.swap_order, cnot_method=c.cnot_method, refocus=c.refocus, verify=c.verify,
            force=self.run.force if force is None else force, margin=self.feasibility.margin,
            kappa=self.trap.kappa, rf_reference=c.rf_reference, rf_pairing=c.rf_pairing,
        )


def _split(key: str):
    sec, _, name = key.partition(".")
    if sec not in SECTIONS or name not in {f.name for f in fields(SECTIONS[sec])}:
        raise ConfigError(f"unknown config key {key!r}")
    return sec, name


def _field_type(key):
    sec, name = _split(key)
    return type(getattr(SECTIONS[sec](), name))


def _coerce(key, raw):
    typ = _field_type(key)
    if isinstance(raw, str):
        text = raw.strip()
        try:
            if typ is bool:
                low = text.lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(text)
                return low in ("true", "1", "yes")
            if typ is int:
                return int(text)
            if typ is float:
                return float(text)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {text!r} as {typ.__name__}") from None
        return text
    if typ is float and isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return float(raw)
    if typ is str and isinstance(raw, (int, float)) and key == "species.nuclear_spin":
        return str(Fraction(raw).limit_denominator(2))
    if not isinstance(raw, typ) or (typ is int and isinstance(raw, bool)):
        raise ConfigError(f"{key}: expected {typ.__name__}, got {type(raw).__name__}")
    return raw


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_text(text: str, base: RunConfig | None = None) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return (base or RunConfig()).updated(values)


def parse_json(text: str, base: RunConfig | None = None) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("JSON config must be an object")
    values = {}
    for key, val in data.items():
        if isinstance(val, dict):
            for sub, v in val.items():
                values[f"{key}.{sub}"] = v
        else:
            values[key] = val
    return (base or RunConfig()).updated(values)


def emit_text(cfg: RunConfig) -> str:
    return "".join(f"{k} = {_format(v)}\n" for k, v in cfg.flat().items())


def emit_json(cfg: RunConfig) -> str:
    nested = {}
    for key, val in cfg.flat().items():
        sec, name = key.split(".", 1)
        nested.setdefault(sec, {})[name] = val
    return json.dumps(nested, indent=2, sort_keys=True) + "\n"


def load(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        cfg = parse_json(text) if text.lstrip().startswith("{") else parse_text(text)
    if overrides:
        cfg = cfg.updated(overrides)
    return cfg


def config_hash(cfg: RunConfig) -> str:
    """Digest of the canonical emission; output location and format are excluded."""
    text = "".join(line for line in emit_text(cfg).splitlines(True) if not line.startswith("output."))
    return hashlib.sha256(text.encode()).hexdigest()[:16]
