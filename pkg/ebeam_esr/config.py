"""
Scenario configuration.

Scenario files hold ``section.field = value`` lines in dotenv syntax (``#``
starts a comment); a ``.json`` file with one object per section is accepted as
well. Only explicit files are read, environment variables never override
anything. Every key and its default is listed in ``SCHEMA``; see
``scenarios/schema.md`` for the documented reference.
"""

import hashlib
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from dotenv.parser import parse_stream

from .bloch import SpinMaterial, resonance_omega
from .errors import ParseError, ValidationError
from .nearfield import DEFAULT_N_MAX, DEFAULT_N_SAMPLES, BeamSpec, CoilSpec, default_coil
from .sample import DEFAULT_APERTURE_SAMPLES, SampleSpec
from .spectro import LOCKIN_MODES, MIN_CYCLE_SAMPLES, CalibrationModel

# Documented defaults, SI units throughout
DEFLECTION_AMPLITUDE = 0.9e-3
TILT = math.radians(5.0)
STANDOFF = 0.6e-3
OFFSET = 0.1e-3
VOXEL_SIZE = 100e-6
SAMPLE_DIMS = (0.7e-3, 1.1e-3, 0.7e-3)
COIL_TURNS = 2
COIL_AREA = 1e-6
COIL_INNER_WIDTH = 1.1e-3
COIL_INNER_DEPTH = 0.6e-3
COIL_TRACE_WIDTH = 0.2e-3
COIL_RESISTANCE = 1.25
UNITARY_REF = 2e-3
SPIN_DENSITY = 0.5 * 1.5e27
T2 = 87e-9
TEMPERATURE = 293.0
B0 = 12.5e-3
MODULATION_AMPLITUDE = 18e-6
MODULATION_OMEGA = 2 * math.pi * 1.28e3
RESCALE_CURRENT = 1e-6
SWEEP_KINDS = ("frequency", "offset", "standoff", "map")
SWEEP_COUNT = 201
SWEEP_SPAN_LINEWIDTHS = 8.0
OFFSET_RANGE = (-1.2e-3, 1.2e-3, 25)
STANDOFF_RANGE = (0.3e-3, 1.5e-3, 13)
MAP_STANDOFFS = (0.3e-3, 0.5e-3, 0.7e-3, 1.0e-3, 1.5e-3)

_FLOAT, _INT, _STR, _COMPLEX, _FLOATS = "float", "int", "str", "complex", "floats"

SCHEMA: Dict[str, Tuple[str, Any]] = {
    "beam.current": (_FLOAT, None),
    "beam.base_omega": (_FLOAT, None),
    "beam.amplitude": (_FLOAT, DEFLECTION_AMPLITUDE),
    "beam.tilt": (_FLOAT, TILT),
    "beam.standoff": (_FLOAT, STANDOFF),
    "beam.offset": (_FLOAT, OFFSET),
    "coil.turns": (_INT, COIL_TURNS),
    "coil.area": (_FLOAT, COIL_AREA),
    "coil.resistance": (_FLOAT, COIL_RESISTANCE),
    "coil.inner_width": (_FLOAT, COIL_INNER_WIDTH),
    "coil.inner_depth": (_FLOAT, COIL_INNER_DEPTH),
    "coil.trace_width": (_FLOAT, COIL_TRACE_WIDTH),
    "coil.unitary_ref": (_FLOAT, UNITARY_REF),
    "sample.dims": (_FLOATS, SAMPLE_DIMS),
    "sample.voxel_size": (_FLOAT, VOXEL_SIZE),
    "sample.origin_offset": (_FLOATS, (0.0, 0.0, 0.0)),
    "material.spin_density": (_FLOAT, SPIN_DENSITY),
    "material.t2": (_FLOAT, T2),
    "material.t1": (_FLOAT, None),
    "material.temperature": (_FLOAT, TEMPERATURE),
    "material.spin": (_FLOAT, 0.5),
    "field.b0": (_FLOAT, B0),
    "sweep.kind": (_STR, "frequency"),
    "sweep.values": (_FLOATS, None),
    "sweep.start": (_FLOAT, None),
    "sweep.stop": (_FLOAT, None),
    "sweep.count": (_INT, None),
    "sweep.standoffs": (_FLOATS, None),
    "lockin.amplitude": (_FLOAT, MODULATION_AMPLITUDE),
    "lockin.omega": (_FLOAT, MODULATION_OMEGA),
    "lockin.phase": (_FLOAT, 0.0),
    "lockin.cycle_samples": (_INT, MIN_CYCLE_SAMPLES),
    "lockin.mode": (_STR, "exact"),
    "chain.gain": (_COMPLEX, 1 + 0j),
    "chain.rescale_current": (_FLOAT, RESCALE_CURRENT),
    "background.offset": (_FLOAT, 0.0),
    "background.esr_amplitude": (_COMPLEX, 0j),
    "background.ripple_k": (_FLOAT, 0.0),
    "background.ripple_a": (_FLOAT, 0.0),
    "background.ripple_theta": (_FLOAT, 0.0),
    "background.ripple_omega0": (_FLOAT, None),
    "background.ripple_s": (_FLOAT, None),
    "noise.relative": (_FLOAT, 0.0),
    "report.d_scale": (_FLOAT, 1.0),
    "report.h_scale": (_FLOAT, 1.0),
    "numerics.n_max": (_INT, DEFAULT_N_MAX),
    "numerics.n_samples": (_INT, DEFAULT_N_SAMPLES),
    "numerics.aperture_samples": (_INT, DEFAULT_APERTURE_SAMPLES),
}


@dataclass(frozen=True)
class Sweep:
    kind: str
    values: Tuple[float, ...]
    standoffs: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ValidationError("sweep.kind", f"must be one of {', '.join(SWEEP_KINDS)}")
        if not self.values:
            raise ValidationError("sweep.values", "sweep has no points")
        if self.kind == "frequency" and any(v <= 0 for v in self.values):
            raise ValidationError("sweep.values", "frequencies must be positive")
        if self.kind == "frequency" and np.any(np.diff(self.values) <= 0):
            raise ValidationError("sweep.values", "frequencies must be strictly increasing")
        if self.kind == "standoff" and any(v <= 0 for v in self.values):
            raise ValidationError("sweep.values", "standoffs must be positive")
        if self.kind == "map" and not self.standoffs:
            raise ValidationError("sweep.standoffs", "map sweep needs standoff values")


@dataclass(frozen=True)
class Lockin:
    amplitude: float
    omega: float
    phase: float
    cycle_samples: int
    mode: str

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValidationError("lockin.amplitude", "must not be negative")
        if not self.omega > 0:
            raise ValidationError("lockin.omega", "must be positive")
        if self.cycle_samples < MIN_CYCLE_SAMPLES:
            raise ValidationError("lockin.cycle_samples", f"must be at least {MIN_CYCLE_SAMPLES}")
        if self.mode not in LOCKIN_MODES:
            raise ValidationError("lockin.mode", f"must be one of {', '.join(LOCKIN_MODES)}")


@dataclass(frozen=True)
class Background:
    """Beam-independent contributions present with the beam on and off."""

    offset: float
    esr_amplitude: complex
    ripple: Optional[CalibrationModel]


@dataclass(frozen=True)
class Scenario:
    settings: Dict[str, Any]
    beam: BeamSpec
    coil: CoilSpec
    sample: SampleSpec
    b0: float
    sweep: Sweep
    lockin: Lockin
    gain: complex
    rescale_current: float
    background: Background
    noise_relative: float
    d_scale: float
    h_scale: float
    n_max: int
    n_samples: int
    aperture_samples: int

    @property
    def material(self) -> SpinMaterial:
        return self.sample.material

    @property
    def omega0(self) -> float:
        return resonance_omega(self.b0)

    @property
    def digest(self) -> str:
        return scenario_digest(self)


def _convert(kind: str, raw: Any, key: str, line: Optional[int]):
    try:
        if kind == _STR:
            return str(raw).strip()
        if kind == _INT:
            value = float(raw) if isinstance(raw, str) else raw
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError(raw)
            return int(value)
        if kind == _FLOAT:
            if isinstance(raw, bool):
                raise ValueError(raw)
            return float(raw)
        if kind == _COMPLEX:
            if isinstance(raw, (list, tuple)) and len(raw) == 2:
                return complex(float(raw[0]), float(raw[1]))
            return complex(str(raw).replace(" ", ""))
        if isinstance(raw, str):
            raw = [part for part in raw.split(",") if part.strip()]
        return tuple(float(part) for part in raw)
    except (TypeError, ValueError):
        raise ParseError(f"cannot read '{raw}' as {kind}", line=line, field=key)


def _read_env(text: str) -> Dict[str, Tuple[Any, Optional[int]]]:
    raw: Dict[str, Tuple[Any, Optional[int]]] = {}
    for binding in parse_stream(io.StringIO(text)):
        # a binding's original text starts with any blank lines that precede it
        source = binding.original.string
        line = binding.original.line + source[: len(source) - len(source.lstrip())].count("\n")
        if binding.error:
            raise ParseError("malformed line", line=line)
        if binding.key is None:
            continue
        if binding.value is None:
            raise ParseError("missing '=' and value", line=line, field=binding.key)
        if binding.key in raw:
            raise ParseError("duplicate key", line=line, field=binding.key)
        raw[binding.key] = (binding.value, line)
    return raw


def _read_json(text: str) -> Dict[str, Tuple[Any, Optional[int]]]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno)
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    raw = {}
    for section, body in doc.items():
        if not isinstance(body, dict):
            raise ParseError("section must be an object", field=section)
        for name, value in body.items():
            raw[f"{section}.{name}"] = (value, None)
    return raw


def _linspace(start, stop, count):
    return tuple(float(v) for v in np.linspace(start, stop, int(count)))


def _resolve_sweep(s: Dict[str, Any], omega0: float, t2: float) -> Sweep:
    kind = s["sweep.kind"]
    values = s["sweep.values"]
    if values is None:
        if s["sweep.start"] is not None or s["sweep.stop"] is not None:
            if s["sweep.start"] is None or s["sweep.stop"] is None:
                raise ValidationError("sweep.start", "start and stop must be given together")
            values = _linspace(s["sweep.start"], s["sweep.stop"], s["sweep.count"] or SWEEP_COUNT)
        elif kind == "frequency":
            half = SWEEP_SPAN_LINEWIDTHS / t2
            values = _linspace(omega0 - half, omega0 + half, s["sweep.count"] or SWEEP_COUNT)
        elif kind == "standoff":
            values = _linspace(*STANDOFF_RANGE)
        else:
            values = _linspace(*OFFSET_RANGE)
    standoffs = s["sweep.standoffs"]
    if kind == "map" and standoffs is None:
        standoffs = MAP_STANDOFFS
    return Sweep(kind=kind, values=tuple(values), standoffs=tuple(standoffs or ()))


def _apply_defaults(raw: Dict[str, Tuple[Any, Optional[int]]]) -> Dict[str, Any]:
    settings: Dict[str, Any] = {}
    for key, (value, line) in raw.items():
        if key not in SCHEMA:
            raise ParseError("unknown key", line=line, field=key)
        settings[key] = _convert(SCHEMA[key][0], value, key, line)
    for key, (_, default) in SCHEMA.items():
        settings.setdefault(key, default)
    return settings


def build_scenario(settings: Dict[str, Any]) -> Scenario:
    """Validated scenario from a complete settings mapping."""
    s = dict(settings)
    if s["beam.current"] is None:
        raise ValidationError("beam.current", "required")
    for key in ("sample.dims", "sample.origin_offset"):
        if len(s[key]) != 3:
            raise ValidationError(key, "three comma-separated values required")
    for key in ("report.d_scale", "report.h_scale"):
        if not s[key] > 0:
            raise ValidationError(key, "must be positive")
    if s["noise.relative"] < 0:
        raise ValidationError("noise.relative", "must not be negative")
    if not s["chain.rescale_current"] > 0:
        raise ValidationError("chain.rescale_current", "must be positive")
    if not s["field.b0"] > 0:
        raise ValidationError("field.b0", "must be positive")
    # the spin drive is the second harmonic
    if s["numerics.n_max"] < 2:
        raise ValidationError("numerics.n_max", "must be at least 2")
    if s["numerics.n_samples"] < max(8 * s["numerics.n_max"], 8):
        raise ValidationError("numerics.n_samples", f"must be at least {8 * s['numerics.n_max']} for this n_max")
    if s["numerics.aperture_samples"] < 16:
        raise ValidationError("numerics.aperture_samples", "must be at least 16")

    material = SpinMaterial(
        spin_density=s["material.spin_density"],
        t2=s["material.t2"],
        t1=s["material.t1"],
        temperature=s["material.temperature"],
        spin=s["material.spin"],
    )
    sample = SampleSpec(
        material=material,
        dims=tuple(s["sample.dims"]),
        voxel_size=s["sample.voxel_size"],
        origin_offset=tuple(s["sample.origin_offset"]),
    )
    omega0 = resonance_omega(s["field.b0"])
    base_omega = s["beam.base_omega"] if s["beam.base_omega"] is not None else omega0 / 2
    beam = BeamSpec(
        current=s["beam.current"],
        base_omega=base_omega,
        amplitude=s["beam.amplitude"],
        standoff=s["beam.standoff"],
        offset=s["beam.offset"],
        tilt=s["beam.tilt"],
        sample_height=sample.top,
    )
    coil = default_coil(
        inner_width=s["coil.inner_width"],
        inner_depth=s["coil.inner_depth"],
        trace_width=s["coil.trace_width"],
        turns=s["coil.turns"],
        area=s["coil.area"],
        resistance=s["coil.resistance"],
        unitary_ref=s["coil.unitary_ref"],
    )

    ripple = None
    if s["background.ripple_k"] != 0:
        ripple = CalibrationModel(
            k=s["background.ripple_k"],
            a=s["background.ripple_a"],
            theta=s["background.ripple_theta"],
            omega0=s["background.ripple_omega0"] if s["background.ripple_omega0"] is not None else omega0,
            s=s["background.ripple_s"] if s["background.ripple_s"] is not None else omega0,
        )

    return Scenario(
        settings=s,
        beam=beam,
        coil=coil,
        sample=sample,
        b0=s["field.b0"],
        sweep=_resolve_sweep(s, omega0, material.t2),
        lockin=Lockin(
            amplitude=s["lockin.amplitude"],
            omega=s["lockin.omega"],
            phase=s["lockin.phase"],
            cycle_samples=s["lockin.cycle_samples"],
            mode=s["lockin.mode"],
        ),
        gain=s["chain.gain"],
        rescale_current=s["chain.rescale_current"],
        background=Background(s["background.offset"], s["background.esr_amplitude"], ripple),
        noise_relative=s["noise.relative"],
        d_scale=s["report.d_scale"],
        h_scale=s["report.h_scale"],
        n_max=s["numerics.n_max"],
        n_samples=s["numerics.n_samples"],
        aperture_samples=s["numerics.aperture_samples"],
    )


def parse_text(text: str, fmt: str = "env") -> Scenario:
    raw = _read_json(text) if fmt == "json" else _read_env(text)
    return build_scenario(_apply_defaults(raw))


def parse_config(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read config file: {e.strerror or e}")
    return parse_text(text, "json" if path.suffix.lower() == ".json" else "env")


def _format(value: Any) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, complex):
        return repr(value).strip("()")
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    return repr(value)


def serialize_config(scenario: Scenario) -> str:
    """Every set key in dotenv form; parses back to the same scenario."""
    lines = [f"{key} = {_format(value)}" for key, value in sorted(scenario.settings.items()) if value is not None]
    return "\n".join(lines) + "\n"


def _canonical(value: Any):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, tuple):
        return [float(v) for v in value]
    return value


def scenario_digest(scenario: Scenario) -> str:
    canonical = {key: _canonical(value) for key, value in sorted(scenario.settings.items())}
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
