"""Scenario configs, engine dispatch, result files and parameter sweeps.

A scenario is a set of sections (``model``, ``truncation``, ``rates``,
``grid``, ``mcwf``, ``observables``, ``initial``, ``output``) plus the list of
engines to run. Frequencies are in units of ``g``; times in ``1/g``. Configs
are read from JSON or INI files with exactly the section and field names of
the dataclasses below.

Engines:

``schrodinger_hminus``  ideal generator on the two modes
``schrodinger_vi``      interaction-picture Hamiltonian with the qubit
``schrodinger_full``    lab-frame three-level Hamiltonian (small truncation)
``lindblad_vi``         dense master equation with V_I (small truncation)
``mcwf_vi``             quantum trajectories with V_I
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, SqueezeError, TruncationLeak, TruncationWarning
from .fockspace import MODE_A, MODE_B, QUBIT, KetState, atom_vector, basis_vector, coherent_vector, product_ket
from .model import (
    DerivedParams,
    ModelParams,
    RegimeReport,
    build_h_full,
    build_h_minus,
    build_v_i,
    derive,
    mode_spec,
    system_spec,
    validate_regime,
)
from .observables import (
    SqueezingRecord,
    ensemble_variance,
    leak_operators,
    moment_operators,
    optimize_theta,
    rotate_moments,
    squeezing_db,
    is_entangled,
    variance_from_moments,
)
from .solvers import (
    DecoherenceRates,
    TimeGrid,
    mcwf_ensemble,
    propagate_lindblad,
    propagate_schrodinger,
)

ENGINES = ("schrodinger_full", "schrodinger_vi", "schrodinger_hminus", "lindblad_vi", "mcwf_vi")
CSV_COLUMNS = ("engine", "r", "t_in_inv_g", "V_ar", "V_ar_stderr", "dB", "theta", "theta_opt",
               "V_ar_min", "n_a", "n_b", "leak_a", "leak_b", "entangled")
RATE_UNITS = ("lambda", "g", "per_second")
SELECT_MODES = ("auto", "fixed", "optimized")
FRAMES = ("effective", "interaction", "native")
QUBIT_STATES = ("g", "e", "f", "plus", "minus")

# ---------------------------------------------------------------------------------
# value coercion


def _real(value, name: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ConfigError(f"{name}: must be finite")
    return out


def _complex(value, name: str) -> complex | float:
    """Numbers, ``[re, im]`` pairs or strings like ``"1+0.5j"``; real values stay float."""
    if isinstance(value, (list, tuple)) and len(value) == 2:
        out = complex(_real(value[0], name), _real(value[1], name))
    elif isinstance(value, str):
        try:
            out = complex(value.replace(" ", ""))
        except ValueError:
            raise ConfigError(f"{name}: cannot parse {value!r} as a complex number") from None
    elif isinstance(value, complex):
        out = value
    else:
        return _real(value, name)
    if not (math.isfinite(out.real) and math.isfinite(out.imag)):
        raise ConfigError(f"{name}: must be finite")
    return out.real if out.imag == 0 else out


def _int(value, name: str, minimum: int | None = None) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if isinstance(value, str):
        try:
            value = int(value)
        except ValueError:
            pass
    if not isinstance(value, (int, np.integer)):
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {value}")
    return value


def _bool(value, name: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("true", "false", "yes", "no", "1", "0"):
        return value.lower() in ("true", "yes", "1")
    raise ConfigError(f"{name}: expected true/false, got {value!r}")


def _choice(value, name: str, choices) -> str:
    if value not in choices:
        raise ConfigError(f"{name}: {value!r} is not one of {', '.join(choices)}")
    return value


def _jsonable(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, tuple):
        return list(value)
    return value


class _Section:
    """Mixin: build from a mapping, rejecting unknown keys."""

    _name = ""

    @classmethod
    def from_dict(cls, data: dict | None):
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"[{cls._name}] unknown field(s): {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {k: _jsonable(v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class ModelSection(_Section):
    """Hamiltonian parameters in units of ``g``; ``g_in_hz`` converts SI rates."""

    _name = "model"
    g_a: complex = 1.0
    g_b: complex = 1.0
    omega_0: float = 500.0
    omega_ef: float = 2500.0
    Omega: complex = 50.0
    Delta: float = 90.0
    theta: float = math.pi / 4
    g_in_hz: float = 20e6

    def __post_init__(self):
        for name in ("g_a", "g_b", "Omega"):
            object.__setattr__(self, name, _complex(getattr(self, name), f"model.{name}"))
        for name in ("omega_0", "omega_ef", "Delta", "theta", "g_in_hz"):
            object.__setattr__(self, name, _real(getattr(self, name), f"model.{name}"))
        if self.g_in_hz <= 0:
            raise ConfigError("model.g_in_hz must be positive")

    def params(self, qubit_levels: int = 2) -> ModelParams:
        try:
            return ModelParams(g_a=self.g_a, g_b=self.g_b, omega_0=self.omega_0, omega_ef=self.omega_ef,
                               Omega=self.Omega, Delta=self.Delta, qubit_levels=qubit_levels, theta=self.theta)
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None


@dataclass(frozen=True)
class TruncationSection(_Section):
    """Fock cutoffs. ``full_*`` apply to ``schrodinger_full`` only."""

    _name = "truncation"
    N_a: int = 60
    N_b: int | None = None
    qubit_levels: int = 2
    full_N: int = 14
    full_qubit_levels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "N_a", _int(self.N_a, "truncation.N_a", 2))
        object.__setattr__(self, "N_b", self.N_a if self.N_b is None else _int(self.N_b, "truncation.N_b", 2))
        object.__setattr__(self, "full_N", _int(self.full_N, "truncation.full_N", 2))
        for name in ("qubit_levels", "full_qubit_levels"):
            v = _int(getattr(self, name), f"truncation.{name}")
            if v not in (2, 3):
                raise ConfigError(f"truncation.{name}: must be 2 or 3, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class RatesSection(_Section):
    """Dissipation rates, in units of ``|lambda|``, of ``g``, or in s^-1."""

    _name = "rates"
    gamma: float = 0.0
    gamma_ph: float = 0.0
    kappa_a: float = 0.0
    kappa_b: float = 0.0
    units: str = "lambda"

    def __post_init__(self):
        for name in ("gamma", "gamma_ph", "kappa_a", "kappa_b"):
            v = _real(getattr(self, name), f"rates.{name}")
            if v < 0:
                raise ConfigError(f"rates.{name}: must be >= 0")
            object.__setattr__(self, name, v)
        _choice(self.units, "rates.units", RATE_UNITS)

    def in_units_of_g(self, derived: DerivedParams, g_in_hz: float) -> DecoherenceRates:
        if self.units == "lambda":
            scale = abs(derived.lam)
        elif self.units == "g":
            scale = 1.0
        else:
            scale = 1.0 / (2 * math.pi * g_in_hz)
        return DecoherenceRates(self.gamma * scale, self.gamma_ph * scale, self.kappa_a * scale, self.kappa_b * scale)


@dataclass(frozen=True)
class GridSection(_Section):
    """Output grid in ``r = |lambda| t``; ``full_*`` apply to ``schrodinger_full``."""

    _name = "grid"
    r_max: float = 1.5
    samples: int = 16
    full_r_max: float = 0.5
    full_samples: int = 6
    dt: float | None = None
    steps_per_period: float = 40.0
    norm_tol: float = 1e-6

    def __post_init__(self):
        for name in ("r_max", "full_r_max", "steps_per_period", "norm_tol"):
            v = _real(getattr(self, name), f"grid.{name}")
            if v <= 0:
                raise ConfigError(f"grid.{name}: must be > 0")
            object.__setattr__(self, name, v)
        for name in ("samples", "full_samples"):
            object.__setattr__(self, name, _int(getattr(self, name), f"grid.{name}", 2))
        if self.dt is not None:
            v = _real(self.dt, "grid.dt")
            if v <= 0:
                raise ConfigError("grid.dt: must be > 0")
            object.__setattr__(self, "dt", v)

    def time_grid(self, lam: complex, full: bool = False) -> TimeGrid:
        r_max, n = (self.full_r_max, self.full_samples) if full else (self.r_max, self.samples)
        return TimeGrid.for_squeezing(lam, r_max, n, dt=self.dt, steps_per_period=self.steps_per_period)


@dataclass(frozen=True)
class McwfSection(_Section):
    _name = "mcwf"
    n_traj: int = 600
    master_seed: int = 20170101

    def __post_init__(self):
        object.__setattr__(self, "n_traj", _int(self.n_traj, "mcwf.n_traj", 2))
        object.__setattr__(self, "master_seed", _int(self.master_seed, "mcwf.master_seed", 0))


@dataclass(frozen=True)
class ObservablesSection(_Section):
    """Angle handling.

    ``select``: ``fixed`` reports the variance at ``model.theta``,
    ``optimized`` at the minimizing angle, ``auto`` uses fixed for
    ``schrodinger_hminus`` and optimized otherwise. ``frame`` chooses the
    picture the mode moments are expressed in before the angle is applied.
    """

    _name = "observables"
    optimize: bool = True
    select: str = "auto"
    frame: str = "effective"
    theta_grid: int = 32

    def __post_init__(self):
        object.__setattr__(self, "optimize", _bool(self.optimize, "observables.optimize"))
        _choice(self.select, "observables.select", SELECT_MODES)
        _choice(self.frame, "observables.frame", FRAMES)
        object.__setattr__(self, "theta_grid", _int(self.theta_grid, "observables.theta_grid", 16))
        if self.select == "optimized" and not self.optimize:
            raise ConfigError("observables.select = optimized needs observables.optimize = true")

    def use_optimized(self, engine: str) -> bool:
        if not self.optimize or self.select == "fixed":
            return False
        return self.select == "optimized" or engine != "schrodinger_hminus"


@dataclass(frozen=True)
class InitialSection(_Section):
    """Initial product state.

    Mode descriptors: ``vacuum``, ``fock:<n>`` or ``coherent:<alpha>`` with a
    real or complex amplitude (``coherent:0.5+0.2j``).
    """

    _name = "initial"
    qubit: str = "minus"
    mode_a: str = "vacuum"
    mode_b: str = "vacuum"

    def __post_init__(self):
        _choice(self.qubit, "initial.qubit", QUBIT_STATES)
        for name in ("mode_a", "mode_b"):
            _parse_mode(getattr(self, name), f"initial.{name}")

    def ket(self, spec) -> KetState:
        factors = {}
        if QUBIT in spec:
            levels = spec.dim_of(QUBIT)
            if self.qubit == "f" and levels < 3:
                raise ConfigError("initial.qubit = f needs a three-level atom")
            factors[QUBIT] = atom_vector(levels, self.qubit)
        for label, desc in ((MODE_A, self.mode_a), (MODE_B, self.mode_b)):
            kind, value = _parse_mode(desc, f"initial.mode_{label}")
            dim = spec.dim_of(label)
            if kind == "coherent":
                factors[label] = coherent_vector(dim, value)
            else:
                if value >= dim:
                    raise ConfigError(f"initial.mode_{label}: Fock state {value} outside truncation {dim}")
                factors[label] = basis_vector(dim, value)
        return product_ket(spec, factors)


def _parse_mode(desc: str, name: str):
    if not isinstance(desc, str):
        raise ConfigError(f"{name}: expected a string descriptor, got {desc!r}")
    if desc == "vacuum":
        return "fock", 0
    kind, _, arg = desc.partition(":")
    if kind == "fock":
        return "fock", _int(arg, name, 0)
    if kind == "coherent":
        return "coherent", complex(_complex(arg, name))
    raise ConfigError(f"{name}: unknown mode descriptor {desc!r}")


@dataclass(frozen=True)
class OutputSection(_Section):
    _name = "output"
    dir: str = "results"
    prefix: str | None = None
    strict: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strict", _bool(self.strict, "output.strict"))


SECTIONS = {
    "model": ModelSection,
    "truncation": TruncationSection,
    "rates": RatesSection,
    "grid": GridSection,
    "mcwf": McwfSection,
    "observables": ObservablesSection,
    "initial": InitialSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully validated scenario; build with :meth:`from_dict` or :func:`load_config`."""

    name: str = "custom"
    description: str = ""
    engines: tuple[str, ...] = ("schrodinger_vi",)
    model: ModelSection = field(default_factory=ModelSection)
    truncation: TruncationSection = field(default_factory=TruncationSection)
    rates: RatesSection = field(default_factory=RatesSection)
    grid: GridSection = field(default_factory=GridSection)
    mcwf: McwfSection = field(default_factory=McwfSection)
    observables: ObservablesSection = field(default_factory=ObservablesSection)
    initial: InitialSection = field(default_factory=InitialSection)
    output: OutputSection = field(default_factory=OutputSection)

    def __post_init__(self):
        engines = self.engines
        if isinstance(engines, str):
            engines = (engines,)
        engines = tuple(engines)
        if not engines:
            raise ConfigError("scenario.engines: at least one engine is required")
        for e in engines:
            _choice(e, "scenario.engines", ENGINES)
        if len(set(engines)) != len(engines):
            raise ConfigError("scenario.engines: duplicate engine")
        object.__setattr__(self, "engines", engines)
        if "schrodinger_full" in engines and self.truncation.full_qubit_levels != 3:
            raise ConfigError("schrodinger_full requires truncation.full_qubit_levels = 3")
        if any(e.endswith("_vi") for e in engines) and self.truncation.qubit_levels != 2:
            raise ConfigError("the V_I engines need truncation.qubit_levels = 2")
        self.params()
        self.derived()

    # -- derived quantities --------------------------------------------------
    def params(self, qubit_levels: int | None = None) -> ModelParams:
        return self.model.params(self.truncation.qubit_levels if qubit_levels is None else qubit_levels)

    def derived(self) -> DerivedParams:
        try:
            return derive(self.params())
        except SqueezeError as exc:
            raise ConfigError(f"model: {exc}") from None

    def decoherence(self) -> DecoherenceRates:
        return self.rates.in_units_of_g(self.derived(), self.model.g_in_hz)

    # -- (de)serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        out = {"scenario": {"name": self.name, "description": self.description, "engines": list(self.engines)}}
        for key in SECTIONS:
            out[key] = getattr(self, key).to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping of sections")
        unknown = sorted(set(data) - set(SECTIONS) - {"scenario"})
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
        head = dict(data.get("scenario") or {})
        extra = sorted(set(head) - {"name", "description", "engines"})
        if extra:
            raise ConfigError(f"[scenario] unknown field(s): {', '.join(extra)}")
        kwargs = {k: SECTIONS[k].from_dict(data.get(k)) for k in SECTIONS}
        try:
            return cls(name=str(head.get("name", "custom")), description=str(head.get("description", "")),
                       engines=head.get("engines", ("schrodinger_vi",)), **kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_value(self, path: str, value) -> "ScenarioConfig":
        """Copy with one field replaced; ``path`` is ``section.field``.

        ``rates.kappa`` sets ``kappa_a`` and ``kappa_b`` together and
        ``truncation.N`` sets both mode cutoffs.
        """
        data = self.to_dict()
        section, _, key = path.partition(".")
        if section not in data or not key:
            raise ConfigError(f"unknown parameter path {path!r}")
        aliases = {("rates", "kappa"): ("kappa_a", "kappa_b"), ("truncation", "N"): ("N_a", "N_b")}
        keys = aliases.get((section, key), (key,))
        for k in keys:
            if k not in data[section]:
                raise ConfigError(f"unknown parameter path {path!r}")
            data[section][k] = value
        return ScenarioConfig.from_dict(data)

    def with_overrides(self, n_traj=None, seed=None, fock=None, out=None, strict=None) -> "ScenarioConfig":
        cfg = self
        if n_traj is not None:
            cfg = cfg.with_value("mcwf.n_traj", n_traj)
        if seed is not None:
            cfg = cfg.with_value("mcwf.master_seed", seed)
        if fock is not None:
            cfg = cfg.with_value("truncation.N", fock)
        if out is not None:
            cfg = cfg.with_value("output.dir", str(out))
        if strict:
            cfg = cfg.with_value("output.strict", True)
        return cfg


def _ini_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config_text(text: str, fmt: str) -> ScenarioConfig:
    """Parse ``json`` or ``ini`` text. INI values are read as JSON literals when possible."""
    if fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
    elif fmt == "ini":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"invalid INI: {exc}") from None
        data = {s: {k: _ini_value(v) for k, v in parser[s].items()} for s in parser.sections()}
    else:
        raise ConfigError(f"unknown config format {fmt!r}")
    return ScenarioConfig.from_dict(data)


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    fmt = "json" if path.suffix.lower() == ".json" else "ini"
    return parse_config_text(text, fmt)


def dump_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


# ---------------------------------------------------------------------------------
# builtin scenarios

FIG2 = {"fig2a": (35.0, 20.0), "fig2b": (90.0, 50.0), "fig2c": (180.0, 100.0)}
FIG3_RATES = {"gamma": 5.2e-3, "gamma_ph": 1.0e-3, "kappa_a": 1.0e-4, "kappa_b": 1.0e-4}
# Sweep families for fig3a-c: the values are our own choice (in units of |lambda|).
SWEEP_FAMILIES = {
    "fig3a": ("rates.kappa", (1e-3, 1e-2, 1e-1)),
    "fig3b": ("rates.gamma", (1e-3, 5e-3, 2e-2)),
    "fig3c": ("rates.gamma_ph", (1e-3, 5e-3, 2e-2)),
}


def rates_from_coherence_times(T1: float, T2_star: float, kappa_inv: float | None = None) -> dict[str, float]:
    """``gamma = 1/T1`` and ``gamma_ph = 1/T2* - 1/(2 T1)`` in s^-1 (and ``kappa = 1/kappa_inv``)."""
    out = {"gamma": 1.0 / T1, "gamma_ph": 1.0 / T2_star - 1.0 / (2.0 * T1)}
    if kappa_inv is not None:
        out["kappa_a"] = out["kappa_b"] = 1.0 / kappa_inv
    return out


def builtin_scenarios() -> dict[str, ScenarioConfig]:
    """Named, validated configs: the unitary ladders fig2a-c and the dissipative fig3 runs."""
    out = {}
    for name, (delta, omega) in FIG2.items():
        lam = 1.0 / (4 * (2 * omega - delta))
        out[name] = ScenarioConfig.from_dict({
            "scenario": {"name": name, "engines": ["schrodinger_full", "schrodinger_vi", "schrodinger_hminus"],
                         "description": f"unitary ladder H_full / V_I / H_- at Delta={delta:g}g, Omega={omega:g}g "
                                        f"(lambda = g/{1 / lam:g})"},
            "model": {"Delta": delta, "Omega": omega},
            "grid": {"r_max": 1.5, "samples": 16, "full_r_max": 0.5, "full_samples": 6},
        })
    fig3 = {"model": {"Delta": 90.0, "Omega": 50.0}, "grid": {"r_max": 1.5, "samples": 16}}
    families = {
        "fig3a": ({"kappa_a": 1e-2, "kappa_b": 1e-2}, "resonator loss only"),
        "fig3b": ({"gamma": 5e-3}, "qubit decay only"),
        "fig3c": ({"gamma_ph": 5e-3}, "qubit dephasing only"),
        "fig3d": (dict(FIG3_RATES), "all channels at present-day rates"),
        "fig3d_improved": ({"gamma": FIG3_RATES["gamma"] / 10, "gamma_ph": FIG3_RATES["gamma_ph"] / 10,
                            "kappa_a": FIG3_RATES["kappa_a"], "kappa_b": FIG3_RATES["kappa_b"]},
                           "qubit T1 and T2* ten times longer"),
    }
    for name, (rates, what) in families.items():
        out[name] = ScenarioConfig.from_dict({
            "scenario": {"name": name, "engines": ["mcwf_vi"], "description": f"lambda = g/40, {what}"},
            "rates": dict(rates, units="lambda"),
            **fig3,
        })
    return out


def get_builtin(name: str) -> ScenarioConfig:
    table = builtin_scenarios()
    if name not in table:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(table)}")
    return table[name]


# ---------------------------------------------------------------------------------
# running


@dataclass
class EngineOutput:
    """Raw per-time moment data of one engine run."""

    engine: str
    times: np.ndarray
    moments: np.ndarray  # (n_times, 7); trajectory mean for mcwf
    leaks: np.ndarray  # (n_times, 2)
    samples: np.ndarray | None = None  # (n_traj, n_times, 7) for mcwf
    info: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


@dataclass
class RunRecord:
    """Everything a run produced; :meth:`summary` is what lands in the JSON file."""

    config: ScenarioConfig
    derived: DerivedParams
    regime: RegimeReport
    records: dict[str, list[SqueezingRecord]]
    diagnostics: dict[str, list[dict]]
    rows: list[dict]
    warnings: list[str]
    engine_info: dict[str, dict]
    code_version: str = __version__
    timestamp: str = ""
    wall_clock: float = 0.0
    csv_path: str | None = None
    json_path: str | None = None

    def min_v_ar(self, engine: str | None = None) -> float:
        engines = [engine] if engine else list(self.records)
        return min(rec.V_ar for e in engines for rec in self.records[e])

    def max_db(self, engine: str | None = None) -> float:
        engines = [engine] if engine else list(self.records)
        return max(rec.dB for e in engines for rec in self.records[e])

    def series(self, engine: str, key: str = "V_ar") -> np.ndarray:
        return np.array([getattr(rec, key) for rec in self.records[engine]])

    def csv_text(self) -> str:
        return rows_to_csv(self.rows)

    def summary(self) -> dict:
        return {
            "name": self.config.name,
            "config": self.config.to_dict(),
            "derived": self.derived.to_dict(),
            "regime": {"passed": self.regime.passed, "checks": self.regime.to_list()},
            "min_V_ar": {e: self.min_v_ar(e) for e in self.records},
            "max_dB": {e: self.max_db(e) for e in self.records},
            "engines": self.engine_info,
            "warnings": list(self.warnings),
            "code_version": self.code_version,
            "timestamp": self.timestamp,
            "wall_clock_s": self.wall_clock,
        }


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    return repr(float(value))


def rows_to_csv(rows: list[dict], columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _frame_phases(engine: str, frame: str, t: float, d: DerivedParams) -> tuple[float, float]:
    """Phases ``(phi_a, phi_b)`` taking the engine's native moments to the requested picture."""
    phi_a = phi_b = 0.0
    if engine == "schrodinger_hminus" or frame == "native":
        return phi_a, phi_b
    if engine == "schrodinger_full":
        phi_a, phi_b = -d.omega_a * t, -d.omega_b * t
    if frame == "effective":
        phi_a += d.chi_a * t
        phi_b += d.chi_b * t
    return phi_a, phi_b


def _observable_ops(spec):
    return moment_operators(spec) + leak_operators(spec)


def _ket_output(engine, res, spec) -> EngineOutput:
    ops = _observable_ops(spec)
    vals = np.array([[np.vdot(psi, op.matrix @ psi) / np.vdot(psi, psi) for op in ops] for psi in res.states])
    return EngineOutput(engine, np.asarray(res.times), vals[:, :7], vals[:, 7:].real,
                        info={"dt": res.dt, "norm_drift": res.norm_drift, "dim": spec.total_dim},
                        warnings=list(res.warnings))


def _run_engine(engine: str, cfg: ScenarioConfig) -> EngineOutput:
    tr, grid_cfg = cfg.truncation, cfg.grid
    d = cfg.derived()
    norm_tol = grid_cfg.norm_tol
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        if engine == "schrodinger_hminus":
            spec = mode_spec(tr.N_a, tr.N_b)
            res = propagate_schrodinger(build_h_minus(d, spec), cfg.initial.ket(spec), grid_cfg.time_grid(d.lam),
                                        norm_tol=norm_tol)
            return _ket_output(engine, res, spec)
        if engine == "schrodinger_vi":
            spec = system_spec(tr.N_a, tr.N_b, 2)
            res = propagate_schrodinger(build_v_i(cfg.params(2), d, spec), cfg.initial.ket(spec),
                                        grid_cfg.time_grid(d.lam), norm_tol=norm_tol)
            return _ket_output(engine, res, spec)
        if engine == "schrodinger_full":
            spec = system_spec(tr.full_N, tr.full_N, 3)
            res = propagate_schrodinger(build_h_full(cfg.params(3), spec), cfg.initial.ket(spec),
                                        grid_cfg.time_grid(d.lam, full=True), norm_tol=norm_tol)
            return _ket_output(engine, res, spec)
        spec = system_spec(tr.N_a, tr.N_b, 2)
        H = build_v_i(cfg.params(2), d, spec)
        rates = cfg.decoherence()
        ops = _observable_ops(spec)
        psi0 = cfg.initial.ket(spec)
        grid = grid_cfg.time_grid(d.lam)
        if engine == "lindblad_vi":
            res = propagate_lindblad(H, rates, psi0.to_density(), grid, e_ops=ops, store_states=False)
            return EngineOutput(engine, res.times, res.expect[:, :7], res.expect[:, 7:].real,
                                info={"dt": res.dt, "trace_deviation": res.trace_deviation,
                                      "min_eigenvalue": res.min_eigenvalue, "dim": spec.total_dim},
                                warnings=list(res.warnings))
        ens = mcwf_ensemble(H, rates, psi0, grid, cfg.mcwf.n_traj, cfg.mcwf.master_seed, e_ops=ops,
                            norm_tol=norm_tol)
        return EngineOutput(engine, ens.times, ens.mean[:, :7], ens.mean[:, 7:].real, samples=ens.values[:, :, :7],
                            info={"dt": ens.dt, "n_traj": ens.n_traj, "master_seed": ens.master_seed,
                                  "jumps": ens.jump_counts(), "max_columns": ens.columns,
                                  "dim": spec.total_dim},
                            warnings=list(ens.warnings))


def _records(out: EngineOutput, cfg: ScenarioConfig) -> tuple[list[SqueezingRecord], list[dict], list[dict]]:
    d = cfg.derived()
    obs = cfg.observables
    use_opt = obs.use_optimized(out.engine)
    records, diags, rows = [], [], []
    for k, t in enumerate(out.times):
        phi = _frame_phases(out.engine, obs.frame, t, d)
        m = rotate_moments(out.moments[k], *phi)
        theta_opt = v_min = None
        if obs.optimize:
            theta_opt, v_min = optimize_theta(m, n_grid=obs.theta_grid)
        theta = theta_opt if use_opt else cfg.model.theta
        if out.samples is not None:
            v, err = ensemble_variance(rotate_moments(out.samples[:, k, :], *phi), theta)
        else:
            v, err = variance_from_moments(m, theta), None
        r = abs(d.lam) * t
        rec = SqueezingRecord(t=float(t), r=float(r), V_ar=v, dB=squeezing_db(v), theta=float(theta),
                              entangled=is_entangled(v), V_ar_stderr=err, theta_opt=theta_opt, V_ar_min=v_min)
        diag = {"n_a": float(m[3].real), "n_b": float(m[5].real),
                "leak_a": float(out.leaks[k, 0]), "leak_b": float(out.leaks[k, 1])}
        records.append(rec)
        diags.append(diag)
        rows.append({"engine": out.engine, "r": rec.r, "t_in_inv_g": rec.t, "V_ar": rec.V_ar,
                     "V_ar_stderr": rec.V_ar_stderr, "dB": rec.dB, "theta": rec.theta, "theta_opt": rec.theta_opt,
                     "V_ar_min": rec.V_ar_min, **diag, "entangled": rec.entangled})
    return records, diags, rows


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path | None = None, write: bool = True) -> RunRecord:
    """Run every engine of ``cfg``; write ``<prefix>.csv`` and ``<prefix>.json`` when ``write``."""
    start = time.perf_counter()
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    derived = cfg.derived()
    echo = ScenarioConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    if echo.derived() != derived:
        raise ConfigError("config echo does not reproduce the derived parameters")
    regime = validate_regime(cfg.params(), derived)
    messages = [f"regime: {w}" for w in regime.warnings()]
    for w in messages:
        warnings.warn(w, RuntimeWarning, stacklevel=2)
    records, diags, rows, info = {}, {}, [], {}
    for engine in cfg.engines:
        out = _run_engine(engine, cfg)
        if out.warnings and cfg.output.strict:
            raise TruncationLeak(f"{engine}: {out.warnings[0]}")
        for w in out.warnings:
            messages.append(f"{engine}: {w}")
            warnings.warn(f"{engine}: {w}", TruncationWarning, stacklevel=2)
        records[engine], diags[engine], engine_rows = _records(out, cfg)
        rows.extend(engine_rows)
        info[engine] = out.info
    rec = RunRecord(cfg, derived, regime, records, diags, rows, messages, info, timestamp=stamp)
    rec.wall_clock = time.perf_counter() - start
    if write:
        _write_outputs(rec, Path(out_dir if out_dir is not None else cfg.output.dir), cfg.output.prefix or cfg.name)
    return rec


def _write_outputs(rec: RunRecord, out_dir: Path, prefix: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out_dir / f"{prefix}.csv", out_dir / f"{prefix}.json"
    csv_path.write_text(rec.csv_text())
    rec.csv_path, rec.json_path = str(csv_path), str(json_path)
    json_path.write_text(json.dumps(rec.summary(), indent=2, default=str) + "\n")


@dataclass
class SweepResult:
    axis: str
    values: list
    runs: list[RunRecord]
    csv_path: str | None = None

    def csv_text(self) -> str:
        rows = []
        for value, run in zip(self.values, self.runs):
            rows.extend(dict(row, axis=self.axis, value=value) for row in run.rows)
        return rows_to_csv(rows, ("axis", "value") + CSV_COLUMNS)


def run_sweep(base: ScenarioConfig, axis: str, values, out_dir: str | Path | None = None,
              write: bool = True) -> SweepResult:
    """One run per value of ``axis`` (``section.field``), all with the base ``master_seed``.

    Reusing the seed gives common random numbers across the sweep, so
    differences between values are not blurred by independent sampling noise.
    Per-run files are named ``<name>__<field>=<value>``; the combined
    long-format CSV is ``<name>__sweep_<field>.csv``.
    """
    values = list(values)
    configs = [base.with_value(axis, v) for v in values]
    result = SweepResult(axis, values, [])
    if not values:
        return result
    out_dir = Path(out_dir if out_dir is not None else base.output.dir)
    key = axis.partition(".")[2]
    for v, cfg in zip(values, configs):
        cfg = replace(cfg, output=replace(cfg.output, prefix=f"{base.output.prefix or base.name}__{key}={v}"))
        result.runs.append(run_scenario(cfg, out_dir, write))
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / f"{base.output.prefix or base.name}__sweep_{key}.csv"
        path.write_text(result.csv_text())
        result.csv_path = str(path)
    return result
