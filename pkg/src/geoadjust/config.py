"""YAML run configuration: schema, validation and the effective-config echo.

Schema (every section optional; defaults live in the tables below and are
written out in full by the effective-config echo)::

    system: primitive | voigt | hydrostatic-damped
    params:   {nu, kappa, eps1, eps2, f0, alpha, m, voigt_viscous}
    stepper:  {dt, t_end, scheme, sample_every, cfl_limit}
    initial_condition:
      preset: zero | zonal | taylor-like | random-band
      amplitude, v_amplitude, T_amplitude, bandwidth, slope, seed
      modes: {u: [[k1, k2, re, im], ...], v: [...], T: [...]}   # replaces the preset
    output:      {checkpoint_every, final_checkpoint}
    convergence: {alphas, T, dt, min_samples}
    blowup:      {alphas, Tstar, dt, min_samples, floor}
    lemma:       {trials, m, seed, oversample}
    audit:       {small_data_samples, seed}

Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .dynamics import SystemKind
from .errors import ConfigError, GeoadjustError
from .fields import PRESETS, Params, State, initial_state, state_from_modes
from .integrate import Scheme, StepperConfig

_REAL = "real"
_INT = "int"
_BOOL = "bool"
_STR = "str"
_REALS = "reals"


def _coerce(section: str, key: str, kind: str, value: Any, optional: bool = False):
    where = f"{section}.{key}"
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{where} must not be empty")
    if kind == _REAL:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{where} must be finite, got {value!r}")
        return value
    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if kind == _BOOL:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false, got {value!r}")
        return value
    if kind == _STR:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if kind == _REALS:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} must be a list of numbers, got {value!r}")
        return [_coerce(section, f"{key}[{i}]", _REAL, v) for i, v in enumerate(value)]
    raise AssertionError(kind)


def _section(raw: Any, name: str, schema: dict, optional_keys=()) -> dict:
    """Check a mapping against ``{key: (kind, default)}`` and fill in defaults."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{name}' must be a mapping, got {type(raw).__name__}")
    unknown = sorted(set(map(str, raw)) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(unknown)}; "
                          f"allowed: {', '.join(schema)}")
    out = {}
    for key, (kind, default) in schema.items():
        value = raw.get(key, default)
        out[key] = _coerce(name, key, kind, value, optional=key in optional_keys)
    return out


_PARAMS = {
    "nu": (_REAL, 0.1), "kappa": (_REAL, 0.1), "eps1": (_REAL, 0.05), "eps2": (_REAL, 1.0),
    "f0": (_REAL, 0.0), "alpha": (_REAL, 0.0), "m": (_INT, 16), "voigt_viscous": (_BOOL, False),
}
_STEPPER = {
    "dt": (_REAL, 1e-3), "t_end": (_REAL, 1.0), "scheme": (_STR, Scheme.INTEGRATING_FACTOR_RK4.value),
    "sample_every": (_INT, 10), "cfl_limit": (_REAL, None),
}
_IC = {
    "preset": (_STR, "zonal"), "amplitude": (_REAL, 1.0), "v_amplitude": (_REAL, 0.0),
    "T_amplitude": (_REAL, 0.0), "bandwidth": (_INT, 1), "slope": (_REAL, 1.5), "seed": (_INT, 0),
}
_OUTPUT = {"checkpoint_every": (_INT, 0), "final_checkpoint": (_BOOL, True)}
_CONVERGENCE = {"alphas": (_REALS, [0.1, 0.05, 0.025]), "T": (_REAL, 1.0), "dt": (_REAL, 2e-3),
                "min_samples": (_INT, 200)}
_BLOWUP = {"alphas": (_REALS, [0.1, 0.05, 0.025, 0.0125]), "Tstar": (_REAL, 1.0),
           "dt": (_REAL, 2e-3), "min_samples": (_INT, 200), "floor": (_REAL, None)}
_LEMMA = {"trials": (_INT, 1000), "m": (_INT, 16), "seed": (_INT, 0), "oversample": (_INT, 4)}
_AUDIT = {"small_data_samples": (_INT, 0), "seed": (_INT, 0)}

_TOP = ("system", "params", "stepper", "initial_condition", "output", "convergence", "blowup",
        "lemma", "audit")


def _modes(raw: Any) -> Optional[dict]:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigError("initial_condition.modes must map field names to mode lists")
    unknown = sorted(set(map(str, raw)) - {"u", "v", "T"})
    if unknown:
        raise ConfigError(f"unknown field(s) in initial_condition.modes: {', '.join(unknown)}")
    out = {}
    for name in ("u", "v", "T"):
        entries = raw.get(name) or []
        if not isinstance(entries, list):
            raise ConfigError(f"initial_condition.modes.{name} must be a list")
        rows = []
        for i, e in enumerate(entries):
            where = f"modes.{name}[{i}]"
            if not isinstance(e, (list, tuple)) or len(e) != 4:
                raise ConfigError(f"initial_condition.{where} must be [k1, k2, re, im]")
            k1 = _coerce("initial_condition", f"{where}.k1", _INT, e[0])
            k2 = _coerce("initial_condition", f"{where}.k2", _INT, e[1])
            re = _coerce("initial_condition", f"{where}.re", _REAL, e[2])
            im = _coerce("initial_condition", f"{where}.im", _REAL, e[3])
            rows.append([k1, k2, re, im])
        out[name] = rows
    return out


@dataclass(frozen=True)
class InitialCondition:
    preset: str = "zonal"
    amplitude: float = 1.0
    v_amplitude: float = 0.0
    T_amplitude: float = 0.0
    bandwidth: int = 1
    slope: float = 1.5
    seed: int = 0
    modes: Optional[dict] = None

    def build(self, m: int) -> State:
        if self.modes is not None:
            table = {name: {(k1, k2): complex(re, im) for k1, k2, re, im in rows}
                     for name, rows in self.modes.items() if rows}
            return state_from_modes(m, table)
        return initial_state(self.preset, m, amplitude=self.amplitude,
                             v_amplitude=self.v_amplitude, T_amplitude=self.T_amplitude,
                             bandwidth=self.bandwidth, slope=self.slope, seed=self.seed)


@dataclass(frozen=True)
class RunConfig:
    system: SystemKind
    params: Params
    stepper: StepperConfig
    initial_condition: InitialCondition
    output: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    blowup: dict = field(default_factory=dict)
    lemma: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        ic = dataclasses.asdict(self.initial_condition)
        if ic["modes"] is None:
            del ic["modes"]
        st = self.stepper
        return {
            "system": self.system.value,
            "params": dataclasses.asdict(self.params),
            "stepper": {"dt": st.dt, "t_end": st.t_end, "scheme": st.scheme.value,
                        "sample_every": st.sample_every, "cfl_limit": st.cfl_limit},
            "initial_condition": ic,
            "output": dict(self.output),
            "convergence": dict(self.convergence),
            "blowup": dict(self.blowup),
            "lemma": dict(self.lemma),
            "audit": dict(self.audit),
        }

    def to_yaml(self) -> str:
        return dump_yaml(self.to_dict())


def dump_yaml(data: dict) -> str:
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None, allow_unicode=False)


def _wrap(section: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (GeoadjustError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def parse_config(raw: Any) -> RunConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("the configuration must be a mapping at top level")
    unknown = sorted(set(map(str, raw)) - set(_TOP))
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}; allowed: {', '.join(_TOP)}")

    system_name = _coerce("", "system", _STR, raw.get("system", SystemKind.PRIMITIVE.value))
    try:
        system = SystemKind(system_name)
    except ValueError:
        raise ConfigError(f"system must be one of {[k.value for k in SystemKind]}, "
                          f"got {system_name!r}") from None

    params = _wrap("params", Params, **_section(raw.get("params"), "params", _PARAMS))
    if system is SystemKind.VOIGT and params.alpha <= 0:
        raise ConfigError("params.alpha must be > 0 for the voigt system")

    st = _section(raw.get("stepper"), "stepper", _STEPPER, optional_keys=("cfl_limit",))
    try:
        Scheme(st["scheme"])
    except ValueError:
        raise ConfigError(f"stepper.scheme must be one of {[s.value for s in Scheme]}, "
                          f"got {st['scheme']!r}") from None
    stepper = _wrap("stepper", StepperConfig, **st)

    ic_raw = raw.get("initial_condition") or {}
    if not isinstance(ic_raw, dict):
        raise ConfigError("section 'initial_condition' must be a mapping")
    ic_raw = dict(ic_raw)
    modes = _modes(ic_raw.pop("modes", None))
    ic_fields = _section(ic_raw, "initial_condition", _IC)
    if ic_fields["preset"] not in PRESETS:
        raise ConfigError(f"initial_condition.preset must be one of {list(PRESETS)}, "
                          f"got {ic_fields['preset']!r}")
    ic = InitialCondition(**ic_fields, modes=modes)
    state = _wrap("initial_condition", ic.build, params.m)
    if system is SystemKind.HYDROSTATIC_DAMPED and (state.v.norm() > 0 or state.T.norm() > 0):
        raise ConfigError("the hydrostatic-damped system carries u only; "
                          "set v_amplitude and T_amplitude to 0 (and give no v or T modes)")

    output = _section(raw.get("output"), "output", _OUTPUT)
    if output["checkpoint_every"] < 0:
        raise ConfigError("output.checkpoint_every must be >= 0 (0 disables periodic checkpoints)")
    conv = _section(raw.get("convergence"), "convergence", _CONVERGENCE)
    blow = _section(raw.get("blowup"), "blowup", _BLOWUP, optional_keys=("floor",))
    lemma = _section(raw.get("lemma"), "lemma", _LEMMA)
    audit = _section(raw.get("audit"), "audit", _AUDIT)
    for name, sec in (("convergence", conv), ("blowup", blow)):
        alphas = sec["alphas"]
        if any(a <= 0 for a in alphas) or any(b >= a for a, b in zip(alphas, alphas[1:])):
            raise ConfigError(f"{name}.alphas must be positive and strictly decreasing, got {alphas}")
        if sec["dt"] <= 0 or sec["min_samples"] < 1:
            raise ConfigError(f"{name}.dt must be > 0 and {name}.min_samples >= 1")
    if conv["T"] <= 0 or blow["Tstar"] <= 0:
        raise ConfigError("convergence.T and blowup.Tstar must be > 0")
    if len(blow["alphas"]) < 3:
        raise ConfigError("blowup.alphas needs at least three values for the extrapolation")
    if lemma["trials"] < 1 or lemma["m"] < 1 or lemma["oversample"] < 1:
        raise ConfigError("lemma.trials, lemma.m and lemma.oversample must be >= 1")
    if audit["small_data_samples"] < 0:
        raise ConfigError("audit.small_data_samples must be >= 0")

    return RunConfig(system, params, stepper, ic, output, conv, blow, lemma, audit)


def load_config(path: Optional[Path]) -> RunConfig:
    """Parse a YAML file; ``None`` gives the all-defaults configuration."""
    if path is None:
        return parse_config({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from None
    return parse_config(raw)
