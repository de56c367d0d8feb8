"""Scenario files: a sectioned ``key = value`` grammar read with configparser.

Sections and keys (defaults in parentheses)::

    [model]
    kind = quench | opo                     (required)
    # quench
    omega (1.0)  gamma (0.1)  n_th (49.5)  amplitude (2.0)  phase (0.0)
    # opo
    kappa (1.0)  gamma (2.001)  n_th (0.0)

    [measurement]
    preset = homodyne_x | homodyne_p | heterodyne | general   (required)
    s            (required for general, must be > 0; forbidden otherwise)
    angle (0.0)  efficiency (1.0)  excess_noise (0.0)
    form = exchange | sqrt2 (exchange)

    [initial]
    state = thermal_multiple | squeezed_vacuum | explicit
            (thermal_multiple for quench, squeezed_vacuum for opo)
    mean         (1, 1 for quench; 0, 0 for opo)
    factor (10)      thermal_multiple: cov = factor * (n_th + 1/2) I
    squeezing (1.0)  squeezed_vacuum: cov = diag(e^2r, e^-2r) / 2
    cov              explicit: row-major entries

    [integrator]
    dt (1e-3)  t_final (200 quench, 8000 opo)  record_every (10 quench, 100 opo)
    seed (0)  trajectories (10000)  workers (1)

    [output]
    probe_times (1, 2, 5, 10, 20 quench; 0.5, 1, 2, 5, 10 opo)
    ensemble_every (100)   record stride of ensemble runs
    save_trajectories (10) trajectories written to trajectories.csv

Numbers use a period as decimal separator; lists are comma separated.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .dynamics import IntegratorConfig
from .errors import InvalidArgument, ScenarioError
from .gaussian_core import GaussianState
from .measurement import PRESETS, BathSpec, GeneralDyne, monitor
from .model import build_opo_model, build_quench_model

SECTIONS = ("model", "measurement", "initial", "integrator", "output")


@dataclass(frozen=True)
class QuenchParams:
    omega: float = 1.0
    gamma: float = 0.1
    n_th: float = 49.5
    amplitude: float = 2.0
    phase: float = 0.0

    kind = "quench"

    def build(self):
        return build_quench_model(self.omega, self.gamma, self.n_th, self.amplitude, self.phase)


@dataclass(frozen=True)
class OpoParams:
    kappa: float = 1.0
    gamma: float = 2.001
    n_th: float = 0.0

    kind = "opo"

    def build(self):
        return build_opo_model(self.kappa, self.gamma, self.n_th)


MODEL_KINDS = {"quench": QuenchParams, "opo": OpoParams}


@dataclass(frozen=True)
class MeasurementSpec:
    preset: str
    s: float | None = None
    angle: float = 0.0
    efficiency: float = 1.0
    excess_noise: float = 0.0
    form: str = "exchange"

    def detector(self):
        opts = dict(angle=self.angle, efficiency=self.efficiency, excess_noise=self.excess_noise)
        if self.preset == "general":
            return GeneralDyne(self.s, **opts)
        return GeneralDyne.preset(self.preset, **opts)

    def matrices(self, model):
        bath = BathSpec.thermal(model.coupling_rate, model.bath_occupation)
        return monitor(bath, self.detector(), form=self.form)


@dataclass(frozen=True)
class InitialSpec:
    state: str
    mean: tuple
    factor: float = 10.0
    squeezing: float = 1.0
    cov: tuple | None = None

    def build(self, model):
        mean = np.asarray(self.mean, dtype=float)
        if self.state == "thermal_multiple":
            cov = self.factor * (model.bath_occupation + 0.5) * np.eye(2)
        elif self.state == "squeezed_vacuum":
            cov = GaussianState.squeezed_vacuum(self.squeezing).cov
        else:
            cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        state = GaussianState(mean, cov)
        if not state.is_physical():
            raise ScenarioError("initial covariance violates the uncertainty principle", field="initial.cov")
        return state


@dataclass(frozen=True)
class OutputSpec:
    probe_times: tuple
    ensemble_every: int = 100
    save_trajectories: int = 10


@dataclass(frozen=True)
class Scenario:
    model: QuenchParams | OpoParams
    measurement: MeasurementSpec
    initial: InitialSpec
    integrator: IntegratorConfig
    output: OutputSpec

    @property
    def kind(self):
        return self.model.kind

    def build(self):
        """``(model, monitoring matrices, initial state)`` ready for integration."""
        model = self.model.build()
        return model, self.measurement.matrices(model), self.initial.build(model)

    def replace(self, **changes):
        """Copy with overrides; keys are ``section.field`` or a plain field of [integrator].

        ``preset`` resets the detector to that named preset.
        """
        sc = self
        for key, value in changes.items():
            if value is None:
                continue
            if key == "preset":
                sc = dataclasses.replace(sc, measurement=dataclasses.replace(sc.measurement, preset=value, s=None))
                continue
            section, _, name = key.rpartition(".")
            section = section or "integrator"
            sub = dataclasses.replace(getattr(sc, section), **{name: value})
            sc = dataclasses.replace(sc, **{section: sub})
        _validate(sc)
        return sc

    def to_dict(self):
        return {
            "model": {"kind": self.kind, **dataclasses.asdict(self.model)},
            "measurement": dataclasses.asdict(self.measurement),
            "initial": dataclasses.asdict(self.initial),
            "integrator": dataclasses.asdict(self.integrator),
            "output": dataclasses.asdict(self.output),
        }

    def to_text(self):
        """Canonical scenario text; ``parse_scenario(sc.to_text()) == sc``."""
        lines = []
        for section, values in self.to_dict().items():
            lines.append(f"[{section}]")
            for key, value in values.items():
                if value is None:
                    continue
                name = "trajectories" if (section, key) == ("integrator", "n_traj") else key
                if isinstance(value, (tuple, list)):
                    value = ", ".join(repr(float(v)) for v in value)
                elif isinstance(value, float):
                    value = repr(value)
                lines.append(f"{name} = {value}")
            lines.append("")
        return "\n".join(lines)


_DEFAULTS = {
    "quench": dict(
        state="thermal_multiple",
        mean=(1.0, 1.0),
        t_final=200.0,
        record_every=10,
        probe_times=(1.0, 2.0, 5.0, 10.0, 20.0),
    ),
    "opo": dict(
        state="squeezed_vacuum",
        mean=(0.0, 0.0),
        t_final=8000.0,
        record_every=100,
        probe_times=(0.5, 1.0, 2.0, 5.0, 10.0),
    ),
}

_FLOAT, _INT, _STR, _LIST = float, int, str, tuple

_KEYS = {
    "measurement": {
        "preset": _STR,
        "s": _FLOAT,
        "angle": _FLOAT,
        "efficiency": _FLOAT,
        "excess_noise": _FLOAT,
        "form": _STR,
    },
    "initial": {"state": _STR, "mean": _LIST, "factor": _FLOAT, "squeezing": _FLOAT, "cov": _LIST},
    "integrator": {
        "dt": _FLOAT,
        "t_final": _FLOAT,
        "record_every": _INT,
        "seed": _INT,
        "trajectories": _INT,
        "workers": _INT,
    },
    "output": {"probe_times": _LIST, "ensemble_every": _INT, "save_trajectories": _INT},
}


def _key_lines(text):
    """Map ``(section, key)`` to its 1-based line number."""
    out, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            out.setdefault((section, None), no)
        elif line and line[0] not in "#;" and section is not None:
            for sep in ("=", ":"):
                if sep in line:
                    out.setdefault((section, line.split(sep, 1)[0].strip().lower()), no)
                    break
    return out


def _convert(kind, raw, where, line):
    try:
        if kind is _FLOAT:
            return float(raw)
        if kind is _INT:
            return int(raw)
        if kind is _LIST:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        return raw.strip()
    except ValueError:
        raise ScenarioError(f"{where}: cannot parse {raw!r} as {kind.__name__}", field=where, line=line) from None


def _check(cond, message, where, lines):
    if not cond:
        sec, _, key = where.partition(".")
        raise ScenarioError(f"{where}: {message}", field=where, line=lines.get((sec, key)))


def parse_scenario(text):
    """Parse and validate a scenario document.

    Raises
    ------
    ScenarioError
        With ``line`` set for syntax errors and unknown keys and ``field``
        naming the offending ``section.key`` for constraint violations.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ScenarioError(f"line {exc.lineno}: expected a [section] header", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0]
        raise ScenarioError(f"line {lineno}: syntax error: {exc.errors[0][1]!s}", line=lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ScenarioError(f"line {exc.lineno}: {exc.message}", line=exc.lineno) from None
    lines = _key_lines(text)

    for section in cp.sections():
        if section not in SECTIONS:
            raise ScenarioError(f"unknown section [{section}]", field=section, line=lines.get((section, None)))
    if not cp.has_section("model") or "kind" not in cp["model"]:
        raise ScenarioError("[model] kind is required", field="model.kind")
    kind = cp["model"]["kind"].strip()
    _check(kind in MODEL_KINDS, f"unknown model kind {kind!r}", "model.kind", lines)
    params_cls = MODEL_KINDS[kind]
    model_keys = {f.name: _FLOAT for f in dataclasses.fields(params_cls)}

    values = {}
    for section in SECTIONS:
        allowed = {"kind": _STR, **model_keys} if section == "model" else _KEYS[section]
        values[section] = {}
        if not cp.has_section(section):
            continue
        for key, raw in cp[section].items():
            where = f"{section}.{key}"
            if key not in allowed:
                raise ScenarioError(f"unknown key {where}", field=where, line=lines.get((section, key)))
            values[section][key] = _convert(allowed[key], raw, where, lines.get((section, key)))

    meas = values["measurement"]
    if "preset" not in meas:
        raise ScenarioError("measurement preset required", field="measurement.preset")
    values["model"].pop("kind")
    return _assemble(kind, values, lines)


def _assemble(kind, values, lines):
    defaults = _DEFAULTS[kind]
    try:
        model = MODEL_KINDS[kind](**values["model"])
    except TypeError as exc:
        raise ScenarioError(str(exc), field="model") from None

    meas = dict(values["measurement"])
    measurement = MeasurementSpec(**meas)

    init = dict(values["initial"])
    init.setdefault("state", defaults["state"])
    init.setdefault("mean", defaults["mean"])
    initial = InitialSpec(**init)

    integ = dict(values["integrator"])
    integ.setdefault("t_final", defaults["t_final"])
    integ.setdefault("record_every", defaults["record_every"])
    integ.setdefault("trajectories", 10_000)
    integ["n_traj"] = integ.pop("trajectories")
    try:
        integrator = IntegratorConfig(**integ)
    except InvalidArgument as exc:
        raise ScenarioError(str(exc), field="integrator") from None

    out = dict(values["output"])
    out.setdefault("probe_times", defaults["probe_times"])
    output = OutputSpec(**out)

    sc = Scenario(model, measurement, initial, integrator, output)
    _validate(sc, lines)
    return sc


def _validate(sc, lines=None):
    lines = lines or {}
    m = sc.model
    for name, value in dataclasses.asdict(m).items():
        _check(math.isfinite(value), "must be finite", f"model.{name}", lines)
    if sc.kind == "quench":
        _check(m.omega > 0, "omega must be > 0", "model.omega", lines)
        _check(m.amplitude >= 0, "amplitude must be >= 0", "model.amplitude", lines)
    else:
        _check(m.kappa > 0, "kappa must be > 0", "model.kappa", lines)
    _check(m.gamma > 0, "gamma must be > 0", "model.gamma", lines)
    _check(m.n_th >= 0, "n_th must be >= 0", "model.n_th", lines)

    ms = sc.measurement
    _check(ms.preset in PRESETS or ms.preset == "general", f"unknown preset {ms.preset!r}", "measurement.preset", lines)
    if ms.s is not None:
        _check(ms.s > 0 and math.isfinite(ms.s), f"general-dyne requires s > 0, got {ms.s}", "measurement.s", lines)
    if ms.preset == "general":
        _check(ms.s is not None, "preset general needs s", "measurement.s", lines)
    else:
        _check(ms.s is None, f"s is fixed by preset {ms.preset}; use preset = general", "measurement.s", lines)
    _check(0 <= ms.efficiency <= 1, "efficiency must lie in [0, 1]", "measurement.efficiency", lines)
    _check(ms.excess_noise >= 0, "excess_noise must be >= 0", "measurement.excess_noise", lines)
    _check(ms.form in ("exchange", "sqrt2"), "form must be exchange or sqrt2", "measurement.form", lines)

    ini = sc.initial
    _check(
        ini.state in ("thermal_multiple", "squeezed_vacuum", "explicit"), f"unknown state {ini.state!r}", "initial.state", lines
    )
    _check(len(ini.mean) == 2, "mean needs 2 entries", "initial.mean", lines)
    _check(ini.factor > 0, "factor must be > 0", "initial.factor", lines)
    if ini.state == "explicit":
        _check(ini.cov is not None and len(ini.cov) == 4, "explicit state needs 4 cov entries", "initial.cov", lines)

    cfg = sc.integrator
    _check(cfg.n_traj >= 1, "trajectories must be >= 1", "integrator.trajectories", lines)
    out = sc.output
    _check(len(out.probe_times) > 0, "probe_times must not be empty", "output.probe_times", lines)
    _check(all(t > 0 for t in out.probe_times), "probe_times must be > 0", "output.probe_times", lines)
    _check(out.ensemble_every >= 1, "ensemble_every must be >= 1", "output.ensemble_every", lines)
    _check(out.save_trajectories >= 0, "save_trajectories must be >= 0", "output.save_trajectories", lines)
    try:
        sc.initial.build(sc.model.build())
    except InvalidArgument as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc), field="initial") from None


def bundled_text(name):
    """Text of a scenario shipped with the package (``quench`` or ``opo``)."""
    fname = name if name.endswith(".scenario") else f"{name}.scenario"
    try:
        return resources.files("gaussmon.scenarios").joinpath(fname).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"no scenario file or bundled scenario named {name!r}") from None


def load_scenario(path_or_name):
    """Parse a scenario file, or a bundled one given by bare name."""
    import os

    if os.path.exists(path_or_name):
        with open(path_or_name, encoding="utf-8") as fh:
            return parse_scenario(fh.read())
    if os.sep not in path_or_name and not path_or_name.endswith(".scenario"):
        return parse_scenario(bundled_text(path_or_name))
    raise FileNotFoundError(path_or_name)


def quench_defaults():
    return Scenario(
        model=QuenchParams(),
        measurement=MeasurementSpec("heterodyne"),
        initial=InitialSpec("thermal_multiple", (1.0, 1.0)),
        integrator=IntegratorConfig(dt=1e-3, t_final=200.0, record_every=10, seed=0, n_traj=10_000),
        output=OutputSpec(_DEFAULTS["quench"]["probe_times"]),
    )


def opo_defaults():
    return Scenario(
        model=OpoParams(),
        measurement=MeasurementSpec("heterodyne", excess_noise=0.1),
        initial=InitialSpec("squeezed_vacuum", (0.0, 0.0)),
        integrator=IntegratorConfig(dt=1e-3, t_final=8000.0, record_every=100, seed=0, n_traj=10_000),
        output=OutputSpec(_DEFAULTS["opo"]["probe_times"]),
    )
