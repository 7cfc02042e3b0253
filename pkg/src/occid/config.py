"""Experiment configuration: one JSON document, dotted-path overrides."""

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .kernel import KernelConfig
from .simulation import TWOLINK_PARAMS, make_plant
from .trajectory import RULES


def _check_keys(d, cls, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")


def _positive(value, where, strict=True):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a number, got {value!r}") from None
    if not math.isfinite(v) or (v <= 0 if strict else v < 0):
        raise ConfigError(f"{where} must be {'positive' if strict else 'non-negative'}, got {value!r}")
    return v


def _count(value, where, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{where} must be an integer >= {minimum}, got {value!r}")
    return value


def _interval(value, where):
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a [low, high] pair, got {value!r}") from None
    if not lo <= hi:
        raise ConfigError(f"{where} must satisfy low <= high, got {value!r}")
    return [lo, hi]


@dataclass
class Sampling:
    """Point set: a tensor ``grid`` over ``bounds`` or ``halton`` points in a cube."""

    method: str = "grid"
    bounds: list = None
    center: float = 0.0
    side: float = 1.0
    order: str = "none"

    @classmethod
    def from_dict(cls, d, where):
        _check_keys(d, cls, where)
        s = cls(**d)
        if s.method not in ("grid", "halton"):
            raise ConfigError(f"{where}.method must be 'grid' or 'halton', got {s.method!r}")
        if s.method == "grid":
            if not s.bounds:
                raise ConfigError(f"{where}.bounds is required for grid sampling")
            s.bounds = [_interval(b, f"{where}.bounds[{i}]") for i, b in enumerate(s.bounds)]
        else:
            s.side = _positive(s.side, f"{where}.side")
        if s.order not in ("none", "distance_desc"):
            raise ConfigError(f"{where}.order must be 'none' or 'distance_desc', got {s.order!r}")
        return s


@dataclass
class Excitation:
    num_terms: int = 3
    amplitude_range: list = field(default_factory=lambda: [-1.0, 1.0])
    frequency_range: list = field(default_factory=lambda: [0.1, 5.0])
    phase_range: list = field(default_factory=lambda: [0.0, 2 * math.pi])

    @classmethod
    def from_dict(cls, d, where):
        _check_keys(d, cls, where)
        e = cls(**d)
        _count(e.num_terms, f"{where}.num_terms")
        for name in ("amplitude_range", "frequency_range", "phase_range"):
            setattr(e, name, _interval(getattr(e, name), f"{where}.{name}"))
        return e


@dataclass
class DataConfig:
    num_trajectories: int
    horizon: float
    dt: float
    excitation: Excitation
    noise_sigma: float
    init_sampling: Sampling

    @classmethod
    def from_dict(cls, d, where="data"):
        _check_keys(d, cls, where)
        try:
            c = cls(**d)
        except TypeError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        _count(c.num_trajectories, f"{where}.num_trajectories")
        c.horizon = _positive(c.horizon, f"{where}.horizon")
        c.dt = _positive(c.dt, f"{where}.dt")
        steps = round(c.horizon / c.dt)
        if steps < 2 or abs(steps * c.dt - c.horizon) > 1e-9 * c.horizon:
            raise ConfigError(f"{where}.dt must divide {where}.horizon into at least 2 steps")
        c.noise_sigma = _positive(c.noise_sigma, f"{where}.noise_sigma", strict=False)
        c.excitation = Excitation.from_dict(c.excitation, f"{where}.excitation")
        c.init_sampling = Sampling.from_dict(c.init_sampling, f"{where}.init_sampling")
        return c


@dataclass
class ModelConfig:
    kernel: dict
    lam: float
    s: int
    quadrature: str = "trapezoid"
    smooth_init_derivs: bool = False
    init_deriv_window: int = None

    @classmethod
    def from_dict(cls, d, where="model"):
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        _check_keys(d, cls, where)
        try:
            c = cls(**d)
        except TypeError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        try:
            KernelConfig.from_dict(c.kernel)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.kernel: {exc}") from None
        c.lam = _positive(c.lam, f"{where}.lambda")
        _count(c.s, f"{where}.s")
        if c.quadrature not in RULES:
            raise ConfigError(f"{where}.quadrature must be one of {RULES}, got {c.quadrature!r}")
        if c.init_deriv_window is not None:
            _count(c.init_deriv_window, f"{where}.init_deriv_window", 2 * c.s + 1)
        return c

    @property
    def kernel_config(self):
        return KernelConfig.from_dict(self.kernel)

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


@dataclass
class EvalConfig:
    probe_sampling: Sampling
    probe_count: int
    core_bounds: list = None

    @classmethod
    def from_dict(cls, d, where="eval"):
        _check_keys(d, cls, where)
        try:
            c = cls(**d)
        except TypeError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        c.probe_sampling = Sampling.from_dict(c.probe_sampling, f"{where}.probe_sampling")
        _count(c.probe_count, f"{where}.probe_count")
        if c.core_bounds is not None:
            c.core_bounds = [_interval(b, f"{where}.core_bounds[{i}]") for i, b in enumerate(c.core_bounds)]
        return c


@dataclass
class ControlConfig:
    x0: list = field(default_factory=lambda: [1.0, -1.0, 0.0, 0.0])
    horizon: float = 5.0
    dt: float = 1e-3
    kp: list = field(default_factory=lambda: [20.0, 20.0])
    kv: list = field(default_factory=lambda: [30.0, 30.0])

    @classmethod
    def from_dict(cls, d, where="control"):
        _check_keys(d, cls, where)
        c = cls(**d)
        c.horizon = _positive(c.horizon, f"{where}.horizon")
        c.dt = _positive(c.dt, f"{where}.dt")
        for name in ("kp", "kv"):
            g = getattr(c, name)
            if not isinstance(g, list) or len(g) != 2:
                raise ConfigError(f"{where}.{name} must list the two diagonal gains")
            setattr(c, name, [_positive(v, f"{where}.{name}") for v in g])
        if not isinstance(c.x0, list) or len(c.x0) != 4:
            raise ConfigError(f"{where}.x0 must have 4 entries (q1, q2, qd1, qd2)")
        return c


@dataclass
class ExperimentConfig:
    plant: dict
    data: DataConfig
    model: ModelConfig
    eval: EvalConfig
    control: ControlConfig = field(default_factory=ControlConfig)
    seed: int = 0
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, d):
        _check_keys(d, cls, "config")
        for key in ("plant", "data", "model", "eval"):
            if key not in d:
                raise ConfigError(f"config: missing section {key!r}")
        plant = d["plant"]
        if not isinstance(plant, dict) or "name" not in plant:
            raise ConfigError("plant: expected an object with a 'name'")
        unknown = set(plant) - {"name", "params"}
        if unknown:
            raise ConfigError(f"plant: unknown field(s) {sorted(unknown)}")
        if plant["name"] not in ("duffing", "twolink"):
            raise ConfigError(f"plant.name must be 'duffing' or 'twolink', got {plant['name']!r}")
        params = plant.get("params") or {}
        if plant["name"] == "twolink":
            bad = set(params) - set(TWOLINK_PARAMS)
            if bad:
                raise ConfigError(f"plant.params: unknown parameter(s) {sorted(bad)}")
        cfg = cls(
            plant={"name": plant["name"], "params": dict(params)},
            data=DataConfig.from_dict(d["data"]),
            model=ModelConfig.from_dict(d["model"]),
            eval=EvalConfig.from_dict(d["eval"]),
            control=ControlConfig.from_dict(d.get("control", {})),
            seed=d.get("seed", 0),
            output_dir=d.get("output_dir", "out"),
        )
        if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {cfg.seed!r}")
        pl = cfg.make_plant()
        if cfg.model.s != pl.order:
            raise ConfigError(f"model.s={cfg.model.s} does not match the {pl.name} plant order {pl.order}")
        dims = pl.order * pl.n
        sm = cfg.data.init_sampling
        if sm.method == "grid":
            if len(sm.bounds) != dims:
                raise ConfigError(f"data.init_sampling.bounds needs {dims} intervals (state and derivatives)")
            _grid_side(cfg.data.num_trajectories, dims, "data.num_trajectories")
        ps = cfg.eval.probe_sampling
        if ps.method == "grid":
            if len(ps.bounds) != pl.n:
                raise ConfigError(f"eval.probe_sampling.bounds needs {pl.n} intervals")
            _grid_side(cfg.eval.probe_count, pl.n, "eval.probe_count")
        if cfg.eval.core_bounds is not None and len(cfg.eval.core_bounds) != pl.n:
            raise ConfigError(f"eval.core_bounds needs {pl.n} intervals")
        return cfg

    def make_plant(self):
        return make_plant(self.plant["name"], self.plant["params"])

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d


def _grid_side(count, dims, where):
    k = round(count ** (1.0 / dims))
    if k**dims != count:
        raise ConfigError(f"{where}={count} is not a perfect {dims}-th power, required for grid sampling")
    return k


def grid_side(count, dims):
    return _grid_side(count, dims, "count")


def parse_override(text):
    """Split ``a.b.c=value``; the value is JSON when it parses, else a plain string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must have the form key.path=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(d, overrides):
    d = copy.deepcopy(d)
    for text in overrides:
        path, value = parse_override(text)
        node = d
        for part in path[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"override {text!r}: no section {part!r}")
            node = node[part]
        if not isinstance(node, dict):
            raise ConfigError(f"override {text!r}: {'.'.join(path[:-1])} is not a section")
        if path[-1] == "lam" and "lambda" in node:
            path[-1] = "lambda"
        node[path[-1]] = value
    return d


def load_config(path, overrides=()):
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(apply_overrides(d, overrides))
