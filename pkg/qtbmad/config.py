"""Run configuration: flat `section.key=value` text files.

Blank lines and `#` comments are ignored, unknown keys are rejected and every
value is validated when the file is loaded. `dump_config` writes every key in
a fixed order, so `load_config(dump_config(c))` reproduces `c`.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import ConfigError, InvalidParameter
from .models import (AdaBeliefHyper, BarrierParams, DesignVector, Device, DeviceGeometry,
                     GridSettings, Observations, ParameterBounds, PhysicalConstants,
                     PotentialParams, WindowParams)
from .utils.csv_helpers import parse_floats, parse_pairs


@dataclass(frozen=True)
class SweepSettings:
    bias_start: float = 0.0
    bias_stop: float = 0.3
    bias_points: int = 31

    def __post_init__(self):
        if self.bias_start < 0 or self.bias_stop < self.bias_start:
            raise InvalidParameter("sweep needs 0 <= bias_start <= bias_stop")
        if self.bias_points < 1:
            raise InvalidParameter("sweep needs at least one bias point")

    def biases(self) -> List[float]:
        if self.bias_points == 1:
            return [self.bias_start]
        step = (self.bias_stop - self.bias_start) / (self.bias_points - 1)
        return [self.bias_start + k * step for k in range(self.bias_points)]


@dataclass(frozen=True)
class InvertSettings:
    targets: Tuple[Tuple[float, float], ...] = ()
    starts: int = 25
    iterations: int = 1000
    hyper: AdaBeliefHyper = field(default_factory=AdaBeliefHyper)
    seed: int = 0
    bounds: ParameterBounds = field(default_factory=ParameterBounds)

    def __post_init__(self):
        if self.starts < 1:
            raise InvalidParameter("invert.starts must be at least 1")
        if self.iterations < 0:
            raise InvalidParameter("invert.iterations must be non-negative")
        if self.seed < 0:
            raise InvalidParameter("invert.seed must be non-negative")
        if self.targets:
            Observations.from_pairs(self.targets)


def _default_barriers() -> PotentialParams:
    return PotentialParams(BarrierParams(0.3, 0.4, 0.05), BarrierParams(0.3, 0.6, 0.05))


@dataclass(frozen=True)
class RunConfig:
    geometry: DeviceGeometry = field(default_factory=DeviceGeometry)
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    barriers: PotentialParams = field(default_factory=_default_barriers)
    fermi_ev: float = 0.1
    window: WindowParams = field(default_factory=WindowParams)
    grids: GridSettings = field(default_factory=GridSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    invert: InvertSettings = field(default_factory=InvertSettings)

    def device(self) -> Device:
        return Device(geometry=self.geometry, window=self.window, constants=self.constants)

    def design_vector(self) -> DesignVector:
        return DesignVector(phi=self.barriers, fermi=self.fermi_ev)

    def observations(self) -> Optional[Observations]:
        return Observations.from_pairs(self.invert.targets) if self.invert.targets else None


# ─── Flat key=value representation ──────────────────────────────────────────

def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _fmt_pair(p) -> str:
    return f"{_fmt(float(p[0]))},{_fmt(float(p[1]))}"


def flatten(config: RunConfig) -> Dict[str, str]:
    b1, b2 = config.barriers.barrier1, config.barriers.barrier2
    inv = config.invert
    return {
        "geometry.length_nm": _fmt(float(config.geometry.length)),
        "geometry.points": str(config.geometry.points),
        "constants.hbar2_over_2m": _fmt(float(config.constants.hbar2_over_2m)),
        "barriers.h1": _fmt(float(b1.height)),
        "barriers.c1": _fmt(float(b1.center)),
        "barriers.w1": _fmt(float(b1.width)),
        "barriers.h2": _fmt(float(b2.height)),
        "barriers.c2": _fmt(float(b2.center)),
        "barriers.w2": _fmt(float(b2.width)),
        "barriers.sharpness": _fmt(float(b1.sharpness)),
        "fermi_ev": _fmt(float(config.fermi_ev)),
        "window.margin_frac": _fmt(float(config.window.margin_frac)),
        "window.sharpness": _fmt(float(config.window.sharpness)),
        "grids.energy_points": str(config.grids.energy_points),
        "grids.interp_points": str(config.grids.interp_points),
        "sweep.bias_start": _fmt(float(config.sweep.bias_start)),
        "sweep.bias_stop": _fmt(float(config.sweep.bias_stop)),
        "sweep.bias_points": str(config.sweep.bias_points),
        "invert.targets": ",".join(f"{_fmt(float(v))}:{_fmt(float(i))}" for v, i in inv.targets),
        "invert.starts": str(inv.starts),
        "invert.iterations": str(inv.iterations),
        "invert.learning_rate": _fmt(float(inv.hyper.lr)),
        "invert.beta1": _fmt(float(inv.hyper.beta1)),
        "invert.beta2": _fmt(float(inv.hyper.beta2)),
        "invert.eps": _fmt(float(inv.hyper.eps)),
        "invert.seed": str(inv.seed),
        "invert.bounds.h": _fmt_pair(inv.bounds.h),
        "invert.bounds.c": _fmt_pair(inv.bounds.c),
        "invert.bounds.w": _fmt_pair(inv.bounds.w),
        "invert.bounds.mu": _fmt_pair(inv.bounds.mu),
    }


KNOWN_KEYS = tuple(flatten(RunConfig()))


class _Reader:
    """Typed access to raw string values; parse failures name their key."""

    def __init__(self, raw: Dict[str, str]):
        self.raw = raw

    def _get(self, key, parse):
        try:
            return parse(self.raw[key].strip())
        except (ValueError, TypeError) as e:
            raise ConfigError(f"cannot parse {self.raw[key]!r} ({e})", key) from e

    def float(self, key) -> float:
        return self._get(key, float)

    def int(self, key) -> int:
        return self._get(key, int)

    def bound(self, key) -> Tuple[float, float]:
        values = self._get(key, parse_floats)
        if len(values) != 2:
            raise ConfigError("expected 'lower,upper'", key)
        return (values[0], values[1])

    def pairs(self, key) -> Tuple[Tuple[float, float], ...]:
        return tuple(self._get(key, parse_pairs))


def _section(key: str, build):
    try:
        return build()
    except InvalidParameter as e:
        raise ConfigError(str(e), key) from e


def parse_config(text: str) -> RunConfig:
    raw = flatten(RunConfig())
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in raw:
            raise ConfigError("unknown key", key)
        raw[key] = value

    r = _Reader(raw)
    sharp = r.float("barriers.sharpness")
    return _section("config", lambda: RunConfig(
        geometry=_section("geometry", lambda: DeviceGeometry(r.float("geometry.length_nm"),
                                                             r.int("geometry.points"))),
        constants=_section("constants", lambda: PhysicalConstants(r.float("constants.hbar2_over_2m"))),
        barriers=_section("barriers", lambda: PotentialParams(
            BarrierParams(r.float("barriers.h1"), r.float("barriers.c1"), r.float("barriers.w1"), sharp),
            BarrierParams(r.float("barriers.h2"), r.float("barriers.c2"), r.float("barriers.w2"), sharp),
        )),
        fermi_ev=_section("fermi_ev", lambda: _positive(r.float("fermi_ev"))),
        window=_section("window", lambda: WindowParams(r.float("window.margin_frac"),
                                                       r.float("window.sharpness"))),
        grids=_section("grids", lambda: GridSettings(r.int("grids.energy_points"),
                                                     r.int("grids.interp_points"))),
        sweep=_section("sweep", lambda: SweepSettings(r.float("sweep.bias_start"),
                                                      r.float("sweep.bias_stop"),
                                                      r.int("sweep.bias_points"))),
        invert=_section("invert", lambda: InvertSettings(
            targets=r.pairs("invert.targets"),
            starts=r.int("invert.starts"),
            iterations=r.int("invert.iterations"),
            hyper=AdaBeliefHyper(r.float("invert.learning_rate"), r.float("invert.beta1"),
                                 r.float("invert.beta2"), r.float("invert.eps")),
            seed=r.int("invert.seed"),
            bounds=ParameterBounds(r.bound("invert.bounds.h"), r.bound("invert.bounds.c"),
                                   r.bound("invert.bounds.w"), r.bound("invert.bounds.mu")),
        )),
    ))


def _positive(value: float) -> float:
    if value <= 0:
        raise InvalidParameter(f"{value} must be positive")
    return value


def load_config(path: Optional[str] = None) -> RunConfig:
    """Read a config file; None gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from e
    return parse_config(text)


def dump_config(config: RunConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in flatten(config).items())
