"""Simulation scenarios: room geometry, LED/panel parameters and budgets.

Scenarios are immutable. They can be built from the built-in defaults, loaded
from a YAML file (any missing field falls back to the default), and written
back out with :func:`dump_scenario`.

Units: meters, watts, amps, volts, degrees. Noise may be given in dBm in a
config file; it is stored in watts.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

USER_HEIGHT = 1.7

# Maximum-entropy parameters of a zero-mean signal with peak 2 and variance 1
# (density exp(-1 - alpha - gamma x^2) on [-2, 2]); see signal.maxent_params.
DEFAULT_DIST_ALPHA = 0.08092019530626555
DEFAULT_DIST_GAMMA = 0.26334996506278946

DEFAULT_LED_POSITIONS = (
    (0.5, 2.5, 4.5),
    (2.5, 0.5, 4.5),
    (0.5, 0.5, 4.5),
    (2.5, 2.5, 4.5),
    (0.5, 1.5, 4.5),
    (2.5, 1.5, 4.5),
    (1.5, 0.5, 4.5),
    (1.5, 2.5, 4.5),
)
DEFAULT_USER_POSITIONS = (
    (0.9, 1.1, USER_HEIGHT),
    (2.2, 1.3, USER_HEIGHT),
    (1.4, 2.4, USER_HEIGHT),
)


class ScenarioError(ValueError):
    """Invalid scenario field or unparseable scenario file."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


@dataclass(frozen=True)
class HarvesterConsts:
    """Constants of the solar-panel harvest model.

    The defaults keep the log-linear term well posed (mu > 1) and make the
    harvest strictly increasing in the DC bias.
    """

    Pi: float = 1.0
    Gamma: float = 0.001
    mu: float = math.e ** 2
    kappa: float = 1.0
    a: float = 1.0
    z: float = 0.0
    E_a: float = 0.0


@dataclass(frozen=True)
class LedParams:
    semi_angle_deg: float = 60.0
    peak_amplitude: float = 2.0
    signal_variance: float = 1.0
    dist_alpha: float = DEFAULT_DIST_ALPHA
    dist_gamma: float = DEFAULT_DIST_GAMMA
    current_low: float = 10.0
    current_high: float = 15.0
    max_optical_power: float = 125.0
    dimming_level: float = 0.8
    dc_bias_override: float | None = None

    def validate(self) -> None:
        if not 0.0 < self.semi_angle_deg < 90.0:
            raise ScenarioError("led.semi_angle_deg must lie in (0, 90)")
        if self.peak_amplitude <= 0:
            raise ScenarioError("led.peak_amplitude must be > 0")
        if self.signal_variance <= 0:
            raise ScenarioError("led.signal_variance must be > 0")
        if not 0.0 < self.dimming_level <= 1.0:
            raise ScenarioError("led.dimming_level must lie in (0, 1]")
        if self.current_low >= self.current_high:
            raise ScenarioError(
                "led.current_low must be below led.current_high "
                f"(got {self.current_low} >= {self.current_high})"
            )
        if self.max_optical_power <= 0:
            raise ScenarioError("led.max_optical_power must be > 0")
        if self.dc_bias_override is not None and self.dc_bias_override < 0:
            raise ScenarioError("led.dc_bias_override must be >= 0")


@dataclass(frozen=True)
class PanelParams:
    fov_deg: float = 60.0
    refractive_index: float = 1.5
    detector_area: float = 10e-4
    resp_l: float = 0.54
    resp_c: float = 1.0
    eh: HarvesterConsts = field(default_factory=HarvesterConsts)

    def validate(self) -> None:
        if not 0.0 < self.fov_deg <= 90.0:
            raise ScenarioError("panel.fov_deg must lie in (0, 90]")
        if self.detector_area <= 0:
            raise ScenarioError("panel.detector_area must be > 0")
        if self.refractive_index <= 0:
            raise ScenarioError("panel.refractive_index must be > 0")
        if self.eh.mu <= 1.0:
            raise ScenarioError("panel.eh.mu must be > 1")


@dataclass(frozen=True)
class Scenario:
    room_dims: tuple[float, float, float] = (3.0, 3.0, 5.0)
    led_positions: tuple[tuple[float, float, float], ...] = DEFAULT_LED_POSITIONS
    user_positions: tuple[tuple[float, float, float], ...] = DEFAULT_USER_POSITIONS
    led: LedParams = field(default_factory=LedParams)
    panel: PanelParams = field(default_factory=PanelParams)
    noise_power: float = dbm_to_watts(-98.82)
    transmit_power_budget: float = 10.0 ** 1.5
    energy_threshold: float = 0.020

    def __post_init__(self):
        object.__setattr__(self, "room_dims", tuple(float(v) for v in self.room_dims))
        object.__setattr__(self, "led_positions", _points(self.led_positions))
        object.__setattr__(self, "user_positions", _points(self.user_positions))
        self.validate()

    @property
    def n_leds(self) -> int:
        return len(self.led_positions)

    @property
    def n_users(self) -> int:
        return len(self.user_positions)

    @property
    def leds(self) -> np.ndarray:
        return np.array(self.led_positions, dtype=float)

    @property
    def users(self) -> np.ndarray:
        return np.array(self.user_positions, dtype=float)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        if len(self.room_dims) != 3 or min(self.room_dims) <= 0:
            raise ScenarioError("room_dims must be three positive lengths")
        if self.n_leds < 1:
            raise ScenarioError("led_positions must hold at least one LED")
        if self.n_users < 1:
            raise ScenarioError("user_positions must hold at least one user")
        room = np.array(self.room_dims)
        for name, pts in (("led_positions", self.leds), ("user_positions", self.users)):
            if np.any(pts < 0) or np.any(pts > room):
                raise ScenarioError(f"{name} must lie inside room_dims {self.room_dims}")
        if self.users[:, 2].max() >= self.leds[:, 2].min():
            raise ScenarioError("user_positions must lie below every LED")
        if self.noise_power <= 0:
            raise ScenarioError("noise_power must be > 0")
        if self.transmit_power_budget <= 0:
            raise ScenarioError("transmit_power_budget must be > 0")
        if self.energy_threshold < 0:
            raise ScenarioError("energy_threshold must be >= 0")
        self.led.validate()
        self.panel.validate()


def _points(pts) -> tuple[tuple[float, float, float], ...]:
    out = []
    for p in pts:
        p = tuple(float(v) for v in p)
        if len(p) != 3:
            raise ScenarioError(f"positions must be 3-vectors, got {p}")
        out.append(p)
    return tuple(out)


def default_scenario() -> Scenario:
    """8 ceiling LEDs in a 3 x 3 x 5 m room serving 3 users at 1.7 m."""
    return Scenario()


def sample_users(scenario: Scenario, count: int, seed: int) -> Scenario:
    """Return a copy of `scenario` with `count` users drawn uniformly on the receiving plane."""
    if count < 1:
        raise ScenarioError("count must be >= 1")
    rng = np.random.default_rng(seed)
    w, d, _ = scenario.room_dims
    xy = rng.uniform(low=(0.0, 0.0), high=(w, d), size=(count, 2))
    users = tuple((float(x), float(y), USER_HEIGHT) for x, y in xy)
    return scenario.replace(user_positions=users)


# ---------------------------------------------------------------- file format

def _merge_dataclass(cls, default, data, prefix):
    if data is None:
        return default
    if not isinstance(data, dict):
        raise ScenarioError(f"{prefix} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ScenarioError(f"unknown field(s) in {prefix}: {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        val = data[f.name]
        if f.name == "eh":
            val = _merge_dataclass(HarvesterConsts, default.eh, val, f"{prefix}.eh")
        elif val is not None:
            try:
                val = float(val)
            except (TypeError, ValueError):
                raise ScenarioError(f"{prefix}.{f.name} must be a number") from None
        kwargs[f.name] = val
    return dataclasses.replace(default, **kwargs)


def scenario_from_dict(data: dict | None) -> Scenario:
    """Build a scenario from a parsed config mapping; absent fields take defaults."""
    data = dict(data or {})
    base = default_scenario()
    allowed = {f.name for f in dataclasses.fields(Scenario)} | {"noise_power_dbm"}
    unknown = set(data) - allowed
    if unknown:
        raise ScenarioError(f"unknown top-level field(s): {sorted(unknown)}")
    if "noise_power_dbm" in data:
        if "noise_power" in data:
            raise ScenarioError("give noise_power or noise_power_dbm, not both")
        data["noise_power"] = dbm_to_watts(float(data.pop("noise_power_dbm")))
    kwargs = {}
    try:
        for key in ("room_dims", "led_positions", "user_positions"):
            if key in data:
                kwargs[key] = data[key]
        for key in ("noise_power", "transmit_power_budget", "energy_threshold"):
            if key in data:
                kwargs[key] = float(data[key])
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario field: {exc}") from None
    kwargs["led"] = _merge_dataclass(LedParams, base.led, data.get("led"), "led")
    kwargs["panel"] = _merge_dataclass(PanelParams, base.panel, data.get("panel"), "panel")
    try:
        return Scenario(**kwargs)
    except TypeError as exc:
        raise ScenarioError(str(exc)) from None


def scenario_to_dict(scenario: Scenario) -> dict:
    d = dataclasses.asdict(scenario)
    d["room_dims"] = list(scenario.room_dims)
    d["led_positions"] = [list(p) for p in scenario.led_positions]
    d["user_positions"] = [list(p) for p in scenario.user_positions]
    return d


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"cannot parse {path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    return scenario_from_dict(data)


def dump_scenario(scenario: Scenario, path=None) -> str:
    text = yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text
