"""Scenario description, JSON loading and validation.

Every field has a default, so an empty document ``{}`` yields the reference
scenario: two 400 m areas (GBS area and one 1600 m away), 100 MHz in 120
channels with 20 % for direct service, 37/30 dBm GBS/FlyBS power, -90 dBm
noise, pathloss exponents 2.8 (users) and 2.1 (BS-BS), altitudes 100-300 m
and 25 m/s FlyBS speed.

Environment overrides: ``FLYBS_SEED`` replaces the seed at load time.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .capacity import ChannelPlan, Radio, equal_split_plan
from .channel import dbm_to_watt
from .mobility import Area, ClusterSpec, MobilitySpec

SCHEMES = ("three_hop", "two_hop", "static")


class ScenarioError(ValueError):
    """Invalid scenario document; ``field`` names the offending entry."""

    def __init__(self, field_name: str, reason: str):
        super().__init__(f"{field_name}: {reason}")
        self.field = field_name
        self.reason = reason


@dataclass(frozen=True)
class RadioConfig:
    total_bandwidth: float = 100e6
    num_channels: int = 120
    direct_fraction: float = 0.2
    gbs_power: float = 37.0  # dBm
    flybs_power: float = 30.0  # dBm
    noise: float = -90.0  # dBm
    noise_backhaul: float | None = None  # dBm, defaults to ``noise``
    alpha_user: float = 2.8
    alpha_bs: float = 2.1
    ref_gain: float = 1.0


@dataclass(frozen=True)
class FlightConfig:
    h_min: float = 100.0
    h_max: float = 300.0
    vmax: float = 25.0
    initial_altitude: float = 200.0


@dataclass(frozen=True)
class SolverConfig:
    bisect_tol: float = 0.01
    geom_tol: float = 1e-6
    max_inner_iters: int = 10
    approx_mode: str = "gradient"
    interference_mode: str = "full"
    d_min_floor: float = 1.0
    sequential_updates: bool = False
    shed_load: bool = True


@dataclass(frozen=True)
class Scenario:
    n_users: int = 200
    m_flybss: int = 3
    horizon: int = 1200
    delta: float = 1.0
    gbs_position: tuple = (0.0, 0.0, 25.0)
    radio: RadioConfig = field(default_factory=RadioConfig)
    flight: FlightConfig = field(default_factory=FlightConfig)
    mobility: MobilitySpec = field(default_factory=MobilitySpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    scheme: str = "three_hop"
    seed: int = 0

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    @property
    def internal_flybss(self) -> int:
        """FlyBS slots in the network model; two-hop adds a relay pinned at the GBS."""
        return self.m_flybss + 1 if self.scheme == "two_hop" else self.m_flybss

    def channel_plan(self) -> ChannelPlan:
        r = self.radio
        return equal_split_plan(r.num_channels, r.total_bandwidth, self.internal_flybss,
                                r.direct_fraction, relay_hop=self.scheme != "two_hop")

    def make_radio(self) -> Radio:
        r = self.radio
        m = self.internal_flybss
        tx = np.full(m + 1, dbm_to_watt(r.flybs_power))
        tx[m] = dbm_to_watt(r.gbs_power)
        if self.scheme == "two_hop":
            tx[m - 1] = dbm_to_watt(r.gbs_power)
        noise_bh = None if r.noise_backhaul is None else dbm_to_watt(r.noise_backhaul)
        return Radio(tx_power=tx, noise=dbm_to_watt(r.noise), alpha_user=r.alpha_user,
                     alpha_bs=r.alpha_bs, ref_gain=r.ref_gain, noise_backhaul=noise_bh,
                     interference=self.solver.interference_mode)

    def mobility_spec(self) -> MobilitySpec:
        return dataclasses.replace(self.mobility, step_delta=self.delta)


def _err(name, reason):
    raise ScenarioError(name, reason)


def validate(s: Scenario) -> Scenario:
    if s.n_users <= 0:
        _err("n_users", "must be positive")
    if s.scheme not in SCHEMES:
        _err("scheme", f"must be one of {SCHEMES}")
    if s.m_flybss < (1 if s.scheme == "two_hop" else 2):
        _err("m_flybss", "needs at least one access FlyBS besides the relay")
    if s.horizon < 0:
        _err("horizon", "must be nonnegative")
    if not s.delta > 0:
        _err("delta", "must be positive")
    if len(s.gbs_position) != 3 or not all(np.isfinite(s.gbs_position)):
        _err("gbs_position", "must be three finite coordinates")
    r = s.radio
    for name in ("total_bandwidth", "ref_gain"):
        if not getattr(r, name) > 0:
            _err(f"radio.{name}", "must be positive")
    if r.num_channels <= 0:
        _err("radio.num_channels", "must be positive")
    if not 0 <= r.direct_fraction < 1:
        _err("radio.direct_fraction", "must lie in [0, 1)")
    n_backhaul = r.num_channels - int(round(r.direct_fraction * r.num_channels))
    if n_backhaul < s.internal_flybss - 1:
        _err("radio.num_channels", "too few backhaul channels for the access FlyBSs")
    for name in ("alpha_user", "alpha_bs"):
        if getattr(r, name) < 1:
            _err(f"radio.{name}", "pathloss exponent must be >= 1")
    f = s.flight
    if f.h_min <= 0:
        _err("flight.h_min", "must be positive")
    if f.h_min > f.h_max:
        _err("flight.h_min", "exceeds flight.h_max")
    if f.vmax < 0:
        _err("flight.vmax", "must be nonnegative")
    if not f.h_min <= f.initial_altitude <= f.h_max:
        _err("flight.initial_altitude", "outside [h_min, h_max]")
    v = s.solver
    if not v.bisect_tol > 0:
        _err("solver.bisect_tol", "must be positive")
    if not v.geom_tol > 0:
        _err("solver.geom_tol", "must be positive")
    if v.max_inner_iters < 1:
        _err("solver.max_inner_iters", "must be at least 1")
    if v.approx_mode not in ("gradient", "paper_literal"):
        _err("solver.approx_mode", "must be 'gradient' or 'paper_literal'")
    if v.interference_mode not in ("full", "same_channel"):
        _err("solver.interference_mode", "must be 'full' or 'same_channel'")
    if not v.d_min_floor > 0:
        _err("solver.d_min_floor", "must be positive")
    return s


def _strip_comments(data: dict) -> dict:
    # keys starting with "_" annotate the document and are ignored
    return {k: v for k, v in data.items() if not str(k).startswith("_")}


def _build(cls, data, prefix):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        _err(prefix, "expected an object")
    data = _strip_comments(data)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        _err(f"{prefix}.{sorted(unknown)[0]}", "unknown field")
    return cls(**data)


def _build_mobility(data) -> MobilitySpec:
    if data is None:
        return MobilitySpec()
    if not isinstance(data, dict):
        _err("mobility", "expected an object")
    data = _strip_comments(data)
    try:
        if "areas" in data:
            data["areas"] = tuple(Area(tuple(a.get("center", (0.0, 0.0, 0.0))), a.get("radius", 400.0),
                                       a.get("user_fraction", 1.0)) for a in data["areas"])
        if "clusters" in data:
            data["clusters"] = tuple(ClusterSpec(c["center_speed"], tuple(c["member_speed_range"]), c["count"])
                                     for c in data["clusters"])
        return _build(MobilitySpec, data, "mobility")
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError("mobility", str(exc)) from exc


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "expected a JSON object")
    doc = _strip_comments(doc)
    try:
        radio = _build(RadioConfig, doc.pop("radio", None), "radio")
        flight = _build(FlightConfig, doc.pop("flight", None), "flight")
        solver = _build(SolverConfig, doc.pop("solver", None), "solver")
    except TypeError as exc:
        raise ScenarioError("<root>", str(exc)) from exc
    mobility = _build_mobility(doc.pop("mobility", None))
    if "gbs_position" in doc:
        doc["gbs_position"] = tuple(doc["gbs_position"])
    unknown = set(doc) - {f.name for f in dataclasses.fields(Scenario)}
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown field")
    s = Scenario(radio=radio, flight=flight, solver=solver, mobility=mobility, **doc)
    return validate(s)


def load_scenario(source=None, env=None) -> Scenario:
    """Load a scenario from a JSON string, a path, a dict or ``None`` (defaults)."""
    env = os.environ if env is None else env
    if source is None:
        doc = {}
    elif isinstance(source, dict):
        doc = source
    else:
        inline = isinstance(source, str) and source.lstrip()[:1] in ("{", "[", "")
        text = source if inline else Path(source).read_text()
        try:
            doc = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ScenarioError("<document>", f"malformed JSON: {exc}") from exc
    s = scenario_from_dict(doc)
    if env.get("FLYBS_SEED"):
        try:
            s = s.replace(seed=int(env["FLYBS_SEED"]))
        except ValueError as exc:
            raise ScenarioError("FLYBS_SEED", "must be an integer") from exc
    return s


def scenario_to_dict(s: Scenario) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(s)))


def dump_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2, sort_keys=True)
