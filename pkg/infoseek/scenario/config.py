"""
Scenario configuration: JSON documents validated against
docs/config-schema.json and merged onto the scenario's preset.
"""
import copy
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from jsonschema import ValidationError, validate

from infoseek.core import AgentKind, ConfigError
from infoseek.models import MeasModel, ca_motion, target_motion
from infoseek.particles import Box

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parents[2]
SCHEMA_PATH = PROJECT_ROOT / "docs" / "config-schema.json"
PRESETS_DIR = PROJECT_ROOT / "presets"

SCENARIOS = ("noncoop", "coop", "coslat")
MODES = ("CC", "NC", "CN")
SCHEMES = ("flooding", "consensus")


@dataclass(frozen=True)
class AgentSpec:
    id: int
    kind: AgentKind
    position: Tuple[float, float]
    velocity: Optional[Tuple[float, float]] = None
    u_max: float = 1.0
    d0: Optional[float] = None
    controlled: bool = True

    def initial_state(self):
        if self.kind is AgentKind.TARGET:
            return np.array(self.position + self.velocity, dtype=float)
        return np.array(self.position, dtype=float)


@dataclass(frozen=True)
class EstimationSettings:
    J: int
    P: int
    consensus_iters: int
    censor_threshold: float
    kernel_resampling: bool
    bandwidth_exponent: float


@dataclass(frozen=True)
class ControlSettings:
    J: int
    J_prime: int
    consensus_iters: int


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    name: str
    mode: str
    scheme: str
    measure_peers: bool
    agents: Tuple[AgentSpec, ...]
    sigma0_2: float
    kappa: float
    d0: float
    ca_sigma_q2: float
    target_sigma_q2: float
    prior_box: Box
    target_velocity_mean: Tuple[float, float]
    target_velocity_cov: Tuple[Tuple[float, float], Tuple[float, float]]
    estimation: EstimationSettings
    control: ControlSettings
    n_steps: int
    n_runs: int
    seed: int
    workers: int = 1

    def _ids(self, kind):
        return tuple(sorted(a.id for a in self.agents if a.kind is kind))

    @property
    def anchors(self):
        return self._ids(AgentKind.ANCHOR)

    @property
    def mobiles(self):
        return self._ids(AgentKind.MOBILE)

    @property
    def targets(self):
        return self._ids(AgentKind.TARGET)

    @property
    def cas(self):
        return tuple(sorted(self.anchors + self.mobiles))

    def agent(self, agent_id) -> AgentSpec:
        for spec in self.agents:
            if spec.id == agent_id:
                return spec
        raise KeyError(agent_id)

    def meas_model(self, ca) -> MeasModel:
        d0 = self.agent(ca).d0
        return MeasModel(self.sigma0_2, self.d0 if d0 is None else d0, self.kappa)

    def ca_motion_model(self):
        return ca_motion(self.ca_sigma_q2)

    def target_motion_model(self):
        return target_motion(self.target_sigma_q2)


def load_schema(path=SCHEMA_PATH):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _validate(doc, schema):
    try:
        validate(instance=doc, schema=schema)
    except ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(exc.message, where) from exc


def deep_merge(base, override):
    """Recursively merge dictionaries; lists and scalars in ``override`` win."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def set_path(doc, dotted, value):
    """Set ``doc["a"]["b"] = value`` for ``dotted == "a.b"``."""
    *parents, leaf = dotted.split(".")
    node = doc
    for key in parents:
        node = node.setdefault(key, {})
    node[leaf] = value


def load_preset(name):
    if name not in SCENARIOS:
        raise ConfigError(
            f"unknown scenario {name!r}; expected one of {list(SCENARIOS)}", "scenario"
        )
    with open(PRESETS_DIR / f"{name}.json", encoding="utf-8") as f:
        return json.load(f)


def resolve(doc, paper_scale=False, overrides=None, schema=None):
    """Merge ``doc`` onto its preset, apply overrides, validate and build."""
    schema = schema or load_schema()
    _validate(doc, schema)
    merged = deep_merge(load_preset(doc["scenario"]), doc)
    if paper_scale:
        merged = deep_merge(merged, merged.get("paper_scale", {}))
    for dotted, value in (overrides or {}).items():
        if value is not None:
            set_path(merged, dotted, value)
    _validate(merged, schema)
    return config_from_dict(merged)


def load_config(path, paper_scale=False, overrides=None) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        where = f"line {exc.lineno} column {exc.colno}"
        raise ConfigError(f"{where}: {exc.msg}", str(path)) from exc
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", str(path))
    cfg = resolve(doc, paper_scale, overrides)
    logger.info("loaded %s scenario from %s", cfg.scenario, path)
    return cfg


def _floats(values):
    return tuple(float(v) for v in values)


def _agent_from_dict(entry):
    velocity = entry.get("velocity")
    return AgentSpec(
        id=int(entry["id"]),
        kind=AgentKind(entry["kind"]),
        position=_floats(entry["position"]),
        velocity=None if velocity is None else _floats(velocity),
        u_max=float(entry.get("u_max", 1.0)),
        d0=None if entry.get("d0") is None else float(entry["d0"]),
        controlled=bool(entry.get("controlled", True)),
    )


def _check_agents(agents):
    ids = [a.id for a in agents]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ConfigError(f"duplicate agent ids {dupes}", "agents")
    anchors = [a for a in agents if a.kind is AgentKind.ANCHOR]
    if len(anchors) != 1:
        raise ConfigError(
            f"exactly one anchor required, found {len(anchors)}", "agents"
        )
    if not any(a.kind is AgentKind.MOBILE for a in agents):
        raise ConfigError("at least one mobile CA required", "agents")
    for a in agents:
        if a.kind is AgentKind.TARGET and a.velocity is None:
            raise ConfigError(f"target {a.id} needs a velocity", "agents")


def config_from_dict(doc) -> ScenarioConfig:
    """Build a config from a complete (merged) document."""
    try:
        agents = tuple(_agent_from_dict(a) for a in doc["agents"])
        _check_agents(agents)
        meas = doc["measurement"]
        prior = doc["prior"]
        (lo1, hi1), (lo2, hi2) = prior["box"]
        try:
            box = Box((lo1, lo2), (hi1, hi2))
        except ValueError as exc:
            raise ConfigError(str(exc), "prior/box") from exc
        est = doc["estimation"]
        ctl = doc["control"]
        return ScenarioConfig(
            scenario=doc["scenario"],
            name=doc.get("name", doc["scenario"]),
            mode=doc["mode"],
            scheme=doc["scheme"],
            measure_peers=bool(doc["measure_peers"]),
            agents=agents,
            sigma0_2=float(meas["sigma0_2"]),
            kappa=float(meas["kappa"]),
            d0=float(meas["d0"]),
            ca_sigma_q2=float(doc["motion"]["ca_sigma_q2"]),
            target_sigma_q2=float(doc["motion"]["target_sigma_q2"]),
            prior_box=box,
            target_velocity_mean=_floats(prior["target_velocity_mean"]),
            target_velocity_cov=tuple(
                _floats(row) for row in prior["target_velocity_cov"]
            ),
            estimation=EstimationSettings(
                J=int(est["J"]),
                P=int(est["P"]),
                consensus_iters=int(est["consensus_iters"]),
                censor_threshold=float(est["censor_threshold"]),
                kernel_resampling=bool(est["kernel_resampling"]),
                bandwidth_exponent=float(est["bandwidth_exponent"]),
            ),
            control=ControlSettings(
                J=int(ctl["J"]),
                J_prime=int(ctl["J_prime"]),
                consensus_iters=int(ctl["consensus_iters"]),
            ),
            n_steps=int(doc["n_steps"]),
            n_runs=int(doc["n_runs"]),
            seed=int(doc["seed"]),
            workers=int(doc.get("workers", 1)),
        )
    except KeyError as exc:
        raise ConfigError("missing required setting", str(exc.args[0])) from exc
