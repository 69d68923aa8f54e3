"""Experiment configuration for bis-region (JSON files, strict fields)."""

import json
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path
from typing import Any, Optional

from errors import BisError, ConfigError
from probability import BisSystem, ChannelMatrix, DiscreteDistribution

MODES = ('region', 'equivalence', 'simulate', 'special-cases')
AXES = ('r_i', 'r_s', 'r_j', 'r_l')


def _bsc_01_matrix() -> list[list[float]]:
    return [[0.9, 0.1], [0.1, 0.9]]


def _build(cls, data: Any, where: str):
    """Dataclass from a dict, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f'{where}: expected an object, got {type(data).__name__}')
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f'{where}: unknown field(s) {", ".join(unknown)}')
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f'{where}: {e}') from e


@dataclass
class SystemSpec:
    source: list[float] = field(default_factory=lambda: [0.5, 0.5])
    enrollment: list[list[float]] = field(default_factory=_bsc_01_matrix)
    identification: list[list[float]] = field(default_factory=_bsc_01_matrix)

    def to_system(self) -> BisSystem:
        try:
            return BisSystem(DiscreteDistribution(self.source),
                             ChannelMatrix(self.enrollment),
                             ChannelMatrix(self.identification))
        except (BisError, ValueError, TypeError) as e:
            raise ConfigError(f'system: {e}') from e


@dataclass
class SearchConfig:
    samples: int = 4096
    refine_steps: int = 64
    grid_points: int = 101
    u_sizes: Optional[list[int]] = None
    refine_top: int = 16
    chunks: int = 8
    n_jobs: int = 1
    structured: bool = True
    allow_large_alphabet: bool = False


@dataclass
class SimulationConfig:
    block_lengths: list[int] = field(default_factory=lambda: [8])
    trials: int = 1000
    delta: Optional[float] = None
    margin: float = 0.2
    rates: Optional[dict[str, float]] = None    # keys v, u, s, i
    counts: Optional[dict[str, int]] = None     # keys n_v, n_u, m_s, m_i
    u_channel: Optional[list[list[float]]] = None
    v_mix: float = 0.5
    codebook_mode: str = 'fresh'
    storage_cap: int = 2 ** 20
    chunks: int = 8
    n_jobs: int = 1


@dataclass
class EquivalenceConfig:
    pairs: int = 100
    u_size: Optional[int] = None


@dataclass
class SpecialCasesConfig:
    samples: int = 1000


@dataclass
class ExperimentConfig:
    system: SystemSpec = field(default_factory=SystemSpec)
    mode: str = 'region'
    r_s: float = 0.0
    search: SearchConfig = field(default_factory=SearchConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    equivalence: EquivalenceConfig = field(default_factory=EquivalenceConfig)
    special_cases: SpecialCasesConfig = field(default_factory=SpecialCasesConfig)
    seed: int = 0
    output: str = 'results/region.csv'
    plane: Optional[str] = None

    _SECTIONS = {
        'system': SystemSpec,
        'search': SearchConfig,
        'simulation': SimulationConfig,
        'equivalence': EquivalenceConfig,
        'special_cases': SpecialCasesConfig,
    }

    @classmethod
    def from_dict(cls, data: dict) -> 'ExperimentConfig':
        if not isinstance(data, dict):
            raise ConfigError('config root must be an object')
        data = dict(data)
        for key, section in cls._SECTIONS.items():
            if key in data:
                data[key] = _build(section, data[key], key)
        config = _build(cls, data, 'config')
        config.validate()
        return config

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f'mode must be one of {MODES}, got {self.mode!r}')
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f'seed must be a 64-bit nonnegative integer, got {self.seed!r}')
        if isinstance(self.r_s, bool) or not isinstance(self.r_s, (int, float)) or self.r_s < 0:
            raise ConfigError(f'r_s must be a number >= 0, got {self.r_s!r}')
        if self.plane is not None:
            parse_plane(self.plane)
        sim = self.simulation
        if sim.codebook_mode not in ('fresh', 'fixed'):
            raise ConfigError('simulation.codebook_mode must be fresh or fixed')
        if sim.rates is not None and set(sim.rates) != {'v', 'u', 's', 'i'}:
            raise ConfigError('simulation.rates needs exactly the keys v, u, s, i')
        if sim.counts is not None and set(sim.counts) != {'n_v', 'n_u', 'm_s', 'm_i'}:
            raise ConfigError('simulation.counts needs exactly the keys n_v, n_u, m_s, m_i')
        if not 0.0 <= sim.v_mix <= 1.0:
            raise ConfigError(f'simulation.v_mix must be in [0, 1], got {sim.v_mix}')
        system = self.system.to_system()
        if sim.u_channel is not None:
            try:
                channel = ChannelMatrix(sim.u_channel)
            except (BisError, ValueError) as e:
                raise ConfigError(f'simulation.u_channel: {e}') from e
            if channel.rows != system.y_size:
                raise ConfigError(
                    f'simulation.u_channel has {channel.rows} rows, |Y| = {system.y_size}')

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, path: Path) -> 'ExperimentConfig':
        """Load config from a JSON file."""
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigError(f'cannot read config {path}: {e}') from e
        except json.JSONDecodeError as e:
            raise ConfigError(f'config {path} is not valid JSON: {e}') from e
        return cls.from_dict(data)

    def save(self, path: Path) -> None:
        """Save config to a JSON file."""
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2)

    def apply_override(self, assignment: str) -> 'ExperimentConfig':
        """Return a copy with one dotted field replaced, e.g. 'search.samples=256'.

        The value is parsed as JSON; anything that is not JSON is a string.
        """
        if '=' not in assignment:
            raise ConfigError(f'override {assignment!r} is not key=value')
        key, raw = assignment.split('=', 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        data = self.to_dict()
        node = data
        parts = key.strip().split('.')
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(f'override {key!r}: {part!r} is not a section')
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f'override {key!r}: unknown field')
        node[parts[-1]] = value
        return ExperimentConfig.from_dict(data)


def parse_plane(plane: str) -> tuple[str, str]:
    """'r_j,r_i' -> ('r_j', 'r_i'); x axis first."""
    parts = tuple(p.strip() for p in plane.split(','))
    if len(parts) != 2 or any(p not in AXES for p in parts):
        raise ConfigError(f'plane must be two of {AXES} separated by a comma, got {plane!r}')
    if parts[0] == parts[1]:
        raise ConfigError(f'plane needs two distinct axes, got {plane!r}')
    return parts
