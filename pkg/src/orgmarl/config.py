"""Run configuration: every domain and training knob in one flat record.

Config files are plain ``key = value`` lines (``#`` starts a comment); command
line flags override file values.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .env import DomainParams

ALGOS = ("ia2c+", "iac", "ia2c-")
ALGO_ALIASES = {"ia2c_plus": "ia2c+", "ia2c_minus": "ia2c-", "ia2cplus": "ia2c+", "ia2cminus": "ia2c-"}


def canonical_algo(name: str) -> str:
    name = name.strip().lower()
    name = ALGO_ALIASES.get(name, name)
    if name not in ALGOS:
        raise ValueError(f"unknown algorithm {name!r}; choose from {', '.join(ALGOS)}")
    return name


@dataclass(frozen=True)
class RunConfig:
    # domain
    r: float = 1.0
    beta: float = 3.0
    alpha: float = 16.0 / 9.0
    c: float = 0.5
    phi: float = 0.5
    penalty: float = -10.0
    n_agents: int = 2
    private_noise: float = 0.2
    public_noise: float = 0.0
    gamma: float = 0.95
    start: str = "m"
    # learners; ``algo`` may list one kind per seat, comma separated
    algo: str = "ia2c+"
    hidden: int = 32
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    entropy_start: float = 0.01
    entropy_end: float = 0.0
    reward_scale: float = 0.1
    updates_per_batch: int = 1
    predict_mode: str = "sample"
    belief_floor: float = 1e-6
    bootstrap_at_horizon: bool = True
    # training loop
    episodes: int = 20000
    horizon: int = 20
    batch: int = 8
    seed: int = 0
    convergence_loss: float = 1e-2
    convergence_window: int = 500
    divergence_loss: float = 1e6
    checkpoint_every: int = 0
    # certification
    eval_horizon: int = 20
    # output
    out: str = ""
    name: str = "run"

    def __post_init__(self):
        self.validate()

    def domain(self) -> DomainParams:
        names = DomainParams.field_names()
        return DomainParams(**{k: v for k, v in asdict(self).items() if k in names})

    def seats(self) -> tuple[str, ...]:
        kinds = [canonical_algo(k) for k in self.algo.split(",")]
        if len(kinds) == 1:
            kinds = kinds * self.n_agents
        if len(kinds) != self.n_agents:
            raise ValueError(f"algo lists {len(kinds)} kinds for {self.n_agents} agents")
        return tuple(kinds)

    def validate(self):
        self.domain()
        self.seats()
        errors = []
        for name in ("hidden", "episodes", "horizon", "batch", "updates_per_batch", "eval_horizon",
                     "convergence_window"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1")
        for name in ("actor_lr", "critic_lr", "entropy_start", "entropy_end", "belief_floor",
                     "checkpoint_every"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        if self.reward_scale <= 0:
            errors.append("reward_scale must be > 0")
        if self.predict_mode not in ("sample", "argmax"):
            errors.append("predict_mode must be 'sample' or 'argmax'")
        if errors:
            raise ValueError("; ".join(errors))

    def replace(self, **changes) -> "RunConfig":
        return RunConfig(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in asdict(self).items())


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(key: str, value):
    """Convert a text value to the type of config field ``key``."""
    if key not in _TYPES:
        raise KeyError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    if not isinstance(value, str):
        return value
    value = value.strip()
    if kind == "bool":
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {value!r}")
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return value


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            values[key] = coerce(key, value)
        except (KeyError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return values


def load_config(path=None, **overrides) -> RunConfig:
    values = {}
    if path:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    values.update({k: coerce(k, v) for k, v in overrides.items() if v is not None})
    return RunConfig(**values)
