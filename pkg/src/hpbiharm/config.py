"""Run configuration: an INI file with a single ``[run]`` section.

Every key is optional; missing keys take the defaults below.  Unknown keys
and out-of-range values raise :class:`ConfigError` before any work starts.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields, replace

from .adaptivity import MarkingParams
from .benchmarks import PROBLEMS, STRATEGIES, Budget
from .dg_system import PenaltyParams
from .fem_basis import KINDS, QUAD
from .mesh import CLOSURES, ONE_IRREGULAR, SPACES, TOTAL_DEGREE

SECTION = "run"
# initial subdivisions per unit length; the square benchmark starts finer so
# that the degree cap is not reached within the default budget
DEFAULT_DIVISIONS = {"lshape_singular": 2, "square_smooth": 4, "polynomial_xy": 2}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    benchmark: str = "lshape_singular"
    strategy: str = "h"
    p_initial: int = 2
    theta: float = 0.5
    sigma_mark: float = 0.7
    gamma_h: float = 3.0
    gamma_p: float = 0.9
    c_sigma: float = 10.0
    c_tau: float = 10.0
    p_max: int = 10
    max_steps: int = 25
    max_dofs: int = 50_000
    mesh_kind: str = QUAD
    closure: str = ONE_IRREGULAR
    n_per_side: int = 0  # 0: the benchmark's own initial mesh
    space: str = TOTAL_DEGREE
    output_dir: str = "output"

    def __post_init__(self):
        validate(self)

    def marking(self) -> MarkingParams:
        return MarkingParams(self.theta, self.sigma_mark, self.gamma_h, self.gamma_p)

    def penalty(self) -> PenaltyParams:
        return PenaltyParams(self.c_sigma, self.c_tau)

    def mesh_divisions(self) -> int:
        return self.n_per_side or DEFAULT_DIVISIONS.get(self.benchmark, 2)

    def budget(self) -> Budget:
        return Budget(self.max_steps, self.max_dofs)

    def with_overrides(self, **kw) -> "RunConfig":
        unknown = set(kw) - KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            return replace(self, **{k: _coerce(k, v) for k, v in kw.items()})
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


KEYS = {f.name for f in fields(RunConfig)}
_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def _choice(name, value, allowed):
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {sorted(allowed)}, got {value!r}")


def validate(cfg: RunConfig) -> None:
    _choice("benchmark", cfg.benchmark, set(PROBLEMS))
    _choice("strategy", cfg.strategy, set(STRATEGIES))
    _choice("mesh_kind", cfg.mesh_kind, set(KINDS))
    _choice("closure", cfg.closure, set(CLOSURES))
    _choice("space", cfg.space, set(SPACES))
    if cfg.p_initial < 2:
        raise ConfigError("p_initial must be at least 2")
    if cfg.p_max < cfg.p_initial:
        raise ConfigError("p_max must be at least p_initial")
    if cfg.n_per_side < 0:
        raise ConfigError("n_per_side must be nonnegative")
    if cfg.c_sigma <= 0 or cfg.c_tau <= 0:
        raise ConfigError("penalty constants must be positive")
    if not cfg.output_dir:
        raise ConfigError("output_dir must be non-empty")
    try:
        MarkingParams(cfg.theta, cfg.sigma_mark, cfg.gamma_h, cfg.gamma_p)
        Budget(cfg.max_steps, cfg.max_dofs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _coerce(key: str, raw):
    typ = _TYPES[key]
    if isinstance(raw, typ) and not isinstance(raw, bool):
        return raw
    try:
        if typ is int:
            return int(str(raw).strip())
        if typ is float:
            return float(str(raw).strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {typ.__name__}") from None
    return str(raw).strip()


def parse(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    extra = [s for s in cp.sections() if s != SECTION]
    if extra:
        raise ConfigError(f"unknown sections: {', '.join(extra)}")
    items = dict(cp.items(SECTION)) if cp.has_section(SECTION) else {}
    return RunConfig().with_overrides(**items)


def load(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def serialize(cfg: RunConfig) -> str:
    lines = [f"[{SECTION}]"]
    lines += [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in asdict(cfg).items()]
    return "\n".join(lines) + "\n"
