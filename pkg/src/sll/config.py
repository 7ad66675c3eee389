"""Experiment configuration: plain ``key = value`` text files.

Recognized keys (dotted keys configure the noise covariances):

    experiment, alpha, eps_ladder, n_interior, dt_full_factor, dt_limit,
    t_end, replicas, seed, noise.c, noise.gamma, noise.modes,
    noise.boundary_left, noise.boundary_right, r, out_dir

eps_ladder is a comma-separated strictly decreasing list inside
(0, 1/2).  Lines starting with ``#`` and blank lines are ignored.
Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .noise import CovarianceSpec

EXPERIMENTS = ("converge", "energy-audit", "ou-check", "split-check",
               "bound-check", "simulate")

_DEFAULT_REPLICAS = {
    "converge": 100,
    "energy-audit": 500,
    "ou-check": 2000,
    "split-check": 1,
    "bound-check": 500,
    "simulate": 1,
}


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    experiment: str = "simulate"
    alpha: float = 0.5
    eps_ladder: list = field(default_factory=lambda: [2.0 ** -k for k in range(2, 7)])
    n_interior: int = 64
    dt_full_factor: float = 40.0
    dt_limit: float = 1e-3
    t_end: float = 1.0
    replicas: int | None = None
    seed: int = 12345
    noise_c: float = 1.0
    noise_gamma: float = 2.0
    noise_modes: int = 50
    noise_boundary_left: float = 0.5
    noise_boundary_right: float = 0.5
    r: float = 0.1
    out_dir: str = "out"

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}"
            )
        if not self.eps_ladder:
            raise ConfigError("eps_ladder must not be empty")
        for e in self.eps_ladder:
            if not 0.0 < e < 0.5:
                raise ConfigError(f"eps_ladder entry {e} outside (0, 1/2)")
        if any(a <= b for a, b in zip(self.eps_ladder, self.eps_ladder[1:])):
            raise ConfigError("eps_ladder must be strictly decreasing")
        if not ((0.5 <= self.alpha < 1.0) or self.alpha > 1.0):
            raise ConfigError(
                f"alpha must lie in [1/2, 1) or (1, inf), got {self.alpha}"
            )
        if self.n_interior < 3:
            raise ConfigError("n_interior must be >= 3")
        if self.dt_full_factor < 10.0:
            raise ConfigError("dt_full_factor must be >= 10 (dt <= eps/10 policy)")
        if self.dt_limit <= 0 or self.t_end <= 0:
            raise ConfigError("dt_limit and t_end must be positive")
        if self.replicas is not None and self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.noise_c < 0 or self.noise_modes < 1:
            raise ConfigError("noise.c must be >= 0 and noise.modes >= 1")
        if self.noise_gamma <= 1.0:
            raise ConfigError("noise.gamma must exceed 1 (trace-class requirement)")
        if self.noise_boundary_left < 0 or self.noise_boundary_right < 0:
            raise ConfigError("boundary eigenvalues must be >= 0")
        if not 0.0 < self.r < 0.5:
            raise ConfigError(f"r must lie in (0, 1/2), got {self.r}")
        return self

    @property
    def n_replicas(self) -> int:
        if self.replicas is not None:
            return self.replicas
        return _DEFAULT_REPLICAS[self.experiment]

    def interior_spec(self) -> CovarianceSpec:
        return CovarianceSpec.interior(self.noise_c, self.noise_gamma, self.noise_modes)

    def boundary_spec(self) -> CovarianceSpec:
        return CovarianceSpec.boundary(self.noise_boundary_left, self.noise_boundary_right)

    def with_overrides(self, seed: int | None = None, out_dir: str | None = None,
                       experiment: str | None = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if out_dir is not None:
            cfg = replace(cfg, out_dir=out_dir)
        if experiment is not None:
            if cfg.experiment != "simulate" and cfg.experiment != experiment:
                raise ConfigError(
                    f"config file requests experiment {cfg.experiment!r} but the "
                    f"CLI subcommand is {experiment!r}"
                )
            cfg = replace(cfg, experiment=experiment)
        return cfg


_KEY_MAP = {
    "experiment": ("experiment", str),
    "alpha": ("alpha", float),
    "n_interior": ("n_interior", int),
    "dt_full_factor": ("dt_full_factor", float),
    "dt_limit": ("dt_limit", float),
    "t_end": ("t_end", float),
    "replicas": ("replicas", int),
    "seed": ("seed", int),
    "noise.c": ("noise_c", float),
    "noise.gamma": ("noise_gamma", float),
    "noise.modes": ("noise_modes", int),
    "noise.boundary_left": ("noise_boundary_left", float),
    "noise.boundary_right": ("noise_boundary_right", float),
    "r": ("r", float),
    "out_dir": ("out_dir", str),
}


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        if key == "eps_ladder":
            try:
                ladder = [float(tok) for tok in value.split(",") if tok.strip()]
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad eps_ladder: {exc}") from exc
            cfg.eps_ladder = ladder
            continue
        if key not in _KEY_MAP:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr, conv = _KEY_MAP[key]
        try:
            setattr(cfg, attr, conv(value))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return cfg.validate()


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
