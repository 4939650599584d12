"""Flat ``section.key = value`` experiment configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .weights import Weight, from_config


class ConfigError(ValueError):
    pass


# key -> (attribute, parser)
def _int(v: str) -> int:
    return int(v)


def _float(v: str) -> float:
    return float(v)


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in v.replace(";", ",").split(",") if x.strip())


def _str(v: str) -> str:
    return v.strip()


def _tau(v: str):
    v = v.strip().lower()
    if v in ("auto", "k^-1/2", "default"):
        return None
    if v in ("inf", "infinity"):
        return float("inf")
    return float(v)


KEYS = {
    "model.n": ("n", _int),
    "model.degree": ("degree", _int),
    "weight.type": ("weight_type", _str),
    "weight.coeffs": ("weight_coeffs", _floats),
    "quadrature.order": ("quad_order", _int),
    "quadrature.kind": ("quad_kind", _str),
    "quadrature.ball_order": ("ball_order", _int),
    "kernel.cond_cap": ("cond_cap", _float),
    "kernel.tol_repro": ("tol_repro", _float),
    "kernel.points": ("kernel_points", _int),
    "grid.half_width": ("half_width", _float),
    "grid.spacing": ("spacing", _float),
    "solver.max_iter": ("max_iter", _int),
    "solver.rtol": ("rtol", _float),
    "solver.tol_disc": ("tol_disc", _float),
    "solver.trials": ("trials", _int),
    "samples.count": ("sample_count", _int),
    "samples.radius": ("sample_radius", _float),
    "mvi.radii": ("mvi_radii", _floats),
    "moser.k0": ("moser_k0", _float),
    "moser.order": ("moser_order", _int),
    "diagonal.radius": ("diag_radius", _float),
    "diagonal.step": ("diag_step", _float),
    "decay.distances": ("decay_distances", _floats),
    "decay.directions": ("decay_directions", _int),
    "witness.k": ("witness_k", _floats),
    "witness.tau": ("witness_tau", _tau),
    "witness.cutoff": ("witness_cutoff", _str),
    "witness.spacing_scale": ("witness_spacing_scale", _float),
    "witness.coeffs": ("witness_coeffs", _floats),
    "harmonic.degrees": ("harmonic_degrees", _floats),
    "output.dir": ("output_dir", _str),
    "run.seed": ("seed", _int),
}


@dataclass
class ExperimentConfig:
    n: int = 1
    degree: int = 6
    weight_type: str | None = None
    weight_coeffs: tuple = ()
    quad_order: int | None = None
    quad_kind: str = "gauss_hermite"
    ball_order: int = 16
    cond_cap: float = 1e12
    tol_repro: float = 1e-8
    kernel_points: int = 20
    half_width: float = 3.2
    spacing: float = 0.05
    max_iter: int = 10_000
    rtol: float = 1e-8
    tol_disc: float = 0.1
    trials: int = 10
    sample_count: int = 10
    sample_radius: float = 1.0
    mvi_radii: tuple = (0.25, 0.5, 0.75)
    moser_k0: float = 1e-3
    moser_order: int = 40
    diag_radius: float = 1.0
    diag_step: float = 0.1
    decay_distances: tuple = tuple(np.round(np.linspace(0.5, 2.0, 16), 10))
    decay_directions: int = 3
    witness_k: tuple = (2.0, 4.0, 8.0, 16.0)
    witness_tau: float | None = None
    witness_cutoff: str = "c2poly"
    witness_spacing_scale: float = 0.08
    witness_coeffs: tuple = ()
    harmonic_degrees: tuple = (8.0, 10.0)
    output_dir: str = "out"
    seed: int = 0
    source: str | None = field(default=None, repr=False)

    def weight(self) -> Weight:
        if self.weight_type is None:
            raise ConfigError("missing weight specification (weight.type)")
        try:
            return from_config(self.weight_type, self.weight_coeffs or None, self.n)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def witness_weight(self) -> Weight:
        """The witness runs in n = 1; ``witness.coeffs`` is its diagonal (default the identity)."""
        try:
            if self.witness_coeffs:
                return from_config("quadratic_diag", self.witness_coeffs, 1)
            if self.n == 1:
                return self.weight()
            return from_config("quadratic_iso", None, 1)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def validate(self) -> "ExperimentConfig":
        if self.n < 1:
            raise ConfigError("model.n must be >= 1")
        if self.degree < 0:
            raise ConfigError("model.degree must be >= 0")
        if any(not 0 < r < 1 for r in self.mvi_radii):
            raise ConfigError("mvi.radii must lie in (0, 1)")
        if any(k <= 0 for k in self.witness_k):
            raise ConfigError("witness.k must be positive")
        if self.quad_kind != "gauss_hermite":
            raise ConfigError(f"unsupported quadrature.kind {self.quad_kind!r}")
        if self.witness_cutoff != "c2poly":
            raise ConfigError(f"unsupported witness.cutoff {self.witness_cutoff!r}")
        self.weight()
        return self


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr, parser = KEYS[key]
        try:
            values[attr] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    cfg = ExperimentConfig(**values, source=source)
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    inverse = {attr: key for key, (attr, _) in KEYS.items()}
    lines = []
    for f in fields(cfg):
        if f.name not in inverse:
            continue
        v = getattr(cfg, f.name)
        if v is None or v == ():
            continue
        if isinstance(v, tuple):
            v = ", ".join(repr(float(x)) for x in v)
        lines.append(f"{inverse[f.name]} = {v}")
    return "\n".join(lines) + "\n"
