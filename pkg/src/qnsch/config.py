"""Flat ``key = value`` run configuration.

Keys carry a section prefix (``physics.``, ``scheme.``, ``init.``,
``output.``).  Unknown keys and malformed lines are rejected with the line
and column of the problem.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

AUTO = "auto"


def _float(s):
    return float(s)


def _float_or_auto(s):
    return AUTO if str(s).strip().lower() == AUTO else float(s)


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _choice(*options):
    def parse(s):
        s = str(s).strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return parse


# key -> (parser, default, description)
SCHEMA = {
    "physics.rho1": (_float, 1.0 / 3.0, "density of the light phase"),
    "physics.beta": (_float, 1.5, "singular exponent"),
    "physics.omega": (_float, 3.0, "concave correction strength"),
    "physics.sigma": (_float, 1e-2, "potential truncation distance"),
    "physics.sigma0": (_float, 0.1, "largest admissible truncation distance"),
    "physics.delta": (_float, 1e-3, "higher-order regularisation strength"),
    "physics.level": (_choice("sigma_delta", "delta_only", "target"), "sigma_delta", "equation level"),
    "physics.kappa": (_float_or_auto, AUTO, "confinement ball volume"),
    "physics.big_r": (_float_or_auto, AUTO, "energy bound entering the confinement level"),
    "scheme.dim": (int, 2, "space dimension"),
    "scheme.n": (int, 128, "grid points per direction"),
    "scheme.dt": (_float_or_auto, AUTO, "time step, or auto from the stability budget"),
    "scheme.steps": (int, 1000, "number of steps"),
    "scheme.scheme": (_choice("imex_euler", "imex_bdf2"), "imex_euler", "time integrator"),
    "scheme.safety": (_float, 0.5, "safety factor applied to the stability budget"),
    "scheme.retry_on_confinement": (_bool, False, "retry a violating step with two half steps"),
    "scheme.rho_bar": (_float_or_auto, AUTO, "reference density of the implicit splitting"),
    "init.kind": (_choice("spinodal", "stratified", "bubble", "manufactured"), "spinodal", "initial data"),
    "init.seed": (int, 0, "random seed"),
    "init.amplitude": (_float_or_auto, AUTO, "order-parameter amplitude"),
    "init.velocity": (_float, 0.0, "initial velocity amplitude"),
    "init.mollify": (_bool, True, "mollify the initial density at width delta^(1/4)"),
    "init.profile": (_choice("bump", "gaussian"), "bump", "mollifier profile"),
    "output.cadence": (int, 10, "steps between diagnostics rows"),
    "output.snapshot_every": (int, 10, "steps between pressure snapshots"),
    "output.checkpoint_every": (int, 0, "steps between checkpoints (0: final only)"),
}


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def with_overrides(self, overrides) -> "RunConfig":
        vals = dict(self.values)
        for i, item in enumerate(overrides or []):
            key, value = _split(item, f"override {i + 1}", 1)
            vals[key] = _parse_value(key, value, f"override {i + 1}")
        return RunConfig(vals)

    def resolved(self, **updates) -> "RunConfig":
        vals = dict(self.values)
        vals.update(updates)
        return RunConfig(vals)

    def to_json(self) -> str:
        return json.dumps(self.values, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        raw = json.loads(text)
        unknown = sorted(set(raw) - set(SCHEMA))
        if unknown:
            raise ConfigError(f"unknown configuration key {unknown[0]!r}")
        return cls({**defaults(), **raw})

    def dump(self) -> str:
        return "".join(f"{k} = {self.values[k]}\n" for k in SCHEMA)


def defaults() -> dict:
    return {k: v[1] for k, v in SCHEMA.items()}


def _split(line: str, where: str, col_base: int):
    if "=" not in line:
        raise ConfigError(f"{where}, column {col_base}: expected 'key = value', got {line.strip()!r}")
    key, value = line.split("=", 1)
    key = key.strip()
    if key not in SCHEMA:
        col = col_base + len(line) - len(line.lstrip())
        raise ConfigError(f"{where}, column {col}: unknown configuration key {key!r}")
    return key, value.strip()


def _parse_value(key, value, where):
    parser = SCHEMA[key][0]
    try:
        return parser(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: bad value {value!r} for {key}: {exc}") from None


def parse_config(text: str) -> RunConfig:
    vals = defaults()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        key, value = _split(line, f"line {lineno}", 1)
        eq = raw.index("=")
        col = eq + 2 + len(raw[eq + 1:]) - len(raw[eq + 1:].lstrip())
        vals[key] = _parse_value(key, value, f"line {lineno}, column {col}")
    return RunConfig(vals)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
