"""Run configuration: flat sections of key = value pairs."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import ConfigError
from ..shockfit import ShockControls
from .pipeline import CaseSpec

KNOWN = {
    "system": {"name", "i", "seed", "gamma", "n", "strength"},
    "data": {"kind", "epsilon", "eps"},
    "grid": {"resolution", "fv_resolution", "t0_fraction", "coupling_step", "window"},
    "tolerances": {"newton_tol", "rh_tol", "conv_tol", "edge_tol", "delta_start", "delta_ext"},
    "shock": {"level_ratio", "z_first", "z_ratio", "dz_max", "dt_max", "max_iters", "duration"},
    "output": {"directory"},
}


@dataclass
class RunConfig:
    system: str
    params: dict
    i: Optional[int]
    epsilons: list
    data: str = "default"
    resolution: int = 256
    fv_resolution: int = 4096
    t0_fraction: Optional[float] = None
    coupling_step: float = 0.5
    window: float = 3.0
    newton_tol: float = 1e-11
    rh_tol: float = 1e-12
    conv_tol: Optional[float] = None
    edge_tol: float = 1e-9
    delta_start: float = 1e-3
    delta_ext: float = 1.0
    shock: dict = field(default_factory=dict)
    output: str = "shockforge-out"
    seed: int = 0
    source: Optional[str] = None

    def case(self, epsilon: float) -> CaseSpec:
        controls = ShockControls(delta_start=self.delta_start, rh_tol=self.rh_tol,
                                 conv_tol=self.conv_tol, **self.shock)
        return CaseSpec(system=self.system, params=dict(self.params), i=self.i, epsilon=epsilon,
                        data=self.data, resolution=self.resolution, t0_fraction=self.t0_fraction,
                        coupling_step=self.coupling_step, window=self.window,
                        newton_tol=self.newton_tol, edge_tol=self.edge_tol,
                        delta_ext=self.delta_ext, shock=controls, seed=self.seed)


def _locate(text: str, section: str, key: str):
    """(line, column) of `key` inside `section`, both 1-based."""
    current = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            continue
        if current == section and "=" in stripped:
            name = stripped.split("=", 1)[0].strip()
            if name == key:
                return number, line.index(name) + 1
    return None, None


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("missing section header", line=exc.lineno, column=1, source=source)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line=line, column=1, source=source)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}", line=exc.lineno, column=1, source=source)
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section {exc.section!r}", line=exc.lineno, column=1,
                          source=source)

    def fail(message, section, key):
        line, column = _locate(text, section, key)
        raise ConfigError(message, field=f"{section}.{key}", line=line, column=column, source=source)

    for section in parser.sections():
        if section not in KNOWN:
            raise ConfigError(f"unknown section {section!r}", field=section, source=source)
        for key in parser[section]:
            if key not in KNOWN[section]:
                fail(f"unknown key {key!r}", section, key)

    def get(section, key, kind, default=None, required=False):
        if not parser.has_option(section, key):
            if required:
                raise ConfigError(f"missing required field {section}.{key}",
                                  field=f"{section}.{key}", source=source)
            return default
        raw = parser.get(section, key)
        try:
            return kind(raw)
        except ValueError:
            fail(f"cannot read {raw!r} as {kind.__name__}", section, key)

    def floats(raw: str) -> list:
        return [float(part) for part in raw.split(",") if part.strip()]

    name = get("system", "name", str, required=True)
    params = {}
    for key, kind in (("gamma", float), ("n", int), ("strength", float)):
        value = get("system", key, kind)
        if value is not None:
            params[key] = value
    eps_key = "epsilon" if parser.has_option("data", "epsilon") else "eps"
    epsilons = get("data", eps_key, floats)
    if epsilons is None:
        raise ConfigError("missing required field data.epsilon", field="data.epsilon", source=source)
    if not epsilons:
        fail("epsilon list is empty", "data", eps_key)
    if any(not (e > 0) for e in epsilons):
        fail("epsilon values must be positive", "data", eps_key)

    cfg = RunConfig(system=name, params=params, i=None, epsilons=epsilons,
                    seed=get("system", "seed", int, 0), source=source)
    # the field index is 1-based in files, 0-based everywhere else
    try:
        n = cfg.case(epsilons[0]).model().n
    except KeyError:
        fail(f"unknown system {name!r}", "system", "name")
    except TypeError as exc:
        fail(f"bad system parameters: {exc}", "system", "name")
    index = get("system", "i", int)
    if index is not None:
        if not 1 <= index <= n:
            fail(f"field index must lie in 1..{n}", "system", "i")
        cfg.i = index - 1
    cfg.data = get("data", "kind", str, cfg.data)
    cfg.resolution = get("grid", "resolution", int, cfg.resolution)
    cfg.fv_resolution = get("grid", "fv_resolution", int, cfg.fv_resolution)
    cfg.t0_fraction = get("grid", "t0_fraction", float, cfg.t0_fraction)
    cfg.coupling_step = get("grid", "coupling_step", float, cfg.coupling_step)
    cfg.window = get("grid", "window", float, cfg.window)
    for key in KNOWN["tolerances"]:
        value = get("tolerances", key, float)
        if value is not None:
            if not value > 0:
                fail("tolerances must be positive", "tolerances", key)
            setattr(cfg, key, value)
    for key in KNOWN["shock"]:
        kind = int if key == "max_iters" else float
        value = get("shock", key, kind)
        if value is not None:
            if not value > 0:
                fail("shock controls must be positive", "shock", key)
            cfg.shock[key] = value
    cfg.output = get("output", "directory", str, cfg.output)

    for key in ("resolution", "fv_resolution"):
        r = getattr(cfg, key)
        if not (256 <= r <= 65536 and r & (r - 1) == 0):
            fail("resolution must be a power of two between 2^8 and 2^16", "grid", key)
    if cfg.data not in ("default", "sine", "collision"):
        fail(f"unknown data kind {cfg.data!r}", "data", "kind")
    if not math.isfinite(cfg.window) or cfg.window <= 0:
        fail("window must be positive", "grid", "window")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path))
    return parse_config(text, source=str(path))
