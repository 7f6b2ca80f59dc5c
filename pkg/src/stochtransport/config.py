"""Experiment configuration: INI files with one section per module.

Sections ``[run] [grid] [field] [noise] [expectation] [parabolic]
[commutator] [tolerances]`` hold defaults. A section ``[experiment:<id>]``
overrides keys for one experiment with dotted names such as
``grid.n_x = 481``. Lists are comma separated.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .field import default_initial, drift_ids, initial_ids
from .noise import ControlFunction

EXPERIMENTS = ("existence", "meanreg", "uniqueness", "selection", "contrast", "noise-suite", "commutator-suite")
MOLLIFIERS = ("bump", "gauss")


@dataclass(frozen=True)
class GridSection:
    L: float = 3.0
    n_x: int = 256
    K: int = 512
    T: float = 0.25


@dataclass(frozen=True)
class FieldSection:
    drift: str = "sign"
    u0: str = ""  # empty: the catalog default for the drift
    mollifier: str = "bump"
    mollifier2: str = "gauss"
    eps: float = 0.1
    eps_ladder: tuple = (0.2, 0.1, 0.05)
    drift_probes: tuple = ("zero", "ou", "sign")


@dataclass(frozen=True)
class NoiseSection:
    paths: int = 100_000
    K: int = 256
    T: float = 1.0
    h_probes: tuple = ("0", "1", "switch")
    sde_K: tuple = (64, 256, 1024)
    sde_paths: int = 1000


@dataclass(frozen=True)
class ExpectationSection:
    paths: int = 100_000
    chunk: int = 2000
    snapshots: int = 4
    weak_paths: int = 100
    weak_K: tuple = (128, 512)
    weak_T: float = 0.03125


@dataclass(frozen=True)
class ParabolicSection:
    fine_n_x: int = 961
    fine_K: int = 8192


@dataclass(frozen=True)
class CommutatorSection:
    ladder: tuple = (0.2, 0.1, 0.05, 0.025)
    K_lo: float = -1.0
    K_hi: float = 1.0
    spacing: float = 0.00625


@dataclass(frozen=True)
class ToleranceSection:
    k_sigma: float = 4.0
    k_sigma_example: float = 3.0
    halving: float = 0.5
    order_min: float = 0.45
    negative_factor: float = 10.0
    budget_c: float = 0.0  # 0: calibrate on the zero-drift closed forms
    smooth_ratio: float = 0.6
    constant_commutator: float = 1e-6


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration for one experiment run."""

    experiment: str = "meanreg"
    seed: int = 20240917
    grid: GridSection = GridSection()
    field: FieldSection = FieldSection()
    noise: NoiseSection = NoiseSection()
    expectation: ExpectationSection = ExpectationSection()
    parabolic: ParabolicSection = ParabolicSection()
    commutator: CommutatorSection = CommutatorSection()
    tolerances: ToleranceSection = ToleranceSection()

    def as_dict(self) -> dict:
        return _jsonable(dataclasses.asdict(self))

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every field."""
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **changes) -> ExperimentConfig:
        """``section__key=value`` keyword overrides (for tests and the CLI)."""
        cfg = self
        for key, value in changes.items():
            if "__" in key:
                sec, name = key.split("__", 1)
                cfg = replace(cfg, **{sec: replace(getattr(cfg, sec), **{name: value})})
            else:
                cfg = replace(cfg, **{key: value})
        return cfg

    def u0_id(self) -> str:
        if self.field.u0:
            return self.field.u0
        return default_initial(self.field.drift)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


_SECTION_TYPES = {
    "grid": GridSection, "field": FieldSection, "noise": NoiseSection, "expectation": ExpectationSection,
    "parabolic": ParabolicSection, "commutator": CommutatorSection, "tolerances": ToleranceSection,
}


def _parse_value(default, text: str):
    text = text.strip()
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text.replace("_", ""))
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        proto = default[0] if default else ""
        if isinstance(proto, int):
            return tuple(int(t) for t in items)
        if isinstance(proto, float):
            return tuple(float(t) for t in items)
        return tuple(items)
    return text


def _apply(cfg: ExperimentConfig, section: str, key: str, text: str, problems: list, where: str):
    if section == "run":
        if key == "seed":
            try:
                return replace(cfg, seed=int(text))
            except ValueError:
                problems.append(f"{where}: seed must be an integer, got {text!r}")
                return cfg
        if key == "experiment":
            return replace(cfg, experiment=text.strip())
        problems.append(f"{where}: unknown key {key!r} in [run]")
        return cfg
    if section not in _SECTION_TYPES:
        problems.append(f"{where}: unknown section [{section}]")
        return cfg
    sec = getattr(cfg, section)
    names = {f.name for f in fields(sec)}
    if key not in names:
        problems.append(f"{where}: unknown key {key!r} in [{section}]")
        return cfg
    try:
        value = _parse_value(getattr(sec, key), text)
    except ValueError:
        problems.append(f"{where}: cannot parse {section}.{key} = {text!r}")
        return cfg
    return replace(cfg, **{section: replace(sec, **{key: value})})


def parse_config(text: str, experiment: str | None = None, source: str = "<config>") -> ExperimentConfig:
    """Parse INI text and resolve it for ``experiment``; raises :class:`ConfigError`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    problems: list[str] = []
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"{source}: {exc}"]) from None
    cfg = ExperimentConfig()
    overrides = {}
    for section in parser.sections():
        if section.startswith("experiment:"):
            overrides[section.split(":", 1)[1].strip()] = parser[section]
            continue
        for key, val in parser[section].items():
            cfg = _apply(cfg, section, key, val, problems, f"{source} [{section}]")
    exp = experiment or cfg.experiment
    for name in overrides:
        if name not in EXPERIMENTS:
            problems.append(f"{source}: override section for unknown experiment {name!r}")
    if exp in overrides:
        for dotted, val in overrides[exp].items():
            sec, _, key = dotted.partition(".")
            if not key:
                problems.append(f"{source} [experiment:{exp}]: key {dotted!r} must be section.key")
                continue
            cfg = _apply(cfg, sec, key, val, problems, f"{source} [experiment:{exp}]")
    cfg = replace(cfg, experiment=exp)
    if problems:
        raise ConfigError(problems)
    return cfg


def apply_overrides(cfg: ExperimentConfig, pairs, source: str = "override") -> ExperimentConfig:
    """Apply ``("section.key", "text")`` pairs parsed as in a config file; raises :class:`ConfigError`."""
    problems: list[str] = []
    for dotted, text in pairs:
        sec, _, key = dotted.partition(".")
        if not key:
            problems.append(f"{source}: {dotted!r} must be section.key")
            continue
        cfg = _apply(cfg, sec, key, str(text), problems, source)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path: str | Path | None, experiment: str | None = None) -> ExperimentConfig:
    """Read a config file (the packaged default when ``path`` is None)."""
    if path is None:
        text = resources.files("stochtransport").joinpath("configs/default.ini").read_text()
        return parse_config(text, experiment, "default.ini")
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError([f"{p}: {exc.strerror}"]) from None
    return parse_config(text, experiment, str(p))


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """Every violated invariant, as human-readable strings (empty when valid)."""
    problems = []
    g, f, tol = cfg.grid, cfg.field, cfg.tolerances
    if cfg.experiment not in EXPERIMENTS:
        problems.append(f"run.experiment: {cfg.experiment!r} is not one of {', '.join(EXPERIMENTS)}")
    if not (g.L > 0 and g.T > 0 and g.n_x >= 3 and g.K >= 1):
        problems.append("grid: need L > 0, T > 0, n_x >= 3, K >= 1")
        return problems
    dx = 2 * g.L / (g.n_x - 1)
    dt = g.T / g.K
    known = set(drift_ids())
    for d in (f.drift,) + tuple(f.drift_probes):
        if d.partition(":")[0] not in known:
            problems.append(f"field: unknown drift id {d!r}")
    if f.u0 and f.u0 not in initial_ids():
        problems.append(f"field.u0: unknown initial datum {f.u0!r}")
    for kind in (f.mollifier, f.mollifier2):
        if kind not in MOLLIFIERS:
            problems.append(f"field: unknown mollifier {kind!r}")
    eps_used = _eps_in_use(cfg)
    for e in eps_used:
        if not e > 0:
            problems.append(f"field: eps must be positive, got {e}")
        elif e < 4 * dx - 1e-12:
            problems.append(f"field: eps={e:g} is below 4 dx = {4 * dx:.4g}")
        elif e > g.L / 4:
            problems.append(f"field: eps={e:g} exceeds L/4")
    lad = f.eps_ladder
    if not lad or any(b >= a for a, b in zip(lad, lad[1:])):
        problems.append("field.eps_ladder must be nonempty and strictly decreasing")
    if not f.drift_probes:
        problems.append("field.drift_probes is empty")
    if not cfg.noise.h_probes:
        problems.append("noise.h_probes is empty")
    for spec in cfg.noise.h_probes:
        try:
            ControlFunction.parse(spec, 4, 1.0)
        except (ValueError, IndexError):
            problems.append(f"noise.h_probes: cannot parse {spec!r}")
    # explicit solver limits, with |b| <= 1 for every catalog drift and |h| from the probes
    hmax = _h_sup(cfg.noise.h_probes)
    amax = 1.0 + hmax
    if cfg.experiment in ("meanreg", "uniqueness", "selection", "contrast", "existence"):
        if dt > 0.9 * dx * dx or dt * (amax / dx + 1 / dx ** 2) > 1 or dt > 0.9 * dx / amax:
            problems.append(f"grid: dt={dt:.3g} violates the explicit stability limits for dx={dx:.3g}")
    if cfg.expectation.paths < 100:
        problems.append("expectation.paths must be >= 100")
    if cfg.noise.paths < 100:
        problems.append("noise.paths must be >= 100")
    if cfg.expectation.weak_paths < 1 or len(cfg.expectation.weak_K) != 2:
        problems.append("expectation: weak_paths >= 1 and exactly two weak_K levels are required")
    elif cfg.expectation.weak_K[1] % cfg.expectation.weak_K[0]:
        problems.append("expectation.weak_K: the finer level must be a multiple of the coarser")
    if sorted(cfg.noise.sde_K) != list(cfg.noise.sde_K) or len(cfg.noise.sde_K) < 2:
        problems.append("noise.sde_K must be increasing with at least two levels")
    elif any(b % a for a, b in zip(cfg.noise.sde_K, cfg.noise.sde_K[1:])):
        problems.append("noise.sde_K levels must divide each other")
    c = cfg.commutator
    if not c.ladder or any(b >= a for a, b in zip(c.ladder, c.ladder[1:])):
        problems.append("commutator.ladder must be nonempty and strictly decreasing")
    elif min(c.ladder) < 4 * c.spacing - 1e-12:
        problems.append(f"commutator: eps={min(c.ladder):g} is below 4 x spacing {c.spacing:g}")
    if not c.K_lo < c.K_hi:
        problems.append("commutator: need K_lo < K_hi")
    p = cfg.parabolic
    fdx = 2 * g.L / (p.fine_n_x - 1) if p.fine_n_x > 1 else math.inf
    fdt = g.T / p.fine_K if p.fine_K > 0 else math.inf
    if cfg.experiment == "uniqueness":
        if fdt * (amax / fdx + 1 / fdx ** 2) > 1 or fdt > 0.9 * fdx * fdx:
            problems.append("parabolic: fine grid violates the explicit stability limits")
        if min(c.ladder) < 4 * fdx - 1e-12:
            problems.append(f"parabolic: fine grid dx={fdx:.4g} does not resolve eps={min(c.ladder):g}")
    for key in ("k_sigma", "halving", "negative_factor"):
        if not getattr(tol, key) > 0:
            problems.append(f"tolerances.{key} must be positive")
    if tol.budget_c < 0:
        problems.append("tolerances.budget_c must be >= 0")
    return problems


def _eps_in_use(cfg: ExperimentConfig) -> tuple:
    exp = cfg.experiment
    if exp in ("meanreg", "uniqueness"):
        return (cfg.field.eps,)
    if exp in ("selection", "contrast", "existence"):
        return tuple(cfg.field.eps_ladder)
    return ()


def _h_sup(specs) -> float:
    out = 0.0
    for s in specs:
        try:
            out = max(out, ControlFunction.parse(s, 8, 1.0).sup())
        except (ValueError, IndexError):
            pass
    return out


def resolve(path, experiment: str | None = None, **overrides) -> ExperimentConfig:
    """Load, apply overrides and validate; raises :class:`ConfigError`."""
    cfg = load_config(path, experiment)
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg
