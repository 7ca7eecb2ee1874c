"""Run configuration: flat ``key = value`` text with optional ``[section]`` headers.

Sections only group keys for readability; every key is global and may appear
once.  ``#`` starts a comment.  Lists are comma separated.  Example::

    kind = ou-check
    seed = 1

    [time]
    T = 100
    dt = 0.01

:func:`parse_config` collects every violation before raising, so a config
with three mistakes reports all three.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError, RangeError
from .noise import grid_steps

KINDS = ("simulate", "pullback", "absorbing", "lipschitz", "comparison", "ou-check", "dimension", "admissibility")
FIELD_KINDS = {"f": ("none", "random", "file"), "h": ("none", "sine", "random", "file"), "v0": ("random", "zero", "file")}


def _float(text: str) -> float:
    x = float(text)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


def _int(text: str) -> int:
    return int(text)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _floats(text: str) -> list[float]:
    return [_float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _triple(text: str) -> list[int]:
    v = _ints(text)
    if len(v) != 3:
        raise ValueError("expected three comma-separated integers")
    return v


def _ftriple(text: str) -> list[float]:
    v = _floats(text)
    if len(v) != 3:
        raise ValueError("expected three comma-separated numbers")
    return v


def _str(text: str) -> str:
    return text.strip()


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    doc: str


# name -> (parser, default, description); a default of None means "required where used"
SCHEMA: dict[str, Key] = {
    "kind": Key(_str, None, "experiment kind"),
    "seed": Key(_int, None, "single noise seed (shorthand for seeds)"),
    "seeds": Key(_ints, None, "noise seeds"),
    "out": Key(_str, "out", "output directory"),
    # physics and numerics
    "nu": Key(_float, 1.0, "viscosity"),
    "L": Key(_float, 2 * math.pi, "torus side"),
    "N": Key(_int, 8, "truncation radius"),
    "dealias_fraction": Key(_float, 2 / 3, "retained fraction for products"),
    "frac_exponent": Key(_float, 1.25, "dissipation exponent"),
    "scheme": Key(_str, "etd2rk", "time stepping scheme"),
    "guard": Key(_float, 1e8, "blow-up guard on ||v||"),
    "dt": Key(_float, 0.01, "time step"),
    "T": Key(_float, None, "run length / pullback horizon"),
    "horizons": Key(_floats, None, "pullback horizons"),
    "sobolev": Key(_floats, [0.0, 1.25, 2.5], "recorded Sobolev indices s"),
    "thin": Key(_int, 100, "full-state recording cadence in steps"),
    "C": Key(_float, 1.0, "generic constant in path functionals"),
    "oversample": Key(_int, 4, "grid refinement for sup |grad h|"),
    "matrix_norm": Key(_str, "spectral", "pointwise norm of grad h: spectral | frobenius"),
    # fields
    "f_kind": Key(_str, "none", "forcing: none | random | file"),
    "f_amplitude": Key(_float, 1.0, "H-norm of random forcing"),
    "f_kmax": Key(_int, 2, "highest |j| of random forcing"),
    "f_seed": Key(_int, 0, "seed of random forcing"),
    "f_file": Key(_str, None, "forcing checkpoint"),
    "h_kind": Key(_str, "none", "noise profile: none | sine | random | file"),
    "h_amplitude": Key(_float, 0.0, "sine amplitude or H-norm of random h"),
    "h_mode": Key(_triple, [1, 0, 0], "wave vector of the sine profile"),
    "h_direction": Key(_ftriple, [0.0, 1.0, 0.0], "direction of the sine profile"),
    "h_kmax": Key(_int, 2, "highest |j| of random h"),
    "h_seed": Key(_int, 0, "seed of random h"),
    "h_file": Key(_str, None, "noise profile checkpoint"),
    "v0_kind": Key(_str, "random", "initial data: random | zero | file"),
    "v0_radius": Key(_float, 1.0, "H-norm of random initial data"),
    "v0_seed": Key(_int, 0, "seed of random initial data"),
    "v0_file": Key(_str, None, "initial data checkpoint"),
    "ensemble_size": Key(_int, 2, "initial data per ball (absorbing)"),
    # experiment specifics
    "moments": Key(_floats, [1.0, 2.0, 4.0], "moment orders (ou-check)"),
    "T_trunc": Key(_float, 50.0, "truncation of the path functional (admissibility)"),
    "burn_in": Key(_float, 10.0, "deterministic burn-in (comparison, dimension)"),
    "attractor_count": Key(_int, 4, "attractor samples (comparison)"),
    "window": Key(_float, 10.0, "plateau window (comparison)"),
    "deltas": Key(_floats, [1e-3, 1e-4, 1e-5], "perturbation ladder (lipschitz)"),
    "direction_seed": Key(_int, 1, "seed of the perturbation direction (lipschitz)"),
    "samples": Key(_int, 500, "trajectory samples (dimension)"),
    "sample_every": Key(_float, 0.1, "time between samples (dimension)"),
    "scales": Key(_floats, None, "box sides, decreasing (dimension)"),
    "rank": Key(_int, 24, "projection rank (dimension)"),
    "checkpoint": Key(_bool, True, "write final-state checkpoints"),
}

REQUIRED_BY_KIND = {
    "simulate": ("T",),
    "pullback": ("horizons",),
    "absorbing": ("horizons",),
    "lipschitz": ("T",),
    "comparison": ("horizons",),
    "ou-check": ("T",),
    "dimension": ("scales",),
    "admissibility": (),
}


# time-valued keys each kind integrates through
STEPPED_TIMES = {
    "simulate": ("T",),
    "pullback": ("horizons",),
    "absorbing": ("horizons",),
    "lipschitz": ("T",),
    "comparison": ("horizons", "burn_in", "window"),
    "ou-check": ("T",),
    "dimension": ("burn_in", "sample_every"),
    "admissibility": ("T_trunc",),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``values`` holds every schema key with defaults filled."""

    kind: str
    seeds: tuple[int, ...]
    values: dict = field(repr=False)
    base_dir: Path = Path(".")

    def __getattr__(self, name):
        values = self.__dict__.get("values", {})
        if name in values:
            return values[name]
        raise AttributeError(name)

    @property
    def out_dir(self) -> Path:
        out = Path(self.values["out"])
        return out if out.is_absolute() else self.base_dir / out

    def resolve(self, name: str) -> Path:
        p = Path(self.values[name])
        return p if p.is_absolute() else self.base_dir / p

    def replayable(self) -> dict:
        """Config values that determine the results (output location excluded)."""
        return {k: v for k, v in sorted(self.values.items()) if k not in ("out",)}


def read_pairs(text: str) -> tuple[dict[str, str], list[str]]:
    """Raw key -> value strings plus syntax violations."""
    pairs: dict[str, str] = {}
    problems: list[str] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key in pairs:
            problems.append(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs, problems


def parse_config(text: str, overrides: dict[str, str] | None = None, base_dir=".") -> RunConfig:
    """Validate configuration text (plus raw ``overrides``) into a RunConfig.

    Raises ConfigError listing every violation.  A config whose only fault is
    a time off the dt grid raises RangeError instead.
    """
    pairs, problems = read_pairs(text)
    for key, value in (overrides or {}).items():
        if value is not None:
            pairs[key] = str(value)
    values: dict[str, Any] = {}
    for key, raw in pairs.items():
        spec = SCHEMA.get(key)
        if spec is None:
            problems.append(f"unknown key {key!r}")
            continue
        try:
            values[key] = spec.parse(raw)
        except ValueError as err:
            problems.append(f"{key}: cannot parse {raw!r} ({err})")
    for key, spec in SCHEMA.items():
        values.setdefault(key, spec.default)

    kind = values["kind"]
    if kind is None:
        problems.append("missing required key 'kind'")
    elif kind not in KINDS:
        problems.append(f"kind {kind!r} is not one of {', '.join(KINDS)}")
    if values["seed"] is not None and values["seeds"] is not None:
        problems.append("give either 'seed' or 'seeds', not both")
    seeds = values["seeds"] if values["seeds"] is not None else ([values["seed"]] if values["seed"] is not None else None)
    if not seeds:
        problems.append("missing required key 'seed' (or 'seeds')")
        seeds = []
    elif any(s < 0 for s in seeds):
        problems.append("seeds must be non-negative")
    values["seeds"] = list(seeds)
    values["seed"] = None
    for key in REQUIRED_BY_KIND.get(kind, ()):
        if values[key] is None:
            problems.append(f"missing required key {key!r} for kind {kind}")
    problems += _range_checks(values, kind)
    base = Path(base_dir)
    for name in ("f", "h", "v0"):
        if values[f"{name}_kind"] == "file":
            ref = values[f"{name}_file"]
            if ref is None:
                problems.append(f"{name}_kind = file needs {name}_file")
            elif not (Path(ref) if Path(ref).is_absolute() else base / ref).is_file():
                problems.append(f"{name}_file {ref!r} does not exist")
    misaligned = _alignment_checks(values, kind)
    if problems:
        raise ConfigError(problems + misaligned)
    if misaligned:
        raise RangeError("; ".join(misaligned))
    return RunConfig(kind=kind, seeds=tuple(seeds), values=values, base_dir=base)


def _range_checks(v: dict, kind: str | None) -> list[str]:
    out = []

    def positive(name):
        if v[name] is not None and not v[name] > 0:
            out.append(f"{name} must be positive")

    for name in ("nu", "L", "dt", "guard", "C", "T_trunc", "burn_in", "window", "sample_every", "frac_exponent"):
        positive(name)
    if v["T"] is not None and not v["T"] > 0:
        out.append("T must be positive")
    if v["N"] < 1:
        out.append("N must be >= 1")
    if not 0 < v["dealias_fraction"] <= 1:
        out.append("dealias_fraction must lie in (0, 1]")
    if v["scheme"] != "etd2rk":
        out.append(f"unknown scheme {v['scheme']!r}")
    if v["matrix_norm"] not in ("spectral", "frobenius"):
        out.append("matrix_norm must be spectral or frobenius")
    for name in ("thin", "oversample", "ensemble_size", "attractor_count", "rank"):
        if v[name] < 1:
            out.append(f"{name} must be >= 1")
    if v["samples"] < 2:
        out.append("samples must be >= 2")
    for name, kinds in FIELD_KINDS.items():
        if v[f"{name}_kind"] not in kinds:
            out.append(f"{name}_kind must be one of {', '.join(kinds)}")
    if v["h_amplitude"] < 0 or v["f_amplitude"] < 0 or v["v0_radius"] < 0:
        out.append("amplitudes and radii must be non-negative")
    if v["h_kind"] == "sine" and not any(v["h_mode"]):
        out.append("h_mode must be a nonzero wave vector")
    if any(abs(x) > v["N"] for x in v["h_mode"]):
        out.append("h_mode lies outside the lattice")
    if any(not s >= 0 for s in v["sobolev"]) or not v["sobolev"]:
        out.append("sobolev indices must be non-negative")
    if any(not m > 0 for m in v["moments"]) or not v["moments"]:
        out.append("moment orders must be positive")
    if any(not d >= 1e-12 for d in v["deltas"]) or not v["deltas"]:
        out.append("deltas must be >= 1e-12")
    if v["horizons"] is not None:
        if not v["horizons"] or any(t < 0 for t in v["horizons"]):
            out.append("horizons must be non-negative")
    if v["scales"] is not None:
        sc = v["scales"]
        if len(sc) < 2 or any(e <= 0 for e in sc) or any(b >= a for a, b in zip(sc, sc[1:])):
            out.append("scales must be positive and strictly decreasing (at least two)")
    return out


def _alignment_checks(v: dict, kind: str | None) -> list[str]:
    """Times the experiment steps through must be multiples of dt."""
    out = []
    if v["dt"] > 0:
        times = [(name, v[name]) for name in STEPPED_TIMES.get(kind, ()) if name != "horizons"]
        if "horizons" in STEPPED_TIMES.get(kind, ()):
            times += [("horizons", t) for t in (v["horizons"] or [])]
        for name, t in times:
            if t is None or not t > 0:
                continue
            try:
                grid_steps(t, v["dt"], name)
            except ValueError:
                out.append(f"{name} value {t!r} is not a multiple of dt={v['dt']!r}")
    return out
