"""Experiment dispatch for validated RunConfigs.

Every output file is written once, atomically, inside ``cfg.out_dir``.  JSON
reports carry the replayable config, the SimParams summary and the seed list;
they contain no timestamps or paths, so identical configs give identical bytes.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .checkpoint import atomic_write, load_checkpoint, save_checkpoint
from .config import RunConfig
from .errors import BlowUpError, CheckpointError, ConfigError, FracNSError
from .integrator import SimParams, integrate, pullback_ensemble
from .lab import (
    _jsonable,
    absorbing_experiment,
    attractor_sample_deterministic,
    box_counting_dimension,
    comparison_norms,
    comparison_plateau,
    lipschitz_ratio,
    linearized_ratio,
    params_dict,
    verify_noise_admissibility,
    zeta_path_functional,
)
from .noise import ergodic_moment_average, ou_moment_target, sample_two_sided_wiener
from .spectral import Lattice, SpectralField, _norm_sq, random_field, sine_mode, sobolev_norm


# --------------------------------------------------------------------------
# building blocks

def build_lattice(cfg: RunConfig) -> Lattice:
    return Lattice(L=cfg.L, N=cfg.N, dealias_fraction=cfg.dealias_fraction)


def build_field(cfg: RunConfig, name: str, lattice: Lattice) -> SpectralField:
    """The forcing ``f``, noise profile ``h`` or initial datum ``v0`` described by the config."""
    kind = cfg.values[f"{name}_kind"]
    if kind in ("none", "zero"):
        return SpectralField.zeros(lattice)
    if kind == "file":
        u = load_checkpoint(cfg.resolve(f"{name}_file"), lattice.dealias_fraction)
        if u.lattice != lattice:
            raise ConfigError(f"{name}_file holds a field on a different lattice (L={u.lattice.L}, N={u.lattice.N})")
        return u
    if kind == "sine":
        return sine_mode(lattice, cfg.h_mode, cfg.h_direction, cfg.h_amplitude)
    if name == "v0":
        return random_field(lattice, np.random.default_rng(cfg.v0_seed), norm=cfg.v0_radius)
    rng = np.random.default_rng(cfg.values[f"{name}_seed"])
    return random_field(lattice, rng, norm=cfg.values[f"{name}_amplitude"], kmax=cfg.values[f"{name}_kmax"])


def build_params(cfg: RunConfig) -> SimParams:
    lat = build_lattice(cfg)
    return SimParams(cfg.nu, lat, cfg.dt, build_field(cfg, "f", lat), build_field(cfg, "h", lat),
                     cfg.frac_exponent, cfg.scheme, True, cfg.guard)


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


class Output:
    """Writes files under one directory, refusing names that escape it."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: list[str] = []

    def _target(self, name: str) -> Path:
        target = (self.root / name).resolve()
        if self.root.resolve() not in target.parents:
            raise CheckpointError(f"refusing to write outside {self.root}: {name}")
        return target

    def text(self, name: str, text: str) -> None:
        atomic_write(self._target(name), text)
        self.written.append(name)

    def json(self, name: str, obj) -> None:
        self.text(name, dumps(obj))

    def checkpoint(self, name: str, u: SpectralField) -> None:
        save_checkpoint(u, self._target(name))
        self.written.append(name)


def _header(cfg: RunConfig, p: SimParams) -> dict:
    return {"kind": cfg.kind, "seeds": list(cfg.seeds), "config": cfg.replayable(), "params": params_dict(p)}


def _series_text(record) -> str:
    buf = io.StringIO()
    record.write_series(buf)
    return buf.getvalue()


# --------------------------------------------------------------------------
# experiments

def run_simulate(cfg: RunConfig, p: SimParams, out: Output) -> None:
    v0 = build_field(cfg, "v0", p.lattice)
    for seed in cfg.seeds:
        path = sample_two_sided_wiener(seed, 0.0, cfg.T, cfg.dt)
        meta = dict(_header(cfg, p), seed=seed, columns=["t"] + [f"norm_s{s:g}" for s in sorted(cfg.sobolev)] + ["z"])
        out.json(f"series_seed{seed}.json", meta)
        try:
            rec = integrate(p, v0, path.ou.z_values, 0.0, cfg.sobolev, cfg.thin)
        except BlowUpError as err:
            if err.partial is not None:
                out.text(f"series_seed{seed}.txt", _series_text(err.partial))
            raise
        out.text(f"series_seed{seed}.txt", _series_text(rec))
        if cfg.checkpoint:
            out.checkpoint(f"final_seed{seed}.tsns", rec.final_state())


def run_pullback(cfg: RunConfig, p: SimParams, out: Output) -> None:
    v0 = build_field(cfg, "v0", p.lattice)
    horizons = sorted(cfg.horizons)
    norms = {}
    for seed in cfg.seeds:
        path = sample_two_sided_wiener(seed, -horizons[-1], 0.0, cfg.dt)
        finals = pullback_ensemble(p, path, horizons, [v0])[:, 0]
        norms[seed] = {s: np.sqrt(_norm_sq(finals, p.lattice, s)).tolist() for s in cfg.sobolev}
        if cfg.checkpoint:
            out.checkpoint(f"pullback_seed{seed}.tsns", SpectralField(p.lattice, finals[-1]))
    out.json("pullback.json", dict(_header(cfg, p), horizons=horizons, norms=norms))


def run_absorbing(cfg: RunConfig, p: SimParams, out: Output) -> None:
    rep = absorbing_experiment(p, cfg.seeds, cfg.horizons, cfg.v0_radius, cfg.ensemble_size,
                               cfg.sobolev, ensemble_seed=cfg.v0_seed)
    out.json("absorbing.json", dict(_header(cfg, p), report=rep.to_dict()))


def run_lipschitz(cfg: RunConfig, p: SimParams, out: Output) -> None:
    v0 = build_field(cfg, "v0", p.lattice)
    d = random_field(p.lattice, np.random.default_rng(cfg.direction_seed), norm=1.0)
    reports = {}
    for seed in cfg.seeds:
        path = sample_two_sided_wiener(seed, -cfg.T, 0.0, cfg.dt)
        rep = lipschitz_ratio(p, path, cfg.T, v0, [(delta, d) for delta in cfg.deltas], cfg.sobolev)
        reports[seed] = dict(rep.to_dict(), linearized=linearized_ratio(p, path, cfg.T, v0, d, cfg.sobolev))
    out.json("lipschitz.json", dict(_header(cfg, p), reports=reports))


def run_comparison(cfg: RunConfig, p: SimParams, out: Output) -> None:
    v0 = build_field(cfg, "v0", p.lattice)
    cloud = attractor_sample_deterministic(p, cfg.burn_in, cfg.attractor_count, seed=cfg.v0_seed + 1,
                                           radius=max(cfg.v0_radius, 1.0))
    horizons = sorted(cfg.horizons)
    results = {}
    for seed in cfg.seeds:
        path = sample_two_sided_wiener(seed, -horizons[-1], 0.0, cfg.dt)
        rows = []
        for t in horizons:
            series = comparison_norms(p, path, t, v0, cloud[0], cfg.sobolev, cloud=cloud)
            in_window = series.times >= -cfg.window - 1e-9 * cfg.window
            rows.append({
                "horizon": t,
                "plateau": comparison_plateau(series, cfg.window, 2.5) if 2.5 in series.norms else None,
                "direct_radius": float(np.max(series.extra["dist_sq"][in_window])),
            })
            buf = io.StringIO()
            keys = sorted(series.norms)
            buf.write("t " + " ".join(f"w_norm_s{s:g}" for s in keys) + " dist_sq\n")
            for n, tt in enumerate(series.times):
                cols = " ".join(f"{series.norms[s][n]:.17g}" for s in keys)
                buf.write(f"{tt:.17g} {cols} {series.extra['dist_sq'][n]:.17g}\n")
            out.text(f"comparison_seed{seed}_T{t:g}.txt", buf.getvalue())
        results[seed] = rows
    samples = {"h52_norms": [sobolev_norm(u, 2.5) for u in cloud]}
    out.json("comparison.json", dict(_header(cfg, p), attractor_samples=samples, results=results))


def run_ou_check(cfg: RunConfig, p: SimParams, out: Output) -> None:
    rows = {}
    for seed in cfg.seeds:
        path = sample_two_sided_wiener(seed, 0.0, cfg.T, cfg.dt)
        row = []
        for m in cfg.moments:
            avg = ergodic_moment_average(path.ou, m, (0.0, cfg.T))
            target = ou_moment_target(m)
            row.append({"m": m, "average": avg, "target": target, "relative_error": abs(avg - target) / target})
        rows[seed] = row
    out.json("ou_check.json", dict(_header(cfg, p), T=cfg.T, moments=rows))


def run_dimension(cfg: RunConfig, p: SimParams, out: Output) -> None:
    v0 = build_field(cfg, "v0", p.lattice)
    every = round(cfg.sample_every / cfg.dt)
    span = cfg.burn_in + cfg.samples * cfg.sample_every
    reports = {}
    for seed in cfg.seeds:
        path = sample_two_sided_wiener(seed, 0.0, span, cfg.dt)
        rec = integrate(p, v0, path.ou.z_values, 0.0, (0.0,), thin=every)
        states = [u for t, u in zip(rec.state_times, rec.states) if t > cfg.burn_in + 1e-9][: cfg.samples]
        reports[seed] = box_counting_dimension(states, cfg.sobolev[0], cfg.scales, cfg.rank).to_dict()
    out.json("dimension.json", dict(_header(cfg, p), reports=reports))


def run_admissibility(cfg: RunConfig, p: SimParams, out: Output) -> None:
    rep = verify_noise_admissibility(p.h, cfg.nu, p.lattice, cfg.oversample, cfg.matrix_norm)
    zeta = {}
    if rep.satisfied:
        for seed in cfg.seeds:
            path = sample_two_sided_wiener(seed, -cfg.T_trunc, 0.0, cfg.dt)
            zeta[seed] = zeta_path_functional(path.ou, rep.alpha_split, rep.lambda_rate, rep.grad_h_sup,
                                              cfg.C, cfg.T_trunc).to_dict()
    out.json("admissibility.json", dict(_header(cfg, p), report=rep.to_dict(), zeta=zeta))


DISPATCH = {
    "simulate": run_simulate,
    "pullback": run_pullback,
    "absorbing": run_absorbing,
    "lipschitz": run_lipschitz,
    "comparison": run_comparison,
    "ou-check": run_ou_check,
    "dimension": run_dimension,
    "admissibility": run_admissibility,
}


def write_error(out_dir: Path, err: FracNSError) -> None:
    try:
        out = Output(out_dir)
        out.json("error.json", err.record())
    except OSError:
        pass


def run_experiment(cfg: RunConfig) -> int:
    """Run the configured experiment; returns the process exit status.

    Failures write ``error.json`` into the output directory and return the
    error's exit code (2 config, 3 range, 4 blow-up, 5 I/O).
    """
    try:
        out = Output(cfg.out_dir)
    except OSError as err:
        return CheckpointError(f"cannot create output directory: {err}").exit_code
    stale = out.root / "error.json"
    if stale.exists():
        stale.unlink()
    try:
        p = build_params(cfg)
        DISPATCH[cfg.kind](cfg, p, out)
    except FracNSError as err:
        write_error(cfg.out_dir, err)
        return err.exit_code
    except OSError as err:
        wrapped = CheckpointError(str(err))
        write_error(cfg.out_dir, wrapped)
        return wrapped.exit_code
    return 0
