"""Numerical experiments on the random fractional Navier-Stokes flow.

Each procedure returns a report dataclass that keeps the raw measurements next
to any derived verdict and serializes with :meth:`to_dict`.  Generic constants
that only exist up to "some C" are inputs (``C``, default 1); the experiments
check finiteness, monotonicity and horizon stability, not absolute values.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, RangeError
from .integrator import (
    SimParams,
    _check_finite,
    deterministic_batch,
    linearized_pullback,
    pullback_ensemble,
    pullback_solve,
    path_window,
)
from .noise import OUTrajectory, WienerPath
from .spectral import (
    Lattice,
    SpectralField,
    _norm_sq,
    polarization_basis,
    random_field,
    sobolev_norm,
    sup_gradient_norm,
)

SQRT_PI = math.sqrt(math.pi)
# radius comparisons: absolute + relative slack
ABS_SLACK = 1e-9
REL_SLACK = 1e-6


def params_dict(p: SimParams) -> dict:
    """Replayable description of SimParams (fields stored as coefficient norms and checksums)."""
    lat = p.lattice
    return {
        "nu": p.nu,
        "L": lat.L,
        "N": lat.N,
        "dealias_fraction": lat.dealias_fraction,
        "dt": p.dt,
        "frac_exponent": p.frac_exponent,
        "scheme": p.scheme,
        "nonlinear": p.nonlinear,
        "guard": p.guard,
        "f_norm": sobolev_norm(p.f, 0.0),
        "h_norm": sobolev_norm(p.h, 0.0),
    }


class _Report:
    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# --------------------------------------------------------------------------
# noise admissibility

@dataclass
class AdmissibilityReport(_Report):
    grad_h_sup: float
    threshold: float
    satisfied: bool
    alpha_split: float | None
    beta_split: float | None
    lambda_rate: float | None
    nu: float = 0.0
    lambda1: float = 0.0

    @property
    def beta_defined(self) -> bool:
        return self.beta_split is not None


def admissibility_from_gradient(grad_h_sup: float, nu: float, lattice: Lattice) -> AdmissibilityReport:
    """Solve the splitting relations for a given sup |grad h|.

        grad_h_sup / sqrt(pi)              = (1 - alpha) nu lambda1^{5/4}
        grad_h_sup / sqrt(pi) * (1 + beta) = (1 - alpha / 2) nu lambda1^{5/4}
        lambda_rate                        = alpha nu lambda1^{5/4} / 4

    The noise is admissible iff grad_h_sup < sqrt(pi) nu lambda1^{5/4}
    (strict).  beta is undefined (None) for h = 0; all splits are None when
    the noise is not admissible.
    """
    if not grad_h_sup >= 0:
        raise ConfigError("grad_h_sup must be non-negative")
    if not nu > 0:
        raise ConfigError("nu must be positive")
    scale = nu * lattice.lambda1**1.25
    threshold = SQRT_PI * scale
    satisfied = bool(grad_h_sup < threshold)
    alpha = beta = lam = None
    if satisfied:
        alpha = 1.0 - grad_h_sup / threshold
        lam = alpha * scale / 4.0
        if grad_h_sup > 0:
            beta = (1.0 - alpha / 2.0) * scale * SQRT_PI / grad_h_sup - 1.0
    return AdmissibilityReport(float(grad_h_sup), threshold, satisfied, alpha, beta, lam, nu, lattice.lambda1)


def verify_noise_admissibility(h: SpectralField, nu: float, lattice: Lattice | None = None,
                               oversample: int = 4, matrix_norm: str = "spectral") -> AdmissibilityReport:
    """Measure sup |grad h| on an oversampled grid and solve the splitting relations."""
    lattice = lattice or h.lattice
    if lattice != h.lattice:
        raise ConfigError("h lives on a different lattice")
    return admissibility_from_gradient(sup_gradient_norm(h, oversample, matrix_norm), nu, lattice)


# --------------------------------------------------------------------------
# ensembles

def sphere_ensemble(lattice: Lattice, radius: float, count: int, seed: int, slope: float = 2.0) -> list[SpectralField]:
    """``count`` random divergence-free fields with H-norm exactly ``radius``."""
    rng = np.random.default_rng(seed)
    return [random_field(lattice, rng, norm=radius, slope=slope) for _ in range(count)]


def attractor_sample_deterministic(p: SimParams, burn_in: float, count: int, seed: int = 0,
                                   radius: float = 1.0) -> list[SpectralField]:
    """Terminal states of the deterministic flow from ``count`` random initial data.

    After ``burn_in`` these stand in for points of the global attractor of the
    unforced-noise system.  Initial data lie on the H-sphere of ``radius``.
    """
    if not burn_in > 0:
        raise ConfigError("burn_in must be positive")
    if count < 1:
        raise ConfigError("count must be >= 1")
    init = np.stack([u.coeffs for u in sphere_ensemble(p.lattice, radius, count, seed)])
    out = deterministic_batch(p, init, burn_in)
    return [SpectralField(p.lattice, row) for row in out]


# --------------------------------------------------------------------------
# pullback absorption

@dataclass
class AbsorbingReport(_Report):
    horizons: list[float]
    seeds: list[int]
    sobolev: list[float]
    # radii[s][seed_index][horizon_index] = max over ensemble of ||A^{s/2} v||^2
    radii: dict[float, list[list[float]]]
    plateau: dict[float, list[float | None]]
    entry_time: dict[str, float] = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    ensemble_radius: float = 0.0
    ensemble_size: int = 0


def pullback_radii(p: SimParams, path: WienerPath, horizons: Sequence[float], ensemble: Sequence[SpectralField],
                   sobolev: Sequence[float] = (0.0, 1.25)) -> dict[float, np.ndarray]:
    """max over the ensemble of ||A^{s/2} v(t, theta_{-t} w, v0)||^2 for each horizon t."""
    finals = pullback_ensemble(p, path, horizons, ensemble)
    return {float(s): np.max(_norm_sq(finals, p.lattice, s), axis=1) for s in sobolev}


def fit_plateau(radii: Sequence[float], tol: float = 0.10) -> float | None:
    """Mean of the last three radii when they vary by less than ``tol`` (relative), else None."""
    tail = np.asarray(radii[-3:], dtype=float)
    if tail.size < 3 or not np.all(np.isfinite(tail)):
        return None
    hi, lo = tail.max(), tail.min()
    if hi == 0 or (hi - lo) / hi < tol:
        return float(tail.mean())
    return None


def absorbing_entry_time(horizons: Sequence[float], radii: Sequence[float], radius: float) -> float:
    """Smallest tested horizon from which every tested radius stays within ``radius``.

    Comparisons allow slack 1e-9 + 1e-6 * radius.  An infinite radius gives
    0; +inf means the ensemble never entered.
    """
    h = np.asarray(horizons, dtype=float)
    r = np.asarray(radii, dtype=float)
    if h.shape != r.shape:
        raise ConfigError("horizons and radii differ in length")
    if math.isinf(radius) and radius > 0:
        return 0.0
    order = np.argsort(h)
    h, r = h[order], r[order]
    ok = r <= radius + ABS_SLACK + REL_SLACK * abs(radius)
    entry = math.inf
    for i in range(len(h) - 1, -1, -1):
        if not ok[i]:
            break
        entry = float(h[i])
    return entry


def non_increasing_after_max(values: Sequence[float]) -> bool:
    """True when the sequence never rises (beyond the radius slack) after its maximum."""
    v = np.asarray(values, dtype=float)
    start = int(np.argmax(v))
    tail = v[start:]
    return bool(np.all(tail[1:] <= tail[:-1] + ABS_SLACK + REL_SLACK * np.abs(tail[:-1])))


def absorbing_experiment(p: SimParams, seeds: Sequence[int], horizons: Sequence[float], ensemble_radius: float,
                         ensemble_size: int, sobolev: Sequence[float] = (0.0, 1.25), ensemble_seed: int = 12345,
                         entry_radii: dict[float, float] | None = None) -> AbsorbingReport:
    """Pullback radii of a fixed H-ball ensemble over several noise paths."""
    horizons = sorted(float(t) for t in horizons)
    ensemble = sphere_ensemble(p.lattice, ensemble_radius, ensemble_size, ensemble_seed)
    radii = {float(s): [] for s in sobolev}
    from .noise import sample_two_sided_wiener

    for seed in seeds:
        path = sample_two_sided_wiener(seed, -horizons[-1], 0.0, p.dt)
        r = pullback_radii(p, path, horizons, ensemble, sobolev)
        for s in radii:
            radii[s].append(r[s].tolist())
    plateau = {s: [fit_plateau(row) for row in rows] for s, rows in radii.items()}
    entry = {}
    for s, rad in (entry_radii or {}).items():
        worst = np.max(np.asarray(radii[float(s)]), axis=0)
        entry[f"s={float(s):g},radius={rad:g}"] = absorbing_entry_time(horizons, worst, rad)
    return AbsorbingReport(horizons, list(seeds), [float(s) for s in sobolev], radii, plateau, entry,
                           params_dict(p), ensemble_radius, ensemble_size)


# --------------------------------------------------------------------------
# comparison with the deterministic flow

@dataclass
class NormSeries(_Report):
    """Time-indexed records of ||A^{s/2} x|| for configured s."""

    times: np.ndarray
    norms: dict[float, np.ndarray]
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    def sup_sq(self, s: float, window: tuple[float, float]) -> float:
        """sup over window of the squared norm."""
        mask = (self.times >= window[0] - 1e-12) & (self.times <= window[1] + 1e-12)
        return float(np.max(self.norms[float(s)][mask] ** 2))


def comparison_norms(p: SimParams, path: WienerPath, t: float, v0: SpectralField, u0_sample: SpectralField,
                     sobolev: Sequence[float] = (0.0, 1.25, 2.5),
                     cloud: Sequence[SpectralField] | None = None) -> NormSeries:
    """Norms of w = v - u along path times [-t, 0].

    v solves the random system from v0 at path time -t; u solves the
    deterministic system from ``u0_sample`` on the same grid.  With ``cloud``
    (attractor samples) the series also carries ``dist_sq``: the squared
    H^{5/2} distance from v to the nearest cloud point at every step.
    """
    z = path_window(p, path, -t, 0.0)
    rs = p.stepper
    ds = (p.deterministic() if p.has_noise else p).stepper
    lat = p.lattice
    sob = tuple(float(s) for s in sobolev)
    v = np.array(v0.coeffs)
    u = np.array(u0_sample.coeffs)
    cl = None if cloud is None else np.stack([c.coeffs for c in cloud])
    n = z.size
    norms = {s: np.empty(n) for s in sob}
    dist = np.empty(n) if cl is not None else None

    def record(k):
        w = v - u
        for s in sob:
            norms[s][k] = math.sqrt(_norm_sq(w, lat, s))
        if cl is not None:
            dist[k] = float(np.min(_norm_sq(v[None] - cl, lat, 2.5)))

    record(0)
    for k in range(n - 1):
        v = rs.step(v, z[k], z[k + 1])
        u = ds.step(u, 0.0, 0.0)
        _check_finite(v, p, k + 1)
        record(k + 1)
    times = -t + p.dt * np.arange(n)
    extra = {"dist_sq": dist} if dist is not None else {}
    return NormSeries(times, norms, extra)


def comparison_plateau(series: NormSeries, window: float = 10.0, s: float = 2.5) -> float:
    """Empirical rho: sup of ||A^{s/2} w||^2 over the last ``window`` time units."""
    t_end = float(series.times[-1])
    return series.sup_sq(s, (t_end - window, t_end))


# --------------------------------------------------------------------------
# Lipschitz smoothing

@dataclass
class LipschitzReport(_Report):
    deltas: list[float]
    sobolev: list[float]
    # ratios[s][i] = ||A^{s/2} (v1 - v2)(T)|| / ||v1(0) - v2(0)||
    ratios: dict[float, list[float]]
    horizon: float
    verdict: dict[float, str]
    stable: bool
    params: dict = field(default_factory=dict)
    seed: int | None = None


def _check_direction(d: SpectralField, lattice: Lattice) -> None:
    if d.lattice != lattice:
        raise ConfigError("direction lives on a different lattice")
    size = sobolev_norm(d, 0.0)
    if size == 0:
        raise ConfigError("perturbation direction must be nonzero")
    if abs(size - 1.0) > 1e-10:
        raise ConfigError(f"perturbation direction must have unit H-norm, got {size!r}")
    if d.divergence_residual() > 1e-10:
        raise ConfigError("perturbation direction must be divergence-free")


def lipschitz_ratio(p: SimParams, path: WienerPath, T: float, v0: SpectralField,
                    delta_dirs: Sequence[tuple[float, SpectralField]],
                    sobolev: Sequence[float] = (0.0, 1.25, 2.5)) -> LipschitzReport:
    """Paired pullback runs from v0 and v0 + delta * direction on one noise path.

    A Sobolev index is "stable" when its ratios vary by less than a factor 2
    across the delta ladder (linear response regime).
    """
    if not delta_dirs:
        raise ConfigError("empty perturbation ladder")
    for delta, d in delta_dirs:
        if not delta >= 1e-12:
            raise ConfigError(f"delta {delta!r} is below the roundoff floor 1e-12")
        _check_direction(d, p.lattice)
    sob = [float(s) for s in sobolev]
    base = pullback_solve(p, path, T, v0)
    ratios = {s: [] for s in sob}
    deltas = []
    for delta, d in delta_dirs:
        v2 = pullback_solve(p, path, T, v0 + d * delta)
        diff = base - v2
        start = sobolev_norm(d * delta, 0.0)
        deltas.append(float(delta))
        for s in sob:
            ratios[s].append(sobolev_norm(diff, s) / start)
    verdict = {}
    for s, r in ratios.items():
        r = np.asarray(r)
        ok = bool(np.all(np.isfinite(r)) and r.min() > 0 and r.max() / r.min() < 2.0)
        verdict[s] = "stable" if ok else "unstable"
    return LipschitzReport(deltas, sob, ratios, float(T), verdict, all(v == "stable" for v in verdict.values()),
                           params_dict(p), path.seed)


def linearized_ratio(p: SimParams, path: WienerPath, T: float, v0: SpectralField, direction: SpectralField,
                     sobolev: Sequence[float] = (0.0, 1.25, 2.5)) -> dict[float, float]:
    """||A^{s/2} J direction|| / ||direction|| with J the derivative of the discrete flow map."""
    _check_direction(direction, p.lattice)
    _, jv = linearized_pullback(p, path, T, v0, direction)
    return {float(s): sobolev_norm(jv, s) for s in sobolev}


# --------------------------------------------------------------------------
# path functional

@dataclass
class ZetaResult(_Report):
    value: float
    tail_bound: float
    T_trunc: float
    exponent_rate: float


def zeta_path_functional(z: OUTrajectory, alpha_split: float, lambda_rate: float, grad_h_sup: float,
                         C: float = 1.0, T_trunc: float = 50.0) -> ZetaResult:
    """Truncated pullback functional

        C int_{-T}^0 exp(k s + 2 g int_s^0 |z| dtau) (1 + |z(s)|^4) ds,   k = (8/alpha - 3) lambda_rate,

    by the trapezoidal rule on the path grid.  ``tail_bound`` estimates the
    neglected part over (-inf, -T): the integrand's decay exp(-k T) and the
    window growth of its slowly varying factor, continued at the window-mean
    rate 2 g mean|z|, times the window maximum of 1 + |z|^4.
    """
    if not (0 < alpha_split <= 1):
        raise ConfigError("alpha_split must lie in (0, 1]")
    if not lambda_rate > 0 or not C > 0 or not T_trunc > 0 or grad_h_sup < 0:
        raise ConfigError("lambda_rate, C and T_trunc must be positive; grad_h_sup non-negative")
    path = z.path
    if -T_trunc < path.t_min - 1e-12 * T_trunc or path.t_max < 0:
        raise RangeError(f"OU trajectory covers [{path.t_min}, {path.t_max}], need [{-T_trunc}, 0]")
    times, vals = z.window(-T_trunc, 0.0)
    k = (8.0 / alpha_split - 3.0) * lambda_rate
    absz = np.abs(vals)
    # int_s^0 |z| by cumulative trapezoid from the right
    seg = 0.5 * (absz[1:] + absz[:-1]) * np.diff(times)
    tail_int = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    integrand = np.exp(k * times + 2 * grad_h_sup * tail_int) * (1 + absz**4)
    value = C * float(np.trapezoid(integrand, times))
    mean_abs = tail_int[0] / T_trunc
    rate = k - 2 * grad_h_sup * mean_abs
    if rate <= 0:
        tail = math.inf
    else:
        tail = C * math.exp(-k * T_trunc + 2 * grad_h_sup * tail_int[0]) * float(np.max(1 + absz**4)) / rate
    return ZetaResult(value, tail, float(T_trunc), k)


# --------------------------------------------------------------------------
# fractal dimension

@dataclass
class DimensionReport(_Report):
    sample_count: int
    scales: list[float]
    counts: list[int]
    slope: float
    slope_low: float
    slope_high: float
    rank: int
    sobolev: float
    degenerate: bool = False


def mode_coordinates(samples: Sequence[SpectralField], s: float, rank: int) -> np.ndarray:
    """Real coordinates of the samples on the ``rank`` lowest Stokes directions.

    Each conjugate pair of modes contributes four coordinates (real and
    imaginary parts on two polarizations perpendicular to j), weighted so the
    map is an isometry for ||A^{s/2} .|| on the retained span.  Modes are
    ordered by eigenvalue, ties by the canonical half-space order.
    """
    lat = samples[0].lattice
    modes = lat.half_space_modes()[1:]
    mu = (2 * math.pi / lat.L) ** 2 * np.sum(modes**2, axis=1)
    order = np.argsort(mu, kind="stable")
    need = -(-rank // 4)
    if need > len(order):
        raise ConfigError(f"rank {rank} exceeds the {4 * len(order)} available coordinates")
    modes, mu = modes[order[:need]], mu[order[:need]]
    idx = tuple(np.array([lat.index(j) for j in modes]).T)
    basis = polarization_basis(lat)[(slice(None), slice(None)) + idx]  # (2, 3, need)
    weight = math.sqrt(2.0) * mu ** (s / 2)
    coeffs = np.stack([u.coeffs[(slice(None),) + idx] for u in samples])  # (n, 3, need)
    proj = np.einsum("pcm,ncm->npm", basis, coeffs) * weight  # (n, 2, need)
    coords = np.stack([proj.real, proj.imag], axis=2)  # (n, 2, 2, need)
    coords = np.moveaxis(coords, -1, 1).reshape(len(samples), -1)
    return coords[:, :rank]


def box_count(points: np.ndarray, eps: float) -> int:
    """Number of occupied cubes of side eps anchored at the coordinate-wise minimum."""
    cells = np.floor((points - points.min(axis=0)) / eps).astype(np.int64)
    return int(np.unique(cells, axis=0).shape[0])


def box_counting_dimension(samples: Sequence[SpectralField] | np.ndarray, s: float, scales: Sequence[float],
                           rank: int = 24, confidence: float = 0.95) -> DimensionReport:
    """Slope of log N(eps) against -log eps over the given (decreasing) scales.

    ``samples`` are fields (projected with :func:`mode_coordinates`) or an
    (n, d) array of coordinates used as is.
    """
    if len(samples) < 2:
        raise ConfigError("box counting needs at least two samples")
    eps = np.asarray(scales, dtype=float)
    if eps.size < 2 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ConfigError("scales must be positive and strictly decreasing")
    if isinstance(samples, np.ndarray):
        pts = np.asarray(samples, dtype=float)
        rank = pts.shape[1]
    else:
        pts = mode_coordinates(samples, s, rank)
    if np.all(pts == pts[0]):
        return DimensionReport(len(pts), eps.tolist(), [1] * eps.size, 0.0, 0.0, 0.0, rank, float(s), True)
    counts = np.array([box_count(pts, e) for e in eps])
    fit = stats.linregress(-np.log(eps), np.log(counts))
    half = stats.t.ppf(0.5 + confidence / 2, max(eps.size - 2, 1)) * fit.stderr
    return DimensionReport(len(pts), eps.tolist(), counts.tolist(), float(fit.slope), float(fit.slope - half),
                           float(fit.slope + half), rank, float(s))
