"""Time stepping for the random fractional Navier-Stokes system and its deterministic limit.

The conjugated equation for v = u - h z(theta_t w) is

    dv/dt + nu A^a v + B(v + h z) = f - nu A^a h z + h z,      a = 5/4,

and with h = 0 it reduces to the deterministic system.  Each Fourier mode of
the linear part is propagated exactly by exp(-nu mu^a dt); the rest is handled
by the two-stage exponential Runge-Kutta rule of Cox and Matthews (ETD2RK):

    a_n     = E v_n + phi1 dt N(v_n, z_n)
    v_{n+1} = a_n + phi2 dt (N(a_n, z_{n+1}) - N(v_n, z_n))

with phi1(x) = (e^x - 1)/x, phi2(x) = (e^x - 1 - x)/x^2 at x = -nu mu^a dt.
Both stages sit on grid times, so z is only ever sampled where the OU
trajectory is exact.  The rule is exact whenever N is independent of v and
affine in time, and second order in general.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import BlowUpError, ConfigError, RangeError
from .noise import WienerPath, grid_steps
from .spectral import (
    Lattice,
    SpectralField,
    _hermitize,
    _norm_sq,
    _self_advection,
    _symmetric_advection,
)

SCHEMES = ("etd2rk",)
DEFAULT_NORMS = (0.0, 1.25, 2.5)


def phi_functions(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """phi1 and phi2 evaluated without cancellation for small |x|."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    safe = np.where(small, 1.0, x)
    em1 = np.expm1(safe)
    phi1 = np.where(small, 1 + x / 2 + x**2 / 6 + x**3 / 24 + x**4 / 120, em1 / safe)
    phi2 = np.where(small, 0.5 + x / 6 + x**2 / 24 + x**3 / 120 + x**4 / 720, (em1 - safe) / safe**2)
    return phi1, phi2


@dataclass(frozen=True, eq=False)
class SimParams:
    """Physical and numerical parameters of one run.

    ``nonlinear=False`` disables B entirely (linear test hook).
    ``guard`` bounds ||v||; crossing it aborts the run.
    """

    nu: float
    lattice: Lattice
    dt: float
    f: SpectralField | None = None
    h: SpectralField | None = None
    frac_exponent: float = 1.25
    scheme: str = "etd2rk"
    nonlinear: bool = True
    guard: float = 1e8

    def __post_init__(self):
        problems = []
        if not (self.nu > 0 and math.isfinite(self.nu)):
            problems.append("nu must be positive")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            problems.append("dt must be positive")
        if not self.frac_exponent > 0:
            problems.append("frac_exponent must be positive")
        if self.scheme not in SCHEMES:
            problems.append(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        for name in ("f", "h"):
            fld = getattr(self, name)
            if fld is None:
                object.__setattr__(self, name, SpectralField.zeros(self.lattice))
            elif fld.lattice != self.lattice:
                problems.append(f"{name} lives on a different lattice")
        if problems:
            raise ConfigError(problems)

    @property
    def has_noise(self) -> bool:
        return bool(np.any(self.h.coeffs))

    def deterministic(self) -> "SimParams":
        """The same parameters with h = 0."""
        return SimParams(self.nu, self.lattice, self.dt, self.f, None, self.frac_exponent,
                         self.scheme, self.nonlinear, self.guard)

    def with_dt(self, dt: float) -> "SimParams":
        return SimParams(self.nu, self.lattice, dt, self.f, self.h, self.frac_exponent,
                         self.scheme, self.nonlinear, self.guard)

    def linear_rate(self) -> np.ndarray:
        """nu mu(j)^a per mode."""
        return self.nu * self.lattice.multiplier(self.frac_exponent)

    @cached_property
    def stepper(self) -> "_Stepper":
        return _Stepper(self)


class _Stepper:
    """Precomputed multipliers for one parameter set; acts on (batched) coefficient arrays."""

    def __init__(self, p: SimParams):
        self.p = p
        lat = p.lattice
        self.lattice = lat
        x = -p.linear_rate() * p.dt
        phi1, phi2 = phi_functions(x)
        self.decay = np.exp(x)
        self.c1 = phi1 * p.dt
        self.c2 = phi2 * p.dt
        self.f = p.f.coeffs
        self.h = p.h.coeffs
        # coefficient of z in the forcing: h - nu A^a h
        self.hz_force = self.h - p.linear_rate() * self.h
        self.has_noise = p.has_noise
        self.has_force = bool(np.any(self.f))

    def rhs(self, v: np.ndarray, z: float) -> np.ndarray:
        """N(v, z) = -B(v + h z) + f + (h - nu A^a h) z."""
        out = np.zeros_like(v)
        if self.p.nonlinear:
            w = v + self.h * z if (self.has_noise and z != 0) else v
            out -= _self_advection(w, self.lattice)
        if self.has_force:
            out += self.f
        if self.has_noise and z != 0:
            out += self.hz_force * z
        return out

    def step(self, v: np.ndarray, z0: float, z1: float) -> np.ndarray:
        n0 = self.rhs(v, z0)
        a = self.decay * v + self.c1 * n0
        n1 = self.rhs(a, z1)
        return _hermitize(a + self.c2 * (n1 - n0))

    def tangent_step(self, v: np.ndarray, dv: np.ndarray, z0: float, z1: float) -> tuple[np.ndarray, np.ndarray]:
        """One step of the scheme and of its exact derivative along ``dv``."""
        n0 = self.rhs(v, z0)
        dn0 = self._drhs(v, dv, z0)
        a = self.decay * v + self.c1 * n0
        da = self.decay * dv + self.c1 * dn0
        n1 = self.rhs(a, z1)
        dn1 = self._drhs(a, da, z1)
        return (_hermitize(a + self.c2 * (n1 - n0)), _hermitize(da + self.c2 * (dn1 - dn0)))

    def _drhs(self, v: np.ndarray, dv: np.ndarray, z: float) -> np.ndarray:
        if not self.p.nonlinear:
            return np.zeros_like(dv)
        w = v + self.h * z if (self.has_noise and z != 0) else v
        return -_symmetric_advection(dv, w, self.lattice)


def _check_finite(v: np.ndarray, p: SimParams, step: int) -> None:
    sq = _norm_sq(v, p.lattice)
    worst = float(np.max(sq)) if np.ndim(sq) else float(sq)
    if not math.isfinite(worst) or worst > p.guard**2:
        raise BlowUpError(step, math.sqrt(worst) if math.isfinite(worst) else float("nan"))


# --------------------------------------------------------------------------
# single steps

def step_random_pde(v: SpectralField, z_t: float, z_next: float, p: SimParams) -> SpectralField:
    """Advance the conjugated random system one step of size p.dt."""
    if v.lattice != p.lattice:
        raise ConfigError("state and parameters live on different lattices")
    out = p.stepper.step(np.array(v.coeffs), float(z_t), float(z_next))
    _check_finite(out, p, 1)
    return SpectralField(p.lattice, out)


def step_deterministic_pde(u: SpectralField, p: SimParams) -> SpectralField:
    """Advance the deterministic system (h = 0, z = 0) one step."""
    return step_random_pde(u, 0.0, 0.0, p.deterministic() if p.has_noise else p)


# --------------------------------------------------------------------------
# trajectories

@dataclass
class TrajectoryRecord:
    """Norm series ||A^{s/2} v|| at every step plus thinned full states."""

    times: np.ndarray
    norms: dict[float, np.ndarray]
    z: np.ndarray
    state_times: list[float] = field(default_factory=list)
    states: list[SpectralField] = field(default_factory=list)

    def final_state(self) -> SpectralField:
        return self.states[-1]

    def truncated(self, n: int) -> "TrajectoryRecord":
        keep = [i for i, t in enumerate(self.state_times) if t <= self.times[n - 1]]
        return TrajectoryRecord(
            times=self.times[:n], norms={s: a[:n] for s, a in self.norms.items()}, z=self.z[:n],
            state_times=[self.state_times[i] for i in keep], states=[self.states[i] for i in keep],
        )

    def write_series(self, fh) -> None:
        """Columnar text: t, one column per Sobolev index, z."""
        keys = sorted(self.norms)
        fh.write("t " + " ".join(f"norm_s{s:g}" for s in keys) + " z\n")
        for n, t in enumerate(self.times):
            cols = " ".join(f"{self.norms[s][n]:.17g}" for s in keys)
            fh.write(f"{t:.17g} {cols} {self.z[n]:.17g}\n")


def integrate(p: SimParams, v0: SpectralField, z: np.ndarray, t0: float = 0.0,
              sobolev: Sequence[float] = DEFAULT_NORMS, thin: int = 100) -> TrajectoryRecord:
    """Integrate from ``v0`` at time ``t0`` through the z samples ``z[0] .. z[n]``.

    Norms are recorded every step, full states every ``thin`` steps and at the
    end.  A blow-up raises :class:`BlowUpError` whose ``partial`` attribute holds
    the record up to the last accepted step.
    """
    if v0.lattice != p.lattice:
        raise ConfigError("initial state and parameters live on different lattices")
    z = np.asarray(z, dtype=float)
    n = z.size - 1
    st = p.stepper
    lat = p.lattice
    sobolev = tuple(float(s) for s in sobolev)
    times = t0 + p.dt * np.arange(n + 1)
    norms = {s: np.empty(n + 1) for s in sobolev}
    state_times, states = [t0], [v0]
    v = np.array(v0.coeffs)
    for s in sobolev:
        norms[s][0] = math.sqrt(_norm_sq(v, lat, s))
    for k in range(n):
        v = st.step(v, z[k], z[k + 1])
        try:
            _check_finite(v, p, k + 1)
        except BlowUpError as err:
            rec = TrajectoryRecord(times, norms, z, state_times, states).truncated(k + 1)
            err.partial = rec
            raise
        for s in sobolev:
            norms[s][k + 1] = math.sqrt(_norm_sq(v, lat, s))
        if (k + 1) % thin == 0 or k + 1 == n:
            state_times.append(float(times[k + 1]))
            states.append(SpectralField(lat, v))
    return TrajectoryRecord(times, norms, z, state_times, states)


def _check_alignment(p: SimParams, path: WienerPath) -> None:
    if abs(p.dt - path.dt) > 1e-12 * path.dt:
        raise RangeError(f"simulation dt={p.dt!r} is not aligned with the noise grid dt={path.dt!r}")


def path_window(p: SimParams, path: WienerPath, t_start: float, t_end: float) -> np.ndarray:
    """z samples on [t_start, t_end] of the path grid (RangeError if misaligned)."""
    _check_alignment(p, path)
    if t_end < t_start:
        raise RangeError("t_end precedes t_start")
    i0, i1 = path.index_of(t_start), path.index_of(t_end)
    return path.ou.z_values[i0 : i1 + 1]


def solve_on_path(p: SimParams, path: WienerPath, t_start: float, t_end: float, v0: SpectralField,
                  sobolev: Sequence[float] = DEFAULT_NORMS, thin: int = 100) -> TrajectoryRecord:
    """Integrate over path times [t_start, t_end] driven by z(theta_t w)."""
    z = path_window(p, path, t_start, t_end)
    return integrate(p, v0, z, t0=t_start, sobolev=sobolev, thin=thin)


def pullback_solve(p: SimParams, path: WienerPath, t: float, v0: SpectralField) -> SpectralField:
    """v(t, theta_{-t} w, v0): start at path time -t, observe at path time 0."""
    if t < 0:
        raise RangeError("pullback horizon must be non-negative")
    z = path_window(p, path, -t, 0.0)
    st = p.stepper
    v = np.array(v0.coeffs)
    for k in range(z.size - 1):
        v = st.step(v, z[k], z[k + 1])
        _check_finite(v, p, k + 1)
    return v0 if z.size == 1 else SpectralField(p.lattice, v)


def cocycle_residual(p: SimParams, path: WienerPath, t: float, s: float, v0: SpectralField) -> float:
    """||phi(t+s, theta_{-t-s} w, v0) - phi(t, theta_{-t} w, phi(s, theta_{-t-s} w, v0))|| / max(1, ||v0||).

    The inner solve runs on the shifted path theta_{-t} w, exercising the
    shift machinery; on an aligned grid the two routes take identical steps.
    """
    from .noise import shift_origin
    from .spectral import sobolev_norm

    _check_alignment(p, path)
    grid_steps(t, p.dt, "t")
    grid_steps(s, p.dt, "s")
    direct = pullback_solve(p, path, t + s, v0)
    inner = pullback_solve(p, shift_origin(path, -t), s, v0)
    composed = pullback_solve(p, path, t, inner)
    return sobolev_norm(direct - composed, 0.0) / max(1.0, sobolev_norm(v0, 0.0))


def pullback_ensemble(p: SimParams, path: WienerPath, horizons: Sequence[float],
                      initial: Sequence[SpectralField], chunk: int = 2) -> np.ndarray:
    """Terminal coefficients v(t_k, theta_{-t_k} w, v0_e) for every horizon and initial datum.

    All trajectories share one sweep along the path: a horizon's ensemble joins
    when the path time reaches -t_k.  Active rows are stepped ``chunk`` at a
    time, which keeps the FFT work in cache.  Returns an array of shape
    (len(horizons), len(initial)) + lattice.shape.
    """
    horizons = [float(t) for t in horizons]
    if any(t < 0 for t in horizons):
        raise RangeError("pullback horizons must be non-negative")
    _check_alignment(p, path)
    steps = [grid_steps(t, p.dt, "horizon") for t in horizons]
    order = np.argsort(steps)[::-1]
    n_max = steps[order[0]]
    z = path_window(p, path, -n_max * p.dt, 0.0)
    v0 = np.stack([np.array(u.coeffs) for u in initial])
    ne = v0.shape[0]
    batch = np.concatenate([v0] * len(horizons))  # rows ordered by descending horizon
    start = np.repeat([n_max - steps[k] for k in order], ne)
    st = p.stepper
    active = 0
    for k in range(n_max):
        while active < batch.shape[0] and start[active] <= k:
            active += ne
        for lo in range(0, active, chunk):
            hi = min(lo + chunk, active)
            batch[lo:hi] = st.step(batch[lo:hi], z[k], z[k + 1])
            _check_finite(batch[lo:hi], p, k + 1)
    out = np.empty((len(horizons), ne) + p.lattice.shape, dtype=np.complex128)
    for pos, k in enumerate(order):
        out[k] = batch[pos * ne : (pos + 1) * ne]
    return out


def deterministic_batch(p: SimParams, initial: np.ndarray, t: float) -> np.ndarray:
    """Integrate a batch of coefficient arrays under the deterministic system for time t."""
    pd = p.deterministic() if p.has_noise else p
    st = pd.stepper
    v = np.array(initial, dtype=np.complex128)
    for k in range(grid_steps(t, p.dt, "burn-in")):
        v = st.step(v, 0.0, 0.0)
        _check_finite(v, pd, k + 1)
    return v


def linearized_pullback(p: SimParams, path: WienerPath, t: float, v0: SpectralField,
                        direction: SpectralField) -> tuple[SpectralField, SpectralField]:
    """(v(t, theta_{-t} w, v0), D_v0 v . direction) via the tangent of the discrete scheme."""
    z = path_window(p, path, -t, 0.0)
    st = p.stepper
    v = np.array(v0.coeffs)
    dv = np.array(direction.coeffs)
    for k in range(z.size - 1):
        v, dv = st.tangent_step(v, dv, z[k], z[k + 1])
        _check_finite(v, p, k + 1)
    return SpectralField(p.lattice, v), SpectralField(p.lattice, dv)


def euler_maruyama_reference(p: SimParams, path: WienerPath, t_start: float, t_end: float,
                             u0: SpectralField, refine: int = 10, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Direct discretisation of the stochastic system du = (...)dt + h dW at dt / refine.

    Each coarse increment is split into ``refine`` Brownian-bridge pieces that
    sum to it exactly, so the fine path is a refinement of ``path``.  The linear
    part is still propagated exactly; drift is frozen over each fine step and
    the noise kick h dW is applied before the step.
    Returns (coarse times, ||u|| at coarse times).
    """
    _check_alignment(p, path)
    i0, i1 = path.index_of(t_start), path.index_of(t_end)
    coarse = path.increments[i0:i1]
    rng = np.random.default_rng(seed)
    fine_dt = p.dt / refine
    pf = SimParams(p.nu, p.lattice, fine_dt, p.f, None, p.frac_exponent, p.scheme, p.nonlinear, p.guard)
    x = -pf.linear_rate() * fine_dt
    decay = np.exp(x)
    c1 = phi_functions(x)[0] * fine_dt
    h = p.h.coeffs
    f = p.f.coeffs
    lat = p.lattice
    u = np.array(u0.coeffs)
    norms = [math.sqrt(_norm_sq(u, lat))]
    for dw in coarse:
        xi = rng.standard_normal(refine) * math.sqrt(fine_dt)
        pieces = xi - xi.mean() + dw / refine
        for piece in pieces:
            drift = f - _self_advection(u, lat) if p.nonlinear else f
            u = _hermitize(decay * (u + h * piece) + c1 * drift)
        _check_finite(u, p, len(norms))
        norms.append(math.sqrt(_norm_sq(u, lat)))
    return path.times[i0 : i1 + 1], np.array(norms)

