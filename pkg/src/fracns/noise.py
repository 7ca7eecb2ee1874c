"""Seeded two-sided Wiener paths and the Ornstein-Uhlenbeck process driven by them.

The OU process solves dz + z dt = dW.  On a grid of spacing dt it is advanced
by the exact one-step law

    z_{n+1} = exp(-dt) z_n + rho * dW_n / sqrt(dt),   rho = sqrt((1 - exp(-2 dt)) / 2),

so the coupled forcing is N(0, rho^2) and the stationary law N(0, 1/2) is
preserved exactly.  z at the left end of the window is a stationary draw taken
from the path's own seed stream.

Time shifts theta_s relabel the grid and re-anchor the path at the new origin
while keeping the increments and the initial draw, so an OU trajectory built
on a shifted path agrees bit-for-bit with the original at aligned times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.signal import lfilter
from scipy.special import gamma

from .errors import ConfigError, RangeError

_GRID_TOL = 1e-9


def grid_steps(t: float, dt: float, what: str = "time") -> int:
    """Number of grid steps in ``t``; raises RangeError unless ``t`` is a multiple of ``dt``."""
    q = t / dt
    n = round(q)
    if abs(q - n) > _GRID_TOL * max(1.0, abs(q)):
        raise RangeError(f"{what} {t!r} is not a multiple of dt={dt!r}")
    return int(n)


@dataclass(frozen=True, eq=False)
class WienerPath:
    """Two-sided Wiener path on the grid t_n = (n - origin) * dt, n = 0 .. len(increments).

    ``increments[n]`` is W(t_{n+1}) - W(t_n).  ``z_draw`` is the standard normal
    used for the stationary OU start at the left end.
    """

    seed: int
    dt: float
    origin: int
    increments: np.ndarray = field(repr=False)
    z_draw: float = 0.0

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float, copy=True)
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)
        if not (0 <= self.origin <= inc.size):
            raise ConfigError("path origin must lie on the grid")

    @property
    def n_steps(self) -> int:
        return self.increments.size

    @property
    def t_min(self) -> float:
        return -self.origin * self.dt

    @property
    def t_max(self) -> float:
        return (self.n_steps - self.origin) * self.dt

    @cached_property
    def times(self) -> np.ndarray:
        t = (np.arange(self.n_steps + 1) - self.origin) * self.dt
        t.setflags(write=False)
        return t

    @cached_property
    def values(self) -> np.ndarray:
        """W on the grid, summed outward from W(0) = 0 in both directions."""
        o = self.origin
        w = np.zeros(self.n_steps + 1)
        w[o + 1 :] = np.cumsum(self.increments[o:])
        if o:
            w[:o] = -np.cumsum(self.increments[:o][::-1])[::-1]
        w.setflags(write=False)
        return w

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; RangeError if off-grid or outside the window."""
        n = grid_steps(t, self.dt) + self.origin
        if not (0 <= n <= self.n_steps):
            raise RangeError(f"time {t!r} outside path window [{self.t_min!r}, {self.t_max!r}]")
        return n

    @cached_property
    def ou(self) -> "OUTrajectory":
        return ou_trajectory(self)


def sample_two_sided_wiener(seed: int, t_min: float, t_max: float, dt: float) -> WienerPath:
    """Sample W on [t_min, t_max] with W(0) = 0.

    Independent streams are spawned from ``seed`` for the positive-time
    increments, the negative-time increments (generated outward from 0) and
    the stationary OU start, so increments near t = 0 do not depend on how far
    the window extends.
    """
    problems = []
    if not dt > 0:
        problems.append("dt must be positive")
    if not (t_min <= 0 <= t_max):
        problems.append("the window must contain t = 0 (t_min <= 0 <= t_max)")
    if problems:
        raise ConfigError(problems)
    n_neg = grid_steps(-t_min, dt, "t_min")
    n_pos = grid_steps(t_max, dt, "t_max")
    pos_ss, neg_ss, init_ss = np.random.SeedSequence(int(seed)).spawn(3)
    sd = math.sqrt(dt)
    pos = np.random.default_rng(pos_ss).standard_normal(n_pos) * sd
    neg = np.random.default_rng(neg_ss).standard_normal(n_neg) * sd
    z_draw = float(np.random.default_rng(init_ss).standard_normal())
    inc = np.concatenate([neg[::-1], pos])
    return WienerPath(seed=int(seed), dt=float(dt), origin=n_neg, increments=inc, z_draw=z_draw)


@dataclass(frozen=True, eq=False)
class OUTrajectory:
    path: WienerPath
    z_values: np.ndarray = field(repr=False)
    z_init_policy: str = "stationary"

    def at(self, t: float) -> float:
        return float(self.z_values[self.path.index_of(t)])

    def window(self, t0: float, t1: float) -> tuple[np.ndarray, np.ndarray]:
        """(times, z) restricted to the grid points of [t0, t1]."""
        i0, i1 = self.path.index_of(t0), self.path.index_of(t1)
        return self.path.times[i0 : i1 + 1], self.z_values[i0 : i1 + 1]


def ou_coupling(dt: float) -> tuple[float, float]:
    """(exp(-dt), rho / sqrt(dt)) for the exact one-step update."""
    decay = math.exp(-dt)
    rho = math.sqrt(-math.expm1(-2 * dt) / 2)
    return decay, rho / math.sqrt(dt)


def ou_trajectory(path: WienerPath, z_init: float | None = None) -> OUTrajectory:
    """Exact OU samples on the path grid.

    ``z_init=None`` starts from the stationary draw sqrt(1/2) * path.z_draw;
    a number pins z(t_min) instead.
    """
    decay, gain = ou_coupling(path.dt)
    if z_init is None:
        z0, policy = math.sqrt(0.5) * path.z_draw, "stationary"
    else:
        z0, policy = float(z_init), "fixed"
    forcing = gain * path.increments
    z = np.empty(path.n_steps + 1)
    z[0] = z0
    if path.n_steps:
        # z_{n+1} = decay * z_n + forcing_n as a first-order recursive filter
        z[1:], _ = lfilter([1.0], [1.0, -decay], forcing, zi=[decay * z0])
    z.setflags(write=False)
    return OUTrajectory(path=path, z_values=z, z_init_policy=policy)


def ergodic_moment_average(z: OUTrajectory, m: float, window: tuple[float, float]) -> float:
    """(1/T) int_0^T |z(theta_s w)|^m ds by the trapezoidal rule on the grid.

    As T grows this tends to Gamma((1 + m) / 2) / sqrt(pi), the m-th absolute
    moment of the stationary law N(0, 1/2); see :func:`ou_moment_target`.
    """
    t0, t1 = window
    if not m > 0:
        raise ConfigError("moment order m must be positive")
    if not t1 > t0:
        raise ConfigError("empty averaging window")
    times, vals = z.window(t0, t1)
    return float(np.trapezoid(np.abs(vals) ** m, times) / (t1 - t0))


def ou_moment_target(m: float) -> float:
    """E|z|^m = Gamma((1 + m) / 2) / sqrt(pi) for z ~ N(0, 1/2)."""
    return float(gamma((1.0 + m) / 2.0) / math.sqrt(math.pi))


def shift_origin(path: WienerPath, s: float) -> WienerPath:
    """The path of theta_s w: t -> W(t + s) - W(s), on the relabelled window.

    ``s`` must be a grid time inside the window so the shifted path still
    contains its origin.
    """
    k = grid_steps(s, path.dt, "shift")
    new_origin = path.origin + k
    if not (0 <= new_origin <= path.n_steps):
        raise RangeError(f"shift {s!r} moves the origin outside [{path.t_min!r}, {path.t_max!r}]")
    return replace(path, origin=new_origin)


def tempered_sup(z: OUTrajectory, horizon: float, eps: float) -> float:
    """max over t in [-horizon, 0] of exp(eps t) |z(theta_t w)|."""
    times, vals = z.window(-horizon, 0.0)
    return float(np.max(np.exp(eps * times) * np.abs(vals)))


def export_path(path: WienerPath, fh, z: OUTrajectory | None = None) -> None:
    """Write (t, W(t), z(t)) as columnar text with 17 significant digits."""
    z = z or path.ou
    fh.write(f"# seed = {path.seed}\n")
    fh.write(f"# dt = {path.dt:.17g}\n")
    fh.write("t w z\n")
    for t, w, zz in zip(path.times, path.values, z.z_values):
        fh.write(f"{t:.17g} {w:.17g} {zz:.17g}\n")
