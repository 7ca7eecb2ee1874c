"""Divergence-free Fourier fields on the periodic cube [0, L]^3.

A field is stored as complex coefficients ``c_j`` of

    u(x) = sum_j c_j exp(i (2 pi / L) j . x),     |j_i| <= N,

in a half-space layout of shape ``(3, 2N+1, 2N+1, N+1)``: the first two lattice
axes are in FFT order (0, 1, ..., N, -N, ..., -1) and the last axis holds
``j3 = 0 .. N``.  Modes with ``j3 < 0`` are implied by conjugate symmetry, so the
reality of the physical field is part of the layout.  Only the ``j3 = 0`` plane
carries both members of each conjugate pair and is kept Hermitian explicitly.

Norms are volume-averaged: ``sobolev_norm(u, 0)**2 == mean(|u(x)|^2)``, i.e. the
physical L2 energy divided by ``L**3``.

Functions whose names start with an underscore act on bare coefficient arrays
with arbitrary leading batch dimensions; the integrator uses them directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError

FFT_AXES = (-3, -2, -1)


@dataclass(frozen=True)
class Lattice:
    """Truncated Fourier lattice ``|j_i| <= N`` on a cube of side ``L``."""

    L: float = 2 * math.pi
    N: int = 8
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        problems = []
        if not (self.L > 0 and math.isfinite(self.L)):
            problems.append(f"L must be positive and finite, got {self.L!r}")
        if int(self.N) != self.N or self.N < 1:
            problems.append(f"N must be an integer >= 1, got {self.N!r}")
        if not (0 < self.dealias_fraction <= 1):
            problems.append(f"dealias_fraction must lie in (0, 1], got {self.dealias_fraction!r}")
        if problems:
            raise ConfigError(problems)
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", float(self.L))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        n = self.N
        return (3, 2 * n + 1, 2 * n + 1, n + 1)

    @cached_property
    def grid_size(self) -> int:
        """Physical points per direction for dealiased products: the smallest
        FFT-friendly length exceeding 2N / dealias_fraction (3N + 1 for the 2/3 rule)."""
        m = math.floor(2 * self.N / self.dealias_fraction + 1e-9) + 1
        return sfft.next_fast_len(m, real=True)

    @cached_property
    def lambda1(self) -> float:
        """First eigenvalue of the Stokes operator, 4 pi^2 / L^2."""
        return (2 * math.pi / self.L) ** 2

    @cached_property
    def j(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer lattice indices, broadcastable to the scalar layout."""
        n = self.N
        side = np.fft.fftfreq(2 * n + 1, 1.0 / (2 * n + 1)).round().astype(np.int64)
        return (side[:, None, None], side[None, :, None], np.arange(n + 1)[None, None, :])

    @cached_property
    def kappa(self) -> np.ndarray:
        """Physical wavevectors 2 pi j / L, shape (3, 2N+1, 2N+1, N+1)."""
        scale = 2 * math.pi / self.L
        j1, j2, j3 = self.j
        out = np.zeros(self.shape)
        out[0] = scale * j1
        out[1] = scale * j2
        out[2] = scale * j3
        out.setflags(write=False)
        return out

    @cached_property
    def mu(self) -> np.ndarray:
        """Stokes eigenvalues (2 pi / L)^2 |j|^2 per mode; zero at j = 0."""
        out = np.sum(self.kappa**2, axis=0)
        out.setflags(write=False)
        return out

    @cached_property
    def pair_weight(self) -> np.ndarray:
        """1 on the j3 = 0 plane (both pair members stored), 2 elsewhere."""
        w = np.full(self.N + 1, 2.0)
        w[0] = 1.0
        return w[None, None, :]

    def multiplier(self, s: float) -> np.ndarray:
        """mu(j)^s with the j = 0 entry set to zero."""
        mu = self.mu
        out = np.zeros_like(mu)
        nz = mu > 0
        out[nz] = mu[nz] ** s
        return out

    def index(self, j) -> tuple[int, int, int]:
        """Storage index of a lattice vector with j3 >= 0."""
        j1, j2, j3 = (int(v) for v in j)
        n = self.N
        if max(abs(j1), abs(j2), abs(j3)) > n:
            raise ConfigError(f"mode {tuple(j)} lies outside the lattice |j_i| <= {n}")
        if j3 < 0:
            raise ConfigError("storage index requires j3 >= 0")
        return (j1 % (2 * n + 1), j2 % (2 * n + 1), j3)

    def half_space_modes(self) -> np.ndarray:
        """Canonical representatives of the conjugate pairs, j = 0 first.

        Ordering: j = 0, then every j with j3 > 0, or j3 = 0 and j2 > 0, or
        j3 = j2 = 0 and j1 > 0, sorted lexicographically by (j3, j2, j1).
        """
        n = self.N
        r = np.arange(-n, n + 1)
        j3, j2, j1 = np.meshgrid(np.arange(n + 1), r, r, indexing="ij")
        j1, j2, j3 = j1.ravel(), j2.ravel(), j3.ravel()
        keep = (j3 > 0) | ((j3 == 0) & (j2 > 0)) | ((j3 == 0) & (j2 == 0) & (j1 > 0))
        modes = np.stack([j1[keep], j2[keep], j3[keep]], axis=1)
        return np.concatenate([np.zeros((1, 3), dtype=np.int64), modes]).astype(np.int64)


def _plane_reflect(plane: np.ndarray) -> np.ndarray:
    """Map a j3 = 0 plane (..., 2N+1, 2N+1) to its values at (-j1, -j2)."""
    return np.roll(np.flip(plane, axis=(-2, -1)), 1, axis=(-2, -1))


def _hermitize(arr: np.ndarray) -> np.ndarray:
    """Enforce conjugate symmetry on the j3 = 0 plane and zero the mean, in place."""
    plane = arr[..., 0]
    arr[..., 0] = 0.5 * (plane + np.conj(_plane_reflect(plane)))
    arr[..., 0, 0, 0] = 0.0
    return arr


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable zero-mean real vector field in the half-space layout.

    Construction copies ``coeffs``, zeroes the mean mode and makes the j3 = 0
    plane Hermitian.  Divergence-freeness is not imposed here; build fields
    through :func:`leray_project` when the input may have a gradient part.
    """

    lattice: Lattice
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if arr.shape != self.lattice.shape:
            raise ConfigError(f"coefficient shape {arr.shape} does not match lattice {self.lattice.shape}")
        _hermitize(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def zeros(cls, lattice: Lattice) -> "SpectralField":
        return cls(lattice, np.zeros(lattice.shape, dtype=np.complex128))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self, other)
        return SpectralField(self.lattice, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self, other)
        return SpectralField(self.lattice, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.lattice, -self.coeffs)

    def divergence_residual(self) -> float:
        """max_j |j . c_j| / max_j |j| |c_j| (0 for the zero field)."""
        kc = np.abs(np.sum(self.lattice.kappa * self.coeffs, axis=0))
        scale = np.max(np.sqrt(self.lattice.mu) * np.linalg.norm(self.coeffs, axis=0))
        return float(kc.max() / scale) if scale > 0 else 0.0

    def physical(self, grid_size: int | None = None) -> np.ndarray:
        """Real field values, shape (3, M, M, M), on the uniform grid x = L n / M."""
        return _to_physical(self.coeffs, self.lattice, grid_size)

    @classmethod
    def from_physical(cls, values: np.ndarray, lattice: Lattice) -> "SpectralField":
        """Truncated Fourier coefficients of a sampled real field (not projected)."""
        return cls(lattice, _from_physical(np.asarray(values, dtype=float), lattice))


def _check_same(a: SpectralField, b: SpectralField):
    if a.lattice != b.lattice:
        raise ConfigError(f"lattice mismatch: {a.lattice} vs {b.lattice}")


# --------------------------------------------------------------------------
# transforms

def _pad_axis(arr: np.ndarray, axis: int, n: int, m: int) -> np.ndarray:
    """Embed FFT-ordered modes -n..n along ``axis`` into a length-m FFT axis."""
    shape = list(arr.shape)
    shape[axis] = m
    out = np.zeros(shape, dtype=np.complex128)
    src_lo = [slice(None)] * arr.ndim
    src_lo[axis] = slice(0, n + 1)
    src_hi = list(src_lo)
    src_hi[axis] = slice(n + 1, 2 * n + 1)
    dst_hi = list(src_lo)
    dst_hi[axis] = slice(m - n, m)
    out[tuple(src_lo)] = arr[tuple(src_lo)]
    out[tuple(dst_hi)] = arr[tuple(src_hi)]
    return out


def _crop_axis(arr: np.ndarray, axis: int, n: int) -> np.ndarray:
    m = arr.shape[axis]
    lo = [slice(None)] * arr.ndim
    lo[axis] = slice(0, n + 1)
    hi = list(lo)
    hi[axis] = slice(m - n, m)
    return np.concatenate([arr[tuple(lo)], arr[tuple(hi)]], axis=axis)


def _to_physical(arr: np.ndarray, lattice: Lattice, grid_size: int | None = None) -> np.ndarray:
    # pruned inverse transform: pad and transform one axis at a time
    n = lattice.N
    m = grid_size or lattice.grid_size
    if m < 2 * n + 1:
        raise ConfigError(f"grid size {m} cannot hold modes |j| <= {n}")
    a = sfft.ifft(_pad_axis(arr, -3, n, m), axis=-3, norm="forward")
    a = sfft.ifft(_pad_axis(a, -2, n, m), axis=-2, norm="forward")
    pad = [(0, 0)] * (a.ndim - 1) + [(0, m // 2 - n)]
    return sfft.irfft(np.pad(a, pad), n=m, axis=-1, norm="forward")


def _from_physical(values: np.ndarray, lattice: Lattice) -> np.ndarray:
    n = lattice.N
    spec = sfft.rfftn(values, axes=FFT_AXES, norm="forward")[..., : n + 1]
    return _crop_axis(_crop_axis(spec, -2, n), -3, n)


# --------------------------------------------------------------------------
# linear operators

def _project(arr: np.ndarray, lattice: Lattice) -> np.ndarray:
    kappa = lattice.kappa
    mu = lattice.mu
    safe = np.where(mu > 0, mu, 1.0)
    kc = np.sum(kappa * arr, axis=-4, keepdims=True)
    out = arr - kappa * (kc / safe)
    out[..., 0, 0, 0] = 0.0
    return out


def leray_project(raw, lattice: Lattice | None = None) -> SpectralField:
    """Helmholtz-Leray projection ``(I - j j^T / |j|^2) c_j``; the mean mode is dropped.

    ``raw`` is a :class:`SpectralField` or a coefficient array in the lattice
    layout (then ``lattice`` is required).
    """
    if isinstance(raw, SpectralField):
        lattice, arr = raw.lattice, raw.coeffs
    else:
        if lattice is None:
            raise ConfigError("leray_project of a bare array needs a lattice")
        arr = np.asarray(raw, dtype=np.complex128)
    return SpectralField(lattice, _project(arr, lattice))


def apply_fractional_power(u: SpectralField, s: float) -> SpectralField:
    """A^s u: multiply each coefficient by mu(j)^s."""
    return SpectralField(u.lattice, u.coeffs * u.lattice.multiplier(s))


def _norm_sq(arr: np.ndarray, lattice: Lattice, s: float = 0.0) -> np.ndarray:
    dens = np.sum(arr.real**2 + arr.imag**2, axis=-4) * lattice.pair_weight
    if s != 0:
        dens = dens * lattice.multiplier(s)
    return np.sum(dens, axis=(-3, -2, -1))


def _inner(a: np.ndarray, b: np.ndarray, lattice: Lattice) -> np.ndarray:
    dens = np.sum(a.real * b.real + a.imag * b.imag, axis=-4) * lattice.pair_weight
    return np.sum(dens, axis=(-3, -2, -1))


def sobolev_norm(u: SpectralField, s: float = 0.0) -> float:
    """||A^{s/2} u|| = (sum_j mu(j)^s |c_j|^2)^{1/2}, summed over the full lattice."""
    if not (s >= 0 and math.isfinite(s)):
        raise ConfigError(f"Sobolev index must be finite and >= 0, got {s!r}")
    return float(math.sqrt(_norm_sq(u.coeffs, u.lattice, s)))


def inner(u: SpectralField, v: SpectralField) -> float:
    """Volume-averaged L2 inner product (1 / L^3) int u . v dx."""
    _check_same(u, v)
    return float(_inner(u.coeffs, v.coeffs, u.lattice))


# --------------------------------------------------------------------------
# nonlinearity

def _advective(u: np.ndarray, v: np.ndarray, lattice: Lattice) -> np.ndarray:
    """P((u . grad) v) from the advective product; arrays may be batched."""
    kappa = lattice.kappa
    # grad[k, i] = d_k v_i
    grad = 1j * kappa[:, None] * v[..., None, :, :, :, :]
    stacked = np.concatenate([u, grad.reshape(grad.shape[:-5] + (9,) + grad.shape[-3:])], axis=-4)
    phys = _to_physical(stacked, lattice)
    up = phys[..., :3, :, :, :]
    gp = phys[..., 3:, :, :, :].reshape(phys.shape[:-4] + (3, 3) + phys.shape[-3:])
    prod = np.einsum("...kxyz,...kixyz->...ixyz", up, gp)
    return _project(_from_physical(prod, lattice), lattice)


_SYM_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def _divergence_form(prods: np.ndarray, lattice: Lattice) -> np.ndarray:
    """P(div T) for a symmetric tensor given by its six independent entries."""
    t = _from_physical(prods, lattice)
    kappa = 1j * lattice.kappa
    full = [[None] * 3 for _ in range(3)]
    for idx, (a, b) in enumerate(_SYM_PAIRS):
        full[a][b] = full[b][a] = t[..., idx, :, :, :]
    out = np.stack([sum(kappa[k] * full[k][i] for k in range(3)) for i in range(3)], axis=-4)
    return _project(out, lattice)


def _self_advection(u: np.ndarray, lattice: Lattice) -> np.ndarray:
    """B(u, u) = P(div(u (x) u)); valid for divergence-free u, 3 + 6 transforms."""
    up = _to_physical(u, lattice)
    prods = np.stack([up[..., a, :, :, :] * up[..., b, :, :, :] for a, b in _SYM_PAIRS], axis=-4)
    return _divergence_form(prods, lattice)


def _symmetric_advection(u: np.ndarray, w: np.ndarray, lattice: Lattice) -> np.ndarray:
    """B(u, w) + B(w, u) for divergence-free u, w."""
    up = _to_physical(u, lattice)
    wp = _to_physical(w, lattice)
    prods = np.stack(
        [up[..., a, :, :, :] * wp[..., b, :, :, :] + wp[..., a, :, :, :] * up[..., b, :, :, :] for a, b in _SYM_PAIRS],
        axis=-4,
    )
    return _divergence_form(prods, lattice)


def nonlinear_term(u: SpectralField, v: SpectralField) -> SpectralField:
    """Dealiased B(u, v) = P((u . grad) v), truncated to the lattice."""
    _check_same(u, v)
    return SpectralField(u.lattice, _advective(u.coeffs, v.coeffs, u.lattice))


def gradient_tensor(h: SpectralField, grid_size: int | None = None) -> np.ndarray:
    """Physical d_k h_i as an array of shape (3 [i], 3 [k], M, M, M)."""
    grad = 1j * h.lattice.kappa[None, :] * h.coeffs[:, None]
    return _to_physical(grad, h.lattice, grid_size)


def sup_gradient_norm(h: SpectralField, oversample: int = 4, matrix_norm: str = "spectral") -> float:
    """max_x |grad h(x)| over a grid refined ``oversample`` times.

    ``matrix_norm`` selects the pointwise norm of the 3x3 Jacobian:
    ``"spectral"`` (largest singular value) or ``"frobenius"``.
    """
    if int(oversample) != oversample or oversample < 1:
        raise ConfigError(f"oversample must be an integer >= 1, got {oversample!r}")
    jac = gradient_tensor(h, int(oversample) * h.lattice.grid_size)
    jac = np.moveaxis(jac.reshape(9, -1), 0, -1).reshape(-1, 3, 3)
    if matrix_norm == "spectral":
        gram = np.einsum("pki,pkj->pij", jac, jac)
        top = np.linalg.eigvalsh(gram)[:, -1]
        return float(math.sqrt(max(float(top.max()), 0.0)))
    if matrix_norm == "frobenius":
        return float(math.sqrt(float(np.max(np.sum(jac**2, axis=(1, 2))))))
    raise ConfigError(f"unknown matrix norm {matrix_norm!r}")


# --------------------------------------------------------------------------
# constructors

def pair_field(lattice: Lattice, j, amplitude) -> SpectralField:
    """One conjugate pair: c_j = amplitude, c_{-j} = conj(amplitude).  Not projected."""
    j = np.asarray(j, dtype=np.int64)
    amp = np.asarray(amplitude, dtype=np.complex128)
    if not j.any():
        raise ConfigError("the j = 0 mode cannot carry a zero-mean pair")
    if j[2] < 0 or (j[2] == 0 and (j[1] < 0 or (j[1] == 0 and j[0] < 0))):
        j, amp = -j, np.conj(amp)
    arr = np.zeros(lattice.shape, dtype=np.complex128)
    arr[(slice(None),) + lattice.index(j)] = amp
    if j[2] == 0:
        arr[(slice(None),) + lattice.index([-j[0], -j[1], 0])] = np.conj(amp)
    return SpectralField(lattice, arr)


def sine_mode(lattice: Lattice, j, direction, amplitude: float = 1.0) -> SpectralField:
    """The real field amplitude * sin(2 pi j.x / L) * direction (not projected)."""
    direction = np.asarray(direction, dtype=float)
    return pair_field(lattice, j, -0.5j * amplitude * direction)


def random_field(lattice: Lattice, rng: np.random.Generator, norm: float = 1.0, slope: float = 2.0,
                 kmax: float | None = None) -> SpectralField:
    """Random divergence-free field with spectrum ~ (1 + |j|^2)^(-slope), scaled to ``norm`` in H.

    ``kmax`` zeroes every mode with |j| > kmax.
    """
    shape = lattice.shape
    arr = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    jsq = lattice.mu / lattice.lambda1
    arr *= (1.0 + jsq) ** (-slope / 2)
    if kmax is not None:
        arr[:, jsq > kmax**2 + 1e-9] = 0.0
    u = leray_project(arr, lattice)
    size = sobolev_norm(u, 0.0)
    if size == 0 or norm == 0:
        return SpectralField.zeros(lattice)
    return u * (norm / size)


def polarization_basis(lattice: Lattice) -> np.ndarray:
    """Two orthonormal real vectors perpendicular to each j, shape (2, 3, 2N+1, 2N+1, N+1)."""
    k = lattice.kappa
    mu = lattice.mu
    norm_k = np.sqrt(np.where(mu > 0, mu, 1.0))
    khat = k / norm_k
    ref = np.zeros_like(k)
    # reference axis: the coordinate axis least aligned with j
    axis = np.argmin(np.abs(khat), axis=0)
    np.put_along_axis(ref, axis[None], 1.0, axis=0)
    e1 = np.cross(khat, ref, axis=0)
    e1 /= np.maximum(np.linalg.norm(e1, axis=0), 1e-300)
    e2 = np.cross(khat, e1, axis=0)
    basis = np.stack([e1, e2])
    basis[:, :, mu == 0] = 0.0
    return basis
