"""Binary checkpoints of a SpectralField.

Layout (little-endian)::

    header  '<4sIIdIQ'   magic b"TSNS", version, flags, L, N, count
    record  '<3i6d'      j1, j2, j3, Re u1, Im u1, Re u2, Im u2, Re u3, Im u3

One record per conjugate pair in the order of ``Lattice.half_space_modes``
(j = 0 first), so ``count = ((2N+1)^3 - 1) / 2 + 1``.  Flag bit 0 declares the
volume-averaged normalization (coefficients of u / L^{3/2}-scaled energy, i.e.
mean |u|^2 = sum |c_j|^2), which is the only one this package writes.
The dealias fraction is not stored; loading uses the default unless given.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import CheckpointCorruptError, CheckpointError, CheckpointInvariantError, CheckpointVersionError, ConfigError
from .spectral import Lattice, SpectralField

MAGIC = b"TSNS"
VERSION = 1
FLAG_VOLUME_AVERAGED = 1
HEADER = struct.Struct("<4sIIdIQ")
RECORD = np.dtype([("j", "<i4", 3), ("c", "<f8", 6)])
DIV_TOL = 1e-10


def encode(u: SpectralField) -> bytes:
    lat = u.lattice
    modes = lat.half_space_modes()
    idx = tuple(np.array([lat.index(j) for j in modes]).T)
    c = u.coeffs[(slice(None),) + idx].T  # (count, 3)
    rec = np.empty(len(modes), dtype=RECORD)
    rec["j"] = modes
    rec["c"] = np.stack([c.real, c.imag], axis=2).reshape(len(modes), 6)
    head = HEADER.pack(MAGIC, VERSION, FLAG_VOLUME_AVERAGED, float(lat.L), lat.N, len(modes))
    return head + rec.tobytes()


def decode(data: bytes, dealias_fraction: float = 2 / 3) -> SpectralField:
    if len(data) < HEADER.size:
        raise CheckpointCorruptError(f"truncated header ({len(data)} of {HEADER.size} bytes)")
    magic, version, flags, L, N, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointCorruptError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version} (expected {VERSION})")
    if not flags & FLAG_VOLUME_AVERAGED:
        raise CheckpointVersionError("checkpoint uses an unsupported volume normalization")
    try:
        lat = Lattice(L=L, N=N, dealias_fraction=dealias_fraction)
    except ConfigError as err:
        raise CheckpointCorruptError(f"invalid lattice in header: {err}") from None
    modes = lat.half_space_modes()
    if count != len(modes):
        raise CheckpointCorruptError(f"record count {count} does not match N={N} ({len(modes)} expected)")
    body = data[HEADER.size :]
    if len(body) != count * RECORD.itemsize:
        raise CheckpointCorruptError(f"truncated or oversized body ({len(body)} bytes, {count * RECORD.itemsize} expected)")
    rec = np.frombuffer(body, dtype=RECORD)
    if not np.array_equal(rec["j"], modes):
        bad = int(np.argmax(np.any(rec["j"] != modes, axis=1)))
        raise CheckpointCorruptError(f"record {bad} has mode {rec['j'][bad].tolist()}, expected {modes[bad].tolist()}")
    raw = rec["c"].reshape(count, 3, 2)
    c = raw[..., 0] + 1j * raw[..., 1]
    if not np.all(np.isfinite(c)):
        bad = int(np.argmax(~np.all(np.isfinite(c), axis=1)))
        raise CheckpointInvariantError(f"nonfinite coefficient at mode {modes[bad].tolist()}")
    if np.any(c[0] != 0):
        raise CheckpointInvariantError("nonzero mean: mode j=(0, 0, 0) carries a coefficient")
    arr = np.zeros(lat.shape, dtype=np.complex128)
    for (j1, j2, j3), cj in zip(modes[1:], c[1:]):
        arr[(slice(None),) + lat.index((j1, j2, j3))] = cj
        if j3 == 0:
            arr[(slice(None),) + lat.index((-j1, -j2, 0))] = np.conj(cj)
    # same relative measure as SpectralField.divergence_residual
    kdotc = np.abs(np.sum(modes[1:] * c[1:], axis=1))
    scale = np.max(np.linalg.norm(modes[1:], axis=1) * np.linalg.norm(c[1:], axis=1), initial=0.0)
    if scale > 0 and kdotc.max() > DIV_TOL * scale:
        bad = int(np.argmax(kdotc)) + 1
        raise CheckpointInvariantError(f"divergence at mode {modes[bad].tolist()} exceeds tolerance")
    return SpectralField(lat, arr)


def atomic_write(path, data: bytes | str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(u: SpectralField, path) -> None:
    try:
        atomic_write(path, encode(u))
    except OSError as err:
        raise CheckpointError(f"cannot write checkpoint {path}: {err}") from None


def load_checkpoint(path, dealias_fraction: float = 2 / 3) -> SpectralField:
    try:
        data = Path(path).read_bytes()
    except OSError as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from None
    return decode(data, dealias_fraction)
