"""DGF1 binary grid files.

Layout (all little-endian)::

    b"DGF1" | u32 d | u32 N | u32 n | n**(d*N) float64, row-major

Densities use ``N = 1``; plans and wavefunction components use their arity.
The file stores values only, not the box, so readers supply the grid.
"""

import struct
from pathlib import Path

import numpy as np

from .exceptions import InvalidDataError

MAGIC = b"DGF1"
_HEADER = struct.Struct("<4sIII")


def write_dgf1(path, values, d, N, n):
    values = np.asarray(values, dtype="<f8")
    if values.size != n ** (d * N):
        raise InvalidDataError(f"expected {n ** (d * N)} values, got {values.size}")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, d, N, n))
        fh.write(np.ascontiguousarray(values).tobytes(order="C"))
    return path


def read_dgf1(path):
    """Return ``(d, N, n, values)`` with ``values`` shaped ``(n,) * (d * N)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidDataError(f"{path}: truncated header")
    magic, d, N, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InvalidDataError(f"{path}: bad magic {magic!r}")
    count = n ** (d * N)
    body = raw[_HEADER.size:]
    if len(body) != 8 * count:
        raise InvalidDataError(f"{path}: expected {count} values, found {len(body) // 8}")
    values = np.frombuffer(body, dtype="<f8").astype(float).reshape((n,) * (d * N))
    return d, N, n, values


def write_density(path, rho):
    g = rho.grid
    return write_dgf1(path, rho.values, g.d, 1, g.n)


def write_field(path, field):
    g = field.grid
    return write_dgf1(path, field.values, g.d, field.arity, g.n)


def _check_header(path, grid, d, n):
    if d != grid.d or n != grid.n:
        raise InvalidDataError(f"{path}: header d={d}, n={n} does not match grid d={grid.d}, n={grid.n}")


def read_density(path, grid):
    from .grid import DiscreteDensity

    d, N, n, values = read_dgf1(path)
    _check_header(path, grid, d, n)
    if N != 1:
        raise InvalidDataError(f"{path}: density files need N=1, got {N}")
    if not np.all(np.isfinite(values)) or values.min() < 0:
        raise InvalidDataError(f"{path}: negative or non-finite density values")
    return DiscreteDensity.from_masses(grid, values.ravel())


def read_field(path, grid):
    from .grid import ProductField

    d, N, n, values = read_dgf1(path)
    _check_header(path, grid, d, n)
    return ProductField(grid, N, values)
