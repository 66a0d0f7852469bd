"""Periodic uniform grid and the discrete inner product.

Nodal fields are plain ``numpy`` arrays of shape ``(ny, nx)``: the first
index runs over ``y`` and the second over ``x`` (row-major, ``x`` fastest).
Every quadrature in the package, mass included, goes through
:meth:`Grid.inner` so that all norms share the same weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = ["Grid", "GridMismatchError", "write_snapshot", "read_snapshot"]


class GridMismatchError(ValueError):
    """Raised when a field does not live on the grid it is used with."""


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on the periodic box ``[0, lx) x [0, ly)``.

    Parameters
    ----------
    nx, ny : int
        Number of collocation points per axis. Must be positive and even.
    lx, ly : float
        Domain lengths.
    """

    nx: int
    ny: int
    lx: float = 2 * np.pi
    ly: float = 2 * np.pi

    def __post_init__(self) -> None:
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if int(n) != n or n <= 0 or n % 2:
                raise ValueError(f"{name} must be a positive even integer, got {n!r}")
            object.__setattr__(self, name, int(n))
        for name in ("lx", "ly"):
            length = float(getattr(self, name))
            if not np.isfinite(length) or length <= 0:
                raise ValueError(f"{name} must be positive and finite, got {length!r}")
            object.__setattr__(self, name, length)

    @classmethod
    def square(cls, n: int, length: float = 2 * np.pi) -> Grid:
        return cls(n, n, length, length)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def weight(self) -> float:
        """Quadrature weight shared by every node."""
        return (self.lx / self.nx) * (self.ly / self.ny)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.shape, self.weight)

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * (self.lx / self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * (self.ly / self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return nodal coordinate arrays ``(X, Y)`` of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y, indexing="xy")

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def full(self, value: float) -> np.ndarray:
        return np.full(self.shape, float(value))

    def field(self, u) -> np.ndarray:
        """Validate ``u`` as a nodal field on this grid and return it as float array.

        Accepts arrays of shape ``(ny, nx)`` or flat arrays in row-major order.
        """
        arr = np.asarray(u, dtype=float)
        if arr.shape == (self.size,):
            arr = arr.reshape(self.shape)
        if arr.shape != self.shape:
            raise GridMismatchError(
                f"field of shape {arr.shape} does not match grid {self.shape}"
            )
        return arr

    # -- quadrature -----------------------------------------------------

    def inner(self, u, v) -> float:
        """Discrete inner product ``sum_z w_z u(z) v(z)``."""
        u = self.field(u)
        v = self.field(v)
        return self.weight * float(np.sum(u * v))

    def mass(self, u) -> float:
        return self.weight * float(np.sum(self.field(u)))

    def norm(self, u) -> float:
        return float(np.sqrt(self.inner(u, u)))

    def linf(self, u) -> float:
        return float(np.max(np.abs(self.field(u))))

    def min_val(self, u) -> float:
        return float(np.min(self.field(u)))

    def max_val(self, u) -> float:
        return float(np.max(self.field(u)))

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "lx": self.lx, "ly": self.ly}


def write_snapshot(path, u, grid: Grid, time: float, name: str) -> tuple[Path, Path]:
    """Write ``u`` as raw little-endian float64 plus a JSON sidecar.

    ``path`` is the stem; ``<path>.bin`` and ``<path>.json`` are created.
    """
    stem = Path(path)
    data = grid.field(u)
    bin_path = stem.with_name(stem.name + ".bin")
    meta_path = stem.with_name(stem.name + ".json")
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    bin_path.write_bytes(np.ascontiguousarray(data, dtype="<f8").tobytes())
    meta = dict(grid.to_dict(), time=float(time), name=str(name))
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return bin_path, meta_path


def read_snapshot(path) -> tuple[np.ndarray, Grid, dict]:
    """Inverse of :func:`write_snapshot`; returns ``(field, grid, metadata)``."""
    stem = Path(path)
    if stem.suffix in (".bin", ".json"):
        stem = stem.with_suffix("")
    meta = json.loads(stem.with_name(stem.name + ".json").read_text())
    grid = Grid(meta["nx"], meta["ny"], meta["lx"], meta["ly"])
    raw = np.frombuffer(stem.with_name(stem.name + ".bin").read_bytes(), dtype="<f8")
    if raw.size != grid.size:
        raise GridMismatchError(
            f"snapshot holds {raw.size} values, metadata expects {grid.size}"
        )
    return raw.reshape(grid.shape).astype(float), grid, meta
