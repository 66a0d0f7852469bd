"""Fourier collocation operators on a periodic :class:`~kskit.grid.Grid`.

All derivatives are exact for band-limited fields. The Nyquist mode is
dropped from first derivatives (symmetric convention) and kept in the
Laplacian, so ``divergence(gradient(u))`` equals ``laplacian(u)`` only for
fields without Nyquist content.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .grid import Grid

__all__ = ["SpectralOps", "spectral_ops", "LogDomainError"]


class LogDomainError(ValueError):
    """A logarithm was requested at a node where its argument is not positive."""

    def __init__(self, message: str, index: tuple[int, ...] | None = None):
        super().__init__(message)
        self.index = index


class SpectralOps:
    """Transforms, differential operators and constant-coefficient solves.

    Parameters
    ----------
    grid : Grid
    dealias : bool
        Apply the 2/3 rule to :meth:`nodal_product`. Off by default since the
        schemes evaluate every nonlinearity pointwise at the nodes.
    """

    def __init__(self, grid: Grid, dealias: bool = False):
        self.grid = grid
        self.dealias = dealias
        nx, ny = grid.nx, grid.ny
        kx = 2 * np.pi / grid.lx * np.arange(nx // 2 + 1)
        ky = 2 * np.pi / grid.ly * np.fft.fftfreq(ny, 1.0 / ny)
        self.kx = kx[np.newaxis, :]
        self.ky = ky[:, np.newaxis]
        self.k2 = self.kx**2 + self.ky**2
        # odd derivatives: zero the Nyquist wavenumber on each axis
        ikx = 1j * kx.copy()
        ikx[nx // 2] = 0.0
        iky = 1j * ky.copy()
        iky[ny // 2] = 0.0
        self.ikx = ikx[np.newaxis, :]
        self.iky = iky[:, np.newaxis]
        mx = np.abs(np.arange(nx // 2 + 1)) < nx / 3.0
        my = np.abs(np.fft.fftfreq(ny, 1.0 / ny)) < ny / 3.0
        self.dealias_mask = my[:, np.newaxis] & mx[np.newaxis, :]
        # solve counter, used by the operation-count checks
        self.n_solves = 0

    # -- transforms -------------------------------------------------------

    def forward(self, u: np.ndarray) -> np.ndarray:
        return np.fft.rfft2(u)

    def inverse(self, uh: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(uh, s=self.grid.shape)

    # -- differential operators ------------------------------------------

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        return self.inverse(-self.k2 * self.forward(u))

    def gradient(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        uh = self.forward(u)
        return self.inverse(self.ikx * uh), self.inverse(self.iky * uh)

    def divergence(self, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
        return self.inverse(self.ikx * self.forward(fx) + self.iky * self.forward(fy))

    def helmholtz_solve(self, a: float, b: float, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(a I - b Laplacian) x = rhs``.

        Requires ``a > 0`` and ``b >= 0`` so that every Fourier mode, the mean
        included, is invertible.
        """
        if not a > 0:
            raise ValueError(f"helmholtz_solve needs a > 0 (mean mode), got a={a!r}")
        if b < 0:
            raise ValueError(f"helmholtz_solve needs b >= 0, got b={b!r}")
        self.n_solves += 1
        return self.inverse(self.forward(rhs) / (a + b * self.k2))

    def helmholtz_apply(self, a: float, b: float, u: np.ndarray) -> np.ndarray:
        return a * u - b * self.laplacian(u)

    # -- pointwise nonlinearities ----------------------------------------

    def nodal_product(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        w = u * v
        if self.dealias:
            w = self.inverse(self.dealias_mask * self.forward(w))
        return w

    def nodal_log_shift(self, u: np.ndarray, sigma: float) -> np.ndarray:
        return log_shift(u, sigma)


def log_shift(u: np.ndarray, sigma: float) -> np.ndarray:
    """``log(u + sigma)`` with a domain check that names the first bad node."""
    arg = np.asarray(u, dtype=float) + sigma
    bad = ~(arg > 0)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise LogDomainError(
            f"log argument u + sigma = {arg[idx]!r} <= 0 at node {idx}", index=idx
        )
    return np.log(arg)


@lru_cache(maxsize=16)
def spectral_ops(grid: Grid, dealias: bool = False) -> SpectralOps:
    """Shared operator workspace for ``grid``."""
    return SpectralOps(grid, dealias=dealias)
