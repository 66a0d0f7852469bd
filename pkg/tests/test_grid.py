import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kskit import Grid, read_snapshot, write_snapshot
from kskit.grid import GridMismatchError

# 10 exp(-10 r^2) on the 64^2 grid, summed node by node in pure Python
MASS_GAUSS_64 = 3.141592653589791


class TestGridConstruction:
    def test_defaults(self):
        g = Grid(8, 4)
        assert g.shape == (4, 8)
        assert g.area == pytest.approx(4 * np.pi**2)
        assert g.weight == pytest.approx(g.area / 32)

    @pytest.mark.parametrize("nx", [0, -2, 7, 2.5])
    def test_rejects_bad_sizes(self, nx):
        with pytest.raises(ValueError):
            Grid(nx, 8)

    def test_rejects_bad_length(self):
        with pytest.raises(ValueError):
            Grid(8, 8, lx=-1.0)

    def test_field_accepts_flat_row_major(self):
        g = Grid(4, 2)
        u = g.field(np.arange(8.0))
        assert u.shape == (2, 4)
        assert u[1, 0] == 4.0

    def test_field_mismatch(self):
        with pytest.raises(GridMismatchError):
            Grid(4, 4).field(np.zeros((4, 3)))

    def test_mesh_orientation(self):
        g = Grid(8, 4)
        X, Y = g.mesh()
        assert np.all(X[0] == g.x)
        assert np.all(Y[:, 0] == g.y)


class TestQuadrature:
    def test_constant(self):
        for n in (2, 8, 32):
            g = Grid.square(n)
            assert g.inner(g.full(1.0), g.full(1.0)) == pytest.approx((2 * np.pi) ** 2, rel=1e-14)

    def test_cos_sin_orthogonal(self, grid16):
        X, _ = grid16.mesh()
        assert abs(grid16.inner(np.cos(X), np.sin(X))) < 1e-13

    def test_cos_squared_exact(self, grid16):
        X, _ = grid16.mesh()
        assert grid16.inner(np.cos(X), np.cos(X)) == pytest.approx(2 * np.pi**2, rel=1e-14)

    def test_mass(self, grid16):
        X, _ = grid16.mesh()
        assert grid16.mass(grid16.full(1.0)) == pytest.approx((2 * np.pi) ** 2)
        assert abs(grid16.mass(np.cos(X))) < 1e-13

    def test_mass_gaussian_regression(self):
        g = Grid.square(64)
        X, Y = g.mesh()
        u = 10 * np.exp(-10 * (X - np.pi) ** 2 - 10 * (Y - np.pi) ** 2)
        assert g.mass(u) == pytest.approx(MASS_GAUSS_64, rel=1e-14)
        # the continuous integral is pi; spectral accuracy makes the sum agree
        assert g.mass(u) == pytest.approx(math.pi, rel=1e-12)

    def test_reductions(self, grid16):
        z = grid16.zeros()
        assert grid16.linf(z) == grid16.min_val(z) == grid16.max_val(z) == 0.0
        X, _ = grid16.mesh()
        assert grid16.min_val(np.cos(X)) == pytest.approx(-1.0)
        assert grid16.max_val(np.cos(X)) == 1.0

    @given(st.integers(0, 2**32 - 1))
    def test_inner_symmetric(self, seed):
        g = Grid(8, 6)
        r = np.random.default_rng(seed)
        u, v = r.normal(size=g.shape), r.normal(size=g.shape)
        a, b = g.inner(u, v), g.inner(v, u)
        assert abs(a - b) <= 1e-13 * max(1.0, abs(a))


class TestSnapshots:
    def test_roundtrip(self, tmp_path, rng):
        g = Grid(8, 4, 3.0, 2.0)
        u = rng.normal(size=g.shape)
        bin_path, meta_path = write_snapshot(tmp_path / "rho_t", u, g, 0.125, "rho")
        assert bin_path.stat().st_size == 8 * g.size
        v, g2, meta = read_snapshot(tmp_path / "rho_t")
        assert g2 == g
        assert np.array_equal(u, v)
        assert meta["time"] == 0.125 and meta["name"] == "rho"
