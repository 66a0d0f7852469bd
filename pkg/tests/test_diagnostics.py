import numpy as np
import pytest

from kskit import Grid, ModelParams, initial_state
from kskit.diagnostics import CSV_HEADER, DiagRow, fit_order, format_rows, l2_error, linf_error, read_csv, record, write_csv


class TestRecord:
    def test_zero_state(self):
        g = Grid.square(8)
        row = record(initial_state(g, g.zeros(), g.zeros(), ModelParams()))
        assert row == DiagRow(0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0)

    def test_initial_row(self):
        g = Grid.square(8)
        X, _ = g.mesh()
        row = record(initial_state(g, 1 + 0.5 * np.cos(X), g.zeros(), ModelParams()))
        assert row.min_rho == 0.5 and row.max_rho == 1.5 and row.mass_rel_drift == 0.0


class TestErrors:
    def test_identical(self, rng):
        u = rng.normal(size=(4, 4))
        assert linf_error(u, u) == 0.0 and l2_error(u, u) == 0.0

    def test_constant_offset(self, rng):
        g = Grid.square(8)
        u = rng.normal(size=g.shape)
        assert linf_error(u + 1e-3, u) == pytest.approx(1e-3)
        assert l2_error(u + 1e-3, u, g) == pytest.approx(1e-3 * 2 * np.pi)
        assert l2_error(u + 1e-3, u) == pytest.approx(1e-3)

    def test_linf_matches_loop(self, rng):
        u, v = rng.normal(size=(5, 6)), rng.normal(size=(5, 6))
        worst = 0.0
        for i in range(5):
            for j in range(6):
                worst = max(worst, abs(u[i, j] - v[i, j]))
        assert linf_error(u, v) == worst


class TestFitOrder:
    dts = np.array([4e-5, 2e-5, 1e-5, 5e-6])

    @pytest.mark.parametrize("p", [1, 2])
    def test_exact_powers(self, p):
        assert fit_order(self.dts, 3.0 * self.dts**p) == pytest.approx(p)

    def test_noisy_synthetic(self):
        r = np.random.default_rng(7)
        dts = np.geomspace(1e-3, 1e-5, 12)
        errs = 0.4 * dts**1.98 * np.exp(r.normal(scale=0.01, size=dts.size))
        assert fit_order(dts, errs) == pytest.approx(1.98, abs=0.01)

    def test_scale_invariance(self):
        e = self.dts**1.5
        assert fit_order(self.dts * 7, e * 11) == pytest.approx(fit_order(self.dts, e))

    def test_validation(self):
        with pytest.raises(ValueError):
            fit_order([1e-3], [1e-2])
        with pytest.raises(ValueError):
            fit_order([1e-3, 1e-4], [0.0, 1e-3])


class TestCsv:
    def test_header(self):
        assert ",".join(CSV_HEADER) == (
            "step,time,mass_rel_drift,min_rho,max_rho,energy,dissipation,"
            "law_residual,lambda_linf,xi,eta,picard_iters"
        )

    def test_roundtrip_exact(self, tmp_path):
        rows = [DiagRow(1, 0.1, 1e-17, 0.0, 1 / 3, -2.5, 7.0, 1e-12, 0.0, -0.1, 3.3e-5, 4)]
        write_csv(tmp_path / "d.csv", rows)
        assert read_csv(tmp_path / "d.csv") == rows
        assert format_rows(rows).splitlines()[1].startswith("1,0.10000000000000001,")
