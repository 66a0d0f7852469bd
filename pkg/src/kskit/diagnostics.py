"""Per-step invariant records, error norms and convergence-order fits."""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

__all__ = [
    "DiagRow",
    "CSV_HEADER",
    "record",
    "linf_error",
    "l2_error",
    "fit_order",
    "format_rows",
    "write_csv",
    "read_csv",
]


@dataclass(frozen=True)
class DiagRow:
    step: int
    time: float
    mass_rel_drift: float
    min_rho: float
    max_rho: float
    energy: float
    dissipation: float
    law_residual: float
    lambda_linf: float
    xi: float
    eta: float
    picard_iters: int


CSV_HEADER = tuple(f.name for f in fields(DiagRow))


def record(state) -> DiagRow:
    """Summarise a :class:`~kskit.integrators.SchemeState` as one CSV row.

    The relative mass drift is taken against the level-0 mass; for a zero
    initial mass the absolute drift is reported instead.
    """
    grid = state.grid
    mass = grid.mass(state.rho)
    scale = abs(state.mass0) if state.mass0 != 0 else 1.0
    rec = state.record
    return DiagRow(
        step=int(state.n),
        time=float(state.t),
        mass_rel_drift=abs(mass - state.mass0) / scale,
        min_rho=float(np.min(state.rho)),
        max_rho=float(np.max(state.rho)),
        energy=float(rec.E),
        dissipation=float(rec.D),
        law_residual=float(rec.law_residual),
        lambda_linf=float(np.max(np.abs(state.lam))),
        xi=float(state.xi),
        eta=float(state.eta),
        picard_iters=int(state.picard_iters),
    )


def linf_error(u, ref) -> float:
    return float(np.max(np.abs(np.asarray(u, dtype=float) - np.asarray(ref, dtype=float))))


def l2_error(u, ref, grid=None) -> float:
    """Discrete L2 error; uses the grid quadrature when ``grid`` is given, else the RMS."""
    d = np.asarray(u, dtype=float) - np.asarray(ref, dtype=float)
    if grid is not None:
        return grid.norm(d)
    return float(np.sqrt(np.mean(d * d)))


def fit_order(dts, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(dt)``."""
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if dts.shape != errors.shape or dts.ndim != 1:
        raise ValueError("dts and errors must be 1-d arrays of equal length")
    if dts.size < 2:
        raise ValueError("need at least two points to fit an order")
    if np.any(dts <= 0) or np.any(errors <= 0):
        raise ValueError("dts and errors must be positive")
    slope, _ = np.polyfit(np.log(dts), np.log(errors), 1)
    return float(slope)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def format_rows(rows) -> str:
    """CSV text with a fixed header and round-trip float formatting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow([_fmt(v) for v in astuple(row)])
    return buf.getvalue()


def write_csv(path, rows) -> Path:
    path = Path(path)
    path.write_text(format_rows(rows))
    return path


def read_csv(path) -> list[DiagRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected diagnostics header {header!r}")
        out = []
        for line in reader:
            vals = [int(v) if name in ("step", "picard_iters") else float(v) for name, v in zip(CSV_HEADER, line)]
            out.append(DiagRow(*vals))
    return out
