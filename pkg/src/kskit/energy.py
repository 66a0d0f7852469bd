"""Discrete free energies, dissipation functionals and the scalar energy correction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .grid import Grid
from .models import ModelKind, ModelParams, sensitivity
from .spectral import LogDomainError, log_shift, spectral_ops

__all__ = [
    "EnergyRecord",
    "EnergyCorrectionError",
    "energy_type1",
    "energy_type2",
    "free_energy",
    "dissipation_type1",
    "dissipation_type2",
    "dissipation",
    "solve_eta_cn",
    "solve_eta_bdf",
]


class EnergyCorrectionError(ArithmeticError):
    """The scalar energy equation has no solution (zero total mass)."""


@dataclass
class EnergyRecord:
    E: float
    D: float
    eta: float
    law_residual: float


def _check_log(arg: np.ndarray, coeff: np.ndarray, what: str) -> None:
    # x log(y) with y <= 0 is only admissible where x vanishes
    bad = (arg <= 0) & (coeff != 0)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise LogDomainError(f"{what} = {arg[idx]!r} <= 0 at node {idx}", index=idx)


def _dirichlet(grid: Grid, c: np.ndarray) -> np.ndarray:
    cx, cy = spectral_ops(grid).gradient(c)
    return 0.5 * (cx * cx + cy * cy)


def energy_type1(grid: Grid, rho, c, sigma: float = 1e-10) -> float:
    """``[rho log(rho + sigma) - rho - rho c + |grad c|^2 / 2, 1]``."""
    rho = grid.field(rho)
    c = grid.field(c)
    _check_log(rho + sigma, rho, "rho + sigma")
    dens = xlogy(rho, rho + sigma) - rho - rho * c + _dirichlet(grid, c)
    return grid.mass(dens)


def energy_type2(grid: Grid, rho, c, M: float, sigma: float = 1e-10) -> float:
    """``[rho log(rho + sigma) + (M - rho) log(1 - rho/M + sigma) - rho c + |grad c|^2 / 2, 1]``."""
    rho = grid.field(rho)
    c = grid.field(c)
    _check_log(rho + sigma, rho, "rho + sigma")
    vac = M - rho
    _check_log(1.0 - rho / M + sigma, vac, "1 - rho/M + sigma")
    dens = xlogy(rho, rho + sigma) + xlogy(vac, 1.0 - rho / M + sigma) - rho * c + _dirichlet(grid, c)
    return grid.mass(dens)


def free_energy(grid: Grid, rho, c, params: ModelParams) -> float:
    if params.kind is ModelKind.TYPE_II:
        return energy_type2(grid, rho, c, params.M, params.sigma)
    return energy_type1(grid, rho, c, params.sigma)


def _dissipation(grid: Grid, weight, rho, c_tilde, dc_dt, sigma) -> float:
    ops = spectral_ops(grid)
    gx, gy = ops.gradient(log_shift(rho, sigma) - c_tilde)
    dc_dt = grid.field(dc_dt)
    return grid.mass(weight * (gx * gx + gy * gy) + dc_dt * dc_dt)


def dissipation_type1(grid: Grid, rho_half, c_tilde_half, dc_dt, sigma: float = 1e-10) -> float:
    """``[rho |grad(log(rho + sigma) - c)|^2 + dc_dt^2, 1]``.

    The log is taken nodally with the ``sigma`` shift and differentiated
    spectrally; nodes where ``rho`` vanishes carry zero weight.
    """
    rho = grid.field(rho_half)
    return _dissipation(grid, rho, rho, grid.field(c_tilde_half), dc_dt, sigma)


def dissipation_type2(grid: Grid, rho, c_tilde, dc_dt, M: float, sigma: float = 1e-10) -> float:
    """Same as :func:`dissipation_type1` with weight ``rho (M - rho) / M``."""
    rho = grid.field(rho)
    return _dissipation(grid, sensitivity(rho, M), rho, grid.field(c_tilde), dc_dt, sigma)


def dissipation(grid: Grid, rho, c_tilde, dc_dt, params: ModelParams) -> float:
    if params.kind is ModelKind.TYPE_II:
        return dissipation_type2(grid, rho, c_tilde, dc_dt, params.M, params.sigma)
    return dissipation_type1(grid, rho, c_tilde, dc_dt, params.sigma)


def _correct(grid, history_E, alpha, rho_new, c_tilde_new, diss, dt, params):
    # E(rho, c + k) = E(rho, c) - k [rho, 1]: the energy is affine in a constant shift of c
    target = (history_E - dt * diss) / alpha
    e_pred = free_energy(grid, rho_new, c_tilde_new, params)
    m = grid.mass(rho_new)
    defect = e_pred - target
    if m == 0:
        if abs(defect) > 1e-12 * (1.0 + abs(target)):
            raise EnergyCorrectionError(
                "zero total mass: the energy correction is not solvable"
            )
        shift = 0.0
    else:
        shift = defect / m
    c_new = c_tilde_new + shift
    E_new = free_energy(grid, rho_new, c_new, params)
    residual = (alpha * E_new - history_E) / dt + diss
    return shift, c_new, E_new, residual


def solve_eta_cn(grid: Grid, E_prev: float, rho_new, c_tilde_new, diss: float, dt: float, params: ModelParams):
    """Energy correction for the Crank-Nicolson schemes.

    Finds the scalar ``eta`` such that ``c_new = c_tilde_new + dt/eps * eta``
    satisfies ``(E(rho_new, c_new) - E_prev) / dt = -diss``.

    Returns
    -------
    record : EnergyRecord
        ``E`` is the energy of ``(rho_new, c_new)`` and ``law_residual`` the
        defect ``(E - E_prev)/dt + diss`` actually achieved.
    c_new : ndarray
    """
    shift, c_new, E_new, residual = _correct(
        grid, E_prev, 1.0, rho_new, c_tilde_new, diss, dt, params
    )
    eta = shift * params.eps / dt
    return EnergyRecord(E_new, diss, eta, residual), c_new


def solve_eta_bdf(grid: Grid, A_E: float, alpha: float, rho_new, c_tilde_new, diss: float, dt: float, params: ModelParams):
    """BDF variant: enforces ``(alpha E_new - A_E) / dt = -diss``.

    ``A_E`` is the backward-difference stencil applied to the stored energy
    history; ``c_new = c_tilde_new + dt / (eps * alpha) * eta``.
    """
    shift, c_new, E_new, residual = _correct(
        grid, A_E, alpha, rho_new, c_tilde_new, diss, dt, params
    )
    eta = shift * params.eps * alpha / dt
    return EnergyRecord(E_new, diss, eta, residual), c_new
