"""Structure-preserving time steppers and the semi-implicit baseline.

Every preserving step has the same four stages:

1. predictor for ``c`` (one constant-coefficient Helmholtz solve),
2. predictor for ``rho`` (Picard loop for the positivity schemes, where the
   convected density is implicit; a single Helmholtz solve for the bound
   schemes, where convection is extrapolated),
3. correction: projection onto the admissible set at fixed mass,
4. energy correction: constant shift of ``c`` so the discrete energy law
   holds exactly.

Histories are stored newest first, so ``hist_rho[0]`` is ``rho^n`` and
``hist_rho[1]`` is ``rho^{n-1}``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .energy import EnergyRecord, dissipation, free_energy, solve_eta_bdf, solve_eta_cn
from .grid import Grid
from .models import ModelKind, ModelParams
from .projection import ProjectionResult, project_bounds_mass, project_positive_mass
from .spectral import LogDomainError, SpectralOps, spectral_ops

__all__ = [
    "BdfTableau",
    "bdf_tableau",
    "SchemeState",
    "StepFailure",
    "Scheme",
    "parse_scheme",
    "initial_state",
    "implicit_cd_solve",
    "cn_positivity_step",
    "bdf_positivity_step",
    "cn_bound_step",
    "bdf_bound_step",
    "semi_implicit_step",
    "step",
    "bootstrap",
    "simulate",
]

HISTORY_DEPTH = 4


class StepFailure(RuntimeError):
    """A time step could not be completed (solver breakdown, domain error)."""


@dataclass(frozen=True)
class BdfTableau:
    """BDF-k stencils; each coefficient tuple acts on ``(u^n, u^{n-1}, ...)``.

    ``alpha u^{n+1} - A(u)`` is the backward difference, ``B`` extrapolates the
    multiplier source (order ``k - 1``) and ``C`` extrapolates to ``t^{n+1}``.
    """

    k: int
    alpha: float
    A: tuple[float, ...]
    B: tuple[float, ...]
    C: tuple[float, ...]

    @staticmethod
    def combine(coeffs, hist):
        if len(hist) < len(coeffs):
            raise ValueError(f"stencil needs {len(coeffs)} history levels, got {len(hist)}")
        out = coeffs[0] * hist[0]
        for a, u in zip(coeffs[1:], hist[1:]):
            out = out + a * u
        return out

    def apply_A(self, hist):
        return self.combine(self.A, hist)

    def apply_B(self, hist):
        return self.combine(self.B, hist)

    def apply_C(self, hist):
        return self.combine(self.C, hist)


_F = Fraction
_TABLEAUX = {
    1: (_F(1), (_F(1),), (_F(1),), (_F(1),)),
    2: (_F(3, 2), (_F(2), _F(-1, 2)), (_F(1),), (_F(2), _F(-1))),
    3: (
        _F(11, 6),
        (_F(3), _F(-3, 2), _F(1, 3)),
        (_F(2), _F(-1)),
        (_F(3), _F(-3), _F(1)),
    ),
    4: (
        _F(25, 12),
        (_F(4), _F(-3), _F(4, 3), _F(-1, 4)),
        (_F(3), _F(-3), _F(1)),
        (_F(4), _F(-6), _F(4), _F(-1)),
    ),
}


def bdf_tableau(k: int) -> BdfTableau:
    if k not in _TABLEAUX:
        raise ValueError(f"BDF order must be 1..4, got {k!r}")
    alpha, A, B, C = _TABLEAUX[k]
    as_float = lambda t: tuple(float(x) for x in t)  # noqa: E731
    return BdfTableau(k, float(alpha), as_float(A), as_float(B), as_float(C))


# -- schemes -------------------------------------------------------------


@dataclass(frozen=True)
class Scheme:
    family: str  # "cn_pos", "bdf_pos", "cn_bound", "bdf_bound", "semi_implicit"
    k: int = 2

    @property
    def name(self) -> str:
        return f"{self.family}{self.k}" if self.family.startswith("bdf") else self.family

    @property
    def preserves_bounds(self) -> bool:
        return self.family in ("cn_bound", "bdf_bound")

    @property
    def preserves_positivity(self) -> bool:
        return self.family in ("cn_pos", "bdf_pos")

    @property
    def structure_preserving(self) -> bool:
        return self.family != "semi_implicit"

    @property
    def order(self) -> int:
        return self.k if self.family.startswith("bdf") else 2

    @property
    def levels_needed(self) -> int:
        return self.k if self.family.startswith("bdf") else 2

    def check_model(self, params: ModelParams) -> None:
        if self.preserves_bounds and params.kind is not ModelKind.TYPE_II:
            raise ValueError(f"scheme {self.name} needs a type-II model with M")
        if self.preserves_positivity and params.kind is not ModelKind.TYPE_I:
            raise ValueError(f"scheme {self.name} is for the type-I model")

    def __str__(self) -> str:
        return self.name


_SCHEME_RE = re.compile(r"^(cn_pos|cn_bound|semi_implicit|bdf_pos|bdf_bound)(?:\(?(\d)\)?)?$")


def parse_scheme(name) -> Scheme:
    """Parse ``cn_pos``, ``bdf_pos2`` / ``bdf_pos(2)``, ``cn_bound``, ``bdf_bound(k)``, ``semi_implicit``."""
    if isinstance(name, Scheme):
        return name
    m = _SCHEME_RE.match(str(name).strip())
    if not m:
        raise ValueError(f"unknown scheme {name!r}")
    family, digits = m.groups()
    if family.startswith("bdf"):
        if digits is None:
            raise ValueError(f"scheme {name!r} needs an order, e.g. {family}2")
        k = int(digits)
        if not 1 <= k <= 4:
            raise ValueError(f"BDF order must be 1..4, got {k}")
        return Scheme(family, k)
    if digits is not None:
        raise ValueError(f"scheme {family} takes no order")
    return Scheme(family, 2)


# -- state ---------------------------------------------------------------


@dataclass(frozen=True)
class SchemeState:
    """Solution and multiplier data at time level ``n``.

    ``source`` is the multiplier term fed to the next predictor
    (``lam + xi`` or ``lam g'(rho) + xi``).
    """

    grid: Grid
    n: int
    t: float
    rho: np.ndarray
    c: np.ndarray
    lam: np.ndarray
    xi: float
    eta: float
    source: np.ndarray
    mass0: float
    record: EnergyRecord
    hist_rho: tuple = ()
    hist_c: tuple = ()
    hist_source: tuple = ()
    hist_E: tuple = ()
    picard_iters: int = 0
    scheme: str = ""

    @property
    def E(self) -> float:
        return self.record.E

    @property
    def levels(self) -> int:
        return len(self.hist_rho)


def _push(hist, value):
    return ((value,) + tuple(hist))[:HISTORY_DEPTH]


def initial_state(grid: Grid, rho0, c0, params: ModelParams) -> SchemeState:
    """Level-0 state with zero multipliers and the energy of the initial data."""
    rho0 = grid.field(rho0).copy()
    c0 = grid.field(c0).copy()
    E0 = _energy_or_nan(grid, rho0, c0, params)
    zero = grid.zeros()
    return SchemeState(
        grid=grid,
        n=0,
        t=0.0,
        rho=rho0,
        c=c0,
        lam=zero,
        xi=0.0,
        eta=0.0,
        source=zero.copy(),
        mass0=grid.mass(rho0),
        record=EnergyRecord(E0, 0.0, 0.0, 0.0),
        hist_rho=(rho0,),
        hist_c=(c0,),
        hist_source=(zero.copy(),),
        hist_E=(E0,),
    )


def _energy_or_nan(grid, rho, c, params):
    try:
        return free_energy(grid, rho, c, params)
    except LogDomainError:
        return float("nan")


def _advance(state, dt, rho, c, proj, record, iters, scheme):
    return replace(
        state,
        n=state.n + 1,
        t=(state.n + 1) * dt,
        rho=rho,
        c=c,
        lam=proj.lam,
        xi=proj.xi,
        eta=record.eta,
        source=proj.source,
        record=record,
        hist_rho=_push(state.hist_rho, rho),
        hist_c=_push(state.hist_c, c),
        hist_source=_push(state.hist_source, proj.source),
        hist_E=_push(state.hist_E, record.E),
        picard_iters=iters,
        scheme=scheme,
    )


# -- linear solves ---------------------------------------------------------


def implicit_cd_solve(
    ops: SpectralOps,
    a: float,
    b: float,
    w: tuple[np.ndarray, np.ndarray],
    rhs: np.ndarray,
    chi_coef: float,
    x0: np.ndarray | None = None,
    tol: float = 1e-12,
    max_iter: int = 200,
):
    """Solve ``(a I - b Laplacian) x + chi_coef div(x w) = rhs`` for a frozen wind ``w``.

    Picard iteration preconditioned by the constant-coefficient part::

        x <- (a I - b Laplacian)^{-1} (rhs - chi_coef div(x w))

    Stops when the max-norm update falls below ``tol`` relative to ``x``.

    Returns
    -------
    x : ndarray
    iterations : int
        Number of Helmholtz solves performed.
    residual : float
        Max-norm residual of the full operator relative to ``rhs``.
    """
    wx, wy = w
    if chi_coef == 0 or (not np.any(wx) and not np.any(wy)):
        x = ops.helmholtz_solve(a, b, rhs)
        return x, 1, 0.0

    x = np.zeros_like(rhs) if x0 is None else np.asarray(x0, dtype=float)
    for it in range(1, max_iter + 1):
        x_new = ops.helmholtz_solve(
            a, b, rhs - chi_coef * ops.divergence(ops.nodal_product(x, wx), ops.nodal_product(x, wy))
        )
        update = float(np.max(np.abs(x_new - x)))
        size = float(np.max(np.abs(x_new)))
        x = x_new
        if not np.isfinite(update):
            break
        if update <= tol * size or size == 0:
            op = ops.helmholtz_apply(a, b, x) + chi_coef * ops.divergence(
                ops.nodal_product(x, wx), ops.nodal_product(x, wy)
            )
            scale = max(float(np.max(np.abs(rhs))), np.finfo(float).tiny)
            return x, it, float(np.max(np.abs(op - rhs))) / scale
    raise StepFailure(
        f"Picard iteration did not converge in {max_iter} iterations "
        f"(last update {update:.3e}); try a smaller time step"
    )


def _flux_div(ops, weight, c):
    gx, gy = ops.gradient(c)
    return ops.divergence(ops.nodal_product(weight, gx), ops.nodal_product(weight, gy))


# -- preserving steps -------------------------------------------------------


def _require_levels(state, needed, name):
    if state.levels < needed:
        raise ValueError(
            f"{name} needs {needed} history levels, state has {state.levels}; use bootstrap()"
        )


def cn_positivity_step(state: SchemeState, params: ModelParams, dt: float, *, tol: float = 1e-12, max_iter: int = 200) -> SchemeState:
    """Crank-Nicolson positivity-preserving step (type-I model)."""
    _require_levels(state, 2, "cn_positivity_step")
    g, p = state.grid, params
    ops = spectral_ops(g)
    rho_n, rho_nm1 = state.hist_rho[:2]
    c_n = state.c
    s_n = state.source

    a = p.eps / dt
    c_t = ops.helmholtz_solve(
        a, 0.5 * p.mu, a * c_n + 0.5 * p.mu * ops.laplacian(c_n) + 1.5 * rho_n - 0.5 * rho_nm1
    )
    c_half = 0.5 * (c_t + c_n)
    w = ops.gradient(c_half)
    rhs = (
        rho_n / dt
        + 0.5 * p.gamma * ops.laplacian(rho_n)
        - 0.5 * p.chi * ops.divergence(ops.nodal_product(rho_n, w[0]), ops.nodal_product(rho_n, w[1]))
        + s_n
    )
    rho_t, iters, _ = implicit_cd_solve(
        ops, 1.0 / dt, 0.5 * p.gamma, w, rhs, 0.5 * p.chi, x0=rho_n, tol=tol, max_iter=max_iter
    )

    cmul = 0.5 * dt
    proj = project_positive_mass(rho_t - cmul * s_n, state.mass0, cmul, g.weight)
    rho = proj.rho

    D = dissipation(g, 0.5 * (rho + rho_n), c_half, (c_t - c_n) / dt, p)
    record, c = solve_eta_cn(g, state.E, rho, c_t, D, dt, p)
    return _advance(state, dt, rho, c, proj, record, iters, "cn_pos")


def bdf_positivity_step(
    state: SchemeState, params: ModelParams, dt: float, k: int = 2, *, tol: float = 1e-12, max_iter: int = 200
) -> SchemeState:
    """BDF-k positivity-preserving step. Uses order ``min(k, levels)`` during startup."""
    order = min(k, state.levels)
    tab = bdf_tableau(order)
    g, p = state.grid, params
    ops = spectral_ops(g)
    al = tab.alpha

    A_c = tab.apply_A(state.hist_c)
    c_t = ops.helmholtz_solve(p.eps * al / dt, p.mu, p.eps * A_c / dt + tab.apply_C(state.hist_rho))
    w = ops.gradient(c_t)
    B_s = tab.apply_B(state.hist_source)
    rhs = tab.apply_A(state.hist_rho) / dt + B_s
    rho_t, iters, _ = implicit_cd_solve(
        ops, al / dt, p.gamma, w, rhs, p.chi, x0=state.rho, tol=tol, max_iter=max_iter
    )

    cmul = dt / al
    proj = project_positive_mass(rho_t - cmul * B_s, state.mass0, cmul, g.weight)
    rho = proj.rho

    D = dissipation(g, rho, c_t, (al * c_t - A_c) / dt, p)
    record, c = solve_eta_bdf(g, tab.apply_A(state.hist_E), al, rho, c_t, D, dt, p)
    return _advance(state, dt, rho, c, proj, record, iters, f"bdf_pos{k}")


def cn_bound_step(state: SchemeState, params: ModelParams, dt: float) -> SchemeState:
    """Crank-Nicolson bound-preserving step (type-II model).

    Convection is fully explicit: ``S(3/2 rho^n - 1/2 rho^{n-1})`` transported
    along ``grad(3/2 c^n - 1/2 c^{n-1})``.
    """
    _require_levels(state, 2, "cn_bound_step")
    g, p = state.grid, params
    ops = spectral_ops(g)
    rho_n, rho_nm1 = state.hist_rho[:2]
    c_n, c_nm1 = state.hist_c[:2]
    s_n = state.source

    a = p.eps / dt
    c_t = ops.helmholtz_solve(
        a, 0.5 * p.mu, a * c_n + 0.5 * p.mu * ops.laplacian(c_n) + 1.5 * rho_n - 0.5 * rho_nm1
    )
    rho_bar = 1.5 * rho_n - 0.5 * rho_nm1
    c_bar = 1.5 * c_n - 0.5 * c_nm1
    rhs = (
        rho_n / dt
        + 0.5 * p.gamma * ops.laplacian(rho_n)
        - p.chi * _flux_div(ops, p.sensitivity(rho_bar), c_bar)
        + s_n
    )
    rho_t = ops.helmholtz_solve(1.0 / dt, 0.5 * p.gamma, rhs)

    cmul = 0.5 * dt
    proj = project_bounds_mass(rho_t - cmul * s_n, p.M, state.mass0, cmul, g.weight)
    rho = proj.rho

    c_half = 0.5 * (c_t + c_n)
    D = dissipation(g, 0.5 * (rho + rho_n), c_half, (c_t - c_n) / dt, p)
    record, c = solve_eta_cn(g, state.E, rho, c_t, D, dt, p)
    return _advance(state, dt, rho, c, proj, record, 0, "cn_bound")


def bdf_bound_step(state: SchemeState, params: ModelParams, dt: float, k: int = 2) -> SchemeState:
    """BDF-k bound-preserving step (type-II model), explicit extrapolated convection."""
    order = min(k, state.levels)
    tab = bdf_tableau(order)
    g, p = state.grid, params
    ops = spectral_ops(g)
    al = tab.alpha

    A_c = tab.apply_A(state.hist_c)
    rho_bar = tab.apply_C(state.hist_rho)
    c_t = ops.helmholtz_solve(p.eps * al / dt, p.mu, p.eps * A_c / dt + rho_bar)
    c_bar = tab.apply_C(state.hist_c)
    B_s = tab.apply_B(state.hist_source)
    rhs = tab.apply_A(state.hist_rho) / dt - p.chi * _flux_div(ops, p.sensitivity(rho_bar), c_bar) + B_s
    rho_t = ops.helmholtz_solve(al / dt, p.gamma, rhs)

    cmul = dt / al
    proj = project_bounds_mass(rho_t - cmul * B_s, p.M, state.mass0, cmul, g.weight)
    rho = proj.rho

    D = dissipation(g, rho, c_t, (al * c_t - A_c) / dt, p)
    record, c = solve_eta_bdf(g, tab.apply_A(state.hist_E), al, rho, c_t, D, dt, p)
    return _advance(state, dt, rho, c, proj, record, 0, f"bdf_bound{k}")


def semi_implicit_step(state: SchemeState, params: ModelParams, dt: float) -> SchemeState:
    """Generic BDF2 semi-implicit baseline; BDF1 on the first step.

    ``c^{n+1}`` is implicit in diffusion with extrapolated source
    ``2 rho^n - rho^{n-1}``; ``rho^{n+1}`` is implicit in diffusion with
    convection ``S(2 rho^n - rho^{n-1}) grad c^{n+1}``. No projection and no
    energy correction.
    """
    tab = bdf_tableau(min(2, state.levels))
    g, p = state.grid, params
    ops = spectral_ops(g)
    al = tab.alpha

    rho_bar = tab.apply_C(state.hist_rho)
    c = ops.helmholtz_solve(p.eps * al / dt, p.mu, p.eps * tab.apply_A(state.hist_c) / dt + rho_bar)
    rhs = tab.apply_A(state.hist_rho) / dt - p.chi * _flux_div(ops, p.sensitivity(rho_bar), c)
    rho = ops.helmholtz_solve(al / dt, p.gamma, rhs)

    zero = g.zeros()
    E = _energy_or_nan(g, rho, c, p)
    record = EnergyRecord(E, float("nan"), 0.0, float("nan"))
    return _advance(state, dt, rho, c, ProjectionResult(rho, zero, 0.0, zero, 0, 0.0), record, 0, "semi_implicit")


# -- drivers -----------------------------------------------------------------


def step(state: SchemeState, params: ModelParams, dt: float, scheme, *, tol: float = 1e-12, max_iter: int = 200) -> SchemeState:
    """Advance one step with ``scheme``; CN schemes fall back to BDF1 until two levels exist.

    ``tol`` and ``max_iter`` control the Picard loop of the positivity schemes.
    """
    sch = parse_scheme(scheme)
    pic = {"tol": tol, "max_iter": max_iter}
    try:
        if sch.family == "cn_pos":
            if state.levels < 2:
                return bdf_positivity_step(state, params, dt, 1, **pic)
            return cn_positivity_step(state, params, dt, **pic)
        if sch.family == "bdf_pos":
            return bdf_positivity_step(state, params, dt, sch.k, **pic)
        if sch.family == "cn_bound":
            if state.levels < 2:
                return bdf_bound_step(state, params, dt, 1)
            return cn_bound_step(state, params, dt)
        if sch.family == "bdf_bound":
            return bdf_bound_step(state, params, dt, sch.k)
        return semi_implicit_step(state, params, dt)
    except (LogDomainError, FloatingPointError, ArithmeticError) as exc:
        raise StepFailure(f"step {state.n + 1} failed: {exc}") from exc


def bootstrap(state0: SchemeState, params: ModelParams, dt: float, scheme, **solver) -> SchemeState:
    """Take the lower-order startup steps a multi-level scheme needs.

    Two-level schemes (CN, semi-implicit) get one first-order step; BDF-k gets
    BDF-1, ..., BDF-(k-1). ``lam^0 = 0`` and ``xi^0 = 0``.
    """
    sch = parse_scheme(scheme)
    state = state0
    while state.levels < sch.levels_needed:
        state = step(state, params, dt, sch, **solver)
    return state


def simulate(state0: SchemeState, params: ModelParams, dt: float, n_steps: int, scheme, **solver):
    """Yield the state after each of ``n_steps`` steps, startup steps included."""
    sch = parse_scheme(scheme)
    sch.check_model(params)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    state = state0
    for _ in range(n_steps):
        state = step(state, params, dt, sch, **solver)
        yield state
