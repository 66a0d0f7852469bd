"""Correction step: weighted L2 projection onto ``{rho >= 0}`` or ``{0 <= rho <= M}``
intersected with a fixed-mass hyperplane.

The pointwise optimality conditions give ``rho = clip(rho_star + cmul * xi)``,
so the only unknown is the scalar ``xi``. The mass of the clipped field is a
continuous, non-decreasing, piecewise-linear function of ``xi`` whose kinks
sit at ``-rho_star / cmul`` (and ``(M - rho_star) / cmul`` for the box). We
locate the bracketing segment by bisection over the sorted kinks and then
solve the linear piece exactly, followed by one Newton correction on the
mass residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProjectionResult",
    "ProjectionInfeasible",
    "project_positive_mass",
    "project_bounds_mass",
    "oracle_qp",
]

# relative mass mismatch under which a feasible predictor is returned untouched
IDENTITY_RTOL = 1e-14


class ProjectionInfeasible(ValueError):
    """The requested mass cannot be reached inside the admissible set."""


@dataclass
class ProjectionResult:
    """Projected density and the multipliers that certify it.

    ``source`` is the combined term that appears in the next predictor:
    ``lam + xi`` for positivity, ``lam * g'(rho) + xi`` for the box.
    """

    rho: np.ndarray
    lam: np.ndarray
    xi: float
    source: np.ndarray
    iterations: int
    residual: float


def _clip(v, upper):
    return np.clip(v, 0.0, upper) if upper is not None else np.maximum(v, 0.0)


def _mass_root(rho_star, w, target, cmul, upper):
    """Return ``(xi, evaluations)`` with ``sum w clip(rho_star + cmul xi) = target``.

    If the root set is an interval (all nodes clamped), the root closest to 0
    is returned.
    """
    kinks = -rho_star / cmul
    if upper is not None:
        kinks = np.concatenate([kinks, (upper - rho_star) / cmul])
    bp = np.unique(kinks)
    total_w = float(np.sum(w))
    evals = 0

    def f(xi):
        nonlocal evals
        evals += 1
        return float(np.sum(w * _clip(rho_star + cmul * xi, upper))) - target

    fb = {}

    def fat(i):
        if i not in fb:
            fb[i] = f(bp[i])
        return fb[i]

    def first_geq(i_lo, i_hi):
        # smallest i in [i_lo, i_hi) with f(bp[i]) >= 0, else i_hi
        while i_lo < i_hi:
            mid = (i_lo + i_hi) // 2
            if fat(mid) >= 0:
                i_hi = mid
            else:
                i_lo = mid + 1
        return i_lo

    def last_leq(i_lo, i_hi):
        # largest i in [i_lo, i_hi) with f(bp[i]) <= 0, else i_lo - 1
        while i_lo < i_hi:
            mid = (i_lo + i_hi) // 2
            if fat(mid) <= 0:
                i_lo = mid + 1
            else:
                i_hi = mid
        return i_lo - 1

    def interp(i):
        # root of the linear piece on [bp[i], bp[i+1]]
        f0, f1 = fat(i), fat(i + 1)
        return bp[i] + (0.0 - f0) * (bp[i + 1] - bp[i]) / (f1 - f0)

    n = bp.size
    last = n - 1
    # left end: rightmost kink where nothing is free yet gives f = -target
    i = first_geq(0, n)
    if i == n:
        if upper is not None:
            raise ProjectionInfeasible("target mass exceeds M * total weight")
        a = bp[last] - fat(last) / (cmul * total_w)
    elif i == 0:
        a = -np.inf
    else:
        a = interp(i - 1)

    j = last_leq(0, n)
    if j == last:
        if upper is None:
            b = bp[last] - fat(last) / (cmul * total_w)
        elif fat(last) == 0:
            b = np.inf
        else:
            raise ProjectionInfeasible("target mass exceeds M * total weight")
    elif j < 0:
        b = bp[0]
    else:
        b = interp(j)
    if a > b:
        a, b = b, a
    return float(np.clip(0.0, a, b)), evals


def _project(rho_star, target_mass, cmul, weights, upper):
    rho_star = np.asarray(rho_star, dtype=float)
    if rho_star.size == 0:
        raise ValueError("cannot project an empty field")
    if not cmul > 0:
        raise ValueError(f"cmul must be positive, got {cmul!r}")
    w = np.broadcast_to(np.asarray(weights, dtype=float), rho_star.shape)
    if np.any(w <= 0):
        raise ValueError("quadrature weights must be positive")
    target = float(target_mass)
    if target < 0:
        raise ProjectionInfeasible(f"target mass {target!r} is negative")
    capacity = upper * float(np.sum(w)) if upper is not None else np.inf
    if target > capacity * (1 + 1e-14):
        raise ProjectionInfeasible(f"target mass {target!r} exceeds capacity {capacity!r}")

    scale = max(abs(target), float(np.sum(w * np.abs(rho_star))), np.finfo(float).tiny)
    feasible = np.all(rho_star >= 0) and (upper is None or np.all(rho_star <= upper))
    if feasible:
        r0 = float(np.sum(w * rho_star)) - target
        if abs(r0) <= IDENTITY_RTOL * scale:
            zero = np.zeros_like(rho_star)
            return ProjectionResult(rho_star.copy(), zero, 0.0, zero.copy(), 0, r0)

    xi, evals = _mass_root(rho_star, w, target, cmul, upper)
    shifted = rho_star + cmul * xi
    rho = _clip(shifted, upper)
    resid = float(np.sum(w * rho)) - target
    free = (shifted > 0) & ((shifted < upper) if upper is not None else True)
    slope = cmul * float(np.sum(w[free]))
    if slope > 0 and resid != 0:
        xi2 = xi - resid / slope
        shifted2 = rho_star + cmul * xi2
        rho2 = _clip(shifted2, upper)
        resid2 = float(np.sum(w * rho2)) - target
        evals += 1
        if abs(resid2) < abs(resid):
            xi, shifted, rho, resid = xi2, shifted2, rho2, resid2

    lam = np.zeros_like(rho_star)
    low = shifted <= 0
    if upper is None:
        lam[low] = -rho_star[low] / cmul - xi
        lam = np.maximum(lam, 0.0)
        source = lam + xi
    else:
        high = shifted >= upper
        # g'(0) = M and g'(M) = -M on the active set
        lam[low] = (-rho_star[low] / cmul - xi) / upper
        lam[high] = ((upper - rho_star[high]) / cmul - xi) / (-upper)
        lam = np.maximum(lam, 0.0)
        source = lam * (upper - 2.0 * rho) + xi
    return ProjectionResult(rho, lam, xi, source, evals, resid)


def project_positive_mass(rho_star, target_mass: float, cmul: float, weights=1.0) -> ProjectionResult:
    """Project ``rho_star`` onto ``{rho >= 0, sum w rho = target_mass}``.

    Parameters
    ----------
    rho_star : array_like
        Predictor values.
    target_mass : float
        Required value of ``sum(weights * rho)``.
    cmul : float
        Multiplier prefactor: ``rho - rho_star = cmul * (lam + xi)``.
    weights : float or array_like
        Positive quadrature weights, broadcast against ``rho_star``.
    """
    return _project(rho_star, target_mass, cmul, weights, None)


def project_bounds_mass(rho_star, M: float, target_mass: float, cmul: float, weights=1.0) -> ProjectionResult:
    """Project ``rho_star`` onto ``{0 <= rho <= M, sum w rho = target_mass}``.

    Here ``rho - rho_star = cmul * (lam * g'(rho) + xi)`` with ``g = rho (M - rho)``.
    """
    if not M > 0:
        raise ValueError(f"M must be positive, got {M!r}")
    return _project(rho_star, target_mass, cmul, weights, float(M))


def oracle_qp(rho_star, target_mass: float, weights=1.0, upper: float | None = None, max_nodes: int = 12):
    """Brute-force weighted projection by enumerating every active set.

    Each node is either free or pinned to a bound. For each assignment the
    equality-constrained least-squares problem is solved in closed form (a
    uniform shift ``s`` of the free nodes) and the assignment is accepted when
    it satisfies the full KKT system: primal feasibility plus the multiplier
    signs ``rho_star + s <= 0`` on nodes pinned at 0 and ``>= upper`` on nodes
    pinned at the upper bound. Returns ``None`` when no assignment qualifies.
    """
    rho_star = np.asarray(rho_star, dtype=float).ravel()
    n = rho_star.size
    if n == 0:
        raise ValueError("oracle_qp needs at least one node")
    if n > max_nodes:
        raise ValueError(f"oracle_qp is exponential; {n} nodes > {max_nodes}")
    w = np.broadcast_to(np.asarray(weights, dtype=float).ravel(), (n,)) if np.ndim(weights) else np.full(n, float(weights))
    states = 2 if upper is None else 3
    # row i of codes holds the base-`states` digits of i: one row per active set
    codes = ((np.arange(states**n)[:, None] // states ** np.arange(n)) % states).astype(np.int8)
    free = codes == 0
    at_zero = codes == 1
    at_upper = codes == 2
    top = 0.0 if upper is None else float(upper)
    fixed_mass = (at_upper * w).sum(axis=1) * top
    free_w = (free * w).sum(axis=1)
    free_sum = (free * w * rho_star).sum(axis=1)
    has_free = free_w > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(has_free, (target_mass - fixed_mass - free_sum) / free_w, 0.0)
    tol = 1e-12 * max(1.0, abs(target_mass), top, float(np.max(np.abs(rho_star))))
    # without free nodes the shift is any value in [lo, hi] allowed by the multiplier signs
    lo = np.max(np.where(at_upper, top - rho_star, -np.inf), axis=1)
    hi = np.min(np.where(at_zero, -rho_star, np.inf), axis=1)
    shift = np.where(has_free, shift, np.clip(0.0, lo, hi))
    cand = np.where(free, rho_star + shift[:, None], np.where(at_upper, top, 0.0))
    moved = rho_star + shift[:, None]
    ok = np.all(cand >= -tol, axis=1)
    ok &= np.all(np.where(at_zero, moved <= tol, True), axis=1)
    if upper is not None:
        ok &= np.all(cand <= top + tol, axis=1)
        ok &= np.all(np.where(at_upper, moved >= top - tol, True), axis=1)
    ok &= has_free | ((np.abs(fixed_mass - target_mass) <= tol) & (lo <= hi + tol))
    if not np.any(ok):
        return None
    obj = np.where(ok, ((cand - rho_star) ** 2 * w).sum(axis=1), np.inf)
    best = cand[int(np.argmin(obj))]
    return np.clip(best, 0.0, top if upper is not None else np.inf)
