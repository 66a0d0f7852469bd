"""Model parameters, sensitivity laws and initial data for both Keller-Segel systems."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import Grid

__all__ = [
    "ModelKind",
    "ModelParams",
    "Gaussian",
    "CosineMode",
    "FieldSpec",
    "InitialCondition",
    "sensitivity",
    "g_constraint",
    "g_prime",
    "build_initial",
]


class ModelKind(str, enum.Enum):
    """``TYPE_I``: sensitivity ``rho``. ``TYPE_II``: saturating ``rho (M - rho) / M``."""

    TYPE_I = "type1"
    TYPE_II = "type2"


@dataclass(frozen=True)
class ModelParams:
    kind: ModelKind = ModelKind.TYPE_I
    gamma: float = 1.0
    chi: float = 1.0
    mu: float = 1.0
    eps: float = 1.0
    M: float | None = None
    sigma: float = 1e-10

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ModelKind(self.kind))
        for name in ("gamma", "mu", "eps", "sigma"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        # chi = 0 is allowed: it decouples rho and gives the heat-equation limit
        if not (np.isfinite(self.chi) and self.chi >= 0):
            raise ValueError(f"chi must be non-negative, got {self.chi!r}")
        if self.kind is ModelKind.TYPE_II:
            if self.M is None or not (np.isfinite(self.M) and self.M > 0):
                raise ValueError(f"type-II model needs a positive M, got {self.M!r}")

    def replace(self, **changes) -> ModelParams:
        return replace(self, **changes)

    def sensitivity(self, rho: np.ndarray) -> np.ndarray:
        if self.kind is ModelKind.TYPE_I:
            return rho
        return sensitivity(rho, self.M)


def sensitivity(rho, M: float) -> np.ndarray:
    """Saturating chemotactic sensitivity ``rho (M - rho) / M``."""
    rho = np.asarray(rho, dtype=float)
    return rho * (M - rho) / M


def g_constraint(rho, M: float) -> np.ndarray:
    """Bound constraint ``g(rho) = rho (M - rho)``; ``g >= 0`` iff ``0 <= rho <= M``."""
    rho = np.asarray(rho, dtype=float)
    return rho * (M - rho)


def g_prime(rho, M: float) -> np.ndarray:
    return M - 2.0 * np.asarray(rho, dtype=float)


@dataclass(frozen=True)
class Gaussian:
    """``amplitude * exp(-inv_width * ((x - cx)^2 + (y - cy)^2))``."""

    amplitude: float
    cx: float = np.pi
    cy: float = np.pi
    inv_width: float = 1.0

    def __call__(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        r2 = (X - self.cx) ** 2 + (Y - self.cy) ** 2
        return self.amplitude * np.exp(-self.inv_width * r2)


@dataclass(frozen=True)
class CosineMode:
    """``amplitude * cos(kx x + ky y + phase)``, for smooth test data."""

    amplitude: float
    kx: int = 1
    ky: int = 0
    phase: float = 0.0

    def __call__(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return self.amplitude * np.cos(self.kx * X + self.ky * Y + self.phase)


@dataclass(frozen=True)
class FieldSpec:
    offset: float = 0.0
    gaussians: tuple[Gaussian, ...] = ()
    cosines: tuple[CosineMode, ...] = ()

    def evaluate(self, grid: Grid) -> np.ndarray:
        X, Y = grid.mesh()
        u = grid.full(self.offset)
        for term in (*self.gaussians, *self.cosines):
            u = u + term(X, Y)
        return u

    @classmethod
    def from_dict(cls, d: dict | None) -> FieldSpec:
        d = dict(d or {})
        unknown = set(d) - {"offset", "gaussians", "cosines"}
        if unknown:
            raise ValueError(f"unknown initial-field keys: {sorted(unknown)}")
        return cls(
            offset=float(d.get("offset", 0.0)),
            gaussians=tuple(Gaussian(**g) for g in d.get("gaussians", ())),
            cosines=tuple(CosineMode(**m) for m in d.get("cosines", ())),
        )

    def to_dict(self) -> dict:
        return {
            "offset": self.offset,
            "gaussians": [vars(g).copy() for g in self.gaussians],
            "cosines": [vars(m).copy() for m in self.cosines],
        }


@dataclass(frozen=True)
class InitialCondition:
    """Initial density and chemoattractant as sums of Gaussians (and cosines).

    Gaussians are evaluated without periodic images. For the widths used in
    the presets the neglected tails are below ``1e-12`` on ``[0, 2pi]^2``.
    """

    rho: FieldSpec = field(default_factory=FieldSpec)
    c: FieldSpec = field(default_factory=FieldSpec)

    @classmethod
    def gaussian(cls, rho_amp, rho_inv_width, c_amp, c_inv_width, center=(np.pi, np.pi)):
        cx, cy = center
        return cls(
            rho=FieldSpec(gaussians=(Gaussian(rho_amp, cx, cy, rho_inv_width),)),
            c=FieldSpec(gaussians=(Gaussian(c_amp, cx, cy, c_inv_width),)),
        )

    @classmethod
    def from_dict(cls, d: dict | None) -> InitialCondition:
        d = dict(d or {})
        unknown = set(d) - {"rho", "c"}
        if unknown:
            raise ValueError(f"unknown initial-condition keys: {sorted(unknown)}")
        return cls(rho=FieldSpec.from_dict(d.get("rho")), c=FieldSpec.from_dict(d.get("c")))

    def to_dict(self) -> dict:
        return {"rho": self.rho.to_dict(), "c": self.c.to_dict()}


def build_initial(cfg: InitialCondition, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the initial ``(rho, c)`` at the grid nodes."""
    return cfg.rho.evaluate(grid), cfg.c.evaluate(grid)
