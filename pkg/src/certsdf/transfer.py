"""Differentiable maps from smoothed occupancy to hard-occupancy surrogate and density."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TransferConfig:
    """Sigmoid eccentricity, density multiplier, and density-log offset.

    ``alpha`` steepens the sigmoid that stands in for the argmax so the
    chain stays differentiable; ``eps_d`` keeps the log finite as occupancy
    approaches 1, capping density at -density_scale * ln(eps_d).
    """

    alpha: float = 19.0
    density_scale: float = 30.0
    eps_d: float = 1e-3

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.density_scale > 0:
            raise ValueError(f"density_scale must be > 0, got {self.density_scale}")
        if not 0.0 < self.eps_d < 1.0:
            raise ValueError(f"eps_d must be in (0, 1), got {self.eps_d}")

    @property
    def max_density(self):
        return -self.density_scale * np.log(self.eps_d)


def occupancy_soft(fhat, config=TransferConfig()):
    """Sigmoid surrogate of hard occupancy: 1 / (1 + exp(-alpha (fhat - 1/2)))."""
    fhat = np.asarray(fhat, dtype=np.float64)
    g = 1.0 / (1.0 + np.exp(-config.alpha * (fhat - 0.5)))
    return float(g) if g.ndim == 0 else g


def density(fhat, config=TransferConfig()):
    """Rendering density -density_scale * ln(1 + eps_d - G), clamped to >= 0.

    The literal formula dips slightly below zero where G < eps_d; negative
    density has no meaning in the rendering quadrature, so it is clamped.
    """
    g = occupancy_soft(fhat, config)
    raw = -config.density_scale * np.log1p(config.eps_d - g)
    out = np.maximum(raw, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def transfer_grad(fhat, config=TransferConfig()):
    """Analytic derivatives (dG/dfhat, ddensity/dfhat) of the two maps.

    The density derivative is zero wherever the nonnegativity clamp is
    active (G < eps_d), matching the clamped forward map.
    """
    fhat = np.asarray(fhat, dtype=np.float64)
    g = 1.0 / (1.0 + np.exp(-config.alpha * (fhat - 0.5)))
    dg = config.alpha * g * (1.0 - g)
    ddens = config.density_scale * dg / (1.0 + config.eps_d - g)
    ddens = np.where(g < config.eps_d, 0.0, ddens)
    if fhat.ndim == 0:
        return float(dg), float(ddens)
    return dg, ddens
