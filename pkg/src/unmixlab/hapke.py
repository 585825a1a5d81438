"""Intimate-mixture reflectance model (isotropic two-stream simplification).

For single-scattering albedo w and illumination/viewing cosines mu0, mu:

    R(w) = w / ((1 + 2*mu0*sqrt(1-w)) * (1 + 2*mu*sqrt(1-w)))

Intimate mixtures combine linearly in albedo, not in reflectance, so solvers
invert this relation per band, mix or unmix in the albedo domain, and map
back. The inversion is closed form: substituting t = sqrt(1-w) turns R(w) = r
into the quadratic (1 + 4*r*mu0*mu)*t^2 + 2*r*(mu0+mu)*t + (r-1) = 0, whose
positive root is the physical one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfModelError

CLAMP_LIMIT = 1.0 - 1e-6


@dataclass(frozen=True)
class HapkeGeometry:
    """Cosines of the incidence (mu0) and emergence (mu) angles."""

    mu0: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        for label, value in (("mu0", self.mu0), ("mu", self.mu)):
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{label} must lie in (0, 1], got {value}")


def albedo_to_reflectance(w, geom: HapkeGeometry = HapkeGeometry()):
    """Forward model: albedo in [0, 1) to bidirectional reflectance."""
    w_arr = np.asarray(w, dtype=np.float64)
    if np.any(w_arr < 0.0):
        raise ValueError("albedo must be nonnegative")
    if np.any(w_arr >= 1.0):
        raise OutOfModelError("albedo must stay below 1")
    t = np.sqrt(1.0 - w_arr)
    r = w_arr / ((1.0 + 2.0 * geom.mu0 * t) * (1.0 + 2.0 * geom.mu * t))
    return float(r) if np.isscalar(w) or np.ndim(w) == 0 else r


def reflectance_to_albedo(r, geom: HapkeGeometry = HapkeGeometry(), clamp: bool = False):
    """Invert the forward model; exact up to floating point.

    Reflectance at or above 1 has no albedo under this model and raises
    OutOfModelError unless ``clamp`` is set, which first limits the input to
    1 - 1e-6.
    """
    r_arr = np.asarray(r, dtype=np.float64)
    if np.any(r_arr < 0.0):
        raise ValueError("reflectance must be nonnegative")
    if clamp:
        r_arr = np.minimum(r_arr, CLAMP_LIMIT)
    if np.any(r_arr >= 1.0):
        raise OutOfModelError("reflectance at or above 1 is outside the intimate model")
    a = 1.0 + 4.0 * r_arr * geom.mu0 * geom.mu
    b = 2.0 * r_arr * (geom.mu0 + geom.mu)
    c = r_arr - 1.0
    t = (-b + np.sqrt(b * b - 4.0 * a * c)) / (2.0 * a)
    w = 1.0 - t * t
    w = np.clip(w, 0.0, None)  # guard the r=0 corner against -0.0 roundoff
    return float(w) if np.isscalar(r) or np.ndim(r) == 0 else w
