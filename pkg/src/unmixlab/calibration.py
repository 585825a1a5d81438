"""Black/white reference calibration.

Raw sensor counts are turned into relative reflectance band by band:
``(raw - black) / (white - black)``. Bands whose white and black references
coincide carry no usable signal and are flagged invalid rather than divided.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import HyperCube, _locked
from .errors import DimensionError


@dataclass(frozen=True)
class CalibrationFrames:
    """Per-band black (shutter closed) and white (reference panel) spectra."""

    black: np.ndarray
    white: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "black", _locked(self.black, ndim=1, name="black"))
        object.__setattr__(self, "white", _locked(self.white, ndim=1, name="white"))
        if self.black.shape != self.white.shape:
            raise DimensionError(
                f"black and white frames disagree: {self.black.shape} vs {self.white.shape}"
            )
        if self.black.size == 0:
            raise DimensionError("calibration frames need at least one band")

    @property
    def bands(self) -> int:
        return self.black.size

    @property
    def valid(self) -> np.ndarray:
        """Bands with strictly positive white-minus-black headroom."""
        return self.white - self.black > 0


def simulate_frames(bands: int, dark_level: float, lamp_profile) -> CalibrationFrames:
    """Build synthetic reference frames from a dark level and a lamp profile.

    ``lamp_profile`` may be a scalar or a per-band array. A lamp reading below
    the dark level is a contradiction and raises ValueError; equality is
    allowed and simply leaves that band with zero headroom (flagged invalid by
    ``bw_normalize``).
    """
    if bands < 1:
        raise DimensionError(f"need at least one band, got {bands}")
    black = np.full(bands, float(dark_level))
    white = np.broadcast_to(np.asarray(lamp_profile, dtype=np.float64), (bands,)).copy()
    if np.any(white < black):
        worst = int(np.argmin(white - black))
        raise ValueError(f"lamp profile falls below dark level at band {worst}")
    return CalibrationFrames(black, white)


def bw_normalize(raw: HyperCube, frames: CalibrationFrames) -> HyperCube:
    """Normalize raw counts to relative reflectance.

    Zero-headroom bands come back as 0.0 with their band_mask entry cleared;
    no non-finite values are ever produced. Values above 1.0 (brighter than
    the white reference) pass through untouched.
    """
    if frames.bands != raw.bands:
        raise DimensionError(f"frames cover {frames.bands} bands, cube has {raw.bands}")
    span = frames.white - frames.black
    valid = span > 0
    safe_span = np.where(valid, span, 1.0)
    out = (raw.data - frames.black[:, None, None]) / safe_span[:, None, None]
    out[~valid] = 0.0
    return HyperCube(out, raw.wavelengths, raw.band_mask & valid)
