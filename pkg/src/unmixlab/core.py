"""Core value types: spectra, cubes, endmember matrices, abundances.

All types are immutable after construction; array fields are copied in and
write-locked. Cube data is stored band-sequential (one image plane per band),
indexed as ``(row, col, band)`` through the accessors. Reflectance above 1.0 is
legal (specular glints survive normalization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

ANC_TOL = 1e-9
ASC_TOL = 1e-6
TRUTH_SUM_TOL = 1e-9
DEFAULT_CLIP_SIDE = 60


def _locked(values, dtype=np.float64, ndim: int | None = None, name: str = "array") -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name} must have {ndim} dimension(s), got {arr.ndim}")
    arr.setflags(write=False)
    return arr


def satisfies_anc(fractions: np.ndarray, tol: float = ANC_TOL) -> bool:
    """True when every fraction is nonnegative within tol."""
    f = np.asarray(fractions, dtype=np.float64)
    return bool(np.all(f >= -tol))


def satisfies_asc(fractions: np.ndarray, tol: float = ASC_TOL) -> bool:
    """True when fractions sum to one within tol (last axis for maps)."""
    f = np.asarray(fractions, dtype=np.float64)
    return bool(np.all(np.abs(f.sum(axis=-1) - 1.0) <= tol))


@dataclass(frozen=True)
class Spectrum:
    """A single reflectance spectrum on a strictly increasing wavelength grid."""

    values: np.ndarray
    wavelengths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _locked(self.values, ndim=1, name="values"))
        object.__setattr__(self, "wavelengths", _locked(self.wavelengths, ndim=1, name="wavelengths"))
        if self.values.shape != self.wavelengths.shape:
            raise DimensionError(
                f"values and wavelengths disagree: {self.values.shape} vs {self.wavelengths.shape}"
            )
        if self.values.size == 0:
            raise DimensionError("spectrum needs at least one band")
        if not np.all(np.diff(self.wavelengths) > 0):
            raise ValueError("wavelengths must be strictly increasing")

    @property
    def bands(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class HyperCube:
    """Reflectance cube stored as band-sequential planes.

    ``data`` has shape ``(bands, height, width)``; ``band_mask`` marks valid
    bands (True = usable). Accessors take ``(row, col, band)``.
    """

    data: np.ndarray
    wavelengths: np.ndarray
    band_mask: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "data", _locked(self.data, ndim=3, name="data"))
        object.__setattr__(self, "wavelengths", _locked(self.wavelengths, ndim=1, name="wavelengths"))
        mask = self.band_mask
        if mask is None:
            mask = np.ones(self.data.shape[0], dtype=bool)
        mask = _locked(mask, dtype=bool, ndim=1, name="band_mask")
        object.__setattr__(self, "band_mask", mask)
        bands, height, width = self.data.shape
        if bands == 0 or height == 0 or width == 0:
            raise DimensionError("cube must be non-empty in every dimension")
        if self.wavelengths.size != bands:
            raise DimensionError(f"wavelength grid has {self.wavelengths.size} entries for {bands} bands")
        if self.band_mask.size != bands:
            raise DimensionError(f"band_mask has {self.band_mask.size} entries for {bands} bands")
        if not np.all(np.diff(self.wavelengths) > 0):
            raise ValueError("wavelengths must be strictly increasing")

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def value(self, row: int, col: int, band: int) -> float:
        return float(self.data[band, row, col])

    def pixel(self, row: int, col: int) -> np.ndarray:
        """Spectrum of one pixel as a (bands,) array."""
        return np.asarray(self.data[:, row, col])

    def spectrum_at(self, row: int, col: int) -> Spectrum:
        return Spectrum(self.pixel(row, col), self.wavelengths)

    def to_matrix(self) -> np.ndarray:
        """(bands, height*width) matrix, pixels in row-major order."""
        return self.data.reshape(self.bands, self.height * self.width).copy()

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, height: int, width: int,
                    wavelengths: np.ndarray, band_mask: np.ndarray | None = None) -> "HyperCube":
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != height * width:
            raise DimensionError(f"matrix shape {matrix.shape} does not match extent {width}x{height}")
        return cls(matrix.reshape(matrix.shape[0], height, width), wavelengths, band_mask)


@dataclass(frozen=True)
class EndmemberMatrix:
    """Endmember spectra as columns of an (bands, count) matrix."""

    array: np.ndarray
    wavelengths: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "array", _locked(self.array, ndim=2, name="array"))
        object.__setattr__(self, "wavelengths", _locked(self.wavelengths, ndim=1, name="wavelengths"))
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        bands, count = self.array.shape
        if count < 1:
            raise DimensionError("endmember matrix needs at least one column")
        if self.wavelengths.size != bands:
            raise DimensionError(f"wavelength grid has {self.wavelengths.size} entries for {bands} bands")
        if len(self.names) != count:
            raise DimensionError(f"{len(self.names)} names for {count} columns")
        if not np.all(np.diff(self.wavelengths) > 0):
            raise ValueError("wavelengths must be strictly increasing")

    @property
    def bands(self) -> int:
        return self.array.shape[0]

    @property
    def count(self) -> int:
        return self.array.shape[1]

    def column(self, index: int) -> Spectrum:
        return Spectrum(self.array[:, index], self.wavelengths)

    @classmethod
    def from_spectra(cls, spectra: list[Spectrum], names: list[str] | tuple[str, ...]) -> "EndmemberMatrix":
        if not spectra:
            raise DimensionError("need at least one spectrum")
        wl = spectra[0].wavelengths
        for s in spectra[1:]:
            if s.wavelengths.shape != wl.shape or not np.allclose(s.wavelengths, wl):
                raise DimensionError("spectra live on different wavelength grids")
        return cls(np.stack([s.values for s in spectra], axis=1), wl, tuple(names))


@dataclass(frozen=True)
class AbundanceVector:
    """Per-pixel fractional abundances.

    Nonnegativity is always required (within ANC_TOL); the sum-to-one check
    applies only when the producing solver enforced it (``asc_enforced``).
    """

    fractions: np.ndarray
    asc_enforced: bool = False

    def __post_init__(self):
        object.__setattr__(self, "fractions", _locked(self.fractions, ndim=1, name="fractions"))
        if self.fractions.size == 0:
            raise DimensionError("abundance vector needs at least one entry")
        if not satisfies_anc(self.fractions):
            raise ValueError(f"negative abundance beyond tolerance: min={self.fractions.min()}")
        if self.asc_enforced and not satisfies_asc(self.fractions):
            raise ValueError(f"abundances sum to {self.fractions.sum()}, expected 1 within {ASC_TOL}")

    @property
    def count(self) -> int:
        return self.fractions.size


@dataclass(frozen=True)
class AbundanceMap:
    """Spatial abundance field, shape (height, width, count).

    ``failed`` flags pixels whose solve did not finish; their fractions are NaN
    and exempt from the constraint checks. ``degenerate`` flags pixels whose
    input spectrum was all zeros: the fit is defined but uninformative.
    """

    fractions: np.ndarray
    asc_enforced: bool = False
    failed: np.ndarray | None = None
    degenerate: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "fractions", _locked(self.fractions, ndim=3, name="fractions"))
        height, width, count = self.fractions.shape
        if height == 0 or width == 0 or count == 0:
            raise DimensionError("abundance map must be non-empty in every dimension")
        for label in ("failed", "degenerate"):
            mask = getattr(self, label)
            if mask is None:
                mask = np.zeros((height, width), dtype=bool)
            mask = _locked(mask, dtype=bool, ndim=2, name=label)
            if mask.shape != (height, width):
                raise DimensionError(f"{label} mask shape {mask.shape} does not match extent {(height, width)}")
            object.__setattr__(self, label, mask)
        ok = ~self.failed
        if np.any(ok):
            good = self.fractions[ok]
            if not satisfies_anc(good):
                raise ValueError("negative abundance beyond tolerance in map")
            if self.asc_enforced and not satisfies_asc(good):
                raise ValueError("abundance map violates sum-to-one tolerance")

    @property
    def height(self) -> int:
        return self.fractions.shape[0]

    @property
    def width(self) -> int:
        return self.fractions.shape[1]

    @property
    def count(self) -> int:
        return self.fractions.shape[2]

    def at(self, row: int, col: int) -> AbundanceVector:
        return AbundanceVector(self.fractions[row, col], asc_enforced=self.asc_enforced)


@dataclass(frozen=True)
class GroundTruth:
    """Reference abundances: one shared vector, or a full spatial field.

    Rows must sum to one within TRUTH_SUM_TOL and lie in [0, 1].
    """

    fractions: np.ndarray

    def __post_init__(self):
        arr = np.array(self.fractions, dtype=np.float64)
        if arr.ndim not in (1, 3):
            raise DimensionError("ground truth is a (count,) vector or (height, width, count) field")
        if arr.size == 0:
            raise DimensionError("ground truth must be non-empty")
        arr.setflags(write=False)
        object.__setattr__(self, "fractions", arr)
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("ground-truth fractions must lie in [0, 1]")
        sums = arr.sum(axis=-1)
        if np.any(np.abs(sums - 1.0) > TRUTH_SUM_TOL):
            worst = float(np.abs(sums - 1.0).max())
            raise ValueError(f"ground-truth rows must sum to 1 within {TRUTH_SUM_TOL}, worst deviation {worst}")

    @classmethod
    def uniform(cls, fractions) -> "GroundTruth":
        return cls(np.asarray(fractions, dtype=np.float64).reshape(-1))

    @classmethod
    def spatial(cls, field) -> "GroundTruth":
        arr = np.asarray(field, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionError("spatial ground truth must be (height, width, count)")
        return cls(arr)

    @property
    def is_spatial(self) -> bool:
        return self.fractions.ndim == 3

    @property
    def count(self) -> int:
        return self.fractions.shape[-1]

    def at(self, row: int, col: int) -> np.ndarray:
        if self.is_spatial:
            return np.asarray(self.fractions[row, col])
        return np.asarray(self.fractions)

    def to_map(self, height: int, width: int) -> AbundanceMap:
        if self.is_spatial:
            if self.fractions.shape[:2] != (height, width):
                raise DimensionError(
                    f"ground-truth extent {self.fractions.shape[:2]} does not match {(height, width)}"
                )
            field = self.fractions
        else:
            field = np.broadcast_to(self.fractions, (height, width, self.count))
        return AbundanceMap(np.array(field), asc_enforced=True)


def clip_center(cube: HyperCube, side: int = DEFAULT_CLIP_SIDE) -> HyperCube:
    """Extract the centered side x side window.

    When the leftover margin is odd, the extra pixel goes to the right/bottom.
    """
    if side < 1:
        raise DimensionError(f"clip side must be positive, got {side}")
    if side > cube.width or side > cube.height:
        raise DimensionError(f"clip side {side} exceeds cube extent {cube.width}x{cube.height}")
    r0 = (cube.height - side) // 2
    c0 = (cube.width - side) // 2
    return HyperCube(cube.data[:, r0:r0 + side, c0:c0 + side],
                     cube.wavelengths, cube.band_mask)


def apply_band_mask(cube: HyperCube, keep_range: tuple[int, int]) -> HyperCube:
    """Restrict the cube to the contiguous band window [lo, hi], inclusive."""
    lo, hi = int(keep_range[0]), int(keep_range[1])
    if lo < 0 or hi >= cube.bands or lo > hi:
        raise DimensionError(f"band window [{lo}, {hi}] invalid for {cube.bands} bands")
    return HyperCube(cube.data[lo:hi + 1], cube.wavelengths[lo:hi + 1],
                     cube.band_mask[lo:hi + 1])
