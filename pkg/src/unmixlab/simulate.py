"""Forward scene simulator: mixtures, nonlinearities, noise, pattern fields.

Four scene generators share one convention: build the clean cube from an
endmember matrix and a mixture, then add i.i.d. Gaussian noise scaled so that
10*log10(signal_power / sigma^2) equals the requested SNR. Noise is drawn
from one RNG stream per pixel, seeded by (scene seed, pixel index), so the
result does not depend on how pixels are partitioned across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EndmemberMatrix, GroundTruth, HyperCube
from .errors import DimensionError, GenerationError
from .hapke import HapkeGeometry, albedo_to_reflectance, reflectance_to_albedo
from .metrics import sad

SCENE_KINDS = ("checkerboard", "intimate_uniform", "intimate_pattern", "reflection")
PATTERN_IDS = ("A", "B", "C", "D")
DEFAULT_SNR_DB = 40.0
DEFAULT_GAMMA = 0.5
MIN_SEPARATION_DEG = 5.0
WAVELENGTH_START_NM = 400.0
WAVELENGTH_STOP_NM = 1000.0

__all__ = [
    "SceneSpec", "HapkeGeometry", "albedo_to_reflectance", "reflectance_to_albedo",
    "synth_endmembers", "gen_linear_scene", "gen_bilinear_scene",
    "gen_intimate_scene", "gen_pattern_scene", "pattern_field",
    "SCENE_KINDS", "PATTERN_IDS", "DEFAULT_SNR_DB", "DEFAULT_GAMMA",
]


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to regenerate one scene deterministically.

    ``mixture`` is a GroundTruth (shared vector) for the uniform scene kinds,
    or a pattern id ("A".."D") for intimate_pattern. ``snr_db = None`` means
    noiseless. ``extent`` is (width, height).
    """

    kind: str
    endmembers: EndmemberMatrix
    mixture: GroundTruth | str
    snr_db: float | None = DEFAULT_SNR_DB
    seed: int = 0
    extent: tuple[int, int] = (60, 60)

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}, expected one of {SCENE_KINDS}")
        w, h = self.extent
        if w < 1 or h < 1:
            raise DimensionError(f"extent must be positive, got {self.extent}")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.snr_db is not None and not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite or None (noiseless)")
        if self.kind == "intimate_pattern":
            if not isinstance(self.mixture, str) or self.mixture.upper() not in PATTERN_IDS:
                raise ValueError(f"pattern scenes need a pattern id from {PATTERN_IDS}")
        else:
            if not isinstance(self.mixture, GroundTruth):
                raise ValueError("uniform scenes need a GroundTruth mixture")
            if self.mixture.is_spatial:
                raise ValueError("uniform scene kinds take a shared mixture vector")
            if self.mixture.count != self.endmembers.count:
                raise DimensionError(
                    f"mixture has {self.mixture.count} fractions for "
                    f"{self.endmembers.count} endmembers"
                )

    @property
    def width(self) -> int:
        return self.extent[0]

    @property
    def height(self) -> int:
        return self.extent[1]

    def to_config(self) -> dict[str, str]:
        """Flat key=value view of the spec (endmember values live elsewhere)."""
        if isinstance(self.mixture, str):
            mixture = self.mixture.upper()
        else:
            mixture = ",".join(f"{x:.10g}" for x in self.mixture.fractions)
        return {
            "kind": self.kind,
            "extent": f"{self.width}x{self.height}",
            "seed": str(self.seed),
            "snr_db": "none" if self.snr_db is None else f"{self.snr_db:.10g}",
            "mixture": mixture,
            "endmember_names": ",".join(self.endmembers.names),
            "bands": str(self.endmembers.bands),
        }


def _bump_spectrum(rng: np.random.Generator, bands: int) -> np.ndarray:
    x = np.arange(bands, dtype=np.float64)
    y = np.zeros(bands)
    for _ in range(int(rng.integers(2, 6))):
        center = rng.uniform(0.0, bands - 1.0)
        width = rng.uniform(bands / 20.0, bands / 4.0)
        y += rng.uniform(0.3, 1.0) * np.exp(-0.5 * ((x - center) / width) ** 2)
    span = y.max() - y.min()
    if span < 1e-12:
        return np.full(bands, 0.5)
    lo = rng.uniform(0.05, 0.25)
    hi = rng.uniform(0.55, 0.95)
    return lo + (hi - lo) * (y - y.min()) / span


def synth_endmembers(count: int, bands: int, seed: int,
                     min_separation_deg: float = MIN_SEPARATION_DEG,
                     max_attempts: int = 100,
                     names: tuple[str, ...] | None = None) -> EndmemberMatrix:
    """Draw smooth positive spectra in [0.05, 0.95], pairwise SAD separated.

    The whole set is redrawn when any pair falls under the separation floor;
    after ``max_attempts`` failed draws a GenerationError is raised.
    """
    if count < 1 or bands < 1:
        raise DimensionError(f"need positive count and bands, got {count}, {bands}")
    if names is not None and len(names) != count:
        raise DimensionError(f"{len(names)} names for {count} endmembers")
    rng = np.random.default_rng(seed)
    wavelengths = np.linspace(WAVELENGTH_START_NM, WAVELENGTH_STOP_NM, bands)
    for _ in range(max_attempts):
        cols = np.stack([_bump_spectrum(rng, bands) for _ in range(count)], axis=1)
        separated = all(
            sad(cols[:, i], cols[:, j]) >= min_separation_deg
            for i in range(count) for j in range(i + 1, count)
        )
        if separated:
            return EndmemberMatrix(
                cols, wavelengths,
                names if names is not None else tuple(f"em{i + 1}" for i in range(count)),
            )
    raise GenerationError(
        f"could not draw {count} spectra separated by {min_separation_deg} deg "
        f"in {max_attempts} attempts"
    )


def _noise_cube(shape: tuple[int, int, int], seed: int) -> np.ndarray:
    """Unit-variance noise, one RNG stream per pixel (partition independent)."""
    bands, height, width = shape
    out = np.empty(shape)
    for idx in range(height * width):
        rng = np.random.default_rng([seed, idx])
        out[:, idx // width, idx % width] = rng.standard_normal(bands)
    return out


def _apply_noise(clean: np.ndarray, snr_db: float | None, seed: int,
                 band_profile: np.ndarray | None = None) -> np.ndarray:
    if snr_db is None:
        return clean
    signal_power = float(np.mean(clean ** 2))
    if signal_power == 0.0:
        return clean
    sigma = np.sqrt(signal_power / 10.0 ** (snr_db / 10.0))
    noise = _noise_cube(clean.shape, seed) * sigma
    if band_profile is not None:
        profile = np.asarray(band_profile, dtype=np.float64)
        if profile.shape != (clean.shape[0],):
            raise DimensionError(f"band profile shape {profile.shape} for {clean.shape[0]} bands")
        if np.any(profile <= 0.0):
            raise ValueError("band noise profile must be strictly positive")
        profile = profile / np.sqrt(np.mean(profile ** 2))  # keep the target SNR
        noise *= profile[:, None, None]
    return clean + noise


def _uniform_alpha(spec: SceneSpec) -> np.ndarray:
    if isinstance(spec.mixture, str):
        raise ValueError("this generator needs a shared mixture vector, not a pattern id")
    return spec.mixture.fractions


def gen_linear_scene(spec: SceneSpec,
                     band_profile: np.ndarray | None = None) -> tuple[HyperCube, GroundTruth]:
    """Linear mixture scene: every pixel is M @ alpha plus noise."""
    alpha = _uniform_alpha(spec)
    m = spec.endmembers.array
    clean = np.broadcast_to((m @ alpha)[:, None, None],
                            (spec.endmembers.bands, spec.height, spec.width)).copy()
    data = _apply_noise(clean, spec.snr_db, spec.seed, band_profile)
    return (HyperCube(data, spec.endmembers.wavelengths),
            GroundTruth.uniform(alpha))


def gen_bilinear_scene(spec: SceneSpec, gamma=DEFAULT_GAMMA,
                       band_profile: np.ndarray | None = None) -> tuple[HyperCube, GroundTruth]:
    """Bilinear scene: linear term plus pairwise cross products.

    pixel = M a + sum_{i<j} gamma_ij * a_i * a_j * (m_i * m_j) + n, with the
    products taken element-wise. ``gamma`` is a scalar or an (R, R) array
    whose upper triangle is used; entries must lie in [0, 1]. gamma = 0
    reproduces the linear scene bit for bit.
    """
    alpha = _uniform_alpha(spec)
    m = spec.endmembers.array
    r_count = spec.endmembers.count
    gamma_arr = np.asarray(gamma, dtype=np.float64)
    if gamma_arr.ndim == 0:
        gamma_arr = np.full((r_count, r_count), float(gamma_arr))
    if gamma_arr.shape != (r_count, r_count):
        raise DimensionError(f"gamma shape {gamma_arr.shape} for {r_count} endmembers")
    if np.any(gamma_arr < 0.0) or np.any(gamma_arr > 1.0):
        raise ValueError("gamma entries must lie in [0, 1]")
    pixel = m @ alpha
    for i in range(r_count):
        for j in range(i + 1, r_count):
            pixel = pixel + gamma_arr[i, j] * alpha[i] * alpha[j] * (m[:, i] * m[:, j])
    clean = np.broadcast_to(pixel[:, None, None],
                            (spec.endmembers.bands, spec.height, spec.width)).copy()
    data = _apply_noise(clean, spec.snr_db, spec.seed, band_profile)
    return (HyperCube(data, spec.endmembers.wavelengths),
            GroundTruth.uniform(alpha))


def gen_intimate_scene(spec: SceneSpec, geom: HapkeGeometry = HapkeGeometry(),
                       band_profile: np.ndarray | None = None) -> tuple[HyperCube, GroundTruth]:
    """Intimate mixture: linear in single-scattering albedo, not reflectance.

    Endmember reflectance at or above 1 has no albedo and raises the
    out-of-model error from the conversion.
    """
    alpha = _uniform_alpha(spec)
    albedo_cols = reflectance_to_albedo(spec.endmembers.array, geom)
    pixel = albedo_to_reflectance(albedo_cols @ alpha, geom)
    clean = np.broadcast_to(pixel[:, None, None],
                            (spec.endmembers.bands, spec.height, spec.width)).copy()
    data = _apply_noise(clean, spec.snr_db, spec.seed, band_profile)
    return (HyperCube(data, spec.endmembers.wavelengths),
            GroundTruth.uniform(alpha))


def _pattern_a(height: int, width: int) -> np.ndarray:
    """Left/right halves with a 6-pixel linear blend seam."""
    col_centers = np.arange(width) + 0.5
    t = np.clip((col_centers - (width / 2.0 - 3.0)) / 6.0, 0.0, 1.0)
    return np.broadcast_to(t, (height, width))


def _pattern_b(height: int, width: int) -> np.ndarray:
    """Disk of radius 0.3*side inside, second material outside, 4-pixel blend."""
    side = min(height, width)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    rows, cols = np.mgrid[0:height, 0:width]
    rho = np.hypot(rows - cy, cols - cx)
    radius = 0.3 * side
    return np.clip((rho - (radius - 2.0)) / 4.0, 0.0, 1.0)


def _perimeter_param(dy: np.ndarray, dx: np.ndarray) -> np.ndarray:
    """Position in [0, 8) where the ray from the center exits the unit square.

    Counterclockwise from (1, 0); used to carve sectors with exactly equal
    footprint (each sector's area is half its boundary arc times the apothem,
    so equal arcs give equal areas regardless of where the cuts fall).
    """
    m = np.maximum(np.abs(dx), np.abs(dy))
    m = np.where(m == 0.0, 1.0, m)  # center pixel, if any, maps to p=0
    u = dx / m
    v = dy / m
    right = u >= np.abs(v)
    top = ~right & (v >= np.abs(u))
    left = ~right & ~top & (-u >= np.abs(v))
    bottom = ~(right | top | left)
    p = np.empty_like(u)
    p[right] = np.mod(v[right], 8.0)  # v in [-1,1] -> [0,1] and [7,8)
    p[top] = 2.0 - u[top]
    p[left] = 4.0 - v[left]
    p[bottom] = 6.0 + u[bottom]
    return p


def _pattern_c(height: int, width: int) -> np.ndarray:
    """Three equal-area sectors around the center (cuts at perimeter thirds)."""
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    rows, cols = np.mgrid[0:height, 0:width]
    p = _perimeter_param(cy - rows, cols - cx)  # math orientation: +y is up
    offset = 1.0 / 7.0  # keep cuts off pixel-center rays
    return np.floor(np.mod(p - offset, 8.0) / (8.0 / 3.0)).astype(int)


def _pattern_d(height: int, width: int) -> np.ndarray:
    """Three diagonal bands of constant row+col."""
    rows, cols = np.mgrid[0:height, 0:width]
    s = (rows + cols) / max(height + width - 2, 1)
    return np.minimum((s * 3).astype(int), 2)


def pattern_field(pattern: str, height: int, width: int, count: int) -> np.ndarray:
    """Per-pixel abundance field for pattern ids A-D, shape (height, width, count).

    A and B involve the first two materials, C and D the first three; unused
    materials get zeros so the field always matches the endmember count.
    Every pixel sums to one exactly.
    """
    pid = pattern.upper()
    if pid not in PATTERN_IDS:
        raise ValueError(f"unknown pattern {pattern!r}, expected one of {PATTERN_IDS}")
    needed = 2 if pid in ("A", "B") else 3
    if count < needed:
        raise DimensionError(f"pattern {pid} needs {needed} materials, endmember matrix has {count}")
    field = np.zeros((height, width, count))
    if pid in ("A", "B"):
        t = _pattern_a(height, width) if pid == "A" else _pattern_b(height, width)
        field[:, :, 0] = 1.0 - t
        field[:, :, 1] = t
    else:
        sector = _pattern_c(height, width) if pid == "C" else _pattern_d(height, width)
        for k in range(3):
            field[:, :, k] = (sector == k)
    return field


def gen_pattern_scene(spec: SceneSpec, geom: HapkeGeometry = HapkeGeometry(),
                      band_profile: np.ndarray | None = None) -> tuple[HyperCube, GroundTruth]:
    """Spatially patterned intimate scene; ground truth is the full field."""
    if not isinstance(spec.mixture, str):
        raise ValueError("pattern scenes take a pattern id as their mixture")
    field = pattern_field(spec.mixture, spec.height, spec.width, spec.endmembers.count)
    albedo_cols = reflectance_to_albedo(spec.endmembers.array, geom)
    w_mix = np.einsum("lr,hwr->lhw", albedo_cols, field)
    clean = albedo_to_reflectance(w_mix, geom)
    data = _apply_noise(clean, spec.snr_db, spec.seed, band_profile)
    return (HyperCube(data, spec.endmembers.wavelengths),
            GroundTruth.spatial(field))
