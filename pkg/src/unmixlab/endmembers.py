"""Endmember extraction: region means, pure-pixel search, column matching."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import EndmemberMatrix, HyperCube, Spectrum
from .errors import DimensionError, ExtractionError
from .metrics import sad


def extract_pure_mean(cube: HyperCube, region: tuple[int, int, int, int]) -> Spectrum:
    """Per-band mean spectrum over a rectangular region.

    ``region`` is (row0, col0, n_rows, n_cols). Empty or out-of-bounds
    rectangles raise DimensionError.
    """
    row0, col0, n_rows, n_cols = (int(v) for v in region)
    if n_rows < 1 or n_cols < 1:
        raise DimensionError(f"region must cover at least one pixel, got {region}")
    if row0 < 0 or col0 < 0 or row0 + n_rows > cube.height or col0 + n_cols > cube.width:
        raise DimensionError(f"region {region} leaves the {cube.width}x{cube.height} extent")
    block = cube.data[:, row0:row0 + n_rows, col0:col0 + n_cols]
    return Spectrum(block.mean(axis=(1, 2)), cube.wavelengths)


def _mean_removed_svd(cube: HyperCube) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    y = cube.to_matrix()
    y0 = y - y.mean(axis=1, keepdims=True)
    u, s, _ = np.linalg.svd(y0, full_matrices=False)
    if s.size and s[0] > 0:
        rank = int(np.sum(s > s[0] * max(y0.shape) * np.finfo(np.float64).eps))
    else:
        rank = 0
    return y, u, s, rank


def vca(cube: HyperCube, count: int, seed: int) -> EndmemberMatrix:
    """Vertex component analysis, simplified: fixed SVD subspace, random probes.

    Projects mean-removed pixels onto the top ``count`` singular directions,
    then repeats ``count`` times: draw a random direction orthogonal to the
    span of the projections already selected and take the pixel with the
    largest absolute projection (ties go to the lowest pixel index). Returned
    columns are actual pixels of the cube. Deterministic given the seed.
    """
    n = cube.width * cube.height
    if count < 1 or count > min(cube.bands, n):
        raise DimensionError(f"cannot extract {count} endmembers from a "
                             f"{cube.bands}-band, {n}-pixel cube")
    y, u, _, rank = _mean_removed_svd(cube)
    # sum-to-one mixtures of R materials span R-1 dims after mean removal
    if rank < count - 1:
        raise ExtractionError(f"mean-removed rank {rank} cannot support {count} endmembers")
    proj = u[:, :count].T @ (y - y.mean(axis=1, keepdims=True))
    rng = np.random.default_rng(seed)
    picked: list[int] = []
    span = np.zeros((count, 0))
    for _ in range(count):
        while True:
            w = rng.standard_normal(count)
            if span.shape[1]:
                w = w - span @ np.linalg.lstsq(span, w, rcond=None)[0]
            norm = np.linalg.norm(w)
            if norm > 1e-12:
                break
        scores = np.abs((w / norm) @ proj)
        idx = int(np.argmax(scores))
        picked.append(idx)
        span = np.concatenate([span, proj[:, idx:idx + 1]], axis=1)
    names = tuple(f"px{idx // cube.width}_{idx % cube.width}" for idx in picked)
    return EndmemberMatrix(y[:, picked], cube.wavelengths, names)


def _simplex_volume(corners: np.ndarray) -> float:
    """Volume of the simplex with the given (dim, count) corner coordinates."""
    count = corners.shape[1]
    e = np.ones((count, count))
    e[1:, :] = corners
    return abs(float(np.linalg.det(e))) / float(math.factorial(count - 1))


def nfindr(cube: HyperCube, count: int, seed: int, return_trace: bool = False):
    """Maximum-volume simplex search over the cube's pixels.

    Pixels are projected to ``count - 1`` dimensions (mean-removed SVD), a
    random distinct subset seeds the simplex, then each vertex in turn scans
    pixels in row-major order and the first strictly volume-increasing swap is
    taken; sweeps repeat until none improves. The volume trace is monotone
    non-decreasing. With ``return_trace`` the list of accepted volumes is
    returned alongside the matrix.
    """
    n = cube.width * cube.height
    if count < 1 or count > n:
        raise DimensionError(f"cannot pick {count} pixels from {n}")
    y, u, _, _ = _mean_removed_svd(cube)
    if np.unique(y, axis=1).shape[1] < count:
        raise ExtractionError(f"cube has fewer than {count} distinct pixel spectra")
    dims = count - 1
    coords = u[:, :dims].T @ (y - y.mean(axis=1, keepdims=True)) if dims else np.zeros((0, n))
    rng = np.random.default_rng(seed)
    indices = list(rng.choice(n, size=count, replace=False))
    volume = _simplex_volume(coords[:, indices])
    trace = [volume]
    improved = True
    while improved:
        improved = False
        for k in range(count):
            held = indices[k]
            for i in range(n):
                if i == held:
                    continue
                trial = indices.copy()
                trial[k] = i
                v = _simplex_volume(coords[:, trial])
                if v > volume:
                    indices, volume = trial, v
                    trace.append(v)
                    improved = True
                    break
    if count > 1 and volume == 0.0:
        raise ExtractionError("pixel cloud is degenerate: every candidate simplex is flat")
    names = tuple(f"px{idx // cube.width}_{idx % cube.width}" for idx in indices)
    matrix = EndmemberMatrix(y[:, indices], cube.wavelengths, names)
    return (matrix, trace) if return_trace else matrix


def match_endmembers(estimate: EndmemberMatrix, reference: EndmemberMatrix) -> np.ndarray:
    """Optimal column assignment between two matrices by total spectral angle.

    Returns ``perm`` with ``perm[j]`` the estimate column paired with
    reference column ``j``, so ``estimate.array[:, perm]`` is aligned to the
    reference order. Matching a matrix against itself yields the identity;
    against a column-shuffled copy, the inverse shuffle.
    """
    if estimate.count != reference.count:
        raise DimensionError(f"column counts disagree: {estimate.count} vs {reference.count}")
    if estimate.bands != reference.bands:
        raise DimensionError(f"band counts disagree: {estimate.bands} vs {reference.bands}")
    r = reference.count
    cost = np.empty((r, r))
    for i in range(r):
        for j in range(r):
            cost[i, j] = sad(estimate.array[:, i], reference.array[:, j])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(r, dtype=int)
    perm[cols] = rows
    return perm
