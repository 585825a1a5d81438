"""Quality metrics: abundance RMSE, spectral angle, divergence, residuals."""

from __future__ import annotations

import warnings

import numpy as np

from .core import AbundanceMap, AbundanceVector, GroundTruth, Spectrum
from .errors import DimensionError

SID_OFFSET = 1e-12


def _fractions(obj) -> np.ndarray:
    if isinstance(obj, GroundTruth):
        return obj.fractions
    if isinstance(obj, (AbundanceMap, AbundanceVector)):
        return obj.fractions
    return np.asarray(obj, dtype=np.float64)


def rmse(truth, estimate, squared: bool = True) -> float:
    """Root mean square abundance error over N pixels and R materials.

    Default form: sqrt(sum_i ||a_i - ahat_i||^2 / (N*R)). With
    ``squared=False`` the per-pixel Euclidean norm enters the mean unsquared,
    a variant some reports use; both are symmetric in their arguments.

    Accepts GroundTruth, AbundanceMap, AbundanceVector or plain arrays; a
    shared truth vector broadcasts across a spatial estimate.
    """
    a = _fractions(truth)
    b = _fractions(estimate)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"material counts disagree: {a.shape[-1]} vs {b.shape[-1]}")
    try:
        a, b = np.broadcast_arrays(a, b)
    except ValueError as exc:
        raise DimensionError(f"shapes {a.shape} and {b.shape} do not align") from exc
    count = a.shape[-1]
    diff = (a - b).reshape(-1, count)
    n = diff.shape[0]
    norms_sq = np.einsum("ij,ij->i", diff, diff)
    if squared:
        return float(np.sqrt(norms_sq.sum() / (n * count)))
    return float(np.sqrt(np.sqrt(norms_sq).sum() / (n * count)))


def _values(obj) -> np.ndarray:
    if isinstance(obj, Spectrum):
        return obj.values
    return np.asarray(obj, dtype=np.float64)


def sad(a, b) -> float:
    """Spectral angle between two spectra, in degrees.

    Scale invariant by construction; either input being the zero vector makes
    the angle undefined and raises ValueError.
    """
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise DimensionError(f"spectra disagree in shape: {va.shape} vs {vb.shape}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("spectral angle is undefined for a zero spectrum")
    cosine = np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0)
    return float(np.degrees(np.arccos(cosine)))


def sid(a, b) -> float:
    """Directed spectral information divergence D(a || b).

    Spectra are normalized to unit-sum distributions first. Entries at or
    below zero are lifted by a 1e-12 offset (with a warning); if that still
    leaves nonpositive mass the divergence is undefined and ValueError is
    raised. Natural logarithm throughout.
    """
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise DimensionError(f"spectra disagree in shape: {va.shape} vs {vb.shape}")
    out = []
    for v in (va, vb):
        if np.any(v <= 0.0):
            warnings.warn("nonpositive spectral entries offset by 1e-12 before normalization",
                          stacklevel=2)
            v = v + SID_OFFSET
        if np.any(v <= 0.0):
            raise ValueError("spectrum has entries below the divergence offset")
        out.append(v / v.sum())
    p, q = out
    # Gibbs: the divergence is nonnegative; anything below zero is float dust
    return max(float(np.sum(p * np.log(p / q))), 0.0)


def reconstruction_error(r, r_hat) -> tuple[float, float]:
    """Per-pixel reconstruction quality: (RMS residual, spectral angle deg).

    The residual is ||r - r_hat||_2 / sqrt(L) so a uniform offset of d comes
    back as exactly d.
    """
    vr, vh = _values(r), _values(r_hat)
    if vr.shape != vh.shape:
        raise DimensionError(f"spectra disagree in shape: {vr.shape} vs {vh.shape}")
    re = float(np.linalg.norm(vr - vh) / np.sqrt(vr.size))
    return re, sad(vr, vh)
