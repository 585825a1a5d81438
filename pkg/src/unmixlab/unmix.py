"""Abundance solvers: linear, kernel, bilinear, polynomial, multilinear, intimate.

Two exact active-set routines carry the family: nonnegative least squares
(NCLS) and a simplex-constrained quadratic program (FCLS and the K-Hype alpha
step). Both terminate on KKT conditions and break pivot ties toward the
lowest index, so results are deterministic across platforms and partitions.
The iterative solvers (GBM, p-linear) alternate blocks and only ever accept
objective decreases, which makes their traces monotone by construction.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import AbundanceMap, AbundanceVector, EndmemberMatrix, HyperCube, Spectrum
from .errors import DimensionError, NumericalError
from .hapke import HapkeGeometry, reflectance_to_albedo

ALGOS = ("ncls", "fcls", "khype", "gbm", "plinear", "mlm", "hapke")
KERNEL_JITTER = 1e-10
MLM_P_MAX = 0.99
THREADS_ENV = "HSU_THREADS"


@dataclass(frozen=True)
class SolverConfig:
    """Shared solver settings; fields irrelevant to an algorithm are ignored."""

    algo: str = "fcls"
    kernel_sigma: float = 2.0
    reg_lambda: float = 1e-2
    p_order: int = 4
    geom: HapkeGeometry = field(default_factory=HapkeGeometry)
    max_iter: int = 500
    tol: float = 1e-8
    clamp_reflectance: bool = True

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algo {self.algo!r}, expected one of {ALGOS}")
        if self.kernel_sigma <= 0:
            raise ValueError("kernel_sigma must be positive")
        if self.reg_lambda <= 0:
            raise ValueError("reg_lambda must be positive")
        if self.p_order < 1:
            raise ValueError("p_order must be at least 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")

    def to_config(self) -> dict[str, str]:
        return {
            "algo": self.algo,
            "kernel_sigma": f"{self.kernel_sigma:.10g}",
            "reg_lambda": f"{self.reg_lambda:.10g}",
            "p_order": str(self.p_order),
            "mu0": f"{self.geom.mu0:.10g}",
            "mu": f"{self.geom.mu:.10g}",
            "max_iter": str(self.max_iter),
            "tol": f"{self.tol:.10g}",
            "clamp_reflectance": "true" if self.clamp_reflectance else "false",
        }

    @classmethod
    def from_config(cls, entries: dict[str, str]) -> "SolverConfig":
        known = {
            "algo": str, "kernel_sigma": float, "reg_lambda": float,
            "p_order": int, "max_iter": int, "tol": float,
        }
        kwargs: dict = {}
        for key, cast in known.items():
            if key in entries:
                kwargs[key] = cast(entries[key])
        if "mu0" in entries or "mu" in entries:
            kwargs["geom"] = HapkeGeometry(float(entries.get("mu0", 1.0)),
                                           float(entries.get("mu", 1.0)))
        if "clamp_reflectance" in entries:
            kwargs["clamp_reflectance"] = entries["clamp_reflectance"].strip().lower() in ("true", "1", "yes")
        return cls(**kwargs)


def _as_vector(r) -> np.ndarray:
    if isinstance(r, Spectrum):
        return np.asarray(r.values, dtype=np.float64)
    arr = np.asarray(r, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"pixel spectrum must be one-dimensional, got shape {arr.shape}")
    return arr


def _as_matrix(m) -> np.ndarray:
    if isinstance(m, EndmemberMatrix):
        return np.asarray(m.array, dtype=np.float64)
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"endmember matrix must be two-dimensional, got shape {arr.shape}")
    return arr


def _check_problem(r_vec: np.ndarray, m_arr: np.ndarray) -> None:
    bands, count = m_arr.shape
    if r_vec.size != bands:
        raise DimensionError(f"spectrum has {r_vec.size} bands, matrix has {bands}")
    if bands < count:
        raise DimensionError(f"underdetermined: {count} endmembers over {bands} bands")


def _solve_or_lstsq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(a, b, rcond=None)[0]


def nnls_gram(gram: np.ndarray, corr: np.ndarray, tol: float) -> np.ndarray:
    """Lawson-Hanson active set on normal-equation inputs.

    Minimizes ||r - M x||^2 over x >= 0 given gram = M'M and corr = M'r.
    The entering index maximizes the dual; ties resolve to the lowest index
    via argmax. Termination: every dual at most tol * max(1, |corr|_inf).
    """
    count = corr.size
    x = np.zeros(count)
    passive = np.zeros(count, dtype=bool)
    thr = tol * max(1.0, float(np.abs(corr).max()) if count else 1.0)
    for _ in range(50 * count + 100):
        w = corr - gram @ x
        w_masked = np.where(passive, -np.inf, w)
        j = int(np.argmax(w_masked))
        if w_masked[j] <= thr:
            return x
        passive[j] = True
        while True:
            idx = np.flatnonzero(passive)
            z = _solve_or_lstsq(gram[np.ix_(idx, idx)], corr[idx])
            if np.all(z > 0):
                x[:] = 0.0
                x[idx] = z
                break
            step = x[idx] / np.where(z < x[idx], x[idx] - z, 1.0)
            blocking = z <= 0
            t = float(step[blocking].min())
            x[idx] = x[idx] + t * (z - x[idx])
            drop = idx[(blocking) & (x[idx] <= 1e-14)]
            x[drop] = 0.0
            passive[drop] = False
            if drop.size == 0:  # numerical stall: clamp the most negative
                k = idx[int(np.argmin(z))]
                x[k] = 0.0
                passive[k] = False
    raise NumericalError("nonnegative least squares failed to converge")


def simplex_qp(hess: np.ndarray, lin: np.ndarray, tol: float) -> np.ndarray:
    """Exact minimizer of 0.5 x'Hx - l'x over the probability simplex.

    Primal active set starting from the uniform point: repeatedly solve the
    equality-constrained KKT system on the passive coordinates, step to the
    first blocking bound when the solution leaves the nonnegative orthant,
    and release the most negative dual (lowest index on ties) until the KKT
    conditions hold. No sum-to-one penalty row is involved; the constraint is
    enforced exactly.
    """
    count = lin.size
    scale = max(1.0, float(np.abs(lin).max()) if count else 1.0,
                float(np.abs(hess).max()) if count else 1.0)
    thr = tol * scale
    x = np.full(count, 1.0 / count)
    passive = np.ones(count, dtype=bool)
    for _ in range(100 * count + 1000):
        idx = np.flatnonzero(passive)
        kkt = np.zeros((idx.size + 1, idx.size + 1))
        kkt[:idx.size, :idx.size] = hess[np.ix_(idx, idx)]
        kkt[:idx.size, -1] = 1.0
        kkt[-1, :idx.size] = 1.0
        rhs = np.concatenate([lin[idx], [1.0]])
        sol = _solve_or_lstsq(kkt, rhs)
        target, nu = sol[:idx.size], float(sol[idx.size])
        if np.all(target >= 0.0):
            x[:] = 0.0
            x[idx] = target
            grad = hess @ x - lin
            dual = grad + nu
            blocked = np.flatnonzero(~passive)
            if blocked.size == 0 or float(dual[blocked].min()) >= -thr:
                return x
            release = blocked[int(np.argmin(dual[blocked]))]
            passive[release] = True
            continue
        current = x[idx]
        direction = target - current
        shrinking = direction < 0
        ratios = np.where(shrinking, current / np.where(shrinking, -direction, 1.0), np.inf)
        t = min(1.0, float(ratios.min()))
        moved = current + t * direction
        x[:] = 0.0
        x[idx] = moved
        hit = idx[(ratios <= t + 1e-15) & shrinking]
        if hit.size == 0:
            hit = idx[[int(np.argmin(moved))]]
        x[hit] = 0.0
        passive[hit] = False
        if not passive.any():  # keep at least one coordinate free
            passive[hit[0]] = True
    raise NumericalError("simplex-constrained QP failed to converge")


def ncls(r, m, cfg: SolverConfig | None = None) -> AbundanceVector:
    """Nonnegativity-constrained least squares (no sum-to-one)."""
    cfg = cfg or SolverConfig(algo="ncls")
    r_vec, m_arr = _as_vector(r), _as_matrix(m)
    _check_problem(r_vec, m_arr)
    x = nnls_gram(m_arr.T @ m_arr, m_arr.T @ r_vec, cfg.tol)
    return AbundanceVector(x, asc_enforced=False)


def fcls(r, m, cfg: SolverConfig | None = None) -> AbundanceVector:
    """Fully constrained least squares: nonnegative and sum-to-one, exact."""
    cfg = cfg or SolverConfig(algo="fcls")
    r_vec, m_arr = _as_vector(r), _as_matrix(m)
    _check_problem(r_vec, m_arr)
    x = simplex_qp(2.0 * m_arr.T @ m_arr, 2.0 * m_arr.T @ r_vec, cfg.tol)
    return AbundanceVector(x, asc_enforced=True)


def _gaussian_band_kernel(m_arr: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian kernel over the band rows of the endmember matrix."""
    sq = np.sum(m_arr ** 2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (m_arr @ m_arr.T)
    np.clip(d2, 0.0, None, out=d2)
    return np.exp(-d2 / (2.0 * sigma * sigma))


class _KhypeOperator:
    """Precomputed pieces of the K-Hype solve, reusable across pixels."""

    def __init__(self, m_arr: np.ndarray, cfg: SolverConfig):
        self.m_arr = m_arr
        self.tol = cfg.tol
        kernel = _gaussian_band_kernel(m_arr, cfg.kernel_sigma)
        try:
            cho_factor(kernel + KERNEL_JITTER * np.eye(kernel.shape[0]), lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("kernel matrix is not positive semidefinite after jitter") from exc
        self.kernel = kernel
        self.factor = cho_factor(kernel + cfg.reg_lambda * np.eye(kernel.shape[0]), lower=True)
        qm = cho_solve(self.factor, m_arr)
        count = m_arr.shape[1]
        self.hess = 2.0 * (np.eye(count) + m_arr.T @ qm)
        self.qm = qm

    def solve(self, r_vec: np.ndarray) -> tuple[np.ndarray, float]:
        lin = 2.0 * (self.qm.T @ r_vec)
        alpha = simplex_qp(self.hess, lin, self.tol)
        beta = cho_solve(self.factor, r_vec - self.m_arr @ alpha)
        energy = float(beta @ (self.kernel @ beta))
        return alpha, max(energy, 0.0)


def khype(r, m, cfg: SolverConfig | None = None) -> tuple[AbundanceVector, float]:
    """Kernel-augmented linear unmixing.

    Solves min over (alpha on the simplex, beta) of
    0.5*lam*(||alpha||^2 + beta'K beta) + 0.5*||r - M alpha - K beta||^2 with
    K the Gaussian kernel over band rows of M. Eliminating beta reduces the
    problem to a simplex QP in alpha, solved exactly; beta then comes back in
    closed form. Returns the abundances and the nonlinear energy beta'K beta.
    """
    cfg = cfg or SolverConfig(algo="khype")
    r_vec, m_arr = _as_vector(r), _as_matrix(m)
    _check_problem(r_vec, m_arr)
    alpha, energy = _KhypeOperator(m_arr, cfg).solve(r_vec)
    return AbundanceVector(alpha, asc_enforced=True), energy


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    rho = int(np.nonzero(u * k > (css - 1.0))[0][-1])
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _project_box(v: np.ndarray) -> np.ndarray:
    return np.clip(v, 0.0, 1.0)


def _pg_descend(value_grad, x0: np.ndarray, project, tol: float,
                max_steps: int, max_halvings: int = 50) -> tuple[np.ndarray, float]:
    """Monotone projected-gradient descent with spectral step seeding.

    Each step backtracks by halving until the objective drops; a step that
    cannot find a decrease in ``max_halvings`` halvings stalls the block. A
    non-finite objective raises NumericalError (divergence guard).
    """
    x = x0
    f, g = value_grad(x)
    if not np.isfinite(f):
        raise NumericalError("objective is not finite at the starting point")
    t = 1.0
    x_prev = g_prev = None
    for _ in range(max_steps):
        if np.linalg.norm(project(x - g) - x) <= tol:
            break
        if x_prev is not None:
            dx = x - x_prev
            dg = g - g_prev
            curvature = float(dx @ dg)
            if curvature > 1e-18:
                t = float(np.clip((dx @ dx) / curvature, 1e-12, 1e12))
        accepted = False
        for _ in range(max_halvings):
            cand = project(x - t * g)
            f_new, g_new = value_grad(cand)
            if not np.isfinite(f_new):
                raise NumericalError("objective diverged during line search")
            if f_new < f:
                x_prev, g_prev = x, g
                x, f, g = cand, f_new, g_new
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
    return x, f


def _pair_list(count: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(count) for j in range(i + 1, count)]


def gbm(r, m, cfg: SolverConfig | None = None,
        trace_out: list[float] | None = None,
        gamma_fixed: float | np.ndarray | None = None) -> tuple[AbundanceVector, np.ndarray]:
    """Generalized bilinear model fit.

    Model: r = M a + sum_{i<j} g_ij a_i a_j (m_i * m_j), a on the simplex,
    g_ij in [0, 1]. Alternates projected-gradient blocks over a (FCLS start)
    and g (0.5 start); every accepted step decreases the residual, so the
    objective trace (append into ``trace_out``) is monotone non-increasing.
    Returns the abundances and the symmetric gamma matrix.

    ``gamma_fixed`` pins the interaction coefficients (scalar or full (R, R)
    matrix) and skips the gamma block; 0 reduces the model to plain FCLS.
    """
    cfg = cfg or SolverConfig(algo="gbm")
    r_vec, m_arr = _as_vector(r), _as_matrix(m)
    _check_problem(r_vec, m_arr)
    count = m_arr.shape[1]
    if count < 2:
        raise DimensionError("bilinear model needs at least two endmembers")
    pairs = _pair_list(count)
    ii = np.array([i for i, _ in pairs])
    jj = np.array([j for _, j in pairs])
    bilin = m_arr[:, ii] * m_arr[:, jj]
    alpha = fcls(r_vec, m_arr, cfg).fractions.copy()
    if gamma_fixed is None:
        gamma = np.full(len(pairs), 0.5)
    else:
        fixed = np.asarray(gamma_fixed, dtype=np.float64)
        if fixed.ndim == 0:
            gamma = np.full(len(pairs), float(fixed))
        elif fixed.shape == (count, count):
            gamma = fixed[ii, jj].copy()
        else:
            raise DimensionError(
                f"gamma_fixed must be scalar or ({count}, {count}), got {fixed.shape}")
        if np.any(gamma < 0.0) or np.any(gamma > 1.0):
            raise ValueError("gamma_fixed entries must lie in [0, 1]")

    def residual(a: np.ndarray, g: np.ndarray) -> np.ndarray:
        return r_vec - m_arr @ a - bilin @ (g * a[ii] * a[jj])

    def objective(a: np.ndarray, g: np.ndarray) -> float:
        e = residual(a, g)
        return 0.5 * float(e @ e)

    def alpha_value_grad(a: np.ndarray) -> tuple[float, np.ndarray]:
        e = residual(a, gamma)
        pair_pull = gamma * (bilin.T @ e)
        grad = -(m_arr.T @ e)
        np.subtract.at(grad, ii, pair_pull * a[jj])
        np.subtract.at(grad, jj, pair_pull * a[ii])
        return 0.5 * float(e @ e), grad

    def gamma_value_grad(g: np.ndarray) -> tuple[float, np.ndarray]:
        e = residual(alpha, g)
        return 0.5 * float(e @ e), -(alpha[ii] * alpha[jj]) * (bilin.T @ e)

    f = objective(alpha, gamma)
    if trace_out is not None:
        trace_out.append(f)
    for _ in range(cfg.max_iter):
        f_before = f
        alpha, f = _pg_descend(alpha_value_grad, alpha, _project_simplex, cfg.tol, 200)
        if gamma_fixed is None:
            gamma, f = _pg_descend(gamma_value_grad, gamma, _project_box, cfg.tol, 200)
        if f > f_before + 1e-12 * max(1.0, abs(f_before)):
            raise NumericalError("bilinear objective increased between blocks")
        if trace_out is not None:
            trace_out.append(f)
        if f_before - f < cfg.tol:
            break
    gamma_matrix = np.zeros((count, count))
    for p_idx, (i, j) in enumerate(pairs):
        gamma_matrix[i, j] = gamma_matrix[j, i] = gamma[p_idx]
    return AbundanceVector(alpha, asc_enforced=True), gamma_matrix


def plinear(r, m, cfg: SolverConfig | None = None,
            trace_out: list[float] | None = None) -> tuple[AbundanceVector, np.ndarray]:
    """Post-nonlinear polynomial fit: r = sum_k w_k (M a)^k, w_1 fixed at 1.

    Alternates a closed-form least-squares update of the free weights with
    projected-gradient steps on the simplex for a. With p_order = 1 there are
    no free weights and the solve converges to the FCLS optimum. A constant
    pixel spectrum makes the powers of x = M a collinear; the weight fit is
    then rank-deficient and the minimum-norm weights are returned.
    """
    cfg = cfg or SolverConfig(algo="plinear")
    r_vec, m_arr = _as_vector(r), _as_matrix(m)
    _check_problem(r_vec, m_arr)
    p = cfg.p_order
    alpha = fcls(r_vec, m_arr, cfg).fractions.copy()
    weights = np.zeros(p)
    weights[0] = 1.0

    def powers(x: np.ndarray) -> np.ndarray:
        return np.stack([x ** k for k in range(1, p + 1)], axis=1)

    def alpha_value_grad(a: np.ndarray) -> tuple[float, np.ndarray]:
        x = m_arr @ a
        model = powers(x) @ weights
        e = model - r_vec
        slope = np.zeros_like(x)
        for k in range(1, p + 1):
            slope += k * weights[k - 1] * x ** (k - 1)
        return 0.5 * float(e @ e), m_arr.T @ (slope * e)

    f = alpha_value_grad(alpha)[0]
    if trace_out is not None:
        trace_out.append(f)
    for _ in range(cfg.max_iter):
        f_before = f
        if p > 1:
            x = m_arr @ alpha
            basis = powers(x)
            target = r_vec - x
            w_free, *_ = np.linalg.lstsq(basis[:, 1:], target, rcond=None)
            cand = np.concatenate([[1.0], w_free])
            e = basis @ cand - r_vec
            f_cand = 0.5 * float(e @ e)
            if f_cand < f:  # exact LS cannot increase, guard roundoff anyway
                weights, f = cand, f_cand
        alpha, f = _pg_descend(alpha_value_grad, alpha, _project_simplex, cfg.tol, 400)
        if trace_out is not None:
            trace_out.append(f)
        if f_before - f < cfg.tol:
            break
    return AbundanceVector(alpha, asc_enforced=True), weights.copy()


def mlm_transform(r, p_value: float):
    """Map an observed spectrum into the linear domain for a given P.

    Inverse of r = (1-P)x / (1-Px): x = r / (1 - P + P r). Round trips are
    exact up to floating point for x in [0, 1).
    """
    r_arr = np.asarray(r, dtype=np.float64)
    out = r_arr / (1.0 - p_value + p_value * r_arr)
    return float(out) if np.ndim(r) == 0 else out


def mlm_forward(x, p_value: float):
    """Multilinear forward map r = (1-P)x / (1-Px)."""
    x_arr = np.asarray(x, dtype=np.float64)
    out = (1.0 - p_value) * x_arr / (1.0 - p_value * x_arr)
    return float(out) if np.ndim(x) == 0 else out


def mlm(r, m, cfg: SolverConfig | None = None) -> tuple[AbundanceVector, float]:
    """Multilinear mixing fit via golden-section search on P.

    For each trial P the observation is transformed with ``mlm_transform``,
    FCLS recovers abundances, and the reconstruction error back in the
    observed domain scores the trial. Bands with r >= 1 leave the model's
    domain whenever P > 0 and are excluded from the whole fit with a warning.
    """
    cfg = cfg or SolverConfig(algo="mlm")
    r_vec, m_arr = _as_vector(r), _as_matrix(m)
    _check_problem(r_vec, m_arr)
    usable = r_vec < 1.0
    if not np.all(usable):
        warnings.warn(f"excluding {int((~usable).sum())} band(s) with reflectance >= 1 "
                      "from the multilinear fit", stacklevel=2)
        r_vec = r_vec[usable]
        m_arr = m_arr[usable]
        _check_problem(r_vec, m_arr)
    gram_cache: dict[float, tuple[np.ndarray, float]] = {}

    def evaluate(p_value: float) -> tuple[np.ndarray, float]:
        if p_value in gram_cache:
            return gram_cache[p_value]
        x = mlm_transform(r_vec, p_value)
        alpha = simplex_qp(2.0 * m_arr.T @ m_arr, 2.0 * m_arr.T @ x, cfg.tol)
        recon = mlm_forward(m_arr @ alpha, p_value)
        err = float(np.sum((r_vec - recon) ** 2))
        gram_cache[p_value] = (alpha, err)
        return alpha, err

    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, MLM_P_MAX
    a = hi - inv_phi * (hi - lo)
    b = lo + inv_phi * (hi - lo)
    fa, fb = evaluate(a)[1], evaluate(b)[1]
    while hi - lo > 1e-8:
        if fa <= fb:
            hi, b, fb = b, a, fa
            a = hi - inv_phi * (hi - lo)
            fa = evaluate(a)[1]
        else:
            lo, a, fa = a, b, fb
            b = lo + inv_phi * (hi - lo)
            fb = evaluate(b)[1]
    candidates = [lo, a, b, hi]
    best = min(candidates, key=lambda p_val: evaluate(p_val)[1])
    alpha, _ = evaluate(best)
    return AbundanceVector(alpha, asc_enforced=True), float(best)


def hapke_unmix(r, m, cfg: SolverConfig | None = None) -> AbundanceVector:
    """Intimate-mixture unmixing: FCLS in the single-scattering albedo domain.

    Reflectance at or above 1 is clamped to just below 1 when
    ``cfg.clamp_reflectance`` is set, otherwise it raises the out-of-model
    error from the albedo conversion.
    """
    cfg = cfg or SolverConfig(algo="hapke")
    r_vec, m_arr = _as_vector(r), _as_matrix(m)
    _check_problem(r_vec, m_arr)
    r_alb = reflectance_to_albedo(r_vec, cfg.geom, clamp=cfg.clamp_reflectance)
    m_alb = reflectance_to_albedo(m_arr, cfg.geom, clamp=cfg.clamp_reflectance)
    x = simplex_qp(2.0 * m_alb.T @ m_alb, 2.0 * m_alb.T @ r_alb, cfg.tol)
    return AbundanceVector(x, asc_enforced=True)


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit argument, else HSU_THREADS, else serial; 0 = auto."""
    if workers is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        workers = int(raw) if raw else 1
    if workers < 0:
        raise ValueError("worker count must be nonnegative")
    if workers == 0:
        workers = os.cpu_count() or 1
    return workers


def _pixel_solver(m_arr: np.ndarray, cfg: SolverConfig):
    """Bind per-cube precomputation and return a pixel -> fractions callable."""
    if cfg.algo == "ncls":
        gram = m_arr.T @ m_arr
        return lambda r_vec: nnls_gram(gram, m_arr.T @ r_vec, cfg.tol)
    if cfg.algo == "fcls":
        hess = 2.0 * m_arr.T @ m_arr
        return lambda r_vec: simplex_qp(hess, 2.0 * m_arr.T @ r_vec, cfg.tol)
    if cfg.algo == "khype":
        operator = _KhypeOperator(m_arr, cfg)
        return lambda r_vec: operator.solve(r_vec)[0]
    if cfg.algo == "gbm":
        return lambda r_vec: gbm(r_vec, m_arr, cfg)[0].fractions
    if cfg.algo == "plinear":
        return lambda r_vec: plinear(r_vec, m_arr, cfg)[0].fractions
    if cfg.algo == "mlm":
        return lambda r_vec: mlm(r_vec, m_arr, cfg)[0].fractions
    if cfg.algo == "hapke":
        m_alb = reflectance_to_albedo(m_arr, cfg.geom, clamp=cfg.clamp_reflectance)
        hess = 2.0 * m_alb.T @ m_alb
        def solve(r_vec: np.ndarray) -> np.ndarray:
            r_alb = reflectance_to_albedo(r_vec, cfg.geom, clamp=cfg.clamp_reflectance)
            return simplex_qp(hess, 2.0 * m_alb.T @ r_alb, cfg.tol)
        return solve
    raise ValueError(f"unknown algo {cfg.algo!r}")


def unmix_cube(cube: HyperCube, m: EndmemberMatrix, cfg: SolverConfig,
               workers: int | None = None) -> AbundanceMap:
    """Run the configured solver on every pixel of the cube.

    Only valid bands participate. A pixel whose solve raises is flagged in
    the ``failed`` mask (fractions NaN) and the run continues; all-zero input
    pixels are flagged in ``degenerate`` but still solved. Results are
    identical however the pixels are partitioned across workers.
    """
    if cube.bands != m.bands:
        raise DimensionError(f"cube has {cube.bands} bands, endmembers {m.bands}")
    if not np.allclose(cube.wavelengths, m.wavelengths):
        raise DimensionError("cube and endmember wavelength grids disagree")
    keep = np.asarray(cube.band_mask)
    if not keep.any():
        raise DimensionError("cube has no valid bands")
    m_arr = np.asarray(m.array)[keep]
    solver = _pixel_solver(m_arr, cfg)
    height, width, count = cube.height, cube.width, m.count
    fractions = np.full((height, width, count), np.nan)
    failed = np.zeros((height, width), dtype=bool)
    degenerate = np.zeros((height, width), dtype=bool)
    planes = cube.data[keep]

    def run_rows(row0: int, row1: int) -> None:
        for row in range(row0, row1):
            for col in range(width):
                r_vec = np.ascontiguousarray(planes[:, row, col])
                if not r_vec.any():
                    degenerate[row, col] = True
                try:
                    fractions[row, col] = solver(r_vec)
                except (ValueError, NumericalError, np.linalg.LinAlgError):
                    failed[row, col] = True

    n_workers = resolve_workers(workers)
    if n_workers <= 1 or height == 1:
        run_rows(0, height)
    else:
        chunk = max(1, -(-height // n_workers))
        bounds = [(r0, min(r0 + chunk, height)) for r0 in range(0, height, chunk)]
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            for future in [pool.submit(run_rows, r0, r1) for r0, r1 in bounds]:
                future.result()
    return AbundanceMap(fractions, asc_enforced=cfg.algo != "ncls",
                        failed=failed, degenerate=degenerate)
