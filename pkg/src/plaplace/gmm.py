"""Analytic Gaussian mixture oracle.

Isotropic, shared-variance mixtures with closed forms for the log-density,
its gradient (the score), the Hessian, and the pointwise p-Laplace.  These
serve as ground truth against which learned score fields are judged.

All evaluation functions are vectorized: ``x`` may be a single point of
shape ``(d,)`` or a batch of shape ``(n, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import SingularGradientError
from .fields import EPS_GRAD, ScoreField
from .geometry import BallSpec, sample_ball_uniform

__all__ = [
    "GmmParams",
    "PerturbedGmm",
    "draw_gmm",
    "log_density",
    "score",
    "hessian",
    "laplacian",
    "pointwise_p_laplace_exact",
    "averaged_p_laplace_dense",
    "sample_gmm",
    "score_field",
    "gmm_to_dict",
    "gmm_from_dict",
]


@dataclass(frozen=True)
class GmmParams:
    """Mixture of K isotropic Gaussians N(mean_k, sigma2 * I) with the given weights."""

    means: np.ndarray
    sigma2: float
    weights: np.ndarray

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if weights.ndim != 1 or weights.shape[0] != means.shape[0]:
            raise ValueError("weights must be one per mixture component")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]


@dataclass(frozen=True)
class PerturbedGmm:
    """The mixture after variance-preserving Gaussian corruption at noise fraction alpha.

    Means shrink by sqrt(1 - alpha) and the component variance becomes
    (1 - alpha) * sigma2 + alpha, so alpha = 0 recovers the base mixture.
    """

    base: GmmParams
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")

    def as_gmm(self) -> GmmParams:
        a = self.alpha
        return GmmParams(
            means=np.sqrt(1.0 - a) * self.base.means,
            sigma2=(1.0 - a) * self.base.sigma2 + a,
            weights=self.base.weights,
        )


def _as_gmm(g: GmmParams | PerturbedGmm) -> GmmParams:
    return g.as_gmm() if isinstance(g, PerturbedGmm) else g


def draw_gmm(
    n_components: int = 3,
    dim: int = 2,
    sigma2: float = 1.0,
    low: float = -5.0,
    high: float = 5.0,
    seed: int = 0,
) -> GmmParams:
    """Equal-weight mixture with means drawn uniformly in [low, high]^dim from a seed."""
    rng = np.random.default_rng(seed)
    means = rng.uniform(low, high, size=(n_components, dim))
    weights = np.full(n_components, 1.0 / n_components)
    return GmmParams(means=means, sigma2=sigma2, weights=weights)


def _log_resp_unnormalized(g: GmmParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-component log weight plus Gaussian exponent (constant term dropped).

    Returns (diffs, log_resp) where diffs = mean_k - x with shape (..., K, d).
    """
    diffs = g.means - x[..., None, :]
    sq = np.sum(diffs * diffs, axis=-1)
    log_resp = np.log(g.weights) - 0.5 * sq / g.sigma2
    return diffs, log_resp


def log_density(g: GmmParams | PerturbedGmm, x) -> np.ndarray | float:
    """log of the mixture density, via log-sum-exp over components."""
    g = _as_gmm(g)
    x = np.asarray(x, dtype=float)
    _, log_resp = _log_resp_unnormalized(g, x)
    const = -0.5 * g.dim * np.log(2.0 * np.pi * g.sigma2)
    out = logsumexp(log_resp, axis=-1) + const
    return float(out) if out.ndim == 0 else out


def score(g: GmmParams | PerturbedGmm, x) -> np.ndarray:
    """Gradient of the log-density: responsibility-weighted pull toward the means."""
    g = _as_gmm(g)
    x = np.asarray(x, dtype=float)
    diffs, log_resp = _log_resp_unnormalized(g, x)
    resp = softmax(log_resp, axis=-1)
    return np.einsum("...k,...kd->...d", resp, diffs) / g.sigma2


def hessian(g: GmmParams | PerturbedGmm, x) -> np.ndarray:
    """Hessian of the log-density, shape (..., d, d).

    Uses the responsibility-weighted moment formula
    H = sum_k r_k (g_k g_k^T - I/sigma2) - s s^T with g_k = (mean_k - x)/sigma2.
    """
    g = _as_gmm(g)
    x = np.asarray(x, dtype=float)
    diffs, log_resp = _log_resp_unnormalized(g, x)
    resp = softmax(log_resp, axis=-1)
    gk = diffs / g.sigma2
    s = np.einsum("...k,...kd->...d", resp, gk)
    outer = np.einsum("...k,...ki,...kj->...ij", resp, gk, gk)
    eye = np.eye(g.dim) / g.sigma2
    return outer - eye - np.einsum("...i,...j->...ij", s, s)


def laplacian(g: GmmParams | PerturbedGmm, x) -> np.ndarray | float:
    """Trace of the Hessian of the log-density."""
    g = _as_gmm(g)
    x = np.asarray(x, dtype=float)
    diffs, log_resp = _log_resp_unnormalized(g, x)
    resp = softmax(log_resp, axis=-1)
    gk = diffs / g.sigma2
    gk_sq = np.sum(gk * gk, axis=-1)
    s = np.einsum("...k,...kd->...d", resp, gk)
    out = np.sum(resp * gk_sq, axis=-1) - g.dim / g.sigma2 - np.sum(s * s, axis=-1)
    return float(out) if out.ndim == 0 else out


def _p_laplace_parts(g: GmmParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Score s, Laplacian, and quadratic form s^T H s, all batched."""
    diffs, log_resp = _log_resp_unnormalized(g, x)
    resp = softmax(log_resp, axis=-1)
    gk = diffs / g.sigma2
    s = np.einsum("...k,...kd->...d", resp, gk)
    gk_sq = np.sum(gk * gk, axis=-1)
    s_sq = np.sum(s * s, axis=-1)
    lap = np.sum(resp * gk_sq, axis=-1) - g.dim / g.sigma2 - s_sq
    # H s = sum_k r_k g_k (g_k . s) - s/sigma2 - s * |s|^2
    gk_dot_s = np.einsum("...kd,...d->...k", gk, s)
    hs = (
        np.einsum("...k,...kd->...d", resp * gk_dot_s, gk)
        - s / g.sigma2
        - s * s_sq[..., None]
    )
    quad = np.sum(s * hs, axis=-1)
    return s, lap, quad


def pointwise_p_laplace_exact(
    g: GmmParams | PerturbedGmm, x, p: float, scale: float = 1.0
) -> np.ndarray | float:
    """Exact pointwise p-Laplace of the log-density (optionally of scale * log-density).

    Evaluates |grad|^(p-2) * (lap + (p-2) * grad^T H grad / |grad|^2) from the
    analytic gradient and Hessian.  For p < 2 the operator is singular where
    the gradient norm falls below the floor ``EPS_GRAD``; such points raise
    :class:`SingularGradientError` instead of returning a number.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    g = _as_gmm(g)
    x = np.asarray(x, dtype=float)
    s, lap, quad = _p_laplace_parts(g, x)
    if scale != 1.0:
        s = scale * s
        lap = scale * lap
        quad = scale**3 * quad
    s_norm = np.linalg.norm(s, axis=-1)
    if p < 2:
        n_singular = int(np.count_nonzero(s_norm < EPS_GRAD))
        if n_singular:
            raise SingularGradientError(
                f"gradient norm below {EPS_GRAD} at {n_singular} point(s) with p={p}"
            )
    # quad = s^T H s vanishes quadratically with |s|, so the floored norm is
    # safe for p >= 2 as well: the ratio quad / |s|^2 stays bounded.
    safe = np.maximum(s_norm, 1e-300)
    out = safe ** (p - 2.0) * (lap + (p - 2.0) * quad / safe**2)
    return float(out) if out.ndim == 0 else out


def averaged_p_laplace_dense(
    g: GmmParams | PerturbedGmm,
    x0,
    p: float,
    radius: float,
    n: int,
    rng: np.random.Generator,
) -> tuple[float, float, int, int]:
    """Dense Monte Carlo average of the exact pointwise operator over a ball.

    The reference value for the ball-averaged p-Laplace: uniform ball samples,
    exact pointwise values, sample mean.  Points where a p < 2 evaluation is
    singular are skipped and counted.  Returns
    ``(mean, std_error, n_used, singular_hits)``.
    """
    g = _as_gmm(g)
    x0 = np.asarray(x0, dtype=float)
    spec = BallSpec.around(x0, radius)
    xs = sample_ball_uniform(spec, n, rng)
    s, lap, quad = _p_laplace_parts(g, xs)
    s_norm = np.linalg.norm(s, axis=-1)
    keep = np.ones(n, dtype=bool)
    if p < 2:
        keep = s_norm >= EPS_GRAD
    s_norm_kept = s_norm[keep]
    vals = s_norm_kept ** (p - 2.0) * (
        lap[keep] + (p - 2.0) * quad[keep] / s_norm_kept**2
    )
    n_used = int(keep.sum())
    if n_used == 0:
        raise SingularGradientError("every dense sample was singular")
    mean = float(vals.mean())
    std_error = float(vals.std(ddof=1) / np.sqrt(n_used)) if n_used > 1 else np.inf
    return mean, std_error, n_used, n - n_used


def sample_gmm(g: GmmParams | PerturbedGmm, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws from the mixture: component choice by weight, then isotropic Gaussian."""
    g = _as_gmm(g)
    comps = rng.choice(g.n_components, size=n, p=g.weights)
    return g.means[comps] + np.sqrt(g.sigma2) * rng.standard_normal((n, g.dim))


def score_field(g: GmmParams | PerturbedGmm) -> ScoreField:
    """The oracle score as a batch-evaluatable field."""
    resolved = _as_gmm(g)

    def field(x: np.ndarray) -> np.ndarray:
        return score(resolved, x)

    return field


def gmm_to_dict(g: GmmParams) -> dict:
    """JSON-ready parameter block."""
    return {
        "means": g.means.tolist(),
        "sigma2": g.sigma2,
        "weights": g.weights.tolist(),
    }


def gmm_from_dict(d: dict) -> GmmParams:
    """Inverse of :func:`gmm_to_dict`."""
    return GmmParams(
        means=np.asarray(d["means"], dtype=float),
        sigma2=float(d["sigma2"]),
        weights=np.asarray(d["weights"], dtype=float),
    )
