"""Memorization injection and detection.

A controlled scenario replicates one training sample many times, a score
model is trained on the inflated set, and the learned 1-Laplace is read
off a grid: the replicated point should sit in the lowest percentiles
(sharp local maximum of the learned density).  A score-norm criterion is
kept as the promptless baseline.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .estimators import EstimatorConfig, estimate_boundary
from .fields import ScoreField
from .geometry import make_rng, split_rng
from .gmm import GmmParams, sample_gmm

__all__ = [
    "MemorizationScenario",
    "DetectionResult",
    "Grid",
    "build_scenario",
    "make_grid",
    "grid_p_laplace",
    "percentile_rank",
    "auc",
    "score_norm_criterion",
    "write_grid_csv",
]


@dataclass(frozen=True)
class MemorizationScenario:
    """Base draws plus one replicated point; the training set concatenates both."""

    base_samples: np.ndarray
    memorized_point: np.ndarray
    n_replicas: int
    seed: int

    def training_set(self) -> np.ndarray:
        if self.n_replicas == 0:
            return self.base_samples.copy()
        replicas = np.tile(self.memorized_point, (self.n_replicas, 1))
        return np.vstack([self.base_samples, replicas])

    def to_dict(self) -> dict:
        """JSON-ready record of the full scenario."""
        return {
            "seed": self.seed,
            "n_replicas": self.n_replicas,
            "memorized_point": self.memorized_point.tolist(),
            "base_samples": self.base_samples.tolist(),
        }


@dataclass(frozen=True)
class DetectionResult:
    """Criterion values at memorized vs background points, with rank statistics."""

    criterion_name: str
    values_memorized: list[float]
    values_background: list[float]
    percentile: float
    auc: float


def build_scenario(
    gmm: GmmParams, n_base: int = 1000, n_replicas: int = 250, seed: int = 0
) -> MemorizationScenario:
    """Draw the base set, pick one point uniformly, and replicate it."""
    if n_base < 1:
        raise ValueError(f"n_base must be >= 1, got {n_base}")
    rng = make_rng(seed)
    base = sample_gmm(gmm, n_base, rng)
    memorized = base[int(rng.integers(n_base))].copy()
    return MemorizationScenario(
        base_samples=base, memorized_point=memorized, n_replicas=n_replicas, seed=seed
    )


class Grid(NamedTuple):
    """Rectangular 2-d lattice; points are row-major, y varying slowest."""

    xs: np.ndarray
    ys: np.ndarray
    points: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ys.shape[0], self.xs.shape[0])


def make_grid(gmm: GmmParams, n: int = 40, pad_sigma: float = 2.0) -> Grid:
    """n x n lattice over the bounding box of the means, inflated by pad_sigma std devs."""
    if gmm.dim != 2:
        raise ValueError("grid evaluation is a 2-d diagnostic")
    pad = pad_sigma * np.sqrt(gmm.sigma2)
    lo = gmm.means.min(axis=0) - pad
    hi = gmm.means.max(axis=0) + pad
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    gx, gy = np.meshgrid(xs, ys)
    return Grid(xs=xs, ys=ys, points=np.column_stack([gx.ravel(), gy.ravel()]))


def grid_p_laplace(
    field: ScoreField, grid: Grid, cfg: EstimatorConfig, rng: np.random.Generator
) -> np.ndarray:
    """Boundary-formulation estimate at every grid node; one RNG substream per node."""
    if cfg.formulation != "boundary":
        raise ValueError("grid evaluation uses the boundary formulation")
    if grid.points.shape[1] != 2:
        raise ValueError("grid evaluation is a 2-d diagnostic")
    values = np.empty(grid.points.shape[0])
    for i, sub in enumerate(split_rng(rng, grid.points.shape[0])):
        values[i] = estimate_boundary(field, grid.points[i], cfg, sub).value
    return values.reshape(grid.shape)


def percentile_rank(grid_values, value_at_point: float) -> float:
    """Rank of a value among grid values, in [0, 100]; ties get half weight."""
    vals = np.asarray(grid_values, dtype=float).ravel()
    if vals.size == 0:
        raise ValueError("grid of values is empty")
    below = np.count_nonzero(vals < value_at_point)
    ties = np.count_nonzero(vals == value_at_point)
    return 100.0 * (below + 0.5 * ties) / vals.size


def auc(memorized_values, background_values, orientation: str = "lower_is_positive") -> float:
    """Mann-Whitney rank AUC of memorized against background values.

    ``lower_is_positive`` treats smaller criterion values as evidence of
    memorization (the p-Laplace convention); ``higher_is_positive`` the
    opposite (score-norm baseline).  Invariant under strictly monotone
    transforms of the values.
    """
    mem = np.asarray(memorized_values, dtype=float).ravel()
    bg = np.asarray(background_values, dtype=float).ravel()
    if mem.size == 0 or bg.size == 0:
        raise ValueError("both value lists must be nonempty")
    if orientation == "lower_is_positive":
        wins = (mem[:, None] < bg[None, :]).sum()
    elif orientation == "higher_is_positive":
        wins = (mem[:, None] > bg[None, :]).sum()
    else:
        raise ValueError(f"unknown orientation {orientation!r}")
    ties = (mem[:, None] == bg[None, :]).sum()
    return float((wins + 0.5 * ties) / (mem.size * bg.size))


def score_norm_criterion(field: ScoreField, x) -> float | np.ndarray:
    """Score magnitude at x: the promptless baseline criterion."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    norms = np.linalg.norm(field(np.atleast_2d(x)), axis=1)
    return float(norms[0]) if single else norms


def write_grid_csv(path, grid: Grid, matrix: np.ndarray, header_comment: str | None = None) -> None:
    """Grid values as (x, y, value) rows, colormap-ready."""
    with open(path, "w", newline="") as f:
        if header_comment is not None:
            f.write(f"# {header_comment}\n")
        writer = csv.writer(f)
        writer.writerow(["x", "y", "value"])
        for iy, y in enumerate(grid.ys):
            for ix, x in enumerate(grid.xs):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(matrix[iy, ix]))])
