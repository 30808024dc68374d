"""Score field conventions and small field combinators.

A score field is any callable mapping a batch of points, shape ``(n, d)``,
to a batch of score vectors of the same shape.  Fields that depend on a
noise level (learned models) are bound to a fixed level when the callable
is constructed, so every consumer downstream sees the same interface.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

ScoreField = Callable[[np.ndarray], np.ndarray]

# Gradient floor: below this score norm, p < 2 operators are treated as singular.
EPS_GRAD = 1e-8


def scale_field(field: ScoreField, a: float) -> ScoreField:
    """Score field of the scaled potential a*u, i.e. x -> a * field(x)."""

    def scaled(x: np.ndarray) -> np.ndarray:
        return a * field(x)

    return scaled


def shift_field(field: ScoreField, offset: np.ndarray) -> ScoreField:
    """Field with a constant vector added to every score value."""
    offset = np.asarray(offset, dtype=float)

    def shifted(x: np.ndarray) -> np.ndarray:
        return field(x) + offset

    return shifted


def constant_field(value: np.ndarray) -> ScoreField:
    """Field that returns the same vector at every point."""
    value = np.asarray(value, dtype=float)

    def const(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(value, x.shape).copy()

    return const
