"""The 1-D monotone sublinear generator determined by a variance interval.

In one dimension every monotone, sublinear, positively homogeneous
generator has the closed form

    g(a) = (sigma_hi_sq * max(a, 0) - sigma_lo_sq * max(-a, 0)) / 2,

so the generator is stored by its interval endpoints
``[sigma_lo_sq, sigma_hi_sq]`` (variance per unit time).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

Real = Union[float, np.ndarray]


@dataclass(frozen=True)
class GFunction:
    """Variance-interval generator; immutable and freely shareable."""

    sigma_lo_sq: float
    sigma_hi_sq: float

    def __post_init__(self):
        if not 0.0 <= self.sigma_lo_sq <= self.sigma_hi_sq:
            raise ValueError(
                f"need 0 <= sigma_lo_sq <= sigma_hi_sq, got "
                f"({self.sigma_lo_sq}, {self.sigma_hi_sq})"
            )
        if self.sigma_hi_sq <= 0.0:
            raise ValueError("sigma_hi_sq must be positive")


def g_eval(gf: GFunction, a: Real) -> Real:
    """Evaluate the generator at ``a`` (float or numpy array)."""
    pos = np.maximum(a, 0.0)
    neg = np.maximum(-np.asarray(a, dtype=float), 0.0)
    out = 0.5 * (gf.sigma_hi_sq * pos - gf.sigma_lo_sq * neg)
    if isinstance(a, np.ndarray):
        return out
    return float(out)


def check_nondegenerate(gf: GFunction) -> bool:
    """True iff the lower variance bound is strictly positive.

    Ergodic computations require this; the interval ``sigma_lo_sq = 0``
    is representable but gated out at those call sites.
    """
    return gf.sigma_lo_sq > 0.0
