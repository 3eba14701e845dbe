"""Streaming-quality utility curves and the concavifying rate transform.

An S-curve maps a rate x (Kbps) to perceived quality in [0, 1]. It is
convex below its inflection point and concave above, which makes the
allocation problem non-concave. Substituting y = (x/r)**c2 turns every
S-curve into a strictly concave function of y; the engine works in that
transformed space and maps back at the end.

All evaluators accept scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SCurveUtility",
    "LogisticUtility",
    "eval_scurve",
    "eval_logistic",
    "inflection_point",
    "transform",
    "inverse_transform",
    "transformed_bounds",
    "transformed_utility",
    "NegativeTransformedRateError",
]


class NegativeTransformedRateError(ValueError):
    """Transformed rate must be non-negative to map back to Kbps."""


@dataclass(frozen=True)
class SCurveUtility:
    """S-shaped utility U(x) = (1 - exp(-c1*(x/r)**c2)) / (1 - exp(-c1)).

    Parameters
    ----------
    r : float
        Encoding rate in Kbps; U(r) = 1.
    c1 : float
        Saturation sharpness, > 0.
    c2 : float
        Inflection shape, >= 1. c2 == 1 gives a concave curve.
    m, big_m : float
        Allowed rate window [m, big_m] in Kbps, 0 < m < big_m.
        big_m defaults to r.
    """

    r: float
    c1: float
    c2: float
    m: float = 1.0
    big_m: float | None = None

    def __post_init__(self):
        if self.big_m is None:
            object.__setattr__(self, "big_m", float(self.r))
        for name in ("r", "c1", "c2", "m", "big_m"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.r <= 0.0:
            raise ValueError(f"r must be > 0, got {self.r}")
        if self.c1 <= 0.0:
            raise ValueError(f"c1 must be > 0, got {self.c1}")
        if self.c2 < 1.0:
            raise ValueError(f"c2 must be >= 1, got {self.c2}")
        if not 0.0 < self.m < self.big_m:
            raise ValueError(f"need 0 < m < big_m, got m={self.m}, big_m={self.big_m}")


@dataclass(frozen=True)
class LogisticUtility:
    """Classic sigmoid 1 / (1 + exp(-alpha*(x - beta))), inflection at beta."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")


def eval_scurve(u: SCurveUtility, x):
    """Utility of rate x (Kbps); U(0) = 0 and U(r) = 1."""
    t = np.power(np.asarray(x, dtype=float) / u.r, u.c2)
    val = np.expm1(-u.c1 * t) / np.expm1(-u.c1)
    return val if val.ndim else float(val)


def eval_logistic(u: LogisticUtility, x):
    """Logistic utility of rate x; value in (0, 1)."""
    # clip keeps exp() finite; beyond +-700 the sigmoid is 0/1 to double precision
    z = np.clip(u.alpha * (np.asarray(x, dtype=float) - u.beta), -700.0, 700.0)
    val = 1.0 / (1.0 + np.exp(-z))
    return val if val.ndim else float(val)


def inflection_point(u: SCurveUtility) -> float:
    """Rate at which curvature changes sign: r*((c2-1)/(c1*c2))**(1/c2).

    Zero when c2 == 1 (the curve is concave everywhere).
    """
    if u.c2 == 1.0:
        return 0.0
    return u.r * ((u.c2 - 1.0) / (u.c1 * u.c2)) ** (1.0 / u.c2)


def transform(u: SCurveUtility, x):
    """Concavifying change of variable y = (x/r)**c2; requires x >= 0."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0.0):
        raise ValueError("rate must be >= 0")
    y = np.power(xa / u.r, u.c2)
    return y if y.ndim else float(y)


def inverse_transform(u: SCurveUtility, y):
    """Back to Kbps: x = r * y**(1/c2).

    Raises
    ------
    NegativeTransformedRateError
        If any component of y is negative.
    """
    ya = np.asarray(y, dtype=float)
    if np.any(ya < 0.0):
        raise NegativeTransformedRateError(f"transformed rate must be >= 0, got {y}")
    x = u.r * np.power(ya, 1.0 / u.c2)
    return x if x.ndim else float(x)


def transformed_bounds(u: SCurveUtility) -> tuple[float, float]:
    """Rate window [m, big_m] mapped into transformed space."""
    return transform(u, u.m), transform(u, u.big_m)


def transformed_utility(u: SCurveUtility, y):
    """Utility in transformed space with first and second derivatives.

    Returns (value, d1, d2) where value = (1 - exp(-c1*y)) / (1 - exp(-c1)).
    d1 is strictly positive and d2 strictly negative for every y, which is
    what makes the transformed problem concave in y.
    """
    ya = np.asarray(y, dtype=float)
    denom = np.expm1(-u.c1)  # -(1 - exp(-c1)), negative
    val = np.expm1(-u.c1 * ya) / denom
    ex = np.exp(-u.c1 * ya)
    d1 = -u.c1 * ex / denom
    d2 = u.c1 * u.c1 * ex / denom
    if val.ndim:
        return val, d1, d2
    return float(val), float(d1), float(d2)
