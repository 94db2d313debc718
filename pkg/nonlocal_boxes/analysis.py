"""
Closed-form success probabilities for box-assisted distributed computation.

Notation used throughout:

- ``p``: probability a single box (or a leaf computation) is correct
- ``q``: probability a nonlocal majority gate is correct, ``q = p**2 + (1-p)**2``
  when the gate is built from two noisy boxes
- ``s``: the fixed point that iterated majority voting converges to, defined
  when ``q > 5/6``
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

from scipy import optimize

log = logging.getLogger("nonlocal_boxes")

MAJORITY_THRESHOLD = 5 / 6


class DomainError(ValueError):
    pass


class BelowThresholdError(DomainError):
    pass


def _tolerance():
    from . import config

    return config.get("tolerance", 1e-12)


def _check_range(name, value, low, high):
    tol = _tolerance()
    if not (low - tol <= value <= high + tol):
        raise DomainError(f"{name} must be in [{low}, {high}], not {value}")
    return min(max(value, low), high)


def _check_gate(q):
    q = _check_range("q", q, 0.0, 1.0)
    if q <= MAJORITY_THRESHOLD:
        raise BelowThresholdError(f"majority gate correctness q={q} does not exceed 5/6")
    return q


def q_of_p(p: float) -> float:
    """Correctness of a majority gate built from two boxes that are each correct w.p. ``p``."""
    p = _check_range("p", p, 0.5, 1.0)
    return p**2 + (1 - p) ** 2


def majority3(p: float) -> float:
    """Probability that the majority of three independent bits, each correct w.p. ``p``, is correct."""
    return p**3 + 3 * p**2 * (1 - p)


def h(p: float, q: float) -> float:
    """Success after one layer: noisy majority (correct w.p. ``q``) over three copies at ``p``."""
    p = _check_range("p", p, 0.0, 1.0)
    q = _check_range("q", q, 0.0, 1.0)
    m = majority3(p)
    return q * m + (1 - q) * (1 - m)


def fixed_point_s(q: float) -> float:
    q = _check_gate(q)
    delta = q - MAJORITY_THRESHOLD
    return 0.5 + 3 * math.sqrt(delta) / (2 * math.sqrt(1 + 3 * delta))


def fixed_point_numeric(q: float, xtol: float = 1e-15) -> float:
    """The non-trivial root of ``h(p, q) = p`` above 1/2, found by bracketing."""
    q = _check_gate(q)
    lower = 0.5 + 1e-7

    def residual(p):
        return h(p, q) - p

    if residual(lower) <= 0:
        raise BelowThresholdError(f"q={q} is too close to 5/6 to bracket the fixed point")
    return optimize.brentq(residual, lower, 1.0, xtol=xtol)


def threshold() -> float:
    """Box correctness above which amplification makes communication complexity trivial."""
    return (3 + math.sqrt(6)) / 6


def final_success(p: float) -> float:
    """Limit of amplification with boxes correct w.p. ``p``; equals ``fixed_point_s(q_of_p(p))``."""
    p = _check_range("p", p, 0.5, 1.0)
    if p <= threshold():
        raise BelowThresholdError(f"p={p} does not exceed the threshold {threshold()}")
    return 0.5 + math.sqrt(3 * p**2 - 3 * p + 0.25) / (2 * p - 1)


def iterate_h(p0: float, q: float, depth: int) -> List[float]:
    """
    ``[p0, h(p0), h(h(p0)), ...]`` with ``depth + 1`` entries.

    Requires ``1/2 < p0 <= s``; the sequence is then increasing and bounded by ``s``.
    """
    s = fixed_point_s(q)
    if depth < 0:
        raise DomainError(f"depth must be non-negative, not {depth}")
    if not (0.5 < p0 <= s + _tolerance()):
        raise DomainError(f"starting success {p0} must lie in (1/2, {s}]")
    return _iterate(p0, q, depth)


def _iterate(p0, q, depth):
    values = [p0]
    for _ in range(depth):
        values.append(h(values[-1], q))
    return values


def amplified_success(p0: float, q: float, depth: int) -> float:
    """Depth-``depth`` iterate of ``h`` with no threshold preconditions."""
    if depth < 0:
        raise DomainError(f"depth must be non-negative, not {depth}")
    return _iterate(_check_range("p0", p0, 0.0, 1.0), q, depth)[-1]


def convergence_depth(p0: float, q: float, eps: float = 1e-6, max_depth: int = 10_000) -> Optional[int]:
    """Smallest depth whose iterate is within ``eps`` of ``s``, or None if ``max_depth`` is not enough."""
    s = fixed_point_s(q)
    value = p0
    for depth in range(max_depth + 1):
        if abs(s - value) < eps:
            return depth
        value = h(value, q)
    return None


def xor_chain_success(g: float, k: int) -> float:
    """Correctness of the XOR of ``k`` independent bits, each correct w.p. ``g``."""
    g = _check_range("g", g, 0.0, 1.0)
    if k < 0:
        raise DomainError(f"k must be non-negative, not {k}")
    return 0.5 + 0.5 * (2 * g - 1) ** k


def base_bias_success(n: int) -> float:
    if n < 0:
        raise DomainError(f"n must be non-negative, not {n}")
    return 0.5 + 2.0 ** -(n + 1)


def van_dam_success(p: float, n: int) -> float:
    """Success of the one-box-per-``z`` protocol over ``2**n`` boxes correct w.p. ``p``."""
    return xor_chain_success(p, 2**n)


def ip_lower_bound(p: float, n: int) -> float:
    """Classical bits needed to compute inner product on ``n`` bits with success ``p``."""
    if not 0.5 < p <= 1.0 + _tolerance():
        raise DomainError(f"p must be in (1/2, 1], not {p}")
    if n < 1:
        raise DomainError(f"n must be at least 1, not {n}")
    bias = 2 * p - 1
    return max(0.5 * bias**2, bias**4) * n - 0.5


@dataclass(frozen=True)
class AmplificationParams:
    p: float
    q: float
    delta: Optional[float] = None
    s: Optional[float] = None

    @classmethod
    def from_gate(cls, p: float, q: float) -> "AmplificationParams":
        p = _check_range("p", p, 0.5, 1.0)
        q = _check_range("q", q, 0.5, 1.0)
        if q > MAJORITY_THRESHOLD:
            return cls(p, q, q - MAJORITY_THRESHOLD, fixed_point_s(q))
        return cls(p, q)

    @classmethod
    def from_box(cls, p_box: float, leaf: float) -> "AmplificationParams":
        return cls.from_gate(leaf, q_of_p(p_box))

    @property
    def amplifiable(self) -> bool:
        return self.s is not None
