"""Exact tail probabilities for the self-normalized walk at desk scale.

Two independent exact methods:

* :func:`enumerate_exact` sums path probabilities over every outcome of a
  finite-support schedule (budget ``support^n <= 2^24``), handling
  path-dependent normalization ``V_n``.
* :func:`lattice_dp_max` / :func:`lattice_dp_sum` run an absorbing-barrier
  (resp. free) dynamic program over partial-sum states for symmetric
  two-point increments, where ``V_n^2 = n c^2`` is deterministic, up to
  ``n = 10^5``.

Both evaluate the events ``max_{1<=k<=n} S_k >= x V_n`` and
``S_n >= x V_n`` with ties counted in (the event is ``>=``). Results are
scale free: the events only involve ``S_k / V_n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, ConfigError
from .theory import SequenceSpec

__all__ = [
    "ExactResult",
    "enumerate_exact",
    "lattice_dp_max",
    "lattice_dp_sum",
    "ENUMERATION_BUDGET",
    "DP_MAX_N",
]

ENUMERATION_BUDGET = 1 << 24
DP_MAX_N = 100_000
_ENUM_CHUNK = 1 << 15


@dataclass(frozen=True)
class ExactResult:
    """Exact probabilities of the max event and the terminal-sum event."""

    p_max: float
    p_sum: float
    n: int
    x: float
    method: str  # "enumeration" | "lattice_dp"

    def as_dict(self) -> dict:
        return {
            "p_max": self.p_max,
            "p_sum": self.p_sum,
            "n": self.n,
            "x": self.x,
            "method": self.method,
        }


def enumerate_exact(seq: SequenceSpec, x: float) -> ExactResult:
    """Exhaustive path enumeration for finite-support increments.

    Path probabilities are accumulated from per-step log masses
    (log-stable) and summed chunk-wise with exact cross-chunk addition.
    Barrier comparisons absorb 1e-12 relative float fuzz so exact ties
    (which belong to the >= event) survive rescaled instances, keeping the
    result scale free like the event itself.
    """
    if x < 0.0:
        raise ConfigError(f"x must be >= 0, got {x}")
    support = seq.dist.finite_support()
    if support is None:
        raise ConfigError(
            f"{type(seq.dist).__name__} has no finite support; "
            "enumeration needs rademacher or twopoint increments"
        )
    values, probs = support
    s = len(values)
    total = s**seq.n
    if total > ENUMERATION_BUDGET:
        raise BudgetExceededError(
            f"{s}^{seq.n} outcomes exceed the {ENUMERATION_BUDGET} budget; "
            "use lattice_dp (rademacher) or Monte Carlo"
        )
    scales = seq.scale_array()
    log_probs = np.log(probs)
    powers = s ** np.arange(seq.n, dtype=np.int64)

    max_parts: list[float] = []
    sum_parts: list[float] = []
    for start in range(0, total, _ENUM_CHUNK):
        idx = np.arange(start, min(start + _ENUM_CHUNK, total), dtype=np.int64)
        digits = (idx[:, None] // powers[None, :]) % s
        steps = values[digits] * scales[None, :]
        weights = np.exp(log_probs[digits].sum(axis=1))
        partial = np.cumsum(steps, axis=1)
        barrier = x * np.sqrt((steps * steps).sum(axis=1))
        cut = barrier - 1e-12 * np.maximum(1.0, np.abs(barrier))
        max_parts.append(float(weights[partial.max(axis=1) >= cut].sum()))
        sum_parts.append(float(weights[partial[:, -1] >= cut].sum()))
    return ExactResult(
        p_max=math.fsum(max_parts),
        p_sum=math.fsum(sum_parts),
        n=seq.n,
        x=x,
        method="enumeration",
    )


def _lattice_barrier(n: int, x: float) -> int:
    """Smallest lattice point >= x*sqrt(n), snapping away float fuzz so an
    exact hit stays on the barrier (the event is >=)."""
    target = x * math.sqrt(n)
    nearest = round(target)
    if abs(target - nearest) <= 1e-9 * max(1.0, abs(target)):
        return int(nearest)
    return int(math.ceil(target))


def _check_dp_args(n: int, x: float, scale: float):
    if n < 1 or n > DP_MAX_N:
        raise BudgetExceededError(f"lattice DP supports 1 <= n <= {DP_MAX_N}, got {n}")
    if x < 0.0:
        raise ConfigError(f"x must be >= 0, got {x}")
    if not scale > 0.0:
        raise ConfigError(f"scale must be > 0, got {scale}")


def lattice_dp_max(n: int, x: float, scale: float = 1.0) -> ExactResult:
    """Absorbing-barrier DP for P(max_k S_k >= x V_n) on the +-scale walk.

    ``V_n = scale * sqrt(n)`` is deterministic, so the walk is tracked in
    units of ``scale`` and the result does not depend on it. The absorbed
    mass is accumulated with Kahan compensation. ``p_sum`` is filled from
    the free DP so the result carries both events.
    """
    _check_dp_args(n, x, scale)
    barrier = _lattice_barrier(n, x)
    p_sum = lattice_dp_sum(n, x, scale)
    if barrier > n:
        return ExactResult(0.0, p_sum, n, x, "lattice_dp")

    # alive states s in [-n, barrier + 1], absorbed once s >= barrier; the
    # slot above the barrier only matters for the first step when barrier=0
    size = n + max(barrier, 0) + 2
    origin = n  # index of state 0
    probs = np.zeros(size)
    probs[origin] = 1.0
    absorbed = 0.0
    comp = 0.0  # Kahan compensation
    cut = origin + barrier  # first index at or above the barrier
    for _ in range(n):
        nxt = np.zeros(size)
        nxt[1:] += 0.5 * probs[:-1]
        nxt[:-1] += 0.5 * probs[1:]
        crossing = float(nxt[cut:].sum())
        nxt[cut:] = 0.0
        y = crossing - comp
        t = absorbed + y
        comp = (t - absorbed) - y
        absorbed = t
        probs = nxt
    return ExactResult(float(absorbed), p_sum, n, x, "lattice_dp")


def lattice_dp_sum(n: int, x: float, scale: float = 1.0) -> float:
    """Free DP for P(S_n >= x V_n) on the +-scale walk."""
    _check_dp_args(n, x, scale)
    barrier = _lattice_barrier(n, x)
    if barrier > n:
        return 0.0
    size = 2 * n + 1
    origin = n
    probs = np.zeros(size)
    probs[origin] = 1.0
    for _ in range(n):
        nxt = np.zeros(size)
        nxt[1:] += 0.5 * probs[:-1]
        nxt[:-1] += 0.5 * probs[1:]
        probs = nxt
    return math.fsum(probs[origin + barrier :].tolist())
