"""Reproducible Monte Carlo estimation of the max- and sum-event tails.

Paths are generated in fixed-size chunks of ``CHUNK_SIZE`` (2^16), each
chunk owning a counter-based Philox stream keyed by ``(seed, chunk
index)`` and drawing one increment column per step. Because a chunk's
content depends only on that key, estimates are byte-identical for a
fixed seed no matter how many workers run the chunks, and a run may be
split across processes by chunk index and merged back exactly.

Estimates carry their per-chunk sufficient statistics, so
:func:`merge` is exact: records are re-sorted by (seed, chunk) and the
moments re-reduced with ``math.fsum``, making merging associative,
commutative, and reproducible to the bit.

Importance sampling uses the exponentially tilted increment law whose
drift matches ``x * B_n / n`` per step; paths are reweighted by
``exp(-theta * S_n + sum_j log_mgf_j)``, which keeps both event
estimators unbiased (the max event contains the sum event, so a tilt
targeting the terminal sum covers both).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .distributions import Rademacher
from .errors import ConfigError, InfeasibleError, TiltUnsupportedError
from .theory import SequenceSpec

__all__ = [
    "CHUNK_SIZE",
    "DEFAULT_SEED",
    "TailEstimate",
    "TiltPlan",
    "choose_tilt",
    "simulate",
    "merge",
]

CHUNK_SIZE = 1 << 16
# fixed, documented default so unseeded runs stay deterministic
DEFAULT_SEED = 715517
_MAX_UINT64 = (1 << 64) - 1
_DRIFT_TOL = 1e-10

# one chunk's sufficient statistics: (seed, chunk_index, n_paths, sum_w, sum_w2)
ChunkRecord = tuple[int, int, int, float, float]


@dataclass(frozen=True)
class TailEstimate:
    """Tail probability estimate with exact merge support.

    ``records`` holds per-chunk sums of ``w * indicator`` and its square;
    ``p_hat`` and ``stderr`` are always recomputed from them, so equal
    record sets give bit-equal estimates.
    """

    p_hat: float
    stderr: float
    n_samples: int
    method: str  # "naive" | "tilted"
    seed: int
    event: str  # "max" | "sum"
    dist_label: str
    n: int
    x: float
    records: tuple[ChunkRecord, ...]

    def as_dict(self) -> dict:
        return {
            "p_hat": self.p_hat,
            "stderr": self.stderr,
            "n_samples": self.n_samples,
            "method": self.method,
            "seed": self.seed,
            "event": self.event,
        }


def _estimate_from_records(
    records: tuple[ChunkRecord, ...],
    method: str,
    event: str,
    seed: int,
    dist_label: str,
    n: int,
    x: float,
) -> TailEstimate:
    records = tuple(sorted(records))
    if records:
        seed = records[0][0]  # order-independent provenance for merged runs
    total = sum(r[2] for r in records)
    if total == 0:
        return TailEstimate(0.0, 0.0, 0, method, seed, event, dist_label, n, x, records)
    sum_w = math.fsum(r[3] for r in records)
    sum_w2 = math.fsum(r[4] for r in records)
    p_hat = sum_w / total
    if method == "naive":
        stderr = math.sqrt(max(0.0, p_hat * (1.0 - p_hat)) / total)
    else:
        if total > 1:
            var = max(0.0, sum_w2 - total * p_hat * p_hat) / (total - 1)
        else:
            var = 0.0
        stderr = math.sqrt(var / total)
    return TailEstimate(
        p_hat, stderr, total, method, seed, event, dist_label, n, x, records
    )


def empty_estimate(
    method: str, event: str, seq: SequenceSpec, x: float, seed: int = 0
) -> TailEstimate:
    """Identity element for :func:`merge`."""
    label = json.dumps(seq.dist.literal(), sort_keys=True)
    return _estimate_from_records((), method, event, seed, label, seq.n, x)


@dataclass(frozen=True)
class TiltPlan:
    """Tilt parameter solving mean drift = x * B_n / n per step.

    ``log_mgf_per_step`` is a scalar for iid schedules and a tuple (one
    entry per index) for scaled ones.
    """

    theta: float
    log_mgf_per_step: float | tuple[float, ...]
    target_drift: float

    def total_log_mgf(self, n: int) -> float:
        if isinstance(self.log_mgf_per_step, tuple):
            return math.fsum(self.log_mgf_per_step)
        return n * self.log_mgf_per_step


def choose_tilt(seq: SequenceSpec, x: float) -> TiltPlan:
    """Solve ``sum_j tilted_mean_j(theta) = x * B_n`` for theta >= 0.

    Rademacher has the closed form ``theta = atanh(x / sqrt(n)) / c``;
    other bounded families use monotone root finding, refined until the
    drift equation holds to 1e-10.
    """
    if x < 0.0:
        raise ConfigError(f"x must be >= 0, got {x}")
    dist = seq.dist
    if not dist.bounded_support:
        raise ConfigError(
            f"{type(dist).__name__} has unbounded support; tilting needs a "
            "bounded family"
        )
    bn = math.sqrt(seq.variance_sum())
    if x > bn:
        raise ConfigError(f"x={x} exceeds B_n={bn}; tilt target out of range")
    total_target = x * bn
    scales = None if seq.is_iid else seq.scales

    # supremum of the total achievable drift
    if seq.is_iid:
        hull = seq.n * dist.support_max()
    else:
        hull = float(np.sum(scales)) * dist.support_max()
    if total_target >= hull:
        raise InfeasibleError(
            f"target drift {total_target:.6g} is outside the open support "
            f"hull ({hull:.6g})"
        )

    if x == 0.0:
        theta = 0.0
    elif seq.is_iid and isinstance(dist, Rademacher):
        theta = math.atanh(x / math.sqrt(seq.n)) / dist.scale
    else:
        def total_drift(t: float) -> float:
            if seq.is_iid:
                return seq.n * dist.tilted_mean(t)
            return math.fsum(s * dist.tilted_mean(t * s) for s in scales)

        hi = 1.0
        while total_drift(hi) < total_target:
            hi *= 2.0
            if hi > 1e8:
                raise InfeasibleError("tilt root finding failed to bracket")
        theta = float(
            optimize.brentq(
                lambda t: total_drift(t) - total_target, 0.0, hi, xtol=1e-15, rtol=8.9e-16
            )
        )

    if seq.is_iid:
        per_step = dist.log_mgf(theta)
        achieved = seq.n * dist.tilted_mean(theta)
    else:
        per_step = tuple(dist.log_mgf(theta * s) for s in scales)
        achieved = math.fsum(s * dist.tilted_mean(theta * s) for s in scales)
    if abs(achieved - total_target) > _DRIFT_TOL * max(1.0, abs(total_target)):
        raise ArithmeticError(
            f"tilt solve residual {abs(achieved - total_target):.3g} "
            "exceeds 1e-10"
        )
    return TiltPlan(theta=theta, log_mgf_per_step=per_step, target_drift=total_target / seq.n)


def _chunk_layout(n_samples: int, first_chunk: int) -> list[tuple[int, int]]:
    """(chunk_index, n_paths) pairs; all full chunks except possibly the last."""
    layout = []
    done = 0
    ci = first_chunk
    while done < n_samples:
        m = min(CHUNK_SIZE, n_samples - done)
        layout.append((ci, m))
        done += m
        ci += 1
    return layout


def _run_chunk(
    seq: SequenceSpec,
    x: float,
    seed: int,
    chunk_index: int,
    n_paths: int,
    plan: Optional[TiltPlan],
) -> tuple[ChunkRecord, ChunkRecord]:
    rng = np.random.Generator(np.random.Philox(key=[seed, chunk_index]))
    dist = seq.dist
    scales = None if seq.is_iid else seq.scales
    running = np.zeros(n_paths)
    sq_norm = np.zeros(n_paths)
    peak = np.full(n_paths, -np.inf)
    for j in range(seq.n):
        s = 1.0 if scales is None else float(scales[j])
        if plan is None:
            col = dist.sample(rng, n_paths)
        else:
            col = dist.tilted_sample(plan.theta * s, rng, n_paths)
        col = s * np.asarray(col, dtype=float)
        running += col
        sq_norm += col * col
        np.maximum(peak, running, out=peak)
    barrier = x * np.sqrt(sq_norm)
    ind_max = peak >= barrier
    ind_sum = running >= barrier
    if plan is None:
        w_max = ind_max.astype(float)
        w_sum = ind_sum.astype(float)
    else:
        weights = np.exp(-plan.theta * running + plan.total_log_mgf(seq.n))
        w_max = weights * ind_max
        w_sum = weights * ind_sum
    rec_max = (seed, chunk_index, n_paths, float(w_max.sum()), float((w_max * w_max).sum()))
    rec_sum = (seed, chunk_index, n_paths, float(w_sum.sum()), float((w_sum * w_sum).sum()))
    return rec_max, rec_sum


def simulate(
    seq: SequenceSpec,
    x: float,
    n_samples: int,
    seed: int = DEFAULT_SEED,
    method: str = "naive",
    workers: int = 1,
    first_chunk: int = 0,
) -> tuple[TailEstimate, TailEstimate]:
    """Estimate P(max_k S_k >= x V_n) and P(S_n >= x V_n) on shared paths.

    One pass per path tracks the running maximum, the terminal sum, and
    the accumulated ``V_n^2``, so the per-path sum indicator never exceeds
    the max indicator. Output is bit-identical for fixed
    ``(seed, n_samples, first_chunk)`` regardless of ``workers``.
    """
    if n_samples < 1000:
        raise ConfigError(f"n_samples must be >= 1000, got {n_samples}")
    if x < 0.0:
        raise ConfigError(f"x must be >= 0, got {x}")
    if not (0 <= seed <= _MAX_UINT64):
        raise ConfigError(f"seed must fit in 64 bits, got {seed}")
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    if first_chunk < 0:
        raise ConfigError(f"first_chunk must be >= 0, got {first_chunk}")
    if method not in ("naive", "tilted"):
        raise ConfigError(f"method must be 'naive' or 'tilted', got {method!r}")

    plan = None
    if method == "tilted":
        if not seq.dist.bounded_support:
            raise TiltUnsupportedError(
                f"{type(seq.dist).__name__} has unbounded support; "
                "use method='naive'"
            )
        plan = choose_tilt(seq, x)

    layout = _chunk_layout(n_samples, first_chunk)
    if workers == 1:
        results = [_run_chunk(seq, x, seed, ci, m, plan) for ci, m in layout]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_chunk, seq, x, seed, ci, m, plan)
                for ci, m in layout
            ]
            results = [f.result() for f in futures]

    label = json.dumps(seq.dist.literal(), sort_keys=True)
    est_max = _estimate_from_records(
        tuple(r[0] for r in results), method, "max", seed, label, seq.n, x
    )
    est_sum = _estimate_from_records(
        tuple(r[1] for r in results), method, "sum", seed, label, seq.n, x
    )
    return est_max, est_sum


def merge(a: TailEstimate, b: TailEstimate) -> TailEstimate:
    """Pool two estimates of the same quantity.

    Associative and commutative: the union of chunk records is re-sorted
    and re-reduced exactly. Seeds may differ (pooling independent runs);
    duplicate (seed, chunk) records are rejected.
    """
    if a.n_samples == 0:
        base, other = b, a
    else:
        base, other = a, b
    if other.n_samples != 0:
        mismatched = [
            name
            for name, va, vb in (
                ("method", a.method, b.method),
                ("event", a.event, b.event),
                ("dist", a.dist_label, b.dist_label),
                ("n", a.n, b.n),
                ("x", a.x, b.x),
            )
            if va != vb
        ]
        if mismatched:
            raise ConfigError(f"cannot merge estimates differing in {mismatched}")
    combined = a.records + b.records
    keys = [(r[0], r[1]) for r in combined]
    if len(set(keys)) != len(keys):
        raise ConfigError("cannot merge estimates sharing a (seed, chunk) record")
    return _estimate_from_records(
        combined, base.method, base.event, base.seed, base.dist_label, base.n, base.x
    )
