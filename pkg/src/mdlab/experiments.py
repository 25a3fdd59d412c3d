"""Config-driven sweeps over (n, x) grids with resumable CSV output.

A sweep evaluates the tail ratios

* ``ratio_max = P(max_k S_k >= x V_n) / (1 - Phi(x))``  (limit 2),
* ``ratio_sum = P(S_n >= x V_n) / (1 - Phi(x))``        (limit 1),

one row per (n, x), preferring exact oracles and falling back to Monte
Carlo when an instance exceeds the oracle budgets. Rows are appended to
the CSV in row-index order as they complete, with floats serialized at 17
significant digits, so a rerun with the same config and seed reproduces
the file byte for byte and an interrupted sweep resumes cleanly.

The per-row ``probe`` column reports the normalized third-moment error
``(ratio_max - 2) * (E X^2)^(3/2) / ((1 + x^3) E|X|^3)``; values are
reported only, never gated, since the finite-n behaviour of this
normalization is an open numerical question.

Config files are flat JSON documents; see :class:`SweepConfig`.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from . import __version__
from .distributions import Distribution, Rademacher, from_literal
from .errors import BudgetExceededError, ConfigError
from .mc import DEFAULT_SEED, simulate
from .oracle import DP_MAX_N, ENUMERATION_BUDGET, enumerate_exact, lattice_dp_max
from .theory import SequenceSpec, compute_quantities, error_envelope, normal_tail

__all__ = [
    "SweepConfig",
    "RatioRow",
    "run_sweep",
    "convergence_report",
    "CSV_COLUMNS",
]

CSV_COLUMNS = [
    "n", "x", "p_max", "p_sum", "tail", "ratio_max", "ratio_sum",
    "ci_low", "ci_high", "probe", "delta_nx", "dnr", "n0", "epsilon",
    "method", "samples", "seed",
]

_Z95 = 1.959963984540054


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


@dataclass(frozen=True)
class SweepConfig:
    """Flat sweep configuration.

    Exactly one of ``x_values`` (explicit levels, applied to every n) or
    ``x_c`` (scaling rule ``x = c * n^x_power``, default power
    ``r / (4 + 2r)``) must be given. ``engine="oracle"`` prefers the exact
    methods and falls back to Monte Carlo when ``mc_fallback`` is set;
    ``engine="mc"`` always simulates. ``workers`` and ``output`` are
    execution details and excluded from the config hash.
    """

    dist: dict
    n_grid: tuple[int, ...]
    output: str
    x_values: Optional[tuple[float, ...]] = None
    x_c: Optional[tuple[float, ...]] = None
    x_power: Optional[float] = None
    r: float = 1.0
    delta: float = 1.0
    tau: float = 1.0
    engine: str = "oracle"
    mc_method: str = "naive"
    mc_samples: int = 100_000
    mc_fallback: bool = True
    seed: int = DEFAULT_SEED
    a0_constant: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if list(self.n_grid) != sorted(set(self.n_grid)):
            raise ConfigError("n_grid must be strictly increasing")
        if any(n < 1 for n in self.n_grid):
            raise ConfigError("n_grid entries must be >= 1")
        if (self.x_values is None) == (self.x_c is None):
            raise ConfigError("give exactly one of x_values or x_c")
        if self.x_values is not None and any(x < 0 for x in self.x_values):
            raise ConfigError("x_values must be >= 0")
        if self.x_c is not None and any(c <= 0 for c in self.x_c):
            raise ConfigError("x_c entries must be > 0")
        if self.engine not in ("oracle", "mc"):
            raise ConfigError(f"engine must be 'oracle' or 'mc', got {self.engine!r}")
        if self.mc_method not in ("naive", "tilted"):
            raise ConfigError(f"mc_method must be 'naive' or 'tilted'")
        if self.mc_samples < 1000:
            raise ConfigError(f"mc_samples must be >= 1000, got {self.mc_samples}")
        if not 0.0 < self.r <= 1.0:
            raise ConfigError(f"r must be in (0, 1], got {self.r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "SweepConfig":
        known = {
            "dist", "n_grid", "output", "x_values", "x_c", "x_power", "r",
            "delta", "tau", "engine", "mc_method", "mc_samples",
            "mc_fallback", "seed", "a0_constant", "workers",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dist" not in raw or "n_grid" not in raw or "output" not in raw:
            raise ConfigError("config requires 'dist', 'n_grid', and 'output'")
        kwargs = dict(raw)
        kwargs["n_grid"] = tuple(int(n) for n in raw["n_grid"])
        if raw.get("x_values") is not None:
            kwargs["x_values"] = tuple(float(x) for x in raw["x_values"])
        if raw.get("x_c") is not None:
            xc = raw["x_c"]
            kwargs["x_c"] = tuple(float(c) for c in (xc if isinstance(xc, list) else [xc]))
        for key, cast in (
            ("x_power", float), ("r", float), ("delta", float), ("tau", float),
            ("a0_constant", float), ("mc_samples", int), ("seed", int),
            ("workers", int), ("mc_fallback", bool), ("engine", str),
            ("mc_method", str), ("output", str),
        ):
            if kwargs.get(key) is not None:
                kwargs[key] = cast(kwargs[key])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str) -> "SweepConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def distribution(self) -> Distribution:
        return from_literal(self.dist)

    def x_levels(self, n: int) -> list[float]:
        if self.x_values is not None:
            return list(self.x_values)
        power = self.x_power
        if power is None:
            power = self.r / (4.0 + 2.0 * self.r)
        return [c * n**power for c in self.x_c]

    def jobs(self) -> list[tuple[int, int, float]]:
        """(row_index, n, x) in fixed execution order."""
        out = []
        idx = 0
        for n in self.n_grid:
            for x in self.x_levels(n):
                out.append((idx, n, x))
                idx += 1
        return out

    def canonical(self) -> dict:
        """Semantic content only; execution details excluded."""
        return {
            "dist": self.dist,
            "n_grid": list(self.n_grid),
            "x_values": list(self.x_values) if self.x_values is not None else None,
            "x_c": list(self.x_c) if self.x_c is not None else None,
            "x_power": self.x_power,
            "r": self.r,
            "delta": self.delta,
            "tau": self.tau,
            "engine": self.engine,
            "mc_method": self.mc_method,
            "mc_samples": self.mc_samples,
            "mc_fallback": self.mc_fallback,
            "seed": self.seed,
            "a0_constant": self.a0_constant,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def manifest_path(self) -> str:
        return self.output + ".manifest.json"


@dataclass(frozen=True)
class RatioRow:
    """One (n, x) result row; field order matches :data:`CSV_COLUMNS`."""

    n: int
    x: float
    p_max: float
    p_sum: float
    tail: float
    ratio_max: float
    ratio_sum: float
    ci_low: float
    ci_high: float
    probe: float
    delta_nx: float
    dnr: float
    n0: int
    epsilon: float
    method: str
    samples: int
    seed: int

    def to_csv_line(self) -> str:
        return ",".join(
            [
                str(self.n), _fmt(self.x), _fmt(self.p_max), _fmt(self.p_sum),
                _fmt(self.tail), _fmt(self.ratio_max), _fmt(self.ratio_sum),
                _fmt(self.ci_low), _fmt(self.ci_high), _fmt(self.probe),
                _fmt(self.delta_nx), _fmt(self.dnr), str(self.n0),
                _fmt(self.epsilon), self.method, str(self.samples), str(self.seed),
            ]
        )

    @classmethod
    def from_csv_line(cls, line: str) -> "RatioRow":
        parts = line.rstrip("\n").split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise ConfigError(f"malformed CSV row: {line!r}")
        return cls(
            n=int(parts[0]), x=float(parts[1]), p_max=float(parts[2]),
            p_sum=float(parts[3]), tail=float(parts[4]), ratio_max=float(parts[5]),
            ratio_sum=float(parts[6]), ci_low=float(parts[7]), ci_high=float(parts[8]),
            probe=float(parts[9]), delta_nx=float(parts[10]), dnr=float(parts[11]),
            n0=int(parts[12]), epsilon=float(parts[13]), method=parts[14],
            samples=int(parts[15]), seed=int(parts[16]),
        )


def _wilson_interval(p_hat: float, n: int) -> tuple[float, float]:
    """95% Wilson score interval; stable at tiny p_hat."""
    z2 = _Z95 * _Z95
    denom = 1.0 + z2 / n
    center = (p_hat + z2 / (2.0 * n)) / denom
    half = _Z95 * math.sqrt(p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _theory_fields(dist: Distribution, n: int, x: float, cfg: SweepConfig):
    """(delta_nx, dnr, n0, epsilon); the x = 0 limit is handled explicitly
    because the functionals divide by x."""
    seq = SequenceSpec(dist, n)
    if x == 0.0:
        bn = math.sqrt(seq.variance_sum())
        lnr = seq.abs_moment_sum(2.0 + cfg.r)
        return 0.0, bn / lnr ** (1.0 / (2.0 + cfg.r)), 0, math.inf
    q = compute_quantities(seq, x, cfg.r, cfg.delta, cfg.a0_constant)
    return q.delta_nx, q.dnr, q.n0, q.epsilon


def compute_row(cfg: SweepConfig, row_index: int, n: int, x: float) -> RatioRow:
    """Evaluate one (n, x) cell; deterministic given the config.

    Monte Carlo rows use ``seed + row_index`` so every row owns an
    independent, resume-stable stream family.
    """
    dist = cfg.distribution()
    seq = SequenceSpec(dist, n)
    row_seed = cfg.seed + row_index
    tail = normal_tail(x)

    method = None
    samples = 0
    ci_low = ci_high = None
    if cfg.engine == "oracle":
        support = dist.finite_support()
        if isinstance(dist, Rademacher) and n <= DP_MAX_N:
            res = lattice_dp_max(n, x, dist.scale)
            p_max, p_sum, method = res.p_max, res.p_sum, res.method
        elif support is not None and len(support[0]) ** n <= ENUMERATION_BUDGET:
            res = enumerate_exact(seq, x)
            p_max, p_sum, method = res.p_max, res.p_sum, res.method
        elif not cfg.mc_fallback:
            raise BudgetExceededError(
                f"(n={n}, x={x}) exceeds every oracle budget and mc_fallback is off"
            )
    if method is None:
        est_max, est_sum = simulate(
            seq, x, cfg.mc_samples, seed=row_seed, method=cfg.mc_method
        )
        p_max, p_sum = est_max.p_hat, est_sum.p_hat
        method, samples = cfg.mc_method, cfg.mc_samples
        if cfg.mc_method == "naive":
            lo, hi = _wilson_interval(p_max, cfg.mc_samples)
        else:
            lo = max(0.0, p_max - _Z95 * est_max.stderr)
            hi = p_max + _Z95 * est_max.stderr
        ci_low, ci_high = lo / tail, hi / tail

    ratio_max = p_max / tail
    ratio_sum = p_sum / tail
    if ci_low is None:
        ci_low = ci_high = ratio_max

    ex2 = dist.variance()
    ex3 = dist.abs_moment(3.0)
    probe = (ratio_max - 2.0) * ex2**1.5 / ((1.0 + x**3) * ex3)
    delta_nx, dnr, n0, epsilon = _theory_fields(dist, n, x, cfg)
    return RatioRow(
        n=n, x=x, p_max=p_max, p_sum=p_sum, tail=tail, ratio_max=ratio_max,
        ratio_sum=ratio_sum, ci_low=ci_low, ci_high=ci_high, probe=probe,
        delta_nx=delta_nx, dnr=dnr, n0=n0, epsilon=epsilon, method=method,
        samples=samples, seed=row_seed,
    )


def _read_completed(csv_path: str) -> list[str]:
    """Complete data lines already on disk; a trailing partial line (from a
    kill mid-write) is discarded."""
    if not os.path.exists(csv_path):
        return []
    with open(csv_path, "r", newline="") as fh:
        content = fh.read()
    lines = content.split("\n")
    if lines and lines[-1] != "":
        lines = lines[:-1]  # partial final line
    else:
        lines = lines[:-1] if lines else []
    return lines[1:]  # drop header


def _write_manifest(cfg: SweepConfig):
    manifest = {
        "config": cfg.canonical(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "tool_version": __version__,
        "columns": CSV_COLUMNS,
    }
    with open(cfg.manifest_path(), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest


def run_sweep(
    cfg: SweepConfig,
    workers: Optional[int] = None,
    stop_after_rows: Optional[int] = None,
) -> list[RatioRow]:
    """Run (or resume) a sweep, returning all rows in row-index order.

    Rows execute concurrently up to ``workers`` but are flushed to the CSV
    strictly in row-index order, so the file content never depends on the
    worker count and any prefix of it is a valid partial result.
    ``stop_after_rows`` stops after that many newly written rows, which is
    how tests exercise interruption and resume.
    """
    workers = cfg.workers if workers is None else workers
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    jobs = cfg.jobs()

    if os.path.exists(cfg.manifest_path()):
        with open(cfg.manifest_path()) as fh:
            manifest = json.load(fh)
        if manifest.get("config_hash") != cfg.config_hash():
            raise ConfigError(
                f"{cfg.output} was produced by a different config; refusing "
                "to mix results (delete the output or change the path)"
            )
        done_lines = _read_completed(cfg.output)
    else:
        outdir = os.path.dirname(os.path.abspath(cfg.output))
        os.makedirs(outdir, exist_ok=True)
        _write_manifest(cfg)
        done_lines = []

    # (re)write header + complete rows, dropping any partial trailing line
    with open(cfg.output, "w", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for line in done_lines:
            fh.write(line + "\n")

    pending = jobs[len(done_lines):]
    if stop_after_rows is not None:
        pending = pending[:stop_after_rows]

    if pending:
        with open(cfg.output, "a", newline="") as fh:
            if workers == 1:
                for idx, n, x in pending:
                    fh.write(compute_row(cfg, idx, n, x).to_csv_line() + "\n")
                    fh.flush()
            else:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    futures = {
                        idx: pool.submit(compute_row, cfg, idx, n, x)
                        for idx, n, x in pending
                    }
                    for idx, n, x in pending:  # flush in row-index order
                        fh.write(futures[idx].result().to_csv_line() + "\n")
                        fh.flush()

    return [RatioRow.from_csv_line(line) for line in _read_completed(cfg.output)]


def convergence_report(rows: list[RatioRow], delta: float = 1.0) -> dict:
    """Summarize how the ratios approach their limits 2 and 1.

    Rows are grouped into trajectories sharing the same x (explicit
    grids); if every x is unique the whole sweep is treated as a single
    trajectory ordered by n (scaling rules). Each trajectory reports the
    error sequences, a trend flag ("decreasing" allows MC noise at twice
    the CI half-width, "flat" means identical ratios), and the report fits
    a single multiplicative constant for the error envelope
    ``x^(-min(1/4, delta/20)) + delta_nx^(1/9)`` across all rows; the fit
    is absent when the envelope has no variation to regress on.
    """
    if len(rows) < 3:
        raise ConfigError(f"convergence report needs >= 3 rows, got {len(rows)}")
    groups: dict[float, list[RatioRow]] = {}
    for row in rows:
        groups.setdefault(row.x, []).append(row)
    if all(len(g) == 1 for g in groups.values()):
        groups = {math.nan: sorted(rows, key=lambda r: (r.n, r.x))}

    trajectories = []
    for xval, grp in sorted(groups.items(), key=lambda kv: kv[0]):
        grp = sorted(grp, key=lambda r: r.n)
        err_max = [abs(r.ratio_max - 2.0) for r in grp]
        err_sum = [abs(r.ratio_sum - 1.0) for r in grp]
        if all(r.ratio_max == grp[0].ratio_max for r in grp):
            trend = "flat"
        else:
            # MC rows get slack of twice the CI half-width
            slack = [r.ci_high - r.ci_low for r in grp]
            decreasing = all(
                err_max[i + 1] <= err_max[i] + slack[i + 1]
                for i in range(len(grp) - 1)
            )
            trend = "decreasing" if decreasing else "non-monotone"
        trajectories.append(
            {
                "x": None if math.isnan(xval) else xval,
                "n": [r.n for r in grp],
                "abs_err_max_ratio": err_max,
                "abs_err_sum_ratio": err_sum,
                "trend": trend,
                "final_err_max": err_max[-1],
                "final_err_sum": err_sum[-1],
            }
        )

    usable = [r for r in rows if r.x > 0.0]
    envelope = [error_envelope(r.x, r.delta_nx, delta) for r in usable]
    errors = [abs(r.ratio_max - 2.0) for r in usable]
    fitted_c = None
    if len(usable) >= 3 and len(set([(r.x, r.delta_nx) for r in usable])) > 1:
        sxx = math.fsum(b * b for b in envelope)
        if sxx > 0.0:
            fitted_c = math.fsum(e * b for e, b in zip(errors, envelope)) / sxx
    return {"trajectories": trajectories, "fitted_c": fitted_c}
