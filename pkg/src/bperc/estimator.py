"""Monte Carlo estimates of I(L, p), the thresholds p_alpha(L) and the L-window.

Trial ``i`` of a run with seed ``s`` always draws its field from stream
``(s, i)``, and per-chunk success counts are merged by addition, so every
result here is a function of the seed alone, whatever the thread count.
"""
from __future__ import annotations

import csv
import io
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest

from . import _kernels
from .errors import BpercError, ConvergenceError, ResourceCapError, check_int, check_probability
from .lattice import ModelKind, occupancy_threshold

MAX_SIDE = 1 << 16
_MASK64 = (1 << 64) - 1
SWEEP_COLUMNS = ("model", "L", "p", "trials", "successes", "value", "ci_low", "ci_high", "seed")


def derive_seed(seed: int, *keys: int) -> int:
    """Fold integer keys into a 64-bit seed with the stream-key mixer; injective in each step."""
    out = np.uint64(int(seed) & _MASK64)
    for k in keys:
        out = np.uint64(_kernels.stream_key(out, np.uint64(int(k) & _MASK64)))
    return int(out)


def _float_bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def default_threads() -> int:
    env = os.environ.get("BPERC_THREADS")
    if env:
        return check_int(int(env), "BPERC_THREADS", minimum=1)
    return os.cpu_count() or 1


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    value = successes / trials
    return min(float(ci.low), value), max(float(ci.high), value)


@dataclass(frozen=True)
class Estimate:
    value: float
    ci_low: float
    ci_high: float
    trials: int
    successes: int
    seed: int

    @classmethod
    def from_counts(cls, successes: int, trials: int, seed: int, confidence: float = 0.95) -> "Estimate":
        lo, hi = wilson_interval(successes, trials, confidence)
        return cls(successes / trials, lo, hi, trials, successes, seed)

    def covers(self, x: float) -> bool:
        return self.ci_low <= x <= self.ci_high

    def as_dict(self) -> dict:
        return asdict(self)


def _check_side(L) -> int:
    L = check_int(L, "L", minimum=1)
    if L > MAX_SIDE:
        raise ResourceCapError(f"L={L} exceeds the lattice cap {MAX_SIDE}")
    return L


def count_spanning(L, p, model, seed, start, stop, threads=None) -> int:
    """Spanning trials among indices ``[start, stop)``; the count does not depend on ``threads``."""
    model = ModelKind.coerce(model)
    threshold = np.uint64(occupancy_threshold(p))
    key = np.uint64(int(seed) & _MASK64)
    total = stop - start
    if total <= 0:
        return 0
    threads = threads or default_threads()
    # Small lattices run many cheap trials; keep chunks large enough to amortise the call.
    min_chunk = max(1, 4096 // (L * L))
    chunks = max(1, min(4 * threads, total // min_chunk))
    bounds = np.linspace(start, stop, chunks + 1).astype(np.int64)
    jobs = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def run(job):
        return int(_kernels.count_spanning(L, threshold, model.is_modified, key, job[0], job[1]))

    if threads == 1 or len(jobs) == 1:
        return sum(run(j) for j in jobs)
    with ThreadPoolExecutor(min(threads, len(jobs))) as pool:
        return sum(pool.map(run, jobs))


def estimate_I(L, p, model, trials, seed, threads=None, confidence=0.95) -> Estimate:
    """Fraction of ``trials`` random fields on R(L) that are internally spanned."""
    L = _check_side(L)
    p = check_probability(p)
    trials = check_int(trials, "trials", minimum=1)
    hits = count_spanning(L, p, model, seed, 0, trials, threads)
    return Estimate.from_counts(hits, trials, int(seed) & _MASK64, confidence)


def shared_uniform_indicators(L, ps, model, trials, seed) -> np.ndarray:
    """Spanning indicators ``out[i, j]`` of trial ``i`` at density ``ps[j]``, all from one uniform field."""
    L = _check_side(L)
    model = ModelKind.coerce(model)
    ps = np.asarray([check_probability(p) for p in ps], dtype=np.float64)
    out = np.zeros((trials, len(ps)), dtype=np.bool_)
    key = np.uint64(int(seed) & _MASK64)
    _kernels.spanning_under_shared_uniforms(L, ps, model.is_modified, key, 0, trials, out)
    return out


# ---------------------------------------------------------------- thresholds in p


@dataclass(frozen=True)
class Probe:
    p: float
    estimate: Estimate
    above: bool


@dataclass(frozen=True)
class ThresholdEstimate:
    """Estimate of p_alpha(L): ``value`` is the bracket midpoint and the bracket is the interval."""

    L: int
    alpha: float
    value: float
    ci_low: float
    ci_high: float
    seed: int
    probes: tuple = field(default_factory=tuple)

    @property
    def trials(self) -> int:
        return sum(pr.estimate.trials for pr in self.probes)

    def as_dict(self) -> dict:
        return {
            "L": self.L,
            "alpha": self.alpha,
            "value": self.value,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "seed": self.seed,
            "trials": self.trials,
            "probes": [{"p": pr.p, "above": pr.above, **pr.estimate.as_dict()} for pr in self.probes],
        }


def estimate_p_alpha(
    L,
    alpha,
    model,
    tol=1e-3,
    trials_per_probe=1000,
    seed=0,
    bracket=(0.0, 1.0),
    max_boost=16,
    max_probes=64,
    threads=None,
) -> ThresholdEstimate:
    """Stochastic bisection for p_alpha(L) = sup{p : I(L, p) <= alpha}.

    Each probe uses fresh trials from its own derived seed.  While ``alpha`` lies
    inside a probe's confidence interval the probe is extended (doubling its
    trials) up to ``max_boost`` times the base count; after that the point
    estimate decides the side.
    """
    L = _check_side(L)
    alpha = check_probability(alpha, "alpha", open_low=True, open_high=True)
    trials_per_probe = check_int(trials_per_probe, "trials_per_probe", minimum=1)
    lo, hi = (check_probability(x, "bracket") for x in bracket)
    if not (lo < hi and tol > 0):
        raise BpercError(f"need bracket lo < hi and tol > 0; got {bracket}, tol={tol}")
    needed = math.ceil(math.log2((hi - lo) / tol)) if hi - lo >= tol else 0
    if needed > max_probes:
        raise ConvergenceError(f"bisection to tol={tol} needs {needed} probes, over the cap {max_probes}")
    probes = []
    for k in range(max_probes):
        if hi - lo < tol:
            break
        mid = 0.5 * (lo + hi)
        probe_seed = derive_seed(seed, k)
        n = trials_per_probe
        hits = count_spanning(L, mid, model, probe_seed, 0, n, threads)
        est = Estimate.from_counts(hits, n, probe_seed)
        while est.covers(alpha) and n < trials_per_probe * max_boost:
            hits += count_spanning(L, mid, model, probe_seed, n, 2 * n, threads)
            n *= 2
            est = Estimate.from_counts(hits, n, probe_seed)
        above = est.value > alpha
        probes.append(Probe(mid, est, above))
        if above:
            hi = mid
        else:
            lo = mid
    else:
        if hi - lo >= tol:
            raise ConvergenceError(f"bracket [{lo}, {hi}] still wider than tol={tol} after {max_probes} probes")
    return ThresholdEstimate(L, alpha, 0.5 * (lo + hi), lo, hi, int(seed) & _MASK64, tuple(probes))


# ---------------------------------------------------------------- the L-window


@dataclass(frozen=True)
class WindowResult:
    p: float
    eps: float
    L_lower: int
    L_upper: int
    estimates: tuple = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            "p": self.p,
            "eps": self.eps,
            "L_lower": self.L_lower,
            "L_upper": self.L_upper,
            "estimates": [{"L": L, **e.as_dict()} for L, e in self.estimates],
        }


def estimate_L_window(
    p,
    eps,
    model,
    trials,
    seed,
    L_min=1,
    L_max=MAX_SIDE,
    ratio=1.05,
    settle=3,
    threads=None,
) -> WindowResult:
    """Estimate ``L_lower = min{L : I >= eps}`` and ``L_upper = max{L : I <= 1 - eps}``.

    I(L, p) need not be monotone in L, so the scan runs over a geometric grid and
    stops only after ``settle`` consecutive grid points above ``1 - eps``.  Both
    crossings are then refined to a single L by bisection between neighbouring
    grid points.  ``L_upper`` is 1 when no L has I <= 1 - eps.
    """
    p = check_probability(p)
    eps = float(eps)
    if not 0.0 < eps < 0.2:
        raise BpercError(f"eps must lie in (0, 1/5), got {eps}")
    L_min = _check_side(L_min)
    L_max = _check_side(L_max)
    cache = {}

    def est(L):
        if L not in cache:
            cache[L] = estimate_I(L, p, model, trials, derive_seed(seed, L), threads)
        return cache[L].value

    grid, first_hit, last_low, run = [], None, None, 0
    L = L_min
    while True:
        grid.append(L)
        v = est(L)
        if first_hit is None and v >= eps:
            first_hit = len(grid) - 1
        if v <= 1 - eps:
            last_low, run = len(grid) - 1, 0
        else:
            run += 1
        if first_hit is not None and run >= settle:
            break
        if L >= L_max:
            raise ConvergenceError(f"L-window scan reached L_max={L_max} before settling above 1 - eps")
        L = min(L_max, max(L + 1, math.ceil(L * ratio)))

    # L_lower: the smallest L in (previous grid point, first hit] with I >= eps.
    hi = grid[first_hit]
    lo = grid[first_hit - 1] if first_hit > 0 else hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if est(mid) >= eps:
            hi = mid
        else:
            lo = mid
    L_lower = hi

    if last_low is None:
        L_upper = 1
    else:
        lo = grid[last_low]
        hi = grid[last_low + 1]
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if est(mid) <= 1 - eps:
                lo = mid
            else:
                hi = mid
        L_upper = lo
    return WindowResult(p, eps, L_lower, L_upper, tuple(sorted(cache.items())))


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepRow:
    model: str
    L: int
    p: float
    estimate: Estimate

    def record(self) -> dict:
        e = self.estimate
        return {
            "model": self.model,
            "L": self.L,
            "p": self.p,
            "trials": e.trials,
            "successes": e.successes,
            "value": e.value,
            "ci_low": e.ci_low,
            "ci_high": e.ci_high,
            "seed": e.seed,
        }


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    errors: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in self.rows:
            rec = row.record()
            writer.writerow([repr(rec[c]) if isinstance(rec[c], float) else rec[c] for c in SWEEP_COLUMNS])
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {
            "rows": [row.record() for row in self.rows],
            "errors": [{"L": L, "p": p, "error": msg} for L, p, msg in self.errors],
        }


def point_seed(seed, L, p, model) -> int:
    model = ModelKind.coerce(model)
    return derive_seed(seed, int(L), _float_bits(p), int(model.is_modified))


def sweep(points, model, trials, seed, threads=None) -> SweepResult:
    """One :class:`Estimate` per ``(L, p)``; each point's seed depends only on ``(seed, L, p, model)``."""
    model = ModelKind.coerce(model)
    rows, errors = [], []
    for L, p in points:
        try:
            s = point_seed(seed, L, p, model)
            rows.append(SweepRow(model.value, int(L), float(p), estimate_I(L, p, model, trials, s, threads)))
        except BpercError as exc:
            errors.append((L, p, str(exc)))
    return SweepResult(tuple(rows), tuple(errors))
