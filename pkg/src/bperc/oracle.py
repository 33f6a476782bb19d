"""Exact computations on tiny instances, used as ground truth for estimators and bounds."""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb

import numpy as np

from . import _kernels
from .errors import BpercError, ResourceCapError, check_int, check_probability
from .lattice import Config, ModelKind, Rect, long_side

ENUMERATION_CAP = 25


@dataclass(frozen=True)
class SpanPolynomial:
    """``counts[k]`` = number of ``k``-site occupancy patterns that internally span."""

    area: int
    counts: tuple

    def __post_init__(self):
        if len(self.counts) != self.area + 1:
            raise BpercError("counts must have area + 1 entries")
        for k, n in enumerate(self.counts):
            if not 0 <= n <= comb(self.area, k):
                raise BpercError(f"counts[{k}]={n} outside [0, C({self.area},{k})]")

    def __call__(self, p: float) -> float:
        p = check_probability(p)
        q = 1.0 - p
        return float(sum(n * p**k * q ** (self.area - k) for k, n in enumerate(self.counts) if n))

    def derivative(self, p: float) -> float:
        q = 1.0 - p
        total = 0.0
        for k, n in enumerate(self.counts):
            if not n:
                continue
            if k:
                total += n * k * p ** (k - 1) * q ** (self.area - k)
            if k < self.area:
                total -= n * (self.area - k) * p**k * q ** (self.area - k - 1)
        return total

    def to_json(self) -> str:
        return json.dumps({"area": self.area, "counts": list(self.counts)})

    @classmethod
    def from_json(cls, text: str) -> "SpanPolynomial":
        data = json.loads(text)
        return cls(int(data["area"]), tuple(int(n) for n in data["counts"]))


_COUNT_CACHE: dict = {}


def _span_counts(width: int, height: int, modified: bool, workers: int) -> tuple:
    # Counts do not depend on the worker count, so it stays out of the cache key.
    key = (width, height, modified)
    if key not in _COUNT_CACHE:
        _COUNT_CACHE[key] = _enumerate(width, height, modified, workers)
    return _COUNT_CACHE[key]


def _enumerate(width: int, height: int, modified: bool, workers: int) -> tuple:
    total = 1 << (width * height)
    shards = max(1, min(workers, total >> 12)) if total > 4096 else 1
    bounds = np.linspace(0, total, shards + 1).astype(np.int64)
    jobs = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:])]
    if shards == 1:
        parts = [_kernels.enumerate_span_counts(width, height, modified, 0, total)]
    else:
        with ThreadPoolExecutor(shards) as pool:
            parts = list(pool.map(lambda j: _kernels.enumerate_span_counts(width, height, modified, *j), jobs))
    return tuple(int(n) for n in np.sum(parts, axis=0))


def exact_span_polynomial(r: Rect, model, workers: int | None = None) -> SpanPolynomial:
    """Count spanning patterns of ``r`` by exhaustive enumeration (area <= 25)."""
    model = ModelKind.coerce(model)
    if r.area > ENUMERATION_CAP:
        raise ResourceCapError(f"area {r.area} exceeds the enumeration cap {ENUMERATION_CAP}")
    # Counts depend on the shape only; orient so the cache sees one key per shape.
    width, height = sorted((r.width, r.height))
    workers = workers or int(os.environ.get("BPERC_THREADS", 0)) or os.cpu_count() or 1
    return SpanPolynomial(r.area, _span_counts(width, height, model.is_modified, workers))


def exact_I(L: int, p: float, model) -> float:
    """``P_p(R(L) is internally spanned)`` from the exact span polynomial."""
    L = check_int(L, "L", minimum=1)
    p = check_probability(p)
    if L * L > ENUMERATION_CAP:
        raise ResourceCapError(f"L={L} exceeds the enumeration cap (L^2 <= {ENUMERATION_CAP})")
    return exact_span_polynomial(Rect.square(L), model)(p)


def double_gap_exact(u) -> float:
    """Probability that independent events with probabilities ``u`` have no two consecutive failures."""
    u = [check_probability(x, "u_i") for x in u]
    prev, cur = 1.0, 1.0
    for k in range(1, len(u)):
        prev, cur = cur, u[k] * cur + (1.0 - u[k]) * u[k - 1] * prev
    return cur


def find_spanned_subrectangles(cfg: Config, model, k: int, first_only: bool = False) -> list[Rect]:
    """Every sub-rectangle ``T`` of the domain with ``long(T)`` in ``[k, 2k]`` spanned by ``cfg ∩ T``."""
    model = ModelKind.coerce(model)
    k = check_int(k, "k", minimum=1)
    if k > long_side(cfg.domain):
        raise BpercError(f"k={k} exceeds the long side {long_side(cfg.domain)} of {cfg.domain}")
    found = _kernels.spanned_subrectangles(cfg.grid.astype(np.uint8), model.is_modified, k, first_only)
    a, b = cfg.domain.a, cfg.domain.b
    return [Rect(a + int(c0), b + int(r0), a + int(c1), b + int(r1)) for c0, r0, c1, r1 in found]


def aizenman_lebowitz_violations(cfg: Config, model) -> list[int]:
    """Scales ``k`` at which no spanned sub-rectangle with long side in ``[k, 2k]`` exists.

    A witness of long side ``l`` serves every ``k`` in ``[ceil(l/2), l]``, so each
    search result is reused across scales.
    """
    covered = set()
    missing = []
    for k in range(1, long_side(cfg.domain) + 1):
        if k in covered:
            continue
        hit = find_spanned_subrectangles(cfg, model, k, first_only=True)
        if not hit:
            missing.append(k)
            continue
        ell = long_side(hit[0])
        covered.update(range((ell + 1) // 2, ell + 1))
    return missing
