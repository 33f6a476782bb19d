"""Explicit growth mechanisms for the standard model on R(B).

Three events are built from row and column strips of R(B):

* ``D(a, b)`` -- diagonal growth from R(a): among the strips ``R(1,i; i-2,i)``
  (and their transposes), ``i = a+1..b``, no two consecutive ones are vacant;
* ``J(a, b)`` -- a jog: two vacant rows stop vertical growth, the square grows
  sideways to width ``b``, and the occupied site ``(b, a+3)`` restarts it;
* ``E(spec)`` -- corner seeds plus a chain of D and J events up to R(B).

The regions used by the clauses of one ``E`` event are pairwise disjoint, so
each event has an exact product probability and can be sampled clause by
clause.  A clause over an empty rectangle counts as satisfied.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bounds import BoundReport
from .errors import BpercError, MechanismError, check_int, check_probability
from .lattice import Config, Rect, Stream, long_side
from .oracle import double_gap_exact

_MASK64 = (1 << 64) - 1


# ---------------------------------------------------------------- specs


@dataclass(frozen=True)
class MechanismSpec:
    """One mechanism: the jog pairs ``(a_i, b_i)`` inside R(B)."""

    B: int
    pairs: tuple = ()

    def __post_init__(self):
        B = check_int(self.B, "B", minimum=3)
        pairs = tuple((check_int(a, "a_i"), check_int(b, "b_i")) for a, b in self.pairs)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "pairs", pairs)
        prev = 2
        for a, b in pairs:
            if a < prev:
                raise BpercError(f"pairs must satisfy 2 <= a_1 and b_i <= a_(i+1); got {pairs}")
            if b - a < 4:
                raise BpercError(f"each jog needs b_i - a_i >= 4; got ({a}, {b})")
            prev = b
        if prev > B - 1:
            raise BpercError(f"last jog must end by B - 1 = {B - 1}; got b_m = {prev}")

    @property
    def m(self) -> int:
        return len(self.pairs)

    def segments(self):
        """The diagonal stretches ``(lo, hi)`` between jogs, in order."""
        ends = [2] + [b for _, b in self.pairs]
        starts = [a for a, _ in self.pairs] + [self.B - 1]
        return list(zip(ends, starts))

    def to_json(self) -> str:
        return json.dumps({"B": self.B, "pairs": [list(ab) for ab in self.pairs]})

    @classmethod
    def from_json(cls, text: str) -> "MechanismSpec":
        data = json.loads(text)
        return cls(int(data["B"]), tuple((int(a), int(b)) for a, b in data.get("pairs", [])))


# ---------------------------------------------------------------- checkers


def _need_square(cfg: Config, side: int):
    if not cfg.domain.contains_rect(Rect.square(side)):
        raise BpercError(f"domain {cfg.domain} must contain R({side})")


def _nonvacant(cfg: Config, x0, y0, x1, y1) -> bool:
    if x0 > x1 or y0 > y1:
        return True
    r = cfg.domain
    return bool(cfg.grid[y0 - r.b : y1 - r.b + 1, x0 - r.a : x1 - r.a + 1].any())


def has_double_gap(events) -> bool:
    prev = True
    for ok in events:
        if not ok and not prev:
            return True
        prev = ok
    return False


def _row_strip(cfg, i):
    return _nonvacant(cfg, 1, i, i - 2, i)


def _col_strip(cfg, i):
    return _nonvacant(cfg, i, 1, i, i - 2)


def check_event_D(cfg: Config, a: int, b: int) -> bool:
    a = check_int(a, "a", minimum=2)
    b = check_int(b, "b")
    if b < a or b > long_side(cfg.domain):
        raise BpercError(f"need 2 <= a <= b <= long side; got a={a}, b={b}")
    _need_square(cfg, b)
    span = range(a + 1, b + 1)
    return not has_double_gap(_row_strip(cfg, i) for i in span) and not has_double_gap(
        _col_strip(cfg, i) for i in span
    )


def event_J_clauses(cfg: Config, a: int, b: int) -> dict:
    """Truth value of each of the eight jog clauses, keyed by a short description."""
    a = check_int(a, "a", minimum=1)
    b = check_int(b, "b")
    if a > b - 4:
        raise BpercError(f"a jog needs a <= b - 4; got a={a}, b={b}")
    _need_square(cfg, b)
    occupied = (b, a + 3) in cfg
    return {
        "row a+1 left of a": _nonvacant(cfg, 1, a + 1, a - 1, a + 1),
        "column a+1 below a": _nonvacant(cfg, a + 1, 1, a + 1, a - 1),
        "columns a+2..b-1 no double gap": not has_double_gap(
            _nonvacant(cfg, i, 1, i, a + 1) for i in range(a + 2, b)
        ),
        "column b up to a+1": _nonvacant(cfg, b, 1, b, a + 1),
        "rows a+2, a+3 vacant": not _nonvacant(cfg, 1, a + 2, b - 1, a + 3),
        "site (b, a+3) occupied": occupied,
        "rows a+4..b-1 no double gap": not has_double_gap(
            _nonvacant(cfg, 1, i, b, i) for i in range(a + 4, b)
        ),
        "row b": _nonvacant(cfg, 1, b, b, b),
    }


def check_event_J(cfg: Config, a: int, b: int) -> bool:
    return all(event_J_clauses(cfg, a, b).values())


def _corners(B):
    return ((1, 1), (2, 2), (B, 1), (1, B))


def check_event_E(cfg: Config, spec: MechanismSpec) -> bool:
    _need_square(cfg, spec.B)
    if not all(site in cfg for site in _corners(spec.B)):
        return False
    if not all(check_event_J(cfg, a, b) for a, b in spec.pairs):
        return False
    return all(check_event_D(cfg, lo, hi) for lo, hi in spec.segments())


# ---------------------------------------------------------------- probabilities


def _nonvacant_prob(n, p):
    if n <= 0:
        return 1.0
    if p == 1.0:
        return 1.0
    return -math.expm1(n * math.log1p(-p))


def prob_event_D(a, b, p) -> float:
    a = check_int(a, "a", minimum=2)
    b = check_int(b, "b")
    if b < a:
        raise BpercError(f"need a <= b; got a={a}, b={b}")
    p = check_probability(p)
    one_side = double_gap_exact([_nonvacant_prob(i - 2, p) for i in range(a + 1, b + 1)])
    return one_side * one_side


def prob_event_J(a, b, p) -> float:
    a = check_int(a, "a", minimum=1)
    b = check_int(b, "b")
    if a > b - 4:
        raise BpercError(f"a jog needs a <= b - 4; got a={a}, b={b}")
    p = check_probability(p)
    low = _nonvacant_prob(a + 1, p)
    high = _nonvacant_prob(b, p)
    return (
        _nonvacant_prob(a - 1, p) ** 2
        * double_gap_exact([low] * (b - a - 2))
        * low
        * (1.0 - p) ** (2 * (b - 1))
        * p
        * double_gap_exact([high] * max(0, b - a - 4))
        * high
    )


def prob_event_E(spec: MechanismSpec, p) -> float:
    p = check_probability(p)
    total = p**4
    for a, b in spec.pairs:
        total *= prob_event_J(a, b, p)
    for lo, hi in spec.segments():
        total *= prob_event_D(lo, hi, p)
    return total


# ---------------------------------------------------------------- conditioned sampling


def _rng(stream) -> np.random.Generator:
    if not isinstance(stream, Stream):
        stream = Stream(int(stream))
    return np.random.default_rng([stream.seed & _MASK64, stream.index & _MASK64])


def _draw_nonvacant(rng, n, p):
    """Bernoulli(p)^n conditioned on at least one success, drawn exactly."""
    out = np.zeros(n, dtype=bool)
    if n == 0:
        return out
    if p >= 1.0:
        first = 0
    else:
        # First success is a geometric variable truncated to [0, n).
        log_q = math.log1p(-p)
        mass = -math.expm1(n * log_q)
        u = rng.random()
        first = int(math.ceil(math.log1p(-u * mass) / log_q)) - 1
        first = min(max(first, 0), n - 1)
    out[first] = True
    out[first + 1 :] = rng.random(n - first - 1) < p
    return out


def _draw_no_double_gap(rng, u):
    """Independent indicators with success probabilities ``u`` conditioned on no double gap."""
    k = len(u)
    # h[i] = (P(ok on i.. | event i-1 failed), P(ok on i.. | event i-1 succeeded)), rescaled per i.
    h = np.ones((k + 1, 2))
    for i in range(k - 1, -1, -1):
        after_fail = u[i] * h[i + 1, 1]
        after_hit = after_fail + (1.0 - u[i]) * h[i + 1, 0]
        scale = after_hit if after_hit > 0 else 1.0
        h[i] = after_fail / scale, after_hit / scale
    out = np.empty(k, dtype=bool)
    prev = 1
    for i in range(k):
        hit = u[i] * h[i + 1, 1]
        miss = (1.0 - u[i]) * h[i + 1, 0] if prev else 0.0
        if hit + miss <= 0:
            raise MechanismError("conditioning event has probability zero")
        out[i] = rng.random() * (hit + miss) < hit
        prev = int(out[i])
    return out


class _Canvas:
    """Mutable R(B) occupancy used while sampling; ``grid[y-1, x-1]``."""

    def __init__(self, B, p, rng):
        self.grid = rng.random((B, B)) < p
        self.p = p
        self.rng = rng

    def cells(self, x0, y0, x1, y1):
        return self.grid[y0 - 1 : y1, x0 - 1 : x1]

    def fill_nonvacant(self, x0, y0, x1, y1):
        if x0 > x1 or y0 > y1:
            return
        view = self.cells(x0, y0, x1, y1)
        view[...] = _draw_nonvacant(self.rng, view.size, self.p).reshape(view.shape)

    def fill_vacant(self, x0, y0, x1, y1):
        if x0 <= x1 and y0 <= y1:
            self.cells(x0, y0, x1, y1)[...] = False

    def fill_strips(self, strips):
        if not strips:
            return
        sizes = [max(0, x1 - x0 + 1) * max(0, y1 - y0 + 1) for x0, y0, x1, y1 in strips]
        u = [_nonvacant_prob(n, self.p) for n in sizes]
        pattern = _draw_no_double_gap(self.rng, u)
        for hit, rect in zip(pattern, strips):
            if hit:
                self.fill_nonvacant(*rect)
            else:
                self.fill_vacant(*rect)


def sample_conditioned_on_E(spec: MechanismSpec, p, stream) -> Config:
    """A Bernoulli(p) field on R(B) conditioned on ``E(spec)``.

    Clause regions are disjoint, so each is drawn from its own conditional law and
    every other site stays i.i.d.  Strip families use exact sequential sampling of
    the no-double-gap pattern; non-vacant strips use a truncated geometric draw.
    """
    p = check_probability(p)
    if prob_event_E(spec, p) == 0.0:
        raise MechanismError(f"E{spec.pairs} has probability zero at p={p}")
    B = spec.B
    canvas = _Canvas(B, p, _rng(stream))
    for x, y in _corners(B):
        canvas.grid[y - 1, x - 1] = True
    for lo, hi in spec.segments():
        span = range(lo + 1, hi + 1)
        canvas.fill_strips([(1, i, i - 2, i) for i in span])
        canvas.fill_strips([(i, 1, i, i - 2) for i in span])
    for a, b in spec.pairs:
        canvas.fill_nonvacant(1, a + 1, a - 1, a + 1)
        canvas.fill_nonvacant(a + 1, 1, a + 1, a - 1)
        canvas.fill_strips([(i, 1, i, a + 1) for i in range(a + 2, b)])
        canvas.fill_nonvacant(b, 1, b, a + 1)
        canvas.fill_vacant(1, a + 2, b - 1, a + 3)
        canvas.grid[a + 2, b - 1] = True
        canvas.fill_strips([(1, i, b, i) for i in range(a + 4, b)])
        canvas.fill_nonvacant(1, b, b, b)
    return Config(Rect.square(B), canvas.grid)


# ---------------------------------------------------------------- decoding


def decode_mechanism(cfg: Config, B: int) -> MechanismSpec:
    """Recover the unique spec whose event ``E`` occurs in ``cfg``.

    Scans the row strips ``R(1,i; i-2,i)`` upward.  Two consecutive vacant
    strips at ``i, i+1`` mark a jog with ``a = i - 2``; the first occupied site
    of row ``a + 3`` gives ``b``, and the scan resumes at row ``b + 1``.
    """
    B = check_int(B, "B", minimum=3)
    _need_square(cfg, B)
    pairs = []
    i = 3
    while i + 1 <= B - 1:
        if _row_strip(cfg, i) or _row_strip(cfg, i + 1):
            i += 1
            continue
        a = i - 2
        b = next((x for x in range(1, B) if (x, a + 3) in cfg), None)
        if b is None:
            raise MechanismError(f"vacant rows at {a + 2},{a + 3} but no occupied site closes the jog")
        pairs.append((a, b))
        i = b + 1
    try:
        spec = MechanismSpec(B, tuple(pairs))
    except BpercError as exc:
        raise MechanismError(f"scan found an invalid jog sequence {pairs}: {exc}") from None
    if not check_event_E(cfg, spec):
        raise MechanismError(f"scan proposed {spec.pairs} but E does not occur")
    return spec


# ---------------------------------------------------------------- families


def mechanism_family_lower(B, p, family) -> BoundReport:
    """Sum of ``P(E(spec))`` over distinct specs: a lower bound on I(B) by disjointness."""
    B = check_int(B, "B", minimum=3)
    p = check_probability(p)
    family = list(family)
    if len(set(family)) != len(family):
        raise BpercError("family contains duplicate specs")
    for spec in family:
        if spec.B != B:
            raise BpercError(f"spec {spec} is for B={spec.B}, not {B}")
    total = math.fsum(prob_event_E(spec, p) for spec in family)
    return BoundReport("mechanism_family_lower", total, {"B": B, "p": p, "size": len(family)})


def all_specs(B, max_pairs=None):
    """Every valid spec for R(B), optionally with at most ``max_pairs`` jogs."""
    B = check_int(B, "B", minimum=3)
    out = []

    def extend(prefix, start):
        out.append(MechanismSpec(B, tuple(prefix)))
        if max_pairs is not None and len(prefix) >= max_pairs:
            return
        for a in range(start, B):
            for b in range(a + 4, B):
                extend(prefix + [(a, b)], b)

    extend([], 2)
    return out


@dataclass(frozen=True)
class PossibilityFamily:
    """Specs with ``m`` jogs satisfying ``1/p < a_1``, ``b_m < 2/p <= B`` and gaps in ``[4, floor(p^-1/2)]``."""

    B: int
    p: float
    m: int

    def __post_init__(self):
        check_int(self.B, "B", minimum=3)
        check_probability(self.p, open_low=True, open_high=True)
        check_int(self.m, "m", minimum=0)
        if 2.0 / self.p > self.B:
            raise BpercError(f"family needs B >= 2/p = {2.0 / self.p:.6g}; got B={self.B}")

    @property
    def first(self) -> int:
        return math.floor(1.0 / self.p) + 1

    @property
    def last(self) -> int:
        return min(math.ceil(2.0 / self.p) - 1, self.B - 1)

    @property
    def gaps(self) -> range:
        return range(4, math.floor(self.p**-0.5) + 1)

    def _ways(self):
        # ways[j][x] = number of ways to place jogs j..m-1 with a_j >= x (and b_m <= last).
        n = self.last + 2
        ways = np.zeros((self.m + 1, n + 1), dtype=object)
        ways[self.m, :] = 1
        for j in range(self.m - 1, -1, -1):
            for x in range(n - 1, -1, -1):
                here = sum(ways[j + 1, x + d] for d in self.gaps if x + d <= self.last)
                ways[j, x] = ways[j, x + 1] + here if x <= self.last else 0
        return ways

    def count(self) -> int:
        if self.m == 0:
            return 1
        return int(self._ways()[0, self.first])

    def specs(self):
        out = []

        def extend(prefix, start):
            if len(prefix) == self.m:
                out.append(MechanismSpec(self.B, tuple(prefix)))
                return
            for a in range(start, self.last + 1):
                for d in self.gaps:
                    if a + d <= self.last:
                        extend(prefix + [(a, a + d)], a + d)

        extend([], self.first)
        return out

    def sample(self, rng: np.random.Generator) -> MechanismSpec:
        """A uniformly random member of the family."""
        if self.m == 0:
            return MechanismSpec(self.B, ())
        ways = self._ways()
        total = int(ways[0, self.first])
        if total == 0:
            raise BpercError("family is empty")
        pairs, x = [], self.first
        for j in range(self.m):
            r = int(rng.integers(0, int(ways[j, x])))
            a = x
            while True:
                here = [(d, int(ways[j + 1, a + d])) for d in self.gaps if a + d <= self.last]
                block = sum(w for _, w in here)
                if r < block:
                    for d, w in here:
                        if r < w:
                            break
                        r -= w
                    break
                r -= block
                a += 1
            pairs.append((a, a + d))
            x = a + d
        return MechanismSpec(self.B, tuple(pairs))


def _diag_table(p):
    @lru_cache(maxsize=None)
    def D(a, b):
        return prob_event_D(a, b, p)

    return D


def possibility_family_lower(B, p, m) -> BoundReport:
    """Exact sum of ``P(E)`` over a :class:`PossibilityFamily`, by dynamic programming.

    ``P(E)`` factorises along the chain of segments and jogs, so the family sum is
    a product-sum over positions rather than an enumeration.
    """
    fam = PossibilityFamily(B, p, m)
    p = fam.p
    D = _diag_table(p)
    if m == 0:
        total = prob_event_E(MechanismSpec(B, ()), p)
    else:
        # tail[j][x]: weight of jogs j..m-1 and the final segment, given the previous jog ended at x.
        tail = {fam.m: {x: D(x, B - 1) for x in range(fam.first, fam.last + 1)}}
        for j in range(fam.m - 1, 0, -1):
            row = {}
            for x in range(fam.first, fam.last + 1):
                acc = 0.0
                for a in range(x, fam.last + 1):
                    for d in fam.gaps:
                        b = a + d
                        if b <= fam.last and b in tail[j + 1]:
                            acc += D(x, a) * prob_event_J(a, b, p) * tail[j + 1][b]
                row[x] = acc
            tail[j] = row
        # The first segment starts at 2 rather than at a previous jog's end.
        total = 0.0
        for a in range(fam.first, fam.last + 1):
            for d in fam.gaps:
                b = a + d
                if b <= fam.last:
                    total += D(2, a) * prob_event_J(a, b, p) * tail[1][b]
        total *= p**4
    return BoundReport("possibility_family_lower", total, {"B": B, "p": p, "m": m, "size": fam.count()})


def sampled_family_lower(B, p, m, samples, stream) -> tuple[float, float]:
    """Unbiased estimate of the family sum: ``count * mean P(E(spec))`` over uniform specs.

    Returns ``(estimate, standard_error)``.
    """
    fam = PossibilityFamily(B, p, m)
    samples = check_int(samples, "samples", minimum=2)
    rng = _rng(stream)
    vals = np.array([prob_event_E(fam.sample(rng), fam.p) for _ in range(samples)])
    n = fam.count()
    return float(n * vals.mean()), float(n * vals.std(ddof=1) / math.sqrt(samples))
