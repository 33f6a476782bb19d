"""Finite configurations and bootstrap closure for the standard and modified rules.

Coordinates are 1-based lattice sites ``(x, y)``.  A :class:`Config` stores its
occupancy as a dense boolean array ``grid[y - r.b, x - r.a]``; sites outside the
domain are healthy forever, so every operation is exact on the domain alone.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from . import _kernels
from .errors import BpercError, check_probability

_MASK64 = (1 << 64) - 1


class ModelKind(enum.Enum):
    STANDARD = "standard"
    MODIFIED = "modified"

    @classmethod
    def coerce(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise BpercError(f"unknown model {value!r}; expected 'standard' or 'modified'") from None

    @property
    def is_modified(self) -> bool:
        return self is ModelKind.MODIFIED


@dataclass(frozen=True)
class Rect:
    """The integer rectangle of sites ``(x, y)`` with ``a <= x <= c`` and ``b <= y <= d``."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            if int(getattr(self, name)) != getattr(self, name):
                raise BpercError(f"Rect.{name} must be an integer")
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.a > self.c or self.b > self.d:
            raise BpercError(f"empty rectangle ({self.a},{self.b};{self.c},{self.d})")

    @classmethod
    def square(cls, side: int) -> "Rect":
        """R(side) = {1..side}^2."""
        return cls(1, 1, side, side)

    @classmethod
    def of_size(cls, width: int, height: int) -> "Rect":
        return cls(1, 1, width, height)

    @property
    def width(self) -> int:
        return self.c - self.a + 1

    @property
    def height(self) -> int:
        return self.d - self.b + 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, x: int, y: int) -> bool:
        return self.a <= x <= self.c and self.b <= y <= self.d

    def contains_rect(self, other: "Rect") -> bool:
        return self.a <= other.a and self.b <= other.b and other.c <= self.c and other.d <= self.d

    def __str__(self):
        return f"({self.a},{self.b};{self.c},{self.d})"


def long_side(r: Rect) -> int:
    return max(r.width, r.height)


class Config:
    """Immutable occupancy assignment over a :class:`Rect`."""

    __slots__ = ("domain", "grid")

    def __init__(self, domain: Rect, grid=None):
        if grid is None:
            grid = np.zeros(domain.shape, dtype=bool)
        grid = np.array(grid, dtype=bool, copy=True)
        if grid.shape != domain.shape:
            raise BpercError(f"grid shape {grid.shape} does not match domain {domain} of shape {domain.shape}")
        grid.setflags(write=False)
        self.domain = domain
        self.grid = grid

    @classmethod
    def from_sites(cls, domain: Rect, sites: Iterable[tuple[int, int]]) -> "Config":
        grid = np.zeros(domain.shape, dtype=bool)
        for x, y in sites:
            if not domain.contains(x, y):
                raise BpercError(f"site {(x, y)} lies outside {domain}")
            grid[y - domain.b, x - domain.a] = True
        return cls(domain, grid)

    @classmethod
    def full(cls, domain: Rect) -> "Config":
        return cls(domain, np.ones(domain.shape, dtype=bool))

    def __contains__(self, site) -> bool:
        x, y = site
        return self.domain.contains(x, y) and bool(self.grid[y - self.domain.b, x - self.domain.a])

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.occupied)

    def __len__(self) -> int:
        return int(self.grid.sum())

    def __eq__(self, other):
        if not isinstance(other, Config):
            return NotImplemented
        return self.domain == other.domain and bool(np.array_equal(self.grid, other.grid))

    def __hash__(self):
        return hash((self.domain, self.grid.tobytes()))

    def __repr__(self):
        return f"Config(domain={self.domain}, occupied={len(self)})"

    @property
    def occupied(self) -> frozenset:
        rows, cols = np.nonzero(self.grid)
        return frozenset(zip((cols + self.domain.a).tolist(), (rows + self.domain.b).tolist()))

    def is_full(self) -> bool:
        return bool(self.grid.all())

    def restrict(self, r: Rect) -> "Config":
        """The configuration ``cfg ∩ r`` viewed on the sub-domain ``r``."""
        if not self.domain.contains_rect(r):
            raise BpercError(f"{r} is not inside {self.domain}")
        rows = slice(r.b - self.domain.b, r.d - self.domain.b + 1)
        cols = slice(r.a - self.domain.a, r.c - self.domain.a + 1)
        return Config(r, self.grid[rows, cols])

    def issubset(self, other: "Config") -> bool:
        if self.domain != other.domain:
            raise BpercError("configurations live on different domains")
        return not bool((self.grid & ~other.grid).any())


def step(cfg: Config, model) -> Config:
    """One synchronous application of the update rule on ``cfg.domain``."""
    model = ModelKind.coerce(model)
    g = cfg.grid
    pad = np.zeros((g.shape[0] + 2, g.shape[1] + 2), dtype=bool)
    pad[1:-1, 1:-1] = g
    west, east = pad[1:-1, :-2], pad[1:-1, 2:]
    south, north = pad[:-2, 1:-1], pad[2:, 1:-1]
    if model.is_modified:
        grow = (west | east) & (south | north)
    else:
        count = west.astype(np.int8) + east + south + north
        grow = count >= 2
    return Config(cfg.domain, g | grow)


def _closed_grid(grid: np.ndarray, model: ModelKind) -> tuple[np.ndarray, int]:
    h, w = grid.shape
    state = np.ascontiguousarray(grid, dtype=np.uint8).ravel().copy()
    count = _kernels.closure_inplace(state, w, h, model.is_modified)
    return state.reshape(h, w).astype(bool), int(count)


def closure(cfg: Config, model) -> Config:
    """Least fixed point of :func:`step` containing ``cfg`` (work-queue, linear time)."""
    model = ModelKind.coerce(model)
    grid, _ = _closed_grid(cfg.grid, model)
    return Config(cfg.domain, grid)


def is_internally_spanned(cfg: Config, model) -> bool:
    model = ModelKind.coerce(model)
    _, count = _closed_grid(cfg.grid, model)
    return count == cfg.domain.area


@dataclass(frozen=True)
class Stream:
    """Counter-based random stream ``index`` of ``seed``.

    Site ``k`` (row-major) of the field drawn from a stream is decided by the
    ``k``-th output of a SplitMix64 sequence whose start is derived injectively
    from ``(seed, index)``, so any stream is reproducible in isolation.
    """

    seed: int
    index: int = 0

    @property
    def key(self) -> np.uint64:
        return np.uint64(_kernels.stream_key(np.uint64(self.seed & _MASK64), np.uint64(self.index & _MASK64)))

    def uniforms(self, n: int) -> np.ndarray:
        out = np.empty(n, np.float64)
        _kernels.fill_uniforms(self.key, out)
        return out


def occupancy_threshold(p: float) -> int:
    """Integer threshold so that a 53-bit uniform ``u`` is occupied iff ``(u bits) < threshold``."""
    return int(np.ceil(p * 2.0**53))


def sample_field(r: Rect, p: float, stream) -> Config:
    """I.i.d. Bernoulli(p) occupancy on ``r``; ``stream`` is a :class:`Stream` or an integer seed."""
    p = check_probability(p)
    if not isinstance(stream, Stream):
        stream = Stream(int(stream))
    flat = np.empty(r.area, np.uint8)
    _kernels.fill_field(stream.key, occupancy_threshold(p), flat)
    return Config(r, flat.reshape(r.shape).astype(bool))


def sample_uniform_field(r: Rect, stream) -> np.ndarray:
    """Per-site uniforms behind :func:`sample_field`; ``u < p`` reproduces its occupancy."""
    if not isinstance(stream, Stream):
        stream = Stream(int(stream))
    return stream.uniforms(r.area).reshape(r.shape)


def format_grid(cfg: Config) -> str:
    """Grid text: rows from the top (``y = d``) down, ``#`` occupied and ``.`` healthy."""
    chars = np.where(cfg.grid[::-1], "#", ".")
    return "".join("".join(row) + "\n" for row in chars)


def parse_grid(text: str, origin: tuple[int, int] = (1, 1)) -> Config:
    lines = [line.rstrip("\r") for line in text.splitlines()]
    while lines and not lines[-1]:
        lines.pop()
    if not lines:
        raise BpercError("empty grid")
    width = len(lines[0])
    if width == 0 or any(len(line) != width for line in lines):
        raise BpercError("grid rows must be non-empty and of equal length")
    bad = set("".join(lines)) - {"#", "."}
    if bad:
        raise BpercError(f"unexpected grid characters {sorted(bad)!r}")
    a, b = origin
    domain = Rect(a, b, a + width - 1, b + len(lines) - 1)
    grid = np.array([[ch == "#" for ch in line] for line in reversed(lines)], dtype=bool)
    return Config(domain, grid)
