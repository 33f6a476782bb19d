"""Shared test helpers, including a deliberately naive closure used as an independent oracle."""
import numpy as np
import pytest

from bperc import Config, Rect


def naive_closure(sites, width, height, modified):
    """Closure by repeated full sweeps over a Python set, straight from the rule definitions."""
    infected = set(sites)
    inside = [(x, y) for x in range(1, width + 1) for y in range(1, height + 1)]
    changed = True
    while changed:
        changed = False
        new = set()
        for x, y in inside:
            if (x, y) in infected:
                continue
            h = ((x - 1, y) in infected) + ((x + 1, y) in infected)
            v = ((x, y - 1) in infected) + ((x, y + 1) in infected)
            if (modified and h and v) or (not modified and h + v >= 2):
                new.add((x, y))
        if new:
            infected |= new
            changed = True
    return infected


def naive_spans(cfg, modified):
    r = cfg.domain
    shifted = {(x - r.a + 1, y - r.b + 1) for x, y in cfg.occupied}
    return len(naive_closure(shifted, r.width, r.height, modified)) == r.area


def random_config(rng, w, h, p):
    return Config(Rect.of_size(w, h), rng.random((h, w)) < p)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
