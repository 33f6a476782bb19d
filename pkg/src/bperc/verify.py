"""Quick invariant suites behind ``bperc verify``.

Each suite returns a list of :class:`Check` results; none of them takes more
than a few seconds, so they double as a smoke test of an installation.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import bounds, mechanisms, oracle, special
from .estimator import estimate_I
from .lattice import Config, ModelKind, Rect, Stream, closure, is_internally_spanned, step


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    detail: str = ""

    def as_dict(self):
        return asdict(self)


def _random_config(rng, max_side=8):
    w, h = (int(x) for x in rng.integers(1, max_side + 1, size=2))
    return Config(Rect.of_size(w, h), rng.random((h, w)) < rng.uniform(0.1, 0.6))


def _iterate_to_fixed_point(cfg, model):
    while True:
        nxt = step(cfg, model)
        if nxt == cfg:
            return cfg
        cfg = nxt


def suite_closure(rng, n=300):
    bad = {"matches iteration": 0, "idempotent": 0, "monotone": 0, "modified within standard": 0}
    for _ in range(n):
        cfg = _random_config(rng)
        extra = Config(cfg.domain, cfg.grid | (rng.random(cfg.domain.shape) < 0.1))
        closed = {m: closure(cfg, m) for m in ModelKind}
        for m in ModelKind:
            bad["matches iteration"] += closed[m] != _iterate_to_fixed_point(cfg, m)
            bad["idempotent"] += closure(closed[m], m) != closed[m]
            bad["monotone"] += not closed[m].issubset(closure(extra, m))
        bad["modified within standard"] += not closed[ModelKind.MODIFIED].issubset(closed[ModelKind.STANDARD])
    return [Check("closure", k, v == 0, f"{v} failures in {n} configurations") for k, v in bad.items()]


def suite_oracle(rng, n=300):
    checks = []
    poly = oracle.exact_span_polynomial(Rect.square(2), "standard")
    checks.append(Check("oracle", "R(2) counts", poly.counts == (0, 0, 2, 4, 1), str(poly.counts)))
    checks.append(Check("oracle", "I(2, 0.1)", abs(poly(0.1) - 0.0199) < 1e-15, repr(poly(0.1))))
    poly3 = oracle.exact_span_polynomial(Rect.square(3), "standard")
    grid = [poly3(p) for p in np.linspace(0.01, 0.99, 50)]
    checks.append(Check("oracle", "I(3, p) increasing", all(np.diff(grid) > 0)))
    worst = math.inf
    for _ in range(n):
        u = np.sort(rng.random(int(rng.integers(1, 30))))
        if rng.random() < 0.5:
            u = u[::-1]
        lower = math.prod(special.beta_(x) for x in u)
        worst = min(worst, oracle.double_gap_exact(u) - lower)
    checks.append(Check("oracle", "double gaps dominate beta product", worst >= -1e-12, f"min slack {worst:.3g}"))
    return checks


def suite_mechanisms(rng, n=100):
    failures = 0
    for i in range(n):
        B = int(rng.integers(8, 30))
        spec = mechanisms.MechanismSpec(B, ())
        if B >= 12 and rng.random() < 0.6:
            a = int(rng.integers(2, B - 6))
            b = int(rng.integers(a + 4, B))
            spec = mechanisms.MechanismSpec(B, ((a, b),))
        p = float(rng.uniform(0.05, 0.2))
        cfg = mechanisms.sample_conditioned_on_E(spec, p, Stream(int(rng.integers(1 << 62)), i))
        ok = (
            mechanisms.check_event_E(cfg, spec)
            and is_internally_spanned(cfg, "standard")
            and mechanisms.decode_mechanism(cfg, B) == spec
        )
        failures += not ok
    return [Check("mechanisms", "sample, span, decode", failures == 0, f"{failures} failures in {n} samples")]


def suite_bounds(rng):
    ok, rep = bounds.explicit_certificate(0.0014, 500 * math.log(10))
    ok2, rep2 = bounds.explicit_certificate(0.0002356, 3000 * math.log(10))
    ps = np.linspace(1e-4, 0.49, 200)
    sandwich = all(p <= special.q_of_p(p) <= p + p * p for p in ps)
    return [
        Check("bounds", "dilog(1) = pi^2/6", abs(special.dilog(1.0) - math.pi**2 / 6) < 1e-12),
        Check("bounds", "integral of g = pi^2/18", abs(special.integral_g(0.0) - math.pi**2 / 18) < 1e-6),
        Check("bounds", "certificate at p=0.0014", ok and rep.inputs["plogL"] < 0.98 * special.LAMBDA_M),
        Check("bounds", "certificate at p=0.0002356", ok2 and rep2.inputs["plogL"] < 0.99 * special.LAMBDA_M),
        Check("bounds", "p <= q <= p + p^2", sandwich),
        Check("bounds", "diag bound below exact I_M(3)",
              bounds.diag_lower(3, 0.1).value <= oracle.exact_I(3, 0.1, "modified")),
    ]


def suite_estimator(rng):
    seed = int(rng.integers(1 << 62))
    exact = oracle.exact_I(2, 0.1, "standard")
    est = estimate_I(2, 0.1, "standard", 200_000, seed, threads=1)
    twin = estimate_I(2, 0.1, "standard", 200_000, seed, threads=3)
    sigma = math.sqrt(exact * (1 - exact) / est.trials)
    return [
        Check("estimator", "I(2, 0.1) within 4 sigma", abs(est.value - exact) <= 4 * sigma, repr(est.value)),
        Check("estimator", "thread count does not matter", est == twin),
    ]


SUITES = {
    "closure": suite_closure,
    "oracle": suite_oracle,
    "mechanisms": suite_mechanisms,
    "bounds": suite_bounds,
    "estimator": suite_estimator,
}


def run_suites(names, seed=0):
    if "all" in names:
        names = list(SUITES)
    results = []
    for i, name in enumerate(names):
        rng = np.random.default_rng([seed, i])
        results.extend(SUITES[name](rng))
    return results
