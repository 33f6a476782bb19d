import math

import numpy as np
import pytest

from bperc import (
    BpercError,
    Config,
    MechanismError,
    MechanismSpec,
    Rect,
    Stream,
    check_event_D,
    check_event_E,
    check_event_J,
    decode_mechanism,
    estimate_I,
    is_internally_spanned,
    mechanism_family_lower,
    prob_event_D,
    prob_event_E,
    prob_event_J,
    sample_conditioned_on_E,
)
from bperc.mechanisms import (
    PossibilityFamily,
    all_specs,
    event_J_clauses,
    possibility_family_lower,
    sampled_family_lower,
)
from bperc.special import log_G

# ---------------------------------------------------------------- vectorised oracle
# Batch indicators written straight from the event definitions; fields[n, y-1, x-1].


def nonvac(f, x0, y0, x1, y1):
    if x0 > x1 or y0 > y1:
        return np.ones(len(f), dtype=bool)
    return f[:, y0 - 1 : y1, x0 - 1 : x1].any(axis=(1, 2))


def vacant(f, x0, y0, x1, y1):
    if x0 > x1 or y0 > y1:
        return np.ones(len(f), dtype=bool)
    return ~f[:, y0 - 1 : y1, x0 - 1 : x1].any(axis=(1, 2))


def no_double_gap(events, n):
    ok = np.ones(n, dtype=bool)
    for e0, e1 in zip(events, events[1:]):
        ok &= e0 | e1
    return ok


def vec_D(f, a, b):
    rows = [nonvac(f, 1, i, i - 2, i) for i in range(a + 1, b + 1)]
    cols = [nonvac(f, i, 1, i, i - 2) for i in range(a + 1, b + 1)]
    return no_double_gap(rows, len(f)) & no_double_gap(cols, len(f))


def vec_J(f, a, b):
    n = len(f)
    ok = nonvac(f, 1, a + 1, a - 1, a + 1) & nonvac(f, a + 1, 1, a + 1, a - 1)
    ok &= no_double_gap([nonvac(f, i, 1, i, a + 1) for i in range(a + 2, b)], n)
    ok &= nonvac(f, b, 1, b, a + 1)
    ok &= vacant(f, 1, a + 2, b - 1, a + 3)
    ok &= f[:, a + 2, b - 1]
    ok &= no_double_gap([nonvac(f, 1, i, b, i) for i in range(a + 4, b)], n)
    ok &= nonvac(f, 1, b, b, b)
    return ok


def vec_E(f, spec):
    B = spec.B
    ok = f[:, 0, 0] & f[:, 1, 1] & f[:, 0, B - 1] & f[:, B - 1, 0]
    for lo, hi in spec.segments():
        ok &= vec_D(f, lo, hi)
    for a, b in spec.pairs:
        ok &= vec_J(f, a, b)
    return ok


def forced_sites(spec):
    """Sites pinned by single-site clauses: corners occupied, jog rows vacant, jog restart occupied."""
    occ = [(1, 1), (2, 2), (spec.B, 1), (1, spec.B)]
    vac = []
    for a, b in spec.pairs:
        occ.append((b, a + 3))
        vac += [(x, y) for x in range(1, b) for y in (a + 2, a + 3)]
    return occ, vac


def conditional_fields(rng, n, B, p, occ, vac):
    f = rng.random((n, B, B)) < p
    for x, y in occ:
        f[:, y - 1, x - 1] = True
    for x, y in vac:
        f[:, y - 1, x - 1] = False
    return f


def mc_conditional(rng, indicator, B, p, occ, vac, trials, chunk=100_000):
    """P(event) = P(pinned sites) * P(event | pinned sites); the second factor by plain Monte Carlo."""
    hits = 0
    for lo in range(0, trials, chunk):
        hits += int(indicator(conditional_fields(rng, min(chunk, trials - lo), B, p, occ, vac)).sum())
    weight = p ** len(occ) * (1 - p) ** len(vac)
    return weight, hits


def assert_within_4sigma(exact, weight, hits, trials):
    cond = exact / weight
    sd = math.sqrt(cond * (1 - cond) / trials)
    assert abs(hits / trials - cond) <= 4 * sd, (hits / trials, cond, sd)


def to_cfg(field):
    return Config(Rect.square(field.shape[0]), field)


# ---------------------------------------------------------------- specs


def test_spec_validation_and_json():
    spec = MechanismSpec(20, ((3, 7), (7, 12)))
    assert spec.m == 2 and spec.segments() == [(2, 3), (7, 7), (12, 19)]
    assert MechanismSpec.from_json(spec.to_json()) == spec
    for bad in [(20, ((1, 6),)), (20, ((3, 6),)), (20, ((3, 8), (7, 12))), (10, ((3, 10),)), (2, ())]:
        with pytest.raises(BpercError):
            MechanismSpec(*bad)


# ---------------------------------------------------------------- checkers


def test_D_examples():
    full = Config.full(Rect.square(8))
    assert check_event_D(full, 2, 8) and check_event_D(full, 3, 3)
    assert check_event_D(Config(Rect.square(8)), 5, 5)
    assert not check_event_D(Config(Rect.square(4)), 2, 4)
    with pytest.raises(BpercError):
        check_event_D(full, 1, 4)
    with pytest.raises(BpercError):
        check_event_D(full, 2, 9)


def test_J_hand_example():
    sites = [(1, 3), (3, 1), (4, 3), (6, 3), (6, 5), (3, 6), (6, 6)]
    cfg = Config.from_sites(Rect.square(6), sites)
    trace = event_J_clauses(cfg, 2, 6)
    assert len(trace) == 8 and all(trace.values())
    assert check_event_J(cfg, 2, 6)
    # Removing the restart site breaks exactly one clause.
    broken = Config.from_sites(Rect.square(6), [s for s in sites if s != (6, 5)])
    assert sum(not v for v in event_J_clauses(broken, 2, 6).values()) == 1


def test_J_full_and_empty():
    assert not check_event_J(Config.full(Rect.square(9)), 3, 8)
    assert not check_event_J(Config(Rect.square(9)), 3, 8)
    with pytest.raises(BpercError):
        check_event_J(Config.full(Rect.square(9)), 3, 6)


def test_E_examples():
    B = 9
    full = Config.full(Rect.square(B))
    assert check_event_E(full, MechanismSpec(B, ()))
    assert not check_event_E(full, MechanismSpec(B, ((2, 6),)))
    rng = np.random.default_rng(5)
    f = rng.random((4000, B, B)) < 0.35
    spec = MechanismSpec(B, ())
    for x in f[:400]:
        cfg = to_cfg(x)
        corners = all(s in cfg for s in [(1, 1), (2, 2), (B, 1), (1, B)])
        assert check_event_E(cfg, spec) == (corners and check_event_D(cfg, 2, B - 1))


@pytest.mark.parametrize(
    "B, pairs, p", [(9, ((2, 6),), 0.3), (12, ((3, 7),), 0.15), (14, ((2, 6), (6, 11)), 0.25), (10, (), 0.3)]
)
def test_checkers_agree_with_vectorised_oracle(B, pairs, p):
    spec = MechanismSpec(B, pairs)
    occ, vac = forced_sites(spec)
    f = conditional_fields(np.random.default_rng(B), 3000, B, p, occ, vac)
    expected = vec_E(f, spec)
    got = np.array([check_event_E(to_cfg(x), spec) for x in f])
    assert expected.sum() > 20
    assert np.array_equal(got, expected)
    for a, b in pairs:
        assert np.array_equal(np.array([check_event_J(to_cfg(x), a, b) for x in f[:500]]), vec_J(f[:500], a, b))
    for lo, hi in spec.segments():
        assert np.array_equal(np.array([check_event_D(to_cfg(x), lo, hi) for x in f[:500]]), vec_D(f[:500], lo, hi))


# ---------------------------------------------------------------- exact probabilities


def test_prob_D_examples():
    assert prob_event_D(4, 4, 0.3) == 1.0
    assert prob_event_D(2, 4, 0.1) == pytest.approx((1 - 0.9 * 0.81) ** 2, rel=1e-14)
    assert prob_event_D(2, 4, 0.1) == pytest.approx(0.073441, abs=5e-7)
    assert prob_event_D(2, 30, 1.0) == 1.0


def test_prob_J_examples():
    assert prob_event_J(2, 6, 1.0) == 0.0
    vals = [prob_event_J(3, 9, p) for p in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-12
    p = 0.1
    # a=2, b=6: clause 3 is the pair of columns 4 and 5 (no double gap: 1 - both vacant); clause 7 is empty.
    expected = p * p * (1 - 0.9**6) * (1 - 0.9**3) * 0.9**10 * p * (1 - 0.9**6)
    assert prob_event_J(2, 6, p) == pytest.approx(expected, rel=1e-13)


def test_prob_E_examples():
    B, p = 11, 0.2
    assert prob_event_E(MechanismSpec(B, ()), p) == pytest.approx(p**4 * prob_event_D(2, B - 1, p), rel=1e-14)
    assert prob_event_E(MechanismSpec(B, ((3, 8),)), 1.0) == 0.0
    spec = MechanismSpec(B, ((3, 8),))
    assert prob_event_E(spec, p) == pytest.approx(
        p**4 * prob_event_D(2, 3, p) * prob_event_J(3, 8, p) * prob_event_D(8, 10, p), rel=1e-14
    )


def test_prob_D_against_monte_carlo():
    rng = np.random.default_rng(11)
    for a, b, p in [(2, 4, 0.1), (2, 8, 0.15), (4, 9, 0.3)]:
        weight, hits = mc_conditional(rng, lambda f, a=a, b=b: vec_D(f, a, b), b, p, [], [], 200_000)
        assert_within_4sigma(prob_event_D(a, b, p), weight, hits, 200_000)


def test_prob_J_against_monte_carlo():
    # The a=2, b=6, p=0.1 case at 10^6 trials, conditioning only on its pinned sites.
    a, b, p, n = 2, 6, 0.1, 1_000_000
    occ, vac = [(b, a + 3)], [(x, y) for x in range(1, b) for y in (a + 2, a + 3)]
    weight, hits = mc_conditional(np.random.default_rng(12), lambda f: vec_J(f, a, b), b, p, occ, vac, n)
    assert hits > 100
    assert_within_4sigma(prob_event_J(a, b, p), weight, hits, n)


@pytest.mark.parametrize("B, pairs, p", [(10, ((2, 6),), 0.1), (12, ((3, 8),), 0.1), (14, ((2, 6), (7, 11)), 0.2)])
def test_prob_E_against_monte_carlo(B, pairs, p):
    spec = MechanismSpec(B, pairs)
    occ, vac = forced_sites(spec)
    n = 400_000
    weight, hits = mc_conditional(np.random.default_rng(B), lambda f: vec_E(f, spec), B, p, occ, vac, n)
    assert hits > 50
    assert_within_4sigma(prob_event_E(spec, p), weight, hits, n)


def test_prob_D_beats_G_bound():
    for p in (0.02, 0.05, 0.1, 0.2, 0.4):
        for a in (2, 3, 5, 10):
            for b in (a, a + 1, a + 5, a + 40):
                assert prob_event_D(a, b, p) >= math.exp(2 * log_G(a - 1, b - 1, p)) * (1 - 1e-12)


# ---------------------------------------------------------------- conditioned sampling and decoding


SAMPLER_SPECS = [
    (8, (), 0.1),
    (15, ((3, 7),), 0.1),
    (20, ((4, 9), (9, 14)), 0.05),
    (25, ((6, 11), (12, 16)), 0.2),
    (12, ((2, 6), (6, 10)), 0.15),
]


@pytest.mark.parametrize("B, pairs, p", SAMPLER_SPECS)
def test_sampler_round_trip(B, pairs, p):
    spec = MechanismSpec(B, pairs)
    for i in range(60):
        cfg = sample_conditioned_on_E(spec, p, Stream(31, i))
        assert cfg.domain == Rect.square(B)
        assert all(s in cfg for s in [(1, 1), (2, 2), (B, 1), (1, B)])
        assert check_event_E(cfg, spec)
        assert is_internally_spanned(cfg, "standard")
        assert decode_mechanism(cfg, B) == spec


def test_sampler_is_deterministic():
    spec = MechanismSpec(15, ((3, 7),))
    assert sample_conditioned_on_E(spec, 0.1, Stream(4, 2)) == sample_conditioned_on_E(spec, 0.1, Stream(4, 2))
    assert sample_conditioned_on_E(spec, 0.1, Stream(4, 2)) != sample_conditioned_on_E(spec, 0.1, Stream(4, 3))


def test_sampler_rejects_impossible():
    with pytest.raises(MechanismError):
        sample_conditioned_on_E(MechanismSpec(10, ((2, 6),)), 1.0, Stream(0, 0))


@pytest.mark.parametrize("B, pairs, p", [(7, (), 0.3), (10, ((2, 6),), 0.35)])
def test_sampler_matches_rejection_sampling(B, pairs, p):
    # Site marginals of the conditioned sampler against plain rejection sampling.
    spec = MechanismSpec(B, pairs)
    occ, vac = forced_sites(spec)
    rng = np.random.default_rng(99)
    accepted = []
    while sum(len(a) for a in accepted) < 3000:
        f = conditional_fields(rng, 200_000, B, p, occ, vac)
        accepted.append(f[vec_E(f, spec)])
    rej = np.concatenate(accepted)[:3000].mean(axis=0)
    samp = np.mean([sample_conditioned_on_E(spec, p, Stream(5, i)).grid for i in range(3000)], axis=0)
    pooled = (rej + samp) / 2
    sd = np.sqrt(np.maximum(pooled * (1 - pooled), 1e-12) * 2 / 3000)
    assert np.all(np.abs(rej - samp) <= 5 * sd + 1e-12)


def test_decode_m0_and_failures():
    B = 9
    assert decode_mechanism(Config.full(Rect.square(B)), B).pairs == ()
    with pytest.raises(MechanismError):
        decode_mechanism(Config(Rect.square(B)), B)


def test_events_are_disjoint():
    B, p = 16, 0.2
    specs = all_specs(B, max_pairs=2)
    rng = np.random.default_rng(3)
    for j in range(40):
        spec = specs[int(rng.integers(len(specs)))]
        if prob_event_E(spec, p) == 0.0:
            continue
        cfg = sample_conditioned_on_E(spec, p, Stream(17, j))
        assert [s for s in specs if check_event_E(cfg, s)] == [spec]


# ---------------------------------------------------------------- families


def test_family_lower_examples():
    B, p = 10, 0.3
    base = MechanismSpec(B, ())
    single = mechanism_family_lower(B, p, [base])
    assert single.raw == pytest.approx(p**4 * prob_event_D(2, B - 1, p), rel=1e-14)
    more = mechanism_family_lower(B, p, [base, MechanismSpec(B, ((2, 6),))])
    assert more.raw > single.raw
    with pytest.raises(BpercError):
        mechanism_family_lower(B, p, [base, base])
    with pytest.raises(BpercError):
        mechanism_family_lower(B, p, [MechanismSpec(11, ())])


def test_family_lower_below_I():
    B, p = 10, 0.3
    bound = mechanism_family_lower(B, p, all_specs(B))
    est = estimate_I(B, p, "standard", 200_000, seed=10)
    assert 0 < bound.value <= est.ci_high


def test_all_specs_valid_and_distinct():
    specs = all_specs(13)
    assert len(specs) == len(set(specs))
    assert MechanismSpec(13, ()) in specs and MechanismSpec(13, ((2, 6), (6, 10))) in specs
    assert all(s.m <= 1 for s in all_specs(13, max_pairs=1))


@pytest.mark.parametrize("B, p, m, count", [(40, 0.05, 1, 15), (40, 0.05, 2, 66), (70, 0.03, 2, 1201)])
def test_possibility_family_count(B, p, m, count):
    fam = PossibilityFamily(B, p, m)
    specs = fam.specs()
    assert fam.count() == len(specs) == len(set(specs)) == count
    for s in specs:
        a1, bm = s.pairs[0][0], s.pairs[-1][1]
        assert a1 > 1 / p and bm < 2 / p
        assert all(4 <= b - a <= p**-0.5 for a, b in s.pairs)


def test_possibility_family_sampling_is_uniform():
    fam = PossibilityFamily(40, 0.05, 1)
    rng = np.random.default_rng(8)
    draws = [fam.sample(rng) for _ in range(6000)]
    counts = np.array([draws.count(s) for s in fam.specs()])
    expected = 6000 / fam.count()
    assert counts.sum() == 6000
    assert np.all(np.abs(counts - expected) <= 5 * math.sqrt(expected))


@pytest.mark.parametrize("B, p, m", [(40, 0.05, 0), (40, 0.05, 1), (40, 0.05, 2), (70, 0.03, 2)])
def test_possibility_family_lower_matches_enumeration(B, p, m):
    fam = PossibilityFamily(B, p, m)
    brute = math.fsum(prob_event_E(s, p) for s in fam.specs()) if m else prob_event_E(MechanismSpec(B, ()), p)
    assert possibility_family_lower(B, p, m).raw == pytest.approx(brute, rel=1e-10)


def test_sampled_family_lower_unbiased():
    exact = possibility_family_lower(70, 0.03, 2).raw
    est, se = sampled_family_lower(70, 0.03, 2, 4000, Stream(2, 0))
    assert se > 0 and abs(est - exact) <= 4 * se


def test_possibility_family_errors():
    with pytest.raises(BpercError):
        PossibilityFamily(10, 0.05, 1)
