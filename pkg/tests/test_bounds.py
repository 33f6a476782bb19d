import json
import math

import mpmath
import numpy as np
import pytest

from bperc import (
    THRESHOLDS,
    BoundReport,
    BpercError,
    comp_lower,
    comp_upper,
    diag_lower,
    exact_I,
    explicit_certificate,
    growth_lower,
    mod_nuc_lower,
    scan_lower,
    window_constants,
)
from bperc.bounds import explicit_threshold, mod_nuc_exponent

mpmath.mp.dps = 40


def test_threshold_constants():
    assert THRESHOLDS.lam == math.pi**2 / 18
    assert THRESHOLDS.lam_M == math.pi**2 / 6
    assert THRESHOLDS.lam_M == pytest.approx(3 * THRESHOLDS.lam, rel=1e-16)


# ---------------------------------------------------------------- BoundReport


def test_report_clamps_and_keeps_raw():
    r = BoundReport("x", -0.3, {"a": 1})
    assert r.value == 0.0 and r.raw == -0.3
    assert BoundReport("x", 7.0, {}).value == 1.0
    assert BoundReport("x", 0.25, {}).value == 0.25


def test_report_json():
    d = json.loads(comp_lower(100, 10, 0.5, 0.5).to_json())
    assert set(d) >= {"formula", "value", "raw", "inputs"}
    assert d["formula"] == "comp_lower" and d["inputs"]["L"] == 100
    vac = json.loads(comp_upper(20, 10, 0.01, 0.3).to_json())
    assert vac["raw"] is None and vac["value"] == 1.0 and vac["vacuous"] is True


# ---------------------------------------------------------------- comparison bounds


def test_comp_lower_examples():
    assert comp_lower(50, 10, 0.9, 0.0).value == 0.0
    assert comp_lower(10, 10, 0.9, 0.7).value == 0.0
    r = comp_lower(100, 10, 0.5, 0.5)
    assert r.raw < 0 and r.value == 0.0
    assert 1 - 2e4 * math.exp(-5) < 0


def test_comp_lower_nontrivial_value():
    L, ell, p, I = 60, 20, 0.9, 0.99
    expected = (1 - math.exp(-I * (L / ell - 1) ** 2)) * (1 - 2 * L * L * math.exp(-p * ell))
    assert comp_lower(L, ell, p, I).raw == pytest.approx(expected, rel=1e-14)
    assert 0 < comp_lower(L, ell, p, I).value < 1


def test_comp_upper_examples():
    assert comp_upper(60, 40, 0.9, 0.0).value == 0.0
    vac = comp_upper(20, 10, 0.01, 0.3)
    assert vac.vacuous and vac.value == 1.0
    r = comp_upper(60, 40, 0.9, 1e-3)
    denom = 1 - 2 * 1600 * math.exp(-0.9 * 9)
    assert not r.vacuous and r.raw == pytest.approx(1e-3 * (120 / 39) ** 2 / denom, rel=1e-14)


@pytest.mark.parametrize("args", [(5, 10, 0.3, 0.5), (10, 5, 0.3, 1.5), (10, 5, 1.0, 0.5)])
def test_comp_errors(args):
    with pytest.raises(BpercError):
        comp_lower(*args)
    with pytest.raises(BpercError):
        comp_upper(*args)


# ---------------------------------------------------------------- diag, growth, scan


def test_diag_examples():
    p = 0.1
    assert diag_lower(1, p).raw == pytest.approx(p - p * p / 2, rel=1e-15)
    assert diag_lower(1, p).value <= exact_I(1, p, "modified")
    assert diag_lower(2, p).raw == pytest.approx(0.01805, abs=5e-9)
    assert diag_lower(2, p).value <= exact_I(2, p, "modified") == pytest.approx(0.0199, abs=1e-15)
    assert diag_lower(3, p).raw == pytest.approx(0.0034295, abs=5e-8)
    assert diag_lower(3, p).value <= exact_I(3, p, "modified")


@pytest.mark.parametrize("p", [0.05, 0.2, 0.5, 0.8])
@pytest.mark.parametrize("a", [1, 2, 3, 4])
def test_diag_below_exact_on_grid(a, p):
    assert diag_lower(a, p).value <= exact_I(a, p, "modified") + 1e-15


def test_diag_large_a_no_underflow_error():
    r = diag_lower(5000, 0.01)
    assert r.value == 0.0 and r.raw >= 0.0


def test_growth_examples():
    assert growth_lower(0.37, 6, 6, 0.2).raw == pytest.approx(0.37, rel=1e-15)
    direct = 0.3 * (0.19 * 0.271 * 0.3439 * 0.40951) ** 2
    assert growth_lower(0.3, 2, 6, 0.1).raw == pytest.approx(direct, rel=1e-12)
    with pytest.raises(BpercError):
        growth_lower(0.3, 6, 2, 0.1)


@pytest.mark.parametrize("model", ["standard", "modified"])
def test_growth_below_exact(model):
    for p in (0.2, 0.4, 0.7):
        for a in (1, 2, 3):
            for b in range(a, 5):
                assert growth_lower(exact_I(a, p, model), a, b, p).value <= exact_I(b, p, model) + 1e-15


def test_scan_examples():
    assert scan_lower(8, 40, 3, 0.25, 0.0).value == 0.0
    r = scan_lower(9, 10, 1, 0.3, 0.5)
    assert 0 < r.raw < 1e-6
    with pytest.raises(BpercError):
        scan_lower(10, 30, 3, 0.3, 0.5)


def test_scan_direct_formula():
    b, ell, m, p, I_b = 8, 40, 3, 0.25, 0.4

    def F(a, c):
        return math.prod(1 - (1 - p) ** i for i in range(a, c))

    expected = (1 - math.exp(-m * m * I_b)) * (F(b, ell) * F(ell - m * b, ell)) ** 2 * (1 - (1 - p) ** (ell - m * b)) ** ell
    assert scan_lower(b, ell, m, p, I_b).raw == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------- modified nucleation


def test_mod_nuc_example():
    q = -mpmath.log(1 - mpmath.mpf("0.1"))
    expo = -2 * (mpmath.pi**2 / 6) / q + 2 * mpmath.sqrt(20) - mpmath.log(10) - mpmath.mpf("3.2")
    assert mod_nuc_exponent(0.1) == pytest.approx(float(expo), rel=1e-14)
    assert mod_nuc_exponent(0.1) == pytest.approx(-27.7832, abs=5e-5)
    r = mod_nuc_lower(5, 0.1)
    assert r.raw == pytest.approx(float(mpmath.exp(expo)), rel=1e-13)
    # Constructive chain for the same (B, p): diagonal seed grown to B.
    chain = max(growth_lower(diag_lower(a, 0.1).raw, a, 5, 0.1).value for a in range(1, 6))
    assert r.value <= chain


def test_mod_nuc_valid_range():
    for p in np.linspace(0.002, 0.1, 40):
        B = math.ceil(math.sqrt(2 / p))
        assert 0 <= mod_nuc_lower(B, p).value <= 1
    with pytest.raises(BpercError):
        mod_nuc_lower(5, 0.2)
    with pytest.raises(BpercError):
        mod_nuc_lower(4, 0.1)


# ---------------------------------------------------------------- explicit certificate


def mp_threshold(p):
    p = mpmath.mpf(p)
    return mpmath.pi**2 / 6 - mpmath.sqrt(2 * p) + mpmath.mpf("1.8") * p * mpmath.log(1 / p) + 2 * p


@pytest.mark.parametrize(
    "p, digits, frac, plogL",
    [("0.0014", 500, "0.98", 1.6118095), ("0.0002356", 3000, "0.99", 1.6274675)],
)
def test_explicit_certificate_examples(p, digits, frac, plogL):
    logL = digits * math.log(10)
    ok, report = explicit_certificate(float(p), logL)
    exact_plogL = mpmath.mpf(p) * digits * mpmath.log(10)
    assert ok and report.value == 0.5
    assert report.inputs["plogL"] == pytest.approx(float(exact_plogL), abs=1e-9)
    assert report.inputs["plogL"] == pytest.approx(plogL, abs=1e-6)
    assert report.inputs["threshold"] == pytest.approx(float(mp_threshold(p)), abs=1e-12)
    assert report.inputs["plogL"] < float(mpmath.mpf(frac) * mpmath.pi**2 / 6)


def test_explicit_certificate_negative_and_errors():
    ok, report = explicit_certificate(0.1, 1.0)
    assert not ok and report.vacuous and report.value == 0.0
    with pytest.raises(BpercError):
        explicit_certificate(0.2, 100.0)
    with pytest.raises(BpercError):
        explicit_certificate(0.01, 0.0)


def test_explicit_threshold_below_lambda_M_for_small_p():
    for p in (1e-6, 1e-4, 1e-3, 0.01):
        assert explicit_threshold(p) < math.pi**2 / 6


# ---------------------------------------------------------------- window constants


def test_window_constants_examples():
    cm, cp = window_constants(0.1)
    assert cp == pytest.approx(math.log(1 + math.sqrt(10 * math.log(11))), rel=1e-15)
    assert cp == pytest.approx(1.7744, abs=5e-5)
    assert cm == pytest.approx(0.4055, abs=5e-5)
    with pytest.raises(BpercError):
        window_constants(0.2)


def test_window_constants_asymptotics():
    eps = [1e-2, 1e-4, 1e-8, 1e-16, 1e-30, 1e-100]
    lo = [window_constants(e)[0] / (0.5 * math.log(1 / e)) for e in eps]
    hi = [window_constants(e)[1] / (0.5 * math.log(1 / e)) for e in eps]
    assert all(np.diff(lo) > 0) and all(np.diff(hi) < 0)
    assert lo[-1] > 0.99 and hi[-1] < 1.03
