"""Bootstrap percolation on finite squares: exact oracles, Monte Carlo estimators,
growth mechanisms and rigorous bound evaluators for the standard and modified models."""
from .bounds import (
    THRESHOLDS,
    BoundReport,
    ThresholdConstants,
    comp_lower,
    comp_upper,
    diag_lower,
    explicit_certificate,
    growth_lower,
    mod_nuc_lower,
    scan_lower,
    window_constants,
)
from .errors import BpercError, ConvergenceError, MechanismError, ResourceCapError
from .estimator import (
    Estimate,
    ThresholdEstimate,
    WindowResult,
    estimate_I,
    estimate_L_window,
    estimate_p_alpha,
    sweep,
)
from .lattice import (
    Config,
    ModelKind,
    Rect,
    Stream,
    closure,
    format_grid,
    is_internally_spanned,
    long_side,
    parse_grid,
    sample_field,
    step,
)
from .mechanisms import (
    MechanismSpec,
    check_event_D,
    check_event_E,
    check_event_J,
    decode_mechanism,
    mechanism_family_lower,
    prob_event_D,
    prob_event_E,
    prob_event_J,
    sample_conditioned_on_E,
)
from .oracle import (
    SpanPolynomial,
    aizenman_lebowitz_violations,
    double_gap_exact,
    exact_I,
    exact_span_polynomial,
    find_spanned_subrectangles,
)
from .special import LAMBDA, LAMBDA_M, beta_, dilog, f_, g_, integral_f, integral_g, log_F, log_G, q_of_p

__version__ = "0.1.0"
