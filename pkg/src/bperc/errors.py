class BpercError(ValueError):
    """Base class for invalid inputs and failed preconditions."""


class ResourceCapError(BpercError):
    """Raised when a request exceeds a hard size limit (enumeration cap, lattice size)."""


class MechanismError(BpercError):
    """Raised when a configuration does not carry a decodable growth mechanism."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative search exhausts its budget without meeting its tolerance."""


def check_probability(p, name="p", open_low=False, open_high=False):
    p = float(p)
    lo_ok = p > 0 if open_low else p >= 0
    hi_ok = p < 1 if open_high else p <= 1
    if not (lo_ok and hi_ok):
        lo = "(" if open_low else "["
        hi = ")" if open_high else "]"
        raise BpercError(f"{name} must lie in {lo}0, 1{hi}, got {p!r}")
    return p


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or int(value) != value:
        raise BpercError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise BpercError(f"{name} must be >= {minimum}, got {value}")
    return value
