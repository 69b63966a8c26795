"""
Input validation utilities for experiment configuration values.

Every validator returns a dictionary ``{"valid": bool, "error": str, ...}``;
callers decide whether a failure becomes a ConfigError.
"""

import math
from typing import Any, Dict, Iterable, Optional, Sequence

from ..constants import PolicyNames, SweepParameters
from ..states.functions import available_cost_functions, available_rate_functions


def _ok(value: Any) -> Dict[str, Any]:
    return {"valid": True, "error": "", "value": value}


def _fail(error: str) -> Dict[str, Any]:
    return {"valid": False, "error": error}


def validate_positive_int(value: Any, minimum: int = 1) -> Dict[str, Any]:
    """
    Validate an integer count such as horizon, users or episodes.

    Args:
        value: Raw value from the config file or command line
        minimum: Smallest accepted value

    Returns:
        Dictionary with validation result and the parsed integer
    """
    if isinstance(value, bool) or not isinstance(value, int):
        return _fail(f"expected an integer, got {value!r}")
    if value < minimum:
        return _fail(f"must be at least {minimum}, got {value}")
    return _ok(int(value))


def validate_positive_number(value: Any, allow_zero: bool = False) -> Dict[str, Any]:
    """Validate a finite real that must be positive (or non-negative)."""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return _fail(f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        return _fail("must be finite")
    if value < 0 or (value == 0 and not allow_zero):
        return _fail(f"must be {'non-negative' if allow_zero else 'positive'}, got {value}")
    return _ok(value)


def validate_probability(value: Any) -> Dict[str, Any]:
    """Validate a probability in [0, 1]."""
    result = validate_positive_number(value, allow_zero=True)
    if not result["valid"]:
        return result
    if result["value"] > 1.0:
        return _fail(f"must lie in [0, 1], got {result['value']}")
    return result


def validate_number_list(value: Any, min_length: int = 1) -> Dict[str, Any]:
    """Validate a list of finite non-negative numbers."""
    if not isinstance(value, (list, tuple)):
        return _fail(f"expected a list, got {value!r}")
    if len(value) < min_length:
        return _fail(f"expected at least {min_length} entries")
    parsed = []
    for item in value:
        result = validate_positive_number(item, allow_zero=True)
        if not result["valid"]:
            return _fail(f"entry {item!r}: {result['error']}")
        parsed.append(result["value"])
    return _ok(tuple(parsed))


def validate_positive_list(value: Any) -> Dict[str, Any]:
    """Validate a non-empty list of finite, strictly positive numbers."""
    result = validate_number_list(value)
    if result["valid"] and any(item <= 0 for item in result["value"]):
        return _fail(f"entries must be positive, got {list(result['value'])}")
    return result


def validate_distribution(support: Any, probs: Any) -> Dict[str, Any]:
    """Validate a finite distribution given as parallel support/probability lists."""
    support_result = validate_number_list(support)
    if not support_result["valid"]:
        return support_result
    probs_result = validate_number_list(probs)
    if not probs_result["valid"]:
        return probs_result
    if len(support_result["value"]) != len(probs_result["value"]):
        return _fail("support and probabilities differ in length")
    total = math.fsum(probs_result["value"])
    if abs(total - 1.0) > 1e-12:
        return _fail(f"probabilities sum to {total!r}, expected 1")
    return {"valid": True, "error": "", "support": support_result["value"], "probs": probs_result["value"]}


def validate_choice(value: Any, choices: Sequence[str]) -> Dict[str, Any]:
    """Validate a string against a fixed set of names."""
    if not isinstance(value, str) or value not in choices:
        return _fail(f"must be one of {list(choices)}, got {value!r}")
    return _ok(value)


def validate_cost_name(value: Any) -> Dict[str, Any]:
    return validate_choice(value, available_cost_functions())


def validate_rate_name(value: Any) -> Dict[str, Any]:
    return validate_choice(value, available_rate_functions())


def validate_sweep(param: Any, values: Any) -> Dict[str, Any]:
    """Validate the swept parameter name and its values."""
    name = validate_choice(param, SweepParameters.ALL)
    if not name["valid"]:
        return {**name, "field": "param"}
    listed = validate_number_list(values)
    if not listed["valid"]:
        return {**listed, "field": "values"}
    if any(v > 1.0 for v in listed["value"]):
        return {**_fail("sweep values must lie in [0, 1]"), "field": "values"}
    return {"valid": True, "error": "", "param": param, "values": listed["value"]}


def validate_policies(value: Any) -> Dict[str, Any]:
    """Validate a non-empty list of policy names without duplicates."""
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, (list, tuple)) or not value:
        return _fail("expected a non-empty list of policy names")
    unknown = [v for v in value if v not in PolicyNames.CHOICES]
    if unknown:
        return _fail(f"unknown policies {unknown}; choose from {PolicyNames.CHOICES}")
    if len(set(value)) != len(value):
        return _fail("policy names must be unique")
    return _ok(tuple(value))


def validate_unknown_keys(section: str, data: Dict[str, Any], allowed: Iterable[str]) -> Optional[str]:
    """Return the first key of ``data`` not in ``allowed`` as ``section.key``, else None."""
    allowed = set(allowed)
    for key in data:
        if key not in allowed:
            return f"{section}.{key}" if section else key
    return None
