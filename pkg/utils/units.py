"""Memory and duration unit parsing for task budgets."""

import re

from utils.errors import TrainSpecError

_MEMORY_UNITS = {
    "": 1, "B": 1,
    "KB": 2**10, "KIB": 2**10,
    "MB": 2**20, "MIB": 2**20,
    "GB": 2**30, "GIB": 2**30,
    "TB": 2**40, "TIB": 2**40,
}
_TIME_UNITS = {"": 1, "S": 1, "SEC": 1, "M": 60, "MIN": 60, "H": 3600, "HR": 3600, "D": 86400}
_QUANTITY = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*([A-Za-z]*)\s*$")


def _split(value, kind: str):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value), ""
    match = _QUANTITY.match(str(value))
    if not match:
        raise TrainSpecError(f"unparseable {kind} quantity: {value!r}", value=str(value))
    return float(match.group(1)), match.group(2).upper()


def parse_memory(value) -> int:
    """``'50GB'`` -> bytes (binary multiples: 1GB = 2**30)."""
    number, unit = _split(value, "memory")
    if unit not in _MEMORY_UNITS:
        raise TrainSpecError(f"unknown memory unit {unit!r} in {value!r}", value=str(value))
    return int(round(number * _MEMORY_UNITS[unit]))


def parse_duration(value) -> int:
    """``'1h'`` -> seconds."""
    number, unit = _split(value, "time")
    if unit not in _TIME_UNITS:
        raise TrainSpecError(f"unknown time unit {unit!r} in {value!r}", value=str(value))
    return int(round(number * _TIME_UNITS[unit]))
