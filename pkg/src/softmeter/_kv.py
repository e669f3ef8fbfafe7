"""``key=value`` text files (model files, PDU simulator configs)."""

from __future__ import annotations

import math


def parse_kv(text: str, error_cls, allowed=None) -> dict[str, float]:
    """Parse ``key=value`` lines into floats.

    Blank lines and ``#`` comments are skipped.  Duplicate keys, keys absent
    from ``allowed`` and unparsable numbers raise ``error_cls``.
    """
    out: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise error_cls(f"line {lineno}: expected key=value, got {raw!r}")
        if allowed is not None and key not in allowed:
            raise error_cls(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise error_cls(f"line {lineno}: duplicate key {key!r}")
        try:
            number = float(value)
        except ValueError:
            raise error_cls(f"line {lineno}: {key}: cannot parse {value!r} as a number") from None
        if not math.isfinite(number):
            raise error_cls(f"line {lineno}: {key}: value must be finite")
        out[key] = number
    return out


def format_decimal(value: float, min_digits: int = 6) -> str:
    """Fixed-point text with at least ``min_digits`` fractional digits that
    parses back to exactly ``value``."""
    for digits in range(min_digits, 40):
        text = f"{value:.{digits}f}"
        if float(text) == value:
            return text
    return repr(value)
