"""Fixed-point encodings used at the ledger boundary.

Three layouts:

* Q0.64  -- unsigned 64-bit raw ``x`` representing the open-interval uniform
  ``(x + 0.5) * 2**-64``; never hits 0 or 1.
* Q64.64 -- signed 128-bit raw ``r`` representing ``r * 2**-64`` (keys,
  arrival neg-logs, leaf values, incumbents).
* Q32.32 -- signed 64-bit raw ``r`` representing ``r * 2**-32`` (kappa,
  potentials, RDP bookkeeping).

Conversions from binary64 use round-to-nearest-even on the exact rational
value, so encoding is platform independent.  Overflow raises
:class:`NumClampError`; callers translate that into the NumClamp guard
instead of silently saturating.
"""

from __future__ import annotations

from fractions import Fraction

Q64_64_FRAC_BITS = 64
Q32_32_FRAC_BITS = 32

Q0_64_MAX = (1 << 64) - 1
Q64_64_MIN = -(1 << 127)
Q64_64_MAX = (1 << 127) - 1
Q32_32_MIN = -(1 << 63)
Q32_32_MAX = (1 << 63) - 1

# Incumbent 'no leaf yet' sentinel: the most negative representable key.
NEG_INF_Q64_64 = Q64_64_MIN


class NumClampError(OverflowError):
    """Value does not fit the target fixed-point layout."""


def round_half_even(value: Fraction) -> int:
    """Round an exact rational to the nearest integer, ties to even."""
    n, d = value.numerator, value.denominator
    q, r = divmod(n, d)
    twice = 2 * r
    if twice > d or (twice == d and q % 2 == 1):
        q += 1
    return q


def _encode(value: float, frac_bits: int, lo: int, hi: int) -> int:
    if value != value or value in (float("inf"), float("-inf")):
        raise NumClampError(f"non-finite value {value!r}")
    raw = round_half_even(Fraction(value) * (1 << frac_bits))
    if raw < lo or raw > hi:
        raise NumClampError(f"{value!r} out of range for Q layout")
    return raw


def encode_q64_64(value: float) -> int:
    return _encode(value, Q64_64_FRAC_BITS, Q64_64_MIN, Q64_64_MAX)


def decode_q64_64(raw: int) -> float:
    return raw / (1 << Q64_64_FRAC_BITS)


def encode_q32_32(value: float) -> int:
    return _encode(value, Q32_32_FRAC_BITS, Q32_32_MIN, Q32_32_MAX)


def decode_q32_32(raw: int) -> float:
    return raw / (1 << Q32_32_FRAC_BITS)


def q0_64_value(raw: int) -> float:
    """Open-interval uniform encoded by a raw unsigned 64-bit integer.

    The exact value (raw + 0.5) * 2**-64 never reaches the endpoints, but
    binary64 rounding can hit 1.0 at the top of the range; clamp to the
    largest float strictly below 1 to keep the open-interval contract.
    """
    if not 0 <= raw <= Q0_64_MAX:
        raise NumClampError("Q0.64 raw out of range")
    value = (raw + 0.5) * 2.0**-64
    return min(value, 1.0 - 2.0**-53)


def parse_raw(text: str, lo: int, hi: int) -> int:
    """Parse a decimal-string raw integer with range check (locale free)."""
    raw = int(text, 10)
    if raw < lo or raw > hi:
        raise NumClampError(f"raw {text} outside [{lo}, {hi}]")
    return raw


def parse_scaled_q32_32(text: str) -> int:
    """Parse a human-readable scaled decimal (e.g. ``\"11.2000\"``) to Q32.32."""
    raw = round_half_even(Fraction(text) * (1 << Q32_32_FRAC_BITS))
    if raw < Q32_32_MIN or raw > Q32_32_MAX:
        raise NumClampError(f"scaled value {text} overflows Q32.32")
    return raw


def format_scaled_q32_32(raw: int, places: int = 4) -> str:
    return f"{decode_q32_32(raw):.{places}f}"
