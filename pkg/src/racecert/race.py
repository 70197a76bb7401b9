"""Run randomness: open-interval uniforms, exponential arrivals, winner
selection, offset propagation, surrogate arrivals and the PRF-per-leaf
uniforms used by Surrogate leaf instantiation and Fallback.

Every draw is addressable by (seed, node digest, purpose tag), so a replay
or a race reconstruction obtains bit-identical values without carrying
generator state around.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .fixedpoint import q0_64_value

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

PRF_DOMAIN_TAG = b"racecert/prf/v1"


class RateZeroError(ValueError):
    """Exponential rate 0: the node has no leaves and must be pruned."""


class ArrivalSource(Enum):
    EXACT_RACE = "ExactRace"
    SURROGATE_RACE = "SurrogateRace"
    RESIDUAL = "Residual"


@dataclass(frozen=True)
class Arrival:
    """A realized (or surrogate) race time plus the uniform that made it.

    ``raw`` is the Q0.64 raw uniform, or None when the arrival was inherited
    (winner reuse consumes no new randomness).
    """

    t: float
    source: ArrivalSource
    raw: int | None

    @property
    def neg_log_t(self) -> float:
        return -math.log(self.t)


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def open_uniform(x: int) -> float:
    """Map an unsigned 64-bit integer to the open interval (0, 1)."""
    if not 0 <= x <= _MASK64:
        raise ValueError("raw uniform out of range")
    return q0_64_value(x)


class RngStream:
    """Counter-based SplitMix64 stream keyed by (run seed, digest, purpose).

    Draws are pure functions of the address, so the engine, the validator
    and the race-reconstruction oracle all see identical values.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64

    def raw(self, digest: bytes, purpose: str, counter: int = 0) -> int:
        z = self.seed
        material = digest + purpose.encode("utf-8")
        pad = (-len(material)) % 8
        material += b"\x00" * pad
        for i in range(0, len(material), 8):
            z = _mix64(z ^ int.from_bytes(material[i : i + 8], "big"))
        return _mix64((z + _GOLDEN * (counter + 1)) & _MASK64)

    def uniform(self, digest: bytes, purpose: str, counter: int = 0) -> float:
        return open_uniform(self.raw(digest, purpose, counter))


def exp_from_uniform(u: float, rate: int) -> float:
    """Inverse-CDF exponential with the compensated log1p transform."""
    if rate == 0:
        raise RateZeroError("rate 0: prune the node instead")
    if rate < 0:
        raise ValueError("negative rate")
    return -math.log1p(-u) / rate


def quantile_cat(w: float, weights: Sequence[int]) -> int:
    """Categorical quantile: smallest i with w < cumsum(weights)[i]/total.

    Cells are half-open [c_{i-1}, c_i), so a boundary value falls into the
    next cell.
    """
    if not weights:
        raise ValueError("empty weights")
    total = sum(weights)
    if total <= 0 or any(x <= 0 for x in weights):
        raise ValueError("weights must be positive")
    acc = 0
    for i, x in enumerate(weights):
        acc += x
        if w < acc / total:
            return i
    return len(weights) - 1


def offset_propagate(
    t_parent: float,
    winner_idx: int,
    child_counts: Sequence[int],
    residual_uniforms: Sequence[float],
) -> list[Arrival]:
    """Child arrivals after conditioning on the parent's first arrival.

    The winner reuses ``t_parent``; every non-winner adds an independent
    Exp(N(child)) residual from its uniform.  ``residual_uniforms`` holds one
    entry per non-winner child, in edge order.
    """
    if len(residual_uniforms) != len(child_counts) - 1:
        raise ValueError("need one residual uniform per non-winner child")
    arrivals: list[Arrival] = []
    res = iter(residual_uniforms)
    for i, count in enumerate(child_counts):
        if i == winner_idx:
            arrivals.append(Arrival(t_parent, ArrivalSource.EXACT_RACE, None))
        else:
            u = next(res)
            t = t_parent + exp_from_uniform(u, count)
            arrivals.append(Arrival(t, ArrivalSource.RESIDUAL, None))
    return arrivals


class PruneEmptyError(ValueError):
    """Upper-bound count 0: the subtree is empty and is pruned."""


def surrogate_arrival(u: float, n_ub: int, raw: int | None = None) -> Arrival:
    if n_ub == 0:
        raise PruneEmptyError("n_ub=0, prune")
    return Arrival(exp_from_uniform(u, n_ub), ArrivalSource.SURROGATE_RACE, raw)


def prf_raw(salt: bytes, domain: str, leaf_id: bytes) -> int:
    h = hashlib.sha256(PRF_DOMAIN_TAG + salt + domain.encode("utf-8") + leaf_id)
    return int.from_bytes(h.digest()[:8], "big")


def prf_uniform(salt: bytes, domain: str, leaf_id: bytes) -> float:
    return open_uniform(prf_raw(salt, domain, leaf_id))


def exact_leaf_coupling(t_leaf: float) -> tuple[float, float, float]:
    """Recover (U_P, E_P, G_P) from an already realized leaf arrival.

    No new randomness: E_P is the race time itself, U_P its exponential
    quantile, G_P the matching Gumbel.
    """
    if t_leaf <= 0:
        raise ValueError("arrival must be positive")
    e = t_leaf
    u = -math.expm1(-t_leaf)
    g = -math.log(-math.log(u))
    return u, e, g


def gumbel_from_uniform(u: float) -> float:
    return -math.log(-math.log(u))
