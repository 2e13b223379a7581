"""Snapping mechanism: a floating-point-safe Laplace release.

Plain floating-point Laplace noise concentrates on an input-dependent
subset of doubles, which an adversary can distinguish (Mironov, CCS 2012).
The snapping mechanism fixes this by clamping, adding noise computed from
a uniform deviate with a fully random exponent, then rounding the result
onto a coarse power-of-two grid and clamping again:

    clamp_B( round_to_grid( clamp_B(x) + (sensitivity/eps) * S * ln(U) ) )

It trades utility for this safety and is exposed behind an explicit flag
rather than as the default release path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError
from .randomness import RandomSource

# ln(U) for the smallest positive subnormal double; caps the exponent walk.
_MAX_EXPONENT = 1074


def _is_power_of_two(x: float) -> bool:
    if not (x > 0.0) or not math.isfinite(x):
        return False
    mantissa, _ = math.frexp(x)
    return mantissa == 0.5


@dataclass(frozen=True)
class SnapParams:
    """Clamp bound B, grid spacing lam (a power of two), and sensitivity."""

    bound: float
    lam: float
    sensitivity: float

    def __post_init__(self) -> None:
        if not (self.bound > 0.0) or not math.isfinite(self.bound):
            raise ParameterError(f"snap bound must be positive and finite, got {self.bound}")
        if not _is_power_of_two(self.lam):
            raise ParameterError(f"snap grid spacing must be a power of two, got {self.lam}")
        if self.lam > 2.0 * self.bound:
            raise ParameterError("snap grid spacing must be at most 2B")
        if not (self.sensitivity > 0.0) or not math.isfinite(self.sensitivity):
            raise ParameterError("snap sensitivity must be positive and finite")

    @property
    def grid_bound(self) -> float:
        """Largest grid multiple inside [-B, B]; outputs clamp to it."""
        return self.lam * math.floor(self.bound / self.lam)


def default_snap_params(bound: float, sensitivity: float, eps: float) -> SnapParams:
    """Grid spacing as the smallest power of two >= the noise scale."""
    scale = sensitivity / eps
    lam = 2.0 ** math.ceil(math.log2(scale))
    lam = min(lam, 2.0 ** math.floor(math.log2(2.0 * bound)))
    return SnapParams(bound=bound, lam=lam, sensitivity=sensitivity)


def _uniform_full_exponent(rng: RandomSource) -> float:
    """Uniform double in (0, 1) whose exponent is sampled at full precision.

    The exponent e >= 1 is geometric (position of the first set bit in a
    fair-coin stream, capped at the subnormal floor) and the mantissa is 52
    fresh bits, so every representable dyadic interval (2^-e, 2^-e+1] gets
    its true probability mass instead of the 2^-53-granular mass an
    ordinary uniform draw would give it.
    """
    exponent = 1
    while True:
        block = rng.bits(64)
        if block != 0:
            # leading zeros within this 64-bit block
            exponent += 64 - block.bit_length()
            break
        exponent += 64
        if exponent >= _MAX_EXPONENT:
            exponent = _MAX_EXPONENT
            break
    exponent = min(exponent, _MAX_EXPONENT)
    mantissa = rng.bits(52)
    return math.ldexp((1 << 52) + mantissa, -(52 + exponent))


def _round_to_grid(value: float, lam: float) -> float:
    # round-half-to-even on the lam grid; division by a power of two is exact
    return round(value / lam) * lam


def snap(true_value: float, params: SnapParams, eps: float, rng: RandomSource) -> float:
    """One snapping-mechanism release of a scalar.

    The output always lies on the lam grid inside [-B, B].
    """
    if not (eps > 0.0) or not math.isfinite(eps):
        raise ParameterError(f"epsilon must be positive and finite, got {eps}")
    b = params.bound
    clamped = min(max(true_value, -b), b)
    sign = 1.0 if rng.bits(1) else -1.0
    u = _uniform_full_exponent(rng)
    noisy = clamped + (params.sensitivity / eps) * sign * math.log(u)
    snapped = _round_to_grid(noisy, params.lam)
    gb = params.grid_bound
    return min(max(snapped, -gb), gb)
