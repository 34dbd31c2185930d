"""Problem parameters, exponent windows, and regime classification."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

__all__ = ["Regime", "ChoquardParams", "ParamsError", "riesz_constant"]


class ParamsError(ValueError):
    pass


class Regime(enum.Enum):
    LOWER_ENDPOINT = "LowerEndpoint"
    SUBCRITICAL = "Subcritical"
    MASS_CRITICAL = "MassCritical"
    SUPERCRITICAL = "Supercritical"


def riesz_constant(dim: int, alpha: float) -> float:
    """Normalization of the Riesz kernel c |x|^(alpha - N).

    c = Gamma((N - alpha)/2) / (Gamma(alpha/2) pi^(N/2) 2^alpha).
    """
    n = dim
    return math.gamma((n - alpha) / 2.0) / (
        math.gamma(alpha / 2.0) * math.pi ** (n / 2.0) * 2.0**alpha
    )


@dataclass(frozen=True)
class ChoquardParams:
    """(N, alpha, p) with derived exponent window and kernel constant.

    The admissible window is (N+alpha)/N <= p < (N+alpha)/(N-2) for N >= 3
    and (N+alpha)/N <= p < +inf otherwise.
    """

    dim: int
    alpha: float
    p: float
    riesz_const: float = field(init=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ParamsError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not (0.0 < self.alpha < self.dim):
            raise ParamsError(
                f"alpha must lie in (0, N) = (0, {self.dim}), got {self.alpha}"
            )
        lo, hi = self.p_low, self.p_high
        if not (lo <= self.p < hi):
            hi_txt = f"{hi:g}" if math.isfinite(hi) else "+inf"
            raise ParamsError(
                f"p = {self.p:g} outside the admissible window "
                f"(N+alpha)/N <= p < (N+alpha)/(N-2)_+ = [{lo:g}, {hi_txt})"
            )
        object.__setattr__(self, "riesz_const", riesz_constant(self.dim, self.alpha))

    @property
    def p_low(self) -> float:
        return (self.dim + self.alpha) / self.dim

    @property
    def p_critical(self) -> float:
        return (self.dim + self.alpha + 2.0) / self.dim

    @property
    def p_high(self) -> float:
        if self.dim >= 3:
            return (self.dim + self.alpha) / (self.dim - 2.0)
        return math.inf

    @property
    def regime(self) -> Regime:
        # tolerance absorbs roundoff in p arithmetic
        eps = 1e-12 * max(1.0, abs(self.p))
        if abs(self.p - self.p_low) <= eps:
            return Regime.LOWER_ENDPOINT
        if abs(self.p - self.p_critical) <= eps:
            return Regime.MASS_CRITICAL
        if self.p < self.p_critical:
            return Regime.SUBCRITICAL
        return Regime.SUPERCRITICAL

    def with_p(self, p: float) -> "ChoquardParams":
        return ChoquardParams(self.dim, self.alpha, p)
