"""Cumulative publication curves P(t).

Every curve carries an observation origin t0 and exposes the restricted count
P*(t) = P(t) - P(t0), which is what the reference-list predictors work with.
Time is measured in years throughout.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import trapezoid

from errors import ConfigError, ModelDomainError


def _domainSlack(t: float) -> float:
    return 1e-12 * (1.0 + abs(t))


class GrowthCurve:
    variant = "abstract"
    t0: Optional[float] = None

    @property
    def domainStart(self) -> float:
        return self.t0

    @property
    def domainEnd(self) -> float:
        return math.inf

    @property
    def hasInfiniteHistory(self) -> bool:
        return self.t0 is None

    def checkDomain(self, t: float) -> None:
        if t < self.domainStart - _domainSlack(t) or t > self.domainEnd + _domainSlack(t):
            raise ModelDomainError(
                f"{self.variant} curve is defined on [{self.domainStart}, {self.domainEnd}], got t={t}"
            )

    def checkRestricted(self, t: float) -> None:
        if self.t0 is not None and t < self.t0 - _domainSlack(t):
            raise ModelDomainError(f"t={t} precedes the observation origin t0={self.t0}")
        self.checkDomain(t)

    def value(self, t: float) -> float:
        raise NotImplementedError

    def rate(self, t: float) -> float:
        raise NotImplementedError

    def restricted(self, t: float) -> float:
        self.checkRestricted(t)
        if self.t0 is None:
            return self.value(t)
        return max(self.value(t) - self.value(self.t0), 0.0)

    def integralRestricted(self, t: float) -> float:
        """Integral of P* from t0 to t."""
        raise NotImplementedError

    def restrictedInverse(self, y: float) -> Optional[float]:
        """Time s with P*(s) = y when a closed form exists, otherwise None."""
        return None

    def breakpoints(self) -> tuple:
        return ()

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class LinearGrowth(GrowthCurve):
    articlesPerYear: float
    startCount: float = 0.0
    t0: float = 0.0
    variant = "linear"

    def __post_init__(self):
        if self.t0 is None or not math.isfinite(self.t0):
            raise ConfigError("linear growth needs a finite t0")
        if self.articlesPerYear < 0:
            raise ConfigError(f"linear growth rate must be >= 0, got {self.articlesPerYear}")
        if self.startCount < 0:
            raise ConfigError(f"start_count must be >= 0, got {self.startCount}")

    def value(self, t: float) -> float:
        self.checkDomain(t)
        return self.startCount + self.articlesPerYear * (t - self.t0)

    def rate(self, t: float) -> float:
        self.checkDomain(t)
        return self.articlesPerYear

    def restricted(self, t: float) -> float:
        self.checkRestricted(t)
        return self.articlesPerYear * max(t - self.t0, 0.0)

    def integralRestricted(self, t: float) -> float:
        self.checkRestricted(t)
        u = max(t - self.t0, 0.0)
        return self.articlesPerYear * u * u / 2.0

    def restrictedInverse(self, y: float) -> Optional[float]:
        if self.articlesPerYear <= 0:
            return None
        return self.t0 + y / self.articlesPerYear

    def describe(self) -> dict:
        return {"variant": self.variant, "rate": self.articlesPerYear, "start_count": self.startCount, "t0": self.t0}


@dataclass(frozen=True)
class PolynomialGrowth(GrowthCurve):
    """P(t) = sum_i c_i (t - t0)^i with nonnegative coefficients."""
    coefficients: tuple
    t0: float = 0.0
    variant = "polynomial"

    def __post_init__(self):
        if self.t0 is None or not math.isfinite(self.t0):
            raise ConfigError("polynomial growth needs a finite t0")
        coefficients = tuple(float(c) for c in self.coefficients)
        if not coefficients:
            raise ConfigError("polynomial growth needs at least one coefficient")
        if any(c < 0 for c in coefficients):
            raise ConfigError(f"polynomial coefficients must be >= 0, got {coefficients}")
        object.__setattr__(self, "coefficients", coefficients)

    @property
    def polynomial(self) -> Polynomial:
        return Polynomial(self.coefficients)

    def value(self, t: float) -> float:
        self.checkDomain(t)
        return float(self.polynomial(t - self.t0))

    def rate(self, t: float) -> float:
        self.checkDomain(t)
        return float(self.polynomial.deriv()(t - self.t0))

    def restricted(self, t: float) -> float:
        self.checkRestricted(t)
        u = max(t - self.t0, 0.0)
        return float((self.polynomial - self.coefficients[0])(u))

    def integralRestricted(self, t: float) -> float:
        self.checkRestricted(t)
        u = max(t - self.t0, 0.0)
        return float((self.polynomial - self.coefficients[0]).integ(lbnd=0.0)(u))

    def restrictedInverse(self, y: float) -> Optional[float]:
        # closed form only for a single growing term c_m u^m
        terms = [(i, c) for i, c in enumerate(self.coefficients) if i > 0 and c > 0]
        if len(terms) != 1:
            return None
        power, coefficient = terms[0]
        return self.t0 + (y / coefficient) ** (1.0 / power)

    def describe(self) -> dict:
        return {"variant": self.variant, "coefficients": list(self.coefficients), "t0": self.t0}


@dataclass(frozen=True)
class ExponentialGrowth(GrowthCurve):
    """P(t) = C exp(k (t - referenceTime)); t0=None means history back to -infinity."""
    scale: float
    growthRate: float
    t0: Optional[float] = None
    referenceTime: float = 0.0
    variant = "exponential"

    def __post_init__(self):
        if self.scale <= 0:
            raise ConfigError(f"exponential scale C must be > 0, got {self.scale}")
        if self.growthRate <= 0:
            raise ConfigError(f"exponential rate k must be > 0, got {self.growthRate}")
        if self.t0 is not None and not math.isfinite(self.t0):
            object.__setattr__(self, "t0", None)

    @property
    def domainStart(self) -> float:
        return -math.inf

    def value(self, t: float) -> float:
        return self.scale * math.exp(self.growthRate * (t - self.referenceTime))

    def rate(self, t: float) -> float:
        return self.growthRate * self.value(t)

    def _originValue(self) -> float:
        return self.scale * math.exp(self.growthRate * (self.t0 - self.referenceTime))

    def restricted(self, t: float) -> float:
        self.checkRestricted(t)
        if self.t0 is None:
            return self.value(t)
        return self._originValue() * math.expm1(self.growthRate * max(t - self.t0, 0.0))

    def integralRestricted(self, t: float) -> float:
        self.checkRestricted(t)
        k = self.growthRate
        if self.t0 is None:
            return self.value(t) / k
        u = max(t - self.t0, 0.0)
        return self._originValue() * (math.expm1(k * u) / k - u)

    def restrictedInverse(self, y: float) -> Optional[float]:
        k = self.growthRate
        if self.t0 is None:
            return self.referenceTime + math.log(y / self.scale) / k
        return self.t0 + math.log1p(y / self._originValue()) / k

    def describe(self) -> dict:
        return {
            "variant": self.variant,
            "C": self.scale,
            "k": self.growthRate,
            "t0": self.t0,
            "reference_time": self.referenceTime,
        }


@dataclass(frozen=True)
class TabulatedGrowth(GrowthCurve):
    """Yearly cumulative counts joined by straight lines."""
    years: tuple
    counts: tuple
    t0: Optional[float] = None
    variant = "tabulated"

    def __post_init__(self):
        years = np.asarray(self.years, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if years.ndim != 1 or years.shape != counts.shape:
            raise ConfigError("tabulated growth needs matching year and count columns")
        if years.size < 2:
            raise ConfigError("tabulated growth needs at least two rows")
        if np.any(np.diff(years) <= 0):
            raise ConfigError("tabulated years must be strictly increasing")
        if np.any(counts < 0) or np.any(np.diff(counts) < 0):
            raise ConfigError("tabulated cumulative counts must be nonnegative and nondecreasing")
        object.__setattr__(self, "years", tuple(years.tolist()))
        object.__setattr__(self, "counts", tuple(counts.tolist()))
        if self.t0 is None:
            object.__setattr__(self, "t0", float(years[0]))
        elif not years[0] <= self.t0 <= years[-1]:
            raise ConfigError(f"t0={self.t0} lies outside the table [{years[0]}, {years[-1]}]")

    @property
    def domainStart(self) -> float:
        return self.years[0]

    @property
    def domainEnd(self) -> float:
        return self.years[-1]

    def value(self, t: float) -> float:
        self.checkDomain(t)
        return float(np.interp(t, self.years, self.counts))

    def rate(self, t: float) -> float:
        self.checkDomain(t)
        index = int(np.searchsorted(self.years, t, side="right")) - 1
        index = min(max(index, 0), len(self.years) - 2)
        return (self.counts[index + 1] - self.counts[index]) / (self.years[index + 1] - self.years[index])

    def integralRestricted(self, t: float) -> float:
        self.checkRestricted(t)
        if t <= self.t0:
            return 0.0
        inner = [y for y in self.years if self.t0 < y < t]
        knots = np.array([self.t0, *inner, t])
        values = np.interp(knots, self.years, self.counts) - self.value(self.t0)
        # trapezoid is exact on a piecewise-linear integrand
        return float(trapezoid(values, knots))

    def restrictedInverse(self, y: float) -> Optional[float]:
        # plateaus make the inverse set-valued; those go through bisection
        if np.any(np.diff(self.counts) <= 0):
            return None
        return float(np.interp(y + self.value(self.t0), self.counts, self.years))

    def breakpoints(self) -> tuple:
        return self.years

    def describe(self) -> dict:
        return {"variant": self.variant, "years": list(self.years), "counts": list(self.counts), "t0": self.t0}
