import logging
import math
from typing import Iterable, Optional

from pydantic import BaseModel, Field

from citability import CitabilityKernel
from errors import ConfigError, DivergenceError, ModelDomainError
from growth_curves import ExponentialGrowth, GrowthCurve
from numerics import adaptiveQuad, bisectPredicate

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s",
    handlers=[logging.StreamHandler()]
)


class SurvivalPoint(BaseModel):
    age: float = Field(..., description="Reference age a in years")
    fraction: float = Field(..., description="Fraction of references at least a years old")


class AgeStatistics(BaseModel):
    mean_age: float = Field(..., description="Mean reference age in years")
    median_age: float = Field(..., description="Median reference age in years")
    survival: Optional[list[SurvivalPoint]] = Field(None, description="Age-survival fractions at requested ages")


class ReferenceModelService:
    """Mean-field predictors for reference-list length and reference age."""

    def __init__(self, quadAbsTolerance: float = 1e-9, quadRelTolerance: float = 1e-10,
                 bisectionTolerance: float = 1e-9):
        self.quadAbsTolerance = quadAbsTolerance
        self.quadRelTolerance = quadRelTolerance
        self.bisectionTolerance = bisectionTolerance
        logging.info("ReferenceModelService initialized.")

    def _integrate(self, func, lower: float, upper: float, points: Iterable[float]) -> float:
        return adaptiveQuad(func, lower, upper, points=points,
                            epsabs=self.quadAbsTolerance, epsrel=self.quadRelTolerance)

    def _breakpoints(self, kernel: CitabilityKernel, curve: GrowthCurve, t: float) -> list:
        return list(curve.breakpoints()) + [t - age for age in kernel.breakpoints()]

    def expectedListLength(self, kernel: CitabilityKernel, curve: GrowthCurve, t: float,
                           forceQuadrature: bool = False, restricted: bool = True) -> float:
        """Expected reference-list length of an article published at t.

        Restricted mode counts only references to articles published at or
        after the curve's t0. Uniform kernels shortcut to q P*(t).
        """
        if curve.hasInfiniteHistory:
            return self._exponentialLength(kernel, curve, t)
        curve.checkRestricted(t)
        if kernel.isZero:
            return 0.0
        if kernel.isUniform and not forceQuadrature:
            q = kernel.uniformValue
            return q * curve.restricted(t) if restricted else q * curve.value(t)
        if not restricted:
            raise ModelDomainError("unrestricted length needs a uniform kernel or an infinite-history curve")
        return self._integrate(lambda s: kernel(t - s) * curve.rate(s), curve.t0, t,
                               self._breakpoints(kernel, curve, t))

    def _exponentialLength(self, kernel: CitabilityKernel, curve: ExponentialGrowth, t: float) -> float:
        # P'(t) = C k e^(k(t - ref))
        return curve.rate(t) * kernel.laplace(curve.growthRate)

    def exponentialGrowthPrediction(self, kernel: CitabilityKernel, C: float, k: float, t: float) -> float:
        """L(t) = C k e^(kt) times the integral of q(a) e^(-ka) over a >= 0."""
        if k <= 0:
            raise DivergenceError(f"exponential growth prediction needs k > 0, got {k}")
        if C < 0:
            raise ModelDomainError(f"C must be >= 0, got {C}")
        if kernel.isZero or C == 0:
            return 0.0
        return C * k * math.exp(k * t) * kernel.laplace(k)

    def expectedTotalAge(self, kernel: CitabilityKernel, curve: GrowthCurve, t: float,
                         method: str = "auto") -> float:
        """Expected summed age of all references of an article published at t.

        `method` picks the evaluation path: "quadrature" integrates
        (t - s) q(t - s) P'(s) directly, "byParts" uses q times the integral
        of P* and needs a uniform kernel, "auto" takes byParts when it can.
        """
        if method not in ("auto", "quadrature", "byParts"):
            raise ConfigError(f"unknown total-age method '{method}'")
        if curve.hasInfiniteHistory:
            return curve.rate(t) * kernel.ageMoment(curve.growthRate)
        curve.checkRestricted(t)
        if kernel.isZero:
            return 0.0
        if method == "byParts" and not kernel.isUniform:
            raise ConfigError(f"byParts total age needs a uniform kernel, got {kernel.variant}")
        if method == "byParts" or (method == "auto" and kernel.isUniform):
            return kernel.uniformValue * curve.integralRestricted(t)
        return self._integrate(lambda s: (t - s) * kernel(t - s) * curve.rate(s), curve.t0, t,
                               self._breakpoints(kernel, curve, t))

    def _requireCitable(self, curve: GrowthCurve, t: float) -> float:
        restricted = curve.restricted(t)
        if restricted <= 0:
            raise ModelDomainError(f"no citable articles at t={t}: P*(t) = {restricted}")
        return restricted

    def meanReferenceAge(self, curve: GrowthCurve, t: float) -> float:
        """Uniform-model mean age: integral of P* over the window divided by P*(t)."""
        restricted = self._requireCitable(curve, t)
        return curve.integralRestricted(t) / restricted

    def medianReferenceAge(self, curve: GrowthCurve, t: float) -> float:
        """Smallest age a with P*(t - a) <= P*(t) / 2."""
        restricted = self._requireCitable(curve, t)
        target = restricted / 2.0
        inverse = curve.restrictedInverse(target)
        if inverse is not None:
            median = t - inverse
            if curve.hasInfiniteHistory:
                return max(median, 0.0)
            return min(max(median, 0.0), t - curve.t0)
        window = t - curve.t0
        return bisectPredicate(lambda a: curve.restricted(max(t - a, curve.t0)) <= target,
                               0.0, window, tolerance=self.bisectionTolerance)

    def ageSurvivalFraction(self, curve: GrowthCurve, t: float, a: float, restricted: bool = True) -> float:
        """Fraction of references with age at least a: P(t - a) / P(t), or P* in restricted mode."""
        if a < 0:
            raise ModelDomainError(f"age must be >= 0, got {a}")
        if restricted:
            denominator = self._requireCitable(curve, t)
            s = t - a if curve.hasInfiniteHistory else max(t - a, curve.t0)
            fraction = curve.restricted(s) / denominator
        else:
            denominator = curve.value(t)
            if denominator <= 0:
                raise ModelDomainError(f"P(t) = 0 at t={t}")
            fraction = curve.value(t - a) / denominator
        return min(max(fraction, 0.0), 1.0)

    def kernelMeanAge(self, kernel: CitabilityKernel, curve: GrowthCurve, t: float) -> float:
        """Mean reference age A(t) / L(t) under an arbitrary kernel."""
        length = self.expectedListLength(kernel, curve, t)
        if length <= 0:
            raise ModelDomainError(f"expected list length is 0 at t={t}; mean age undefined")
        return self.expectedTotalAge(kernel, curve, t) / length

    def ageStatistics(self, curve: GrowthCurve, t: float, survivalAges: Iterable[float] = ()) -> AgeStatistics:
        survival = [SurvivalPoint(age=a, fraction=self.ageSurvivalFraction(curve, t, a)) for a in survivalAges]
        return AgeStatistics(
            mean_age=self.meanReferenceAge(curve, t),
            median_age=self.medianReferenceAge(curve, t),
            survival=survival or None,
        )

    def predictionTable(self, kernel: CitabilityKernel, curve: GrowthCurve, years: Iterable[float],
                        survivalAges: Iterable[float] = ()) -> list:
        """One row per year: P*, L*, uniform-model ages and survival fractions.

        Age columns are None where P*(t) = 0.
        """
        survivalAges = list(survivalAges)
        rows = []
        for t in years:
            restricted = curve.restricted(t)
            row = {
                "t": t,
                "p_star": restricted,
                "l_star": self.expectedListLength(kernel, curve, t),
            }
            citable = restricted > 0
            row["mean_age"] = self.meanReferenceAge(curve, t) if citable else None
            row["median_age"] = self.medianReferenceAge(curve, t) if citable else None
            row["kernel_mean_age"] = self.kernelMeanAge(kernel, curve, t) if citable and row["l_star"] > 0 else None
            for a in survivalAges:
                row[f"survival_{a:g}"] = self.ageSurvivalFraction(curve, t, a) if citable else None
            rows.append(row)
        logging.info(f"Prediction table built for {len(rows)} years.")
        return rows
