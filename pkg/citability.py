"""Citability kernels q(a): probability that a new article cites one of age a."""
import math
from dataclasses import dataclass

import numpy as np

from errors import ConfigError, DivergenceError
from numerics import adaptiveQuad


def _checkProbability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")


def _checkDecay(k: float) -> None:
    if k <= 0:
        raise DivergenceError(f"integral of q(a) e^(-ka) diverges or is undefined for k={k}; need k > 0")


class CitabilityKernel:
    variant = "abstract"

    def __call__(self, age):
        raise NotImplementedError

    @property
    def isUniform(self) -> bool:
        return False

    @property
    def isZero(self) -> bool:
        return False

    @property
    def uniformValue(self) -> float:
        """The constant value of q when isUniform holds."""
        raise ValueError(f"{self.variant} kernel is not uniform")

    def laplace(self, k: float) -> float:
        """Integral of q(a) e^(-ka) over a in [0, inf)."""
        raise NotImplementedError

    def ageMoment(self, k: float) -> float:
        """Integral of a q(a) e^(-ka) over a in [0, inf)."""
        raise NotImplementedError

    def breakpoints(self) -> tuple:
        return ()

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantKernel(CitabilityKernel):
    q: float
    variant = "constant"

    def __post_init__(self):
        _checkProbability("q", self.q)

    def __call__(self, age):
        if np.ndim(age):
            return np.full(np.shape(age), self.q, dtype=float)
        return self.q

    @property
    def isUniform(self) -> bool:
        return True

    @property
    def isZero(self) -> bool:
        return self.q == 0.0

    @property
    def uniformValue(self) -> float:
        return self.q

    def laplace(self, k: float) -> float:
        _checkDecay(k)
        return self.q / k

    def ageMoment(self, k: float) -> float:
        _checkDecay(k)
        return self.q / (k * k)

    def describe(self) -> dict:
        return {"variant": self.variant, "q": self.q}


@dataclass(frozen=True)
class ExponentialDecayKernel(CitabilityKernel):
    """q(a) = q0 exp(-decayRate a)."""
    q0: float
    decayRate: float
    variant = "exponential_decay"

    def __post_init__(self):
        _checkProbability("q0", self.q0)
        if self.decayRate < 0 or not math.isfinite(self.decayRate):
            raise ConfigError(f"decay rate lambda must be a finite value >= 0, got {self.decayRate}")

    def __call__(self, age):
        if np.ndim(age):
            return self.q0 * np.exp(-self.decayRate * np.asarray(age, dtype=float))
        return self.q0 * math.exp(-self.decayRate * age)

    @property
    def isUniform(self) -> bool:
        return self.decayRate == 0.0 or self.q0 == 0.0

    @property
    def isZero(self) -> bool:
        return self.q0 == 0.0

    @property
    def uniformValue(self) -> float:
        if not self.isUniform:
            return super().uniformValue
        return self.q0 if self.decayRate == 0.0 else 0.0

    def laplace(self, k: float) -> float:
        _checkDecay(k)
        return self.q0 / (k + self.decayRate)

    def ageMoment(self, k: float) -> float:
        _checkDecay(k)
        return self.q0 / (k + self.decayRate) ** 2

    def describe(self) -> dict:
        return {"variant": self.variant, "q0": self.q0, "lambda": self.decayRate}


@dataclass(frozen=True)
class TabulatedKernel(CitabilityKernel):
    """Piecewise-linear q between tabulated ages, zero past the last one."""
    ages: tuple
    probabilities: tuple
    variant = "tabulated"

    def __post_init__(self):
        ages = np.asarray(self.ages, dtype=float)
        probabilities = np.asarray(self.probabilities, dtype=float)
        if ages.ndim != 1 or ages.shape != probabilities.shape or ages.size < 1:
            raise ConfigError("tabulated kernel needs matching, nonempty age and probability columns")
        if ages[0] < 0:
            raise ConfigError(f"tabulated kernel ages must be >= 0, got {ages[0]}")
        if np.any(np.diff(ages) <= 0):
            raise ConfigError("tabulated kernel ages must be strictly increasing")
        if np.any(probabilities < 0) or np.any(probabilities > 1):
            raise ConfigError("tabulated kernel probabilities must lie in [0, 1]")
        object.__setattr__(self, "ages", tuple(ages.tolist()))
        object.__setattr__(self, "probabilities", tuple(probabilities.tolist()))

    @property
    def lastAge(self) -> float:
        return self.ages[-1]

    def __call__(self, age):
        values = np.interp(age, self.ages, self.probabilities, left=self.probabilities[0], right=0.0)
        return values if np.ndim(age) else float(values)

    @property
    def isUniform(self) -> bool:
        return False

    @property
    def isZero(self) -> bool:
        return not any(self.probabilities)

    def laplace(self, k: float, epsabs: float = 1e-10, epsrel: float = 1e-10) -> float:
        _checkDecay(k)
        return adaptiveQuad(lambda a: self(a) * math.exp(-k * a), 0.0, self.lastAge,
                            points=self.ages, epsabs=epsabs, epsrel=epsrel)

    def ageMoment(self, k: float, epsabs: float = 1e-10, epsrel: float = 1e-10) -> float:
        _checkDecay(k)
        return adaptiveQuad(lambda a: a * self(a) * math.exp(-k * a), 0.0, self.lastAge,
                            points=self.ages, epsabs=epsabs, epsrel=epsrel)

    def breakpoints(self) -> tuple:
        return self.ages

    def describe(self) -> dict:
        return {"variant": self.variant, "ages": list(self.ages), "probabilities": list(self.probabilities)}
