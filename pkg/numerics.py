import logging
import math
import warnings
from typing import Callable, Iterable

from scipy import integrate

from errors import QuadratureError

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s",
    handlers=[logging.StreamHandler()]
)


def adaptiveQuad(func: Callable[[float], float], lower: float, upper: float, points: Iterable[float] = (),
                 epsabs: float = 1e-9, epsrel: float = 1e-10, limit: int = 200) -> float:
    """Gauss-Kronrod adaptive quadrature on a finite interval.

    Interior breakpoints of piecewise integrands go in `points`. Raises
    QuadratureError when the error estimate misses the requested tolerance.
    """
    if upper <= lower:
        return 0.0
    interior = sorted({float(p) for p in points if lower < p < upper})
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if interior:
                result, abserr = integrate.quad(func, lower, upper, points=interior,
                                                epsabs=epsabs, epsrel=epsrel, limit=max(limit, 2 * len(interior) + 50))
            else:
                result, abserr = integrate.quad(func, lower, upper, epsabs=epsabs, epsrel=epsrel, limit=limit)
        except integrate.IntegrationWarning as e:
            logging.error(f"Quadrature on [{lower}, {upper}] did not converge: {e}")
            raise QuadratureError(f"quadrature on [{lower}, {upper}] did not reach tolerance: {e}") from e
    allowed = max(epsabs, epsrel * abs(result))
    if not math.isfinite(result) or abserr > allowed:
        raise QuadratureError(
            f"quadrature on [{lower}, {upper}] error estimate {abserr:.3e} exceeds tolerance {allowed:.3e}"
        )
    return float(result)


def bisectPredicate(predicate: Callable[[float], bool], lower: float, upper: float,
                    tolerance: float = 1e-9, maxIter: int = 200) -> float:
    """Smallest x in [lower, upper] where a monotone predicate turns true.

    The predicate must be false at `lower` (or the answer is `lower`) and true
    at `upper`. Keeping the true end means plateaus resolve to their left edge.
    """
    if predicate(lower):
        return lower
    lo, hi = lower, upper
    for _ in range(maxIter):
        if hi - lo <= tolerance:
            break
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return hi
