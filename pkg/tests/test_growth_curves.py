import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import math
import pytest
from errors import ConfigError, ModelDomainError
from growth_curves import ExponentialGrowth, LinearGrowth, PolynomialGrowth, TabulatedGrowth

def testLinearRestrictedAndIntegral():
    curve = LinearGrowth(articlesPerYear=200, startCount=1000, t0=2000)
    assert curve.value(2005) == 2000
    assert curve.restricted(2005) == 1000
    assert curve.restricted(2000) == 0
    assert curve.integralRestricted(2010) == pytest.approx(200 * 100 / 2)
    assert curve.restrictedInverse(1000) == pytest.approx(2005)

def testLinearBeforeOriginRaises():
    curve = LinearGrowth(articlesPerYear=200, t0=2000)
    with pytest.raises(ModelDomainError):
        curve.restricted(1999)

def testLinearRejectsNegativeRate():
    with pytest.raises(ConfigError):
        LinearGrowth(articlesPerYear=-1)

def testPolynomialQuadratic():
    curve = PolynomialGrowth(coefficients=(10, 0, 3), t0=1)
    assert curve.value(3) == pytest.approx(10 + 3 * 4)
    assert curve.restricted(3) == pytest.approx(12)
    assert curve.rate(3) == pytest.approx(12)
    assert curve.integralRestricted(3) == pytest.approx(3 * 8 / 3)
    assert curve.restrictedInverse(12) == pytest.approx(3)

def testPolynomialInverseOnlyForSingleTerm():
    assert PolynomialGrowth(coefficients=(0, 1, 1)).restrictedInverse(2.0) is None

def testPolynomialRejectsNegativeCoefficient():
    with pytest.raises(ConfigError):
        PolynomialGrowth(coefficients=(0, -1, 2))
    with pytest.raises(ConfigError):
        PolynomialGrowth(coefficients=())

def testExponentialInfiniteHistory():
    curve = ExponentialGrowth(scale=2.0, growthRate=0.1)
    assert curve.hasInfiniteHistory
    assert curve.restricted(10) == pytest.approx(2.0 * math.e)
    assert curve.integralRestricted(10) == pytest.approx(2.0 * math.e / 0.1)
    assert curve.restrictedInverse(2.0 * math.e) == pytest.approx(10)

def testExponentialWithOrigin():
    curve = ExponentialGrowth(scale=1.0, growthRate=0.5, t0=0.0)
    assert curve.restricted(0) == 0
    assert curve.restricted(2) == pytest.approx(math.e - 1)
    assert curve.integralRestricted(2) == pytest.approx((math.e - 1) / 0.5 - 2)
    assert curve.restrictedInverse(math.e - 1) == pytest.approx(2)

def testExponentialRejectsBadParameters():
    with pytest.raises(ConfigError):
        ExponentialGrowth(scale=0, growthRate=0.1)
    with pytest.raises(ConfigError):
        ExponentialGrowth(scale=1, growthRate=0)

def testTabulatedInterpolation():
    curve = TabulatedGrowth(years=(2000, 2001, 2002), counts=(100, 150, 250))
    assert curve.t0 == 2000
    assert curve.value(2001.5) == pytest.approx(200)
    assert curve.restricted(2002) == pytest.approx(150)
    assert curve.rate(2001.5) == pytest.approx(100)
    assert curve.integralRestricted(2002) == pytest.approx(25 + 100)
    assert curve.restrictedInverse(100) == pytest.approx(2001.5)

def testTabulatedMatchesLinear():
    linear = LinearGrowth(articlesPerYear=100, t0=0)
    tabulated = TabulatedGrowth(years=tuple(range(11)), counts=tuple(100 * y for y in range(11)))
    for t in (0, 2.5, 7, 10):
        assert tabulated.restricted(t) == pytest.approx(linear.restricted(t))
        assert tabulated.integralRestricted(t) == pytest.approx(linear.integralRestricted(t))

def testTabulatedPlateauHasNoClosedInverse():
    curve = TabulatedGrowth(years=(0, 1, 2), counts=(0, 10, 10))
    assert curve.restrictedInverse(5) is None

def testTabulatedOutsideTableRaises():
    curve = TabulatedGrowth(years=(2000, 2001), counts=(0, 10))
    with pytest.raises(ModelDomainError):
        curve.value(2003)

def testTabulatedValidation():
    with pytest.raises(ConfigError):
        TabulatedGrowth(years=(2000,), counts=(1,))
    with pytest.raises(ConfigError):
        TabulatedGrowth(years=(2000, 1999), counts=(1, 2))
    with pytest.raises(ConfigError):
        TabulatedGrowth(years=(2000, 2001), counts=(5, 2))
    with pytest.raises(ConfigError):
        TabulatedGrowth(years=(2000, 2001), counts=(1, 2), t0=1990)

def testDescribeKeys():
    assert LinearGrowth(articlesPerYear=5).describe() == {"variant": "linear", "rate": 5, "start_count": 0.0, "t0": 0.0}
    assert ExponentialGrowth(scale=1, growthRate=0.2).describe()["k"] == 0.2
