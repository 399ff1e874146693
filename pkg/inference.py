import json
import logging
import math
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator
from scipy import stats

from corpus import YearlyAggregate, readCsvTable
from errors import (ConfigError, DegenerateFitError, EmptyInputError, InconsistentHistogramError,
                    MalformedCsvError, MisalignedSeriesError, SeriesGapError)

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s",
    handlers=[logging.StreamHandler()]
)

FIT_MODES = ("LvT", "PvT", "LvP", "increment")
ALL_FIELDS = "*"
MIN_EXPECTED = 5.0


class FitResult(BaseModel):
    slope: float = Field(..., description="Least-squares slope")
    intercept: float = Field(..., description="Least-squares intercept")
    r_squared: float = Field(..., ge=0, le=1, description="Coefficient of determination")
    n_points: int = Field(..., ge=2, description="Points in the fit")
    residual_variance: float = Field(..., ge=0, description="Residual sum of squares over n - 2")
    slope_stderr: float = Field(..., ge=0, description="Standard error of the slope")
    flags: list[str] = Field(default_factory=list, description="Conventions applied, e.g. zero_variance_y")


class SeriesFit(BaseModel):
    field_label: str = Field(..., description="Discipline label, '*' for a field-independent series")
    mode: str = Field(..., description="One of LvT, PvT, LvP, increment")
    statistic: str = Field(..., description="mean or median list length")
    x: list[float] = Field(..., description="Regressor values")
    y: list[float] = Field(..., description="Response values")
    fit: FitResult


class LengthHistogram(BaseModel):
    year: float = Field(..., description="Publication time of the cohort")
    counts: list[int] = Field(..., description="Articles per reference-list length; index is the length")
    total: int = Field(..., description="Articles in the histogram")

    @model_validator(mode="after")
    def checkCounts(self):
        if any(c < 0 for c in self.counts):
            raise ValueError("histogram counts must be >= 0")
        if self.total != sum(self.counts):
            raise ValueError(f"total {self.total} differs from the sum of counts {sum(self.counts)}")
        return self

    @property
    def maxLength(self) -> int:
        nonzero = [length for length, count in enumerate(self.counts) if count > 0]
        return nonzero[-1] if nonzero else 0

    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.counts)), self.counts) / self.total)


class BinomialFit(BaseModel):
    p_hat: float = Field(..., description="Estimated per-article citation probability")
    p_stderr: float = Field(..., description="Standard error of p_hat")
    gof_statistic: float = Field(..., description="Pearson chi-square statistic after tail pooling")
    p_value: float = Field(..., description="Goodness-of-fit p-value")
    degrees_of_freedom: int = Field(..., description="Pooled bins minus one minus one fitted parameter")
    n_bins: int = Field(..., description="Bins after pooling")
    n_trials: int = Field(..., description="Binomial n, the number of citable articles")
    total: int = Field(..., description="Articles in the histogram")


def poolBins(observed: np.ndarray, expected: np.ndarray, minExpected: float = MIN_EXPECTED) -> tuple:
    """Merge adjacent bins left to right until each expected count reaches minExpected.

    A short remainder at the right end folds into the last full bin.
    """
    pooledObserved, pooledExpected = [], []
    runObserved, runExpected = 0.0, 0.0
    for o, e in zip(observed, expected):
        runObserved += o
        runExpected += e
        if runExpected >= minExpected:
            pooledObserved.append(runObserved)
            pooledExpected.append(runExpected)
            runObserved, runExpected = 0.0, 0.0
    if runExpected > 0 or runObserved > 0:
        if pooledObserved:
            pooledObserved[-1] += runObserved
            pooledExpected[-1] += runExpected
        else:
            pooledObserved.append(runObserved)
            pooledExpected.append(runExpected)
    return np.array(pooledObserved), np.array(pooledExpected)


class ModelFitter:
    def __init__(self):
        logging.info("ModelFitter initialized.")

    def olsFit(self, x, y) -> FitResult:
        """Unweighted least-squares line y = slope * x + intercept."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise MisalignedSeriesError(f"x and y differ in shape: {x.shape} vs {y.shape}")
        n = x.size
        if n < 2:
            raise DegenerateFitError(f"a line needs at least 2 points, got {n}")
        if np.ptp(x) == 0:
            raise DegenerateFitError("x has zero variance; slope undefined")
        xMean, yMean = x.mean(), y.mean()
        dx, dy = x - xMean, y - yMean
        sxx = float(np.dot(dx, dx))
        slope = float(np.dot(dx, dy) / sxx)
        intercept = float(yMean - slope * xMean)
        residuals = y - (slope * x + intercept)
        ssRes = float(np.dot(residuals, residuals))
        flags = []
        if np.ptp(y) == 0:
            rSquared = 0.0
            flags.append("zero_variance_y")
        else:
            rSquared = min(max(1.0 - ssRes / float(np.dot(dy, dy)), 0.0), 1.0)
        residualVariance = ssRes / (n - 2) if n > 2 else 0.0
        return FitResult(
            slope=slope,
            intercept=intercept,
            r_squared=rSquared,
            n_points=n,
            residual_variance=residualVariance,
            slope_stderr=math.sqrt(residualVariance / sxx),
            flags=flags,
        )

    def _aligned(self, first: dict, second: dict, minYears: int) -> list:
        if set(first) != set(second):
            onlyFirst = sorted(set(first) - set(second))
            onlySecond = sorted(set(second) - set(first))
            raise MisalignedSeriesError(f"series cover different years: only first {onlyFirst}, "
                                        f"only second {onlySecond}")
        years = sorted(first)
        if len(years) < minYears:
            raise DegenerateFitError(f"need at least {minYears} aligned years, got {len(years)}")
        return years

    def fitAffineQ(self, pSeries: dict, lSeries: dict) -> FitResult:
        """OLS of mean list length on cumulative count; the slope estimates q."""
        years = self._aligned(pSeries, lSeries, 3)
        fit = self.olsFit([pSeries[y] for y in years], [lSeries[y] for y in years])
        logging.info(f"Affine q fit over {len(years)} years: q_hat={fit.slope:.6g}, R2={fit.r_squared:.4f}")
        return fit

    def yearlyIncrement(self, pSeries: dict) -> dict:
        """P(t) - P(t-1) keyed by the later year."""
        years = sorted(pSeries)
        if len(years) < 2:
            raise EmptyInputError(f"increments need at least 2 years, got {len(years)}")
        for previous, current in zip(years, years[1:]):
            if current - previous != 1:
                raise SeriesGapError(f"years {previous} and {current} are not consecutive")
        return {current: pSeries[current] - pSeries[previous] for previous, current in zip(years, years[1:])}

    def fitBinomial(self, hist: LengthHistogram, nTrials: int) -> BinomialFit:
        """Method-of-moments fit of Bin(nTrials, p) with a pooled Pearson chi-square test."""
        if hist.total < 1:
            raise EmptyInputError("histogram holds no articles")
        if nTrials < 1:
            raise ConfigError(f"n_trials must be >= 1, got {nTrials}")
        if hist.maxLength > nTrials:
            raise InconsistentHistogramError(f"observed length {hist.maxLength} exceeds n_trials={nTrials}")
        pHat = hist.mean() / nTrials
        pStderr = math.sqrt(pHat * (1.0 - pHat) / (nTrials * hist.total))
        counts = hist.counts[:hist.maxLength + 1]
        observed = np.zeros(nTrials + 1)
        observed[:len(counts)] = counts
        if pHat <= 0.0 or pHat >= 1.0:
            # all mass in one bin; the fit is exact
            return BinomialFit(p_hat=pHat, p_stderr=pStderr, gof_statistic=0.0, p_value=1.0,
                               degrees_of_freedom=0, n_bins=1, n_trials=nTrials, total=hist.total)
        expected = hist.total * stats.binom.pmf(np.arange(nTrials + 1), nTrials, pHat)
        expected *= hist.total / expected.sum()
        pooledObserved, pooledExpected = poolBins(observed, expected)
        nBins = len(pooledObserved)
        dof = nBins - 2
        if dof > 0:
            statistic, pValue = stats.chisquare(pooledObserved, pooledExpected, ddof=1)
        else:
            statistic = float(np.sum((pooledObserved - pooledExpected) ** 2 / pooledExpected))
            pValue = 1.0
            dof = 0
        logging.info(f"Binomial fit: p_hat={pHat:.6g}, chi2={float(statistic):.3f}, dof={dof}, p={float(pValue):.4f}")
        return BinomialFit(p_hat=pHat, p_stderr=pStderr, gof_statistic=float(statistic), p_value=float(pValue),
                           degrees_of_freedom=dof, n_bins=nBins, n_trials=nTrials, total=hist.total)

    def compareHistograms(self, first: LengthHistogram, second: LengthHistogram, minCount: int = 10) -> tuple:
        """Two-sample chi-square homogeneity test; returns (statistic, p_value, degrees_of_freedom)."""
        width = max(len(first.counts), len(second.counts))
        a = np.zeros(width)
        b = np.zeros(width)
        a[:len(first.counts)] = first.counts
        b[:len(second.counts)] = second.counts
        columns, runA, runB = [], 0.0, 0.0
        for countA, countB in zip(a, b):
            runA += countA
            runB += countB
            if runA + runB >= minCount:
                columns.append([runA, runB])
                runA, runB = 0.0, 0.0
        if runA + runB > 0:
            if columns:
                columns[-1][0] += runA
                columns[-1][1] += runB
            else:
                columns.append([runA, runB])
        if len(columns) < 2:
            return 0.0, 1.0, 0
        statistic, pValue, dof, _ = stats.chi2_contingency(np.array(columns).T, correction=False)
        return float(statistic), float(pValue), int(dof)

    def fitSeries(self, aggregates: list[YearlyAggregate], pSeries: Optional[dict], mode: str, statistic: str = "mean") -> list:
        """Per-field regressions: LvT, PvT, LvP or increment-vs-year.

        pSeries maps field label (or '*' for every field) to {year: cumulative count}.
        """
        if mode not in FIT_MODES:
            raise ConfigError(f"mode must be one of {FIT_MODES}, got '{mode}'")
        if statistic not in ("mean", "median"):
            raise ConfigError(f"statistic must be mean or median, got '{statistic}'")
        if mode != "LvT" and not pSeries:
            raise ConfigError(f"mode {mode} needs a P(t) series")
        fits = []
        if mode in ("PvT", "increment"):
            for field, series in sorted(pSeries.items()):
                if mode == "increment":
                    series = self.yearlyIncrement(series)
                years = sorted(series)
                x = [float(y) for y in years]
                y = [float(series[year]) for year in years]
                fits.append(SeriesFit(field_label=field, mode=mode, statistic=statistic, x=x, y=y,
                                      fit=self.olsFit(x, y)))
            return fits
        byField = {}
        for aggregate in aggregates:
            value = aggregate.mean_refs if statistic == "mean" else aggregate.median_refs
            byField.setdefault(aggregate.field_label, {})[aggregate.year] = value
        if not byField:
            raise EmptyInputError("no yearly aggregates to fit")
        for field, lengths in sorted(byField.items()):
            years = sorted(lengths)
            if mode == "LvT":
                x = [float(year) for year in years]
            else:
                series = pSeries.get(field, pSeries.get(ALL_FIELDS))
                if series is None:
                    raise MisalignedSeriesError(f"no P(t) series for field '{field}'")
                missing = [year for year in years if year not in series]
                if missing:
                    raise MisalignedSeriesError(f"P(t) series for '{field}' lacks years {missing}")
                if len(years) < 3:
                    raise DegenerateFitError(f"LvP for '{field}' needs at least 3 years, got {len(years)}")
                x = [float(series[year]) for year in years]
            y = [float(lengths[year]) for year in years]
            fits.append(SeriesFit(field_label=field, mode=mode, statistic=statistic, x=x, y=y,
                                  fit=self.olsFit(x, y)))
        logging.info(f"Fitted {len(fits)} {mode} series on {statistic} list lengths.")
        return fits

    def readPSeries(self, path: str) -> dict:
        """year,cumulative_count CSV with an optional field column."""
        frame = readCsvTable(path, ("year", "cumulative_count", "field"), ("year", "cumulative_count"),
                             numeric=("year", "cumulative_count"))
        if frame.empty:
            raise EmptyInputError(f"{path} holds no P(t) rows")
        series = {}
        for rowIndex, row in enumerate(frame.to_dict("records")):
            if pd.isna(row["year"]) or pd.isna(row["cumulative_count"]):
                raise MalformedCsvError(f"{path}: empty cell", rowIndex + 2)
            field = row.get("field")
            field = field.strip() if isinstance(field, str) and field.strip() else ALL_FIELDS
            year = int(row["year"])
            if year in series.setdefault(field, {}):
                raise MalformedCsvError(f"{path}: duplicate year {year} for field '{field}'", rowIndex + 2)
            series[field][year] = float(row["cumulative_count"])
        return series

    def readHistogram(self, path: str, year: int = None) -> LengthHistogram:
        """year,length,count CSV; picks one year (the only or the latest when not given)."""
        frame = readCsvTable(path, ("year", "length", "count"), ("year", "length", "count"),
                             numeric=("year", "length", "count"))
        if frame.empty:
            raise EmptyInputError(f"{path} holds no histogram rows")
        if frame.isna().any().any():
            rowIndex = int(np.flatnonzero(frame.isna().any(axis=1).to_numpy())[0])
            raise MalformedCsvError(f"{path}: empty cell", rowIndex + 2)
        chosen = int(frame["year"].max()) if year is None else int(year)
        rows = frame[frame["year"] == chosen]
        if rows.empty:
            raise EmptyInputError(f"{path} has no rows for year {chosen}")
        if (rows["length"] < 0).any() or (rows["count"] < 0).any():
            raise InconsistentHistogramError(f"{path}: negative length or count")
        lengths = rows["length"].astype(int).to_numpy()
        counts = np.zeros(lengths.max() + 1, dtype=np.int64)
        np.add.at(counts, lengths, rows["count"].astype(int).to_numpy())
        return LengthHistogram(year=chosen, counts=counts.tolist(), total=int(counts.sum()))

    def writeFitReport(self, fits: list, path: str) -> None:
        report = [
            {"field": f.field_label, "mode": f.mode, "statistic": f.statistic, **f.fit.model_dump()}
            for f in fits
        ]
        with open(path, "w") as reportFile:
            json.dump(report, reportFile, indent=2, sort_keys=True)
        logging.info(f"Wrote {len(report)} fit(s) to {path}.")

    def writePlotCsv(self, fits: list, path: str) -> None:
        """Plot-ready rows field,mode,x,y,fitted."""
        rows = []
        for f in fits:
            for x, y in zip(f.x, f.y):
                rows.append({"field": f.field_label, "mode": f.mode, "x": x, "y": y,
                             "fitted": f.fit.slope * x + f.fit.intercept})
        pd.DataFrame(rows, columns=["field", "mode", "x", "y", "fitted"]).to_csv(path, index=False)
        logging.info(f"Wrote {len(rows)} plot points to {path}.")
