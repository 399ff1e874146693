"""Bernoulli citation process on discrete publication cohorts.

Cohort j sits at t0 + j*dt and holds the articles produced during
[t0 + j*dt, t0 + (j+1)*dt). Each of its articles cites every article of an
earlier cohort i independently with probability q(age), where the age is
measured to the middle of the cited cohort, (j - i - 1/2)*dt. The last cohort,
at the end of the window, is the observation cohort: it cites everything
before it and is never cited.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterator, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from citability import CitabilityKernel
from errors import (CapacityError, CohortNotFoundError, ConfigError, EmptyInputError,
                    EmptyReferencePoolError, ModelDomainError)
from growth_curves import ExponentialGrowth, GrowthCurve, TabulatedGrowth
from inference import LengthHistogram
from reference_model import AgeStatistics, ReferenceModelService, SurvivalPoint

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s",
    handlers=[logging.StreamHandler()]
)

SAMPLING_MODES = ("per_cohort_binomial", "per_pair_bernoulli")
PAIR_CHUNK = 1_000_000


@dataclass(frozen=True)
class SimulationConfig:
    growth: GrowthCurve
    kernel: CitabilityKernel
    t0: float
    tEnd: float
    dt: float = 1.0
    seed: int = 0
    samplingMode: str = "per_cohort_binomial"
    replications: int = 1
    finalCohortSize: Optional[int] = None
    field: str = "simulated"
    workers: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt: must be > 0, got {self.dt}")
        if not self.tEnd > self.t0:
            raise ConfigError(f"t_end: must exceed t0={self.t0}, got {self.tEnd}")
        if self.tEnd - self.t0 < self.dt * (1 - 1e-9):
            raise ConfigError(f"empty window: [{self.t0}, {self.tEnd}] holds no full step of dt={self.dt}")
        if self.samplingMode not in SAMPLING_MODES:
            raise ConfigError(f"sampling_mode: expected one of {SAMPLING_MODES}, got '{self.samplingMode}'")
        if self.replications < 1:
            raise ConfigError(f"replications: must be >= 1, got {self.replications}")
        if self.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {self.workers}")
        if self.finalCohortSize is not None and self.finalCohortSize < 0:
            raise ConfigError(f"final_cohort_size: must be >= 0, got {self.finalCohortSize}")
        if self.growth.t0 != self.t0:
            # exponential and tabulated curves carry t0 as a pure window start
            if isinstance(self.growth, (ExponentialGrowth, TabulatedGrowth)):
                object.__setattr__(self, "growth", replace(self.growth, t0=self.t0))
            else:
                raise ConfigError(f"t0: {self.growth.variant} growth is anchored at t0={self.growth.t0}; "
                                  f"set t0 in the growth config instead")
        try:
            self.growth.checkRestricted(self.t0)
            self.growth.checkRestricted(self.tEnd)
        except ModelDomainError as e:
            raise ConfigError(f"window [{self.t0}, {self.tEnd}] leaves the growth curve's domain: {e}") from e

    @property
    def steps(self) -> int:
        return int(math.floor((self.tEnd - self.t0) / self.dt + 1e-9))

    def describe(self) -> dict:
        return {
            "growth": self.growth.describe(),
            "kernel": self.kernel.describe(),
            "t0": self.t0,
            "t_end": self.tEnd,
            "dt": self.dt,
            "seed": self.seed,
            "sampling_mode": self.samplingMode,
            "replications": self.replications,
            "final_cohort_size": self.finalCohortSize,
            "field": self.field,
            "workers": self.workers,
        }


def _readOnly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Cohort:
    """Articles published at one cohort time within a single replication."""
    time: float
    lengths: np.ndarray
    ages: np.ndarray

    @property
    def size(self) -> int:
        return int(self.lengths.size)

    def articleAges(self) -> list:
        return np.split(self.ages, np.cumsum(self.lengths)[:-1]) if self.size else []


@dataclass(frozen=True, eq=False)
class SimulatedCorpus:
    t0: float
    replications: tuple
    field: str = "simulated"

    @classmethod
    def fromArticles(cls, t0: float, articles, field: str = "simulated") -> "SimulatedCorpus":
        """Single-replication corpus from (publication_time, reference_ages) pairs."""
        byTime = {}
        for time, ages in articles:
            ages = [float(a) for a in ages]
            if any(a < 0 or a > time - t0 + 1e-12 for a in ages):
                raise ModelDomainError(f"reference ages {ages} fall outside [0, {time - t0}]")
            byTime.setdefault(float(time), []).append(ages)
        cohorts = []
        for time in sorted(byTime):
            lists = byTime[time]
            lengths = np.array([len(a) for a in lists], dtype=np.int64)
            ages = np.concatenate([np.asarray(a, dtype=float) for a in lists]) if lengths.sum() else np.zeros(0)
            cohorts.append(Cohort(time=time, lengths=_readOnly(lengths), ages=_readOnly(ages)))
        return cls(t0=t0, replications=(tuple(cohorts),), field=field)

    @property
    def cohorts(self) -> list:
        """(time, article_count) per cohort, in time order."""
        if not self.replications:
            return []
        return [(cohort.time, cohort.size) for cohort in self.replications[0]]

    @property
    def articleCount(self) -> int:
        return sum(cohort.size for replication in self.replications for cohort in replication)

    def articles(self) -> Iterator[tuple]:
        for replication in self.replications:
            for cohort in replication:
                for ages in cohort.articleAges():
                    yield cohort.time, ages

    def cohortIndex(self, at: float) -> int:
        for index, (time, _) in enumerate(self.cohorts):
            if abs(time - at) <= 1e-9 * (1.0 + abs(at)):
                return index
        raise CohortNotFoundError(f"no cohort at t={at}; cohorts sit at {[t for t, _ in self.cohorts]}")

    def pooledLengths(self, index: int) -> np.ndarray:
        return np.concatenate([replication[index].lengths for replication in self.replications])

    def pooledAges(self, index: int) -> np.ndarray:
        return np.concatenate([replication[index].ages for replication in self.replications])


class CohortLengthStats(BaseModel):
    year: float = Field(..., description="Cohort publication time")
    article_count: int = Field(..., description="Articles pooled over replications")
    mean: float = Field(..., description="Mean reference-list length")
    median: float = Field(..., description="Median reference-list length")
    variance: float = Field(..., description="Sample variance (ddof=1) of the length")
    histogram: LengthHistogram = Field(..., description="Articles per integer list length")


def cohortPlan(config: SimulationConfig) -> tuple:
    """Cohort times and article counts.

    Production cohorts are sized from rounded cumulative counts so that the
    rounding residue carries forward. The observation cohort repeats the last
    yearly increment unless finalCohortSize is set.
    """
    steps = config.steps
    times = config.t0 + config.dt * np.arange(steps + 1)
    cumulative = np.array([config.growth.restricted(float(t)) for t in times])
    rounded = np.rint(cumulative).astype(np.int64)
    sizes = np.diff(rounded)
    if config.finalCohortSize is not None:
        finalSize = config.finalCohortSize
    else:
        last = float(times[-1])
        finalSize = int(np.rint(config.growth.value(last) - config.growth.value(last - config.dt)))
    sizes = np.append(sizes, finalSize)
    if np.any(sizes < 0):
        raise ConfigError(f"negative cohort size in {sizes.tolist()}; the growth curve must be nondecreasing")
    return times, sizes


def _cohortAgeGrid(index: int, dt: float) -> np.ndarray:
    return (index - np.arange(index) - 0.5) * dt


def _drawPerCohort(rng: np.random.Generator, size: int, priorSizes: np.ndarray, probs: np.ndarray) -> np.ndarray:
    return rng.binomial(priorSizes[None, :], probs[None, :], size=(size, priorSizes.size))


def _drawPerPair(rng: np.random.Generator, size: int, priorSizes: np.ndarray, probs: np.ndarray) -> np.ndarray:
    counts = np.zeros((size, priorSizes.size), dtype=np.int64)
    for i, (n, p) in enumerate(zip(priorSizes.tolist(), probs.tolist())):
        if n == 0 or size == 0:
            continue
        rowsPerChunk = max(1, PAIR_CHUNK // n)
        for start in range(0, size, rowsPerChunk):
            stop = min(start + rowsPerChunk, size)
            counts[start:stop, i] = (rng.random((stop - start, n)) < p).sum(axis=1)
    return counts


def _simulateReplication(config: SimulationConfig, times: np.ndarray, sizes: np.ndarray,
                         seedSequence: np.random.SeedSequence) -> tuple:
    rng = np.random.Generator(np.random.PCG64(seedSequence))
    draw = _drawPerCohort if config.samplingMode == "per_cohort_binomial" else _drawPerPair
    cohorts = []
    for j, (time, size) in enumerate(zip(times.tolist(), sizes.tolist())):
        ageGrid = _cohortAgeGrid(j, config.dt)
        probs = np.clip(np.asarray(config.kernel(ageGrid), dtype=float), 0.0, 1.0)
        counts = draw(rng, size, sizes[:j], probs)
        lengths = counts.sum(axis=1).astype(np.int64)
        ages = np.repeat(np.tile(ageGrid, size), counts.ravel())
        cohorts.append(Cohort(time=time, lengths=_readOnly(lengths), ages=_readOnly(ages)))
    return tuple(cohorts)


def _runReplication(args: tuple) -> tuple:
    return _simulateReplication(*args)


class CitationSimulator:
    def __init__(self, maxPairBudget: int = 50_000_000):
        self.maxPairBudget = maxPairBudget
        logging.info("CitationSimulator initialized.")

    def pairCount(self, sizes: np.ndarray) -> int:
        prior = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        return int(np.dot(sizes.astype(object), prior.astype(object)))

    def simulate(self, config: SimulationConfig) -> SimulatedCorpus:
        """Draw config.replications independent corpora; deterministic given the seed."""
        times, sizes = cohortPlan(config)
        if config.samplingMode == "per_pair_bernoulli":
            pairs = self.pairCount(sizes) * config.replications
            if pairs > self.maxPairBudget:
                raise CapacityError(
                    f"per-pair sampling needs {pairs} Bernoulli draws, above the budget of {self.maxPairBudget}; "
                    f"use per_cohort_binomial or raise max_pair_budget"
                )
        logging.info(f"Simulating {config.replications} replication(s) of {len(times)} cohorts "
                     f"({int(sizes.sum())} articles each) in {config.samplingMode} mode.")
        seeds = np.random.SeedSequence(config.seed).spawn(config.replications)
        jobs = [(config, times, sizes, seedSequence) for seedSequence in seeds]
        if config.workers > 1 and config.replications > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as executor:
                replications = list(executor.map(_runReplication, jobs))
        else:
            replications = []
            for index, job in enumerate(jobs):
                replications.append(_runReplication(job))
                logging.info(f"Replication {index + 1}/{config.replications} done.")
        return SimulatedCorpus(t0=config.t0, replications=tuple(replications), field=config.field)

    def empiricalLengthStats(self, corpus: SimulatedCorpus) -> list:
        if corpus.articleCount == 0:
            raise EmptyInputError("corpus holds no articles")
        stats = []
        for index, (time, _) in enumerate(corpus.cohorts):
            lengths = corpus.pooledLengths(index)
            if lengths.size == 0:
                continue
            counts = np.bincount(lengths)
            stats.append(CohortLengthStats(
                year=time,
                article_count=int(lengths.size),
                mean=float(lengths.mean()),
                median=float(np.median(lengths)),
                variance=float(lengths.var(ddof=1)) if lengths.size > 1 else 0.0,
                histogram=LengthHistogram(year=time, counts=counts.tolist(), total=int(lengths.size)),
            ))
        return stats

    def empiricalAgeStats(self, corpus: SimulatedCorpus, at: float, survivalAges=None) -> AgeStatistics:
        """Pooled reference-age statistics of the cohort published at `at`."""
        index = corpus.cohortIndex(at)
        ages = corpus.pooledAges(index)
        if ages.size == 0:
            raise EmptyReferencePoolError(f"no article of the cohort at t={at} has references")
        if survivalAges is None:
            survivalAges = range(int(math.floor(at - corpus.t0 + 1e-9)) + 1)
        survival = [SurvivalPoint(age=float(a), fraction=float(np.mean(ages >= a))) for a in survivalAges]
        return AgeStatistics(
            mean_age=float(ages.mean()),
            median_age=float(np.median(ages)),
            survival=survival or None,
        )

    def compareAgeStatistics(self, corpus: SimulatedCorpus, config: SimulationConfig,
                             modelService: ReferenceModelService) -> list:
        """Predicted against pooled empirical mean and median ages, one row per cohort with references."""
        rows = []
        for index, (time, _) in enumerate(corpus.cohorts):
            ages = corpus.pooledAges(index)
            if ages.size == 0:
                continue
            rows.append({
                "year": time,
                "reference_count": int(ages.size),
                "predicted_mean_age": modelService.kernelMeanAge(config.kernel, config.growth, time),
                "empirical_mean_age": float(ages.mean()),
                "empirical_mean_stderr": float(ages.std(ddof=1) / math.sqrt(ages.size)) if ages.size > 1 else 0.0,
                "uniform_median_age": modelService.medianReferenceAge(config.growth, time),
                "empirical_median_age": float(np.median(ages)),
            })
        logging.info(f"Compared age statistics on {len(rows)} cohorts.")
        return rows

    def writeCorpusCsv(self, corpus: SimulatedCorpus, path: str) -> None:
        """One row per article: replication, publication_year, n_references, reference_ages."""
        rows = []
        for replicationIndex, replication in enumerate(corpus.replications):
            for cohort in replication:
                for ages in cohort.articleAges():
                    rows.append({
                        "replication": replicationIndex,
                        "publication_year": cohort.time,
                        "n_references": int(ages.size),
                        "reference_ages": ";".join(f"{a:g}" for a in ages.tolist()),
                    })
        frame = pd.DataFrame(rows, columns=["replication", "publication_year", "n_references", "reference_ages"])
        frame.to_csv(path, index=False)
        logging.info(f"Wrote {len(frame)} articles to {path}.")

    def writeArticlesCsv(self, corpus: SimulatedCorpus, path: str) -> None:
        """Articles in the ingest schema: id,year,field,n_references,n_pages."""
        rows = []
        for replicationIndex, replication in enumerate(corpus.replications):
            for cohortIndex, cohort in enumerate(replication):
                year = int(round(cohort.time))
                if abs(year - cohort.time) > 1e-9:
                    logging.warning(f"Cohort time {cohort.time} rounded to year {year} in the article export.")
                for articleIndex, length in enumerate(cohort.lengths.tolist()):
                    rows.append({
                        "id": f"sim-r{replicationIndex}-c{cohortIndex}-a{articleIndex}",
                        "year": year,
                        "field": corpus.field,
                        "n_references": length,
                        "n_pages": None,
                    })
        frame = pd.DataFrame(rows, columns=["id", "year", "field", "n_references", "n_pages"])
        frame.to_csv(path, index=False)
        logging.info(f"Wrote {len(frame)} ingest-schema articles to {path}.")

    def writePSeriesCsv(self, corpus: SimulatedCorpus, path: str) -> None:
        """Articles published before each cohort time: the P* each cohort could cite."""
        cohorts = corpus.cohorts
        cumulative = np.concatenate(([0], np.cumsum([size for _, size in cohorts])[:-1]))
        frame = pd.DataFrame({
            "year": [int(round(time)) for time, _ in cohorts],
            "cumulative_count": cumulative.astype(np.int64),
        })
        frame.to_csv(path, index=False)
        logging.info(f"Wrote P* series with {len(frame)} years to {path}.")

    def writeHistogramCsv(self, corpus: SimulatedCorpus, path: str, at: float = None) -> LengthHistogram:
        """Pooled length histogram of one cohort (the observation cohort by default)."""
        index = len(corpus.cohorts) - 1 if at is None else corpus.cohortIndex(at)
        time = corpus.cohorts[index][0]
        lengths = corpus.pooledLengths(index)
        if lengths.size == 0:
            raise EmptyInputError(f"cohort at t={time} holds no articles")
        counts = np.bincount(lengths)
        frame = pd.DataFrame({
            "year": [int(round(time))] * counts.size,
            "length": np.arange(counts.size),
            "count": counts,
        })
        frame = frame[frame["count"] > 0]
        frame.to_csv(path, index=False)
        logging.info(f"Wrote length histogram of the t={time} cohort to {path}.")
        return LengthHistogram(year=time, counts=counts.tolist(), total=int(lengths.size))
