import json
import logging
import os
from typing import Annotated, Literal, Optional, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError

from citability import CitabilityKernel, ConstantKernel, ExponentialDecayKernel, TabulatedKernel
from corpus import readCsvTable
from errors import ConfigError, DataIoError, MalformedCsvError
from growth_curves import ExponentialGrowth, GrowthCurve, LinearGrowth, PolynomialGrowth, TabulatedGrowth
from simulation import SimulationConfig

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s",
    handlers=[logging.StreamHandler()]
)

ENV_OVERRIDES = {
    "REFGROWTH_ENDPOINT": "harvest_endpoint",
    "REFGROWTH_RATE": "harvest_rate",
    "REFGROWTH_CACHE_DIR": "harvest_cache_dir",
    "REFGROWTH_CONCURRENCY": "harvest_concurrency",
}


class ToolkitSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    quad_abs_tolerance: float = Field(1e-9, gt=0, description="Absolute quadrature tolerance")
    quad_rel_tolerance: float = Field(1e-10, gt=0, description="Relative quadrature tolerance")
    bisection_tolerance: float = Field(1e-9, gt=0, description="Median bisection tolerance in years")
    max_pair_budget: int = Field(50_000_000, gt=0, description="Largest pair count a per-pair simulation may draw")
    min_year: int = Field(1900, description="Earliest plausible publication year")
    max_year: int = Field(2100, description="Latest plausible publication year")
    harvest_endpoint: str = Field("https://api.crossref.org/works", description="Metadata API base URL")
    harvest_rate: float = Field(1.0, gt=0, description="Requests per second across all workers")
    harvest_cache_dir: str = Field(".refgrowth_cache", description="On-disk response cache")
    harvest_concurrency: int = Field(4, ge=1, description="Concurrent harvest requests")
    harvest_max_retries: int = Field(4, ge=0, description="Retries per DOI on 429, 5xx and connection errors")
    harvest_backoff_seconds: float = Field(1.0, ge=0, description="First retry delay")
    harvest_max_backoff_seconds: float = Field(30.0, ge=0, description="Retry delay cap")
    harvest_timeout_seconds: float = Field(30.0, gt=0, description="Per-request timeout")
    user_agent: str = Field("refgrowth/1.0 (mailto:refgrowth@example.org)", description="User-Agent header")


def describeValidationError(error: ValidationError) -> str:
    problems = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<root>"
        problems.append(f"{path}: {item['msg']}")
    return "; ".join(problems)


def validateOrRaise(adapterOrModel, data, what: str):
    try:
        if isinstance(adapterOrModel, TypeAdapter):
            return adapterOrModel.validate_python(data)
        return adapterOrModel.model_validate(data)
    except ValidationError as e:
        message = f"invalid {what}: {describeValidationError(e)}"
        logging.error(message)
        raise ConfigError(message) from e


def readJson(path: str) -> dict:
    try:
        with open(path, "r") as jsonFile:
            return json.load(jsonFile)
    except FileNotFoundError as e:
        raise DataIoError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: line {e.lineno}: {e.msg}") from e


def loadSettings(path: str = None, environ: dict = None) -> ToolkitSettings:
    """Settings from config.json, then REFGROWTH_* environment overrides."""
    path = path or os.environ.get("REFGROWTH_CONFIG", "config.json")
    environ = os.environ if environ is None else environ
    data = {}
    if os.path.exists(path):
        data = readJson(path)
        logging.info(f"Loaded settings from {path}.")
    else:
        logging.info(f"No settings file at {path}; using defaults.")
    for envName, key in ENV_OVERRIDES.items():
        if environ.get(envName):
            data[key] = environ[envName]
    return validateOrRaise(ToolkitSettings, data, "settings")


class LinearGrowthSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    variant: Literal["linear"]
    rate: float = Field(..., ge=0, description="Articles per year")
    start_count: float = Field(0.0, ge=0, description="P(t0)")
    t0: float = Field(0.0, description="Observation origin")

    def build(self) -> GrowthCurve:
        return LinearGrowth(articlesPerYear=self.rate, startCount=self.start_count, t0=self.t0)


class PolynomialGrowthSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    variant: Literal["polynomial"]
    coefficients: list[Annotated[float, Field(ge=0)]] = Field(..., min_length=1)
    t0: float = 0.0

    def build(self) -> GrowthCurve:
        return PolynomialGrowth(coefficients=tuple(self.coefficients), t0=self.t0)


class ExponentialGrowthSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    variant: Literal["exponential"]
    C: float = Field(..., gt=0)
    k: float = Field(..., gt=0)
    t0: Optional[float] = Field(None, description="None means history reaching back to -infinity")
    reference_time: float = 0.0

    def build(self) -> GrowthCurve:
        return ExponentialGrowth(scale=self.C, growthRate=self.k, t0=self.t0, referenceTime=self.reference_time)


class TabulatedGrowthSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    variant: Literal["tabulated"]
    years: list[float] = Field(..., min_length=2)
    counts: list[Annotated[float, Field(ge=0)]] = Field(..., min_length=2)
    t0: Optional[float] = None

    def build(self) -> GrowthCurve:
        return TabulatedGrowth(years=tuple(self.years), counts=tuple(self.counts), t0=self.t0)


class ConstantKernelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    variant: Literal["constant"]
    q: float = Field(..., ge=0, le=1)

    def build(self) -> CitabilityKernel:
        return ConstantKernel(q=self.q)


class ExponentialDecayKernelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    variant: Literal["exponential_decay"]
    q0: float = Field(..., ge=0, le=1)
    decay_rate: float = Field(..., ge=0, alias="lambda")

    def build(self) -> CitabilityKernel:
        return ExponentialDecayKernel(q0=self.q0, decayRate=self.decay_rate)


class TabulatedKernelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    variant: Literal["tabulated"]
    ages: list[Annotated[float, Field(ge=0)]] = Field(..., min_length=1)
    probabilities: list[Annotated[float, Field(ge=0, le=1)]] = Field(..., min_length=1)

    def build(self) -> CitabilityKernel:
        return TabulatedKernel(ages=tuple(self.ages), probabilities=tuple(self.probabilities))


GrowthSpec = Annotated[
    Union[LinearGrowthSpec, PolynomialGrowthSpec, ExponentialGrowthSpec, TabulatedGrowthSpec],
    Field(discriminator="variant"),
]
KernelSpec = Annotated[
    Union[ConstantKernelSpec, ExponentialDecayKernelSpec, TabulatedKernelSpec],
    Field(discriminator="variant"),
]
GROWTH_ADAPTER = TypeAdapter(GrowthSpec)
KERNEL_ADAPTER = TypeAdapter(KernelSpec)


def growthFromDict(data: dict) -> GrowthCurve:
    return validateOrRaise(GROWTH_ADAPTER, data, "growth curve").build()


def kernelFromDict(data: dict) -> CitabilityKernel:
    return validateOrRaise(KERNEL_ADAPTER, data, "citability kernel").build()


def readTwoColumnCsv(path: str, columns: tuple) -> pd.DataFrame:
    frame = readCsvTable(path, columns, columns, numeric=columns)
    for column in columns:
        empty = frame[column].isna()
        if empty.any():
            rowIndex = int(empty.to_numpy().nonzero()[0][0])
            raise MalformedCsvError(f"{path}: empty {column} cell", rowIndex + 2)
    return frame


def loadGrowthCurve(path: str, t0: Optional[float] = None) -> GrowthCurve:
    """Growth curve from a JSON document, or a year,cumulative_count CSV (tabulated)."""
    if path.lower().endswith(".csv"):
        frame = readTwoColumnCsv(path, ("year", "cumulative_count"))
        return growthFromDict({
            "variant": "tabulated",
            "years": frame["year"].tolist(),
            "counts": frame["cumulative_count"].tolist(),
            "t0": t0,
        })
    data = readJson(path)
    if t0 is not None:
        data["t0"] = t0
    curve = growthFromDict(data)
    logging.info(f"Loaded {curve.variant} growth curve from {path}.")
    return curve


def loadKernel(path: str) -> CitabilityKernel:
    """Kernel from a JSON document, or an age,probability CSV (tabulated)."""
    if path.lower().endswith(".csv"):
        frame = readTwoColumnCsv(path, ("age", "probability"))
        return kernelFromDict({
            "variant": "tabulated",
            "ages": frame["age"].tolist(),
            "probabilities": frame["probability"].tolist(),
        })
    kernel = kernelFromDict(readJson(path))
    logging.info(f"Loaded {kernel.variant} kernel from {path}.")
    return kernel


class SimulationConfigFile(BaseModel):
    model_config = ConfigDict(extra="forbid")
    growth: GrowthSpec
    kernel: KernelSpec
    t0: Optional[float] = Field(None, description="Window start; defaults to the growth curve's t0")
    t_end: float
    dt: float = Field(1.0, gt=0)
    seed: int = Field(0, ge=0)
    sampling_mode: Literal["per_cohort_binomial", "per_pair_bernoulli"] = "per_cohort_binomial"
    replications: int = Field(1, ge=1)
    final_cohort_size: Optional[int] = Field(None, ge=0)
    field: str = "simulated"
    workers: int = Field(1, ge=1)


def _resolveNestedPath(baseDir: str, value, loader):
    if isinstance(value, str):
        return loader(os.path.join(baseDir, value)).describe()
    return value


def simulationConfigFromDict(data: dict, baseDir: str = ".") -> SimulationConfig:
    data = dict(data)
    if "growth" in data:
        data["growth"] = _resolveNestedPath(baseDir, data["growth"], loadGrowthCurve)
    if "kernel" in data:
        data["kernel"] = _resolveNestedPath(baseDir, data["kernel"], loadKernel)
    spec = validateOrRaise(SimulationConfigFile, data, "simulation config")
    growth = spec.growth.build()
    t0 = spec.t0 if spec.t0 is not None else growth.t0
    if t0 is None:
        raise ConfigError("t0: a simulation needs a finite window start")
    return SimulationConfig(
        growth=growth,
        kernel=spec.kernel.build(),
        t0=t0,
        tEnd=spec.t_end,
        dt=spec.dt,
        seed=spec.seed,
        samplingMode=spec.sampling_mode,
        replications=spec.replications,
        finalCohortSize=spec.final_cohort_size,
        field=spec.field,
        workers=spec.workers,
    )


def loadSimulationConfig(path: str, overrides: dict = None) -> SimulationConfig:
    """Simulation run from JSON; growth and kernel may be inline specs or relative file paths."""
    data = readJson(path)
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    config = simulationConfigFromDict(data, baseDir=os.path.dirname(os.path.abspath(path)))
    logging.info(f"Loaded simulation config from {path}.")
    return config
