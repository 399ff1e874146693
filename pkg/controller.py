from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse, RedirectResponse
from pydantic import BaseModel, Field
from typing import Optional
import logging
from config_loader import GrowthSpec, KernelSpec, loadSettings
from errors import InconsistentHistogramError, ToolkitError
from inference import BinomialFit, FitResult, LengthHistogram, ModelFitter
from reference_model import AgeStatistics, ReferenceModelService, SurvivalPoint

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s",
    handlers=[logging.StreamHandler()]
)

# --- Pydantic Request/Response Models ---
class PredictRequest(BaseModel):
    growth: GrowthSpec = Field(..., description="Growth curve config, keyed by variant")
    kernel: KernelSpec = Field(..., description="Citability kernel config, keyed by variant")
    years: list[float] = Field(..., min_length=1, description="Publication times to evaluate")
    ages: list[float] = Field(default_factory=list, description="Survival ages")

class PredictionRow(BaseModel):
    t: float = Field(..., description="Publication time")
    p_star: float = Field(..., description="Citable articles since t0")
    l_star: float = Field(..., description="Expected reference-list length")
    mean_age: Optional[float] = Field(None, description="Uniform-model mean reference age")
    median_age: Optional[float] = Field(None, description="Uniform-model median reference age")
    kernel_mean_age: Optional[float] = Field(None, description="Mean reference age under the given kernel")
    survival: list[SurvivalPoint] = Field(default_factory=list, description="Age-survival fractions")

class PredictResponse(BaseModel):
    rows: list[PredictionRow]

class OlsRequest(BaseModel):
    x: list[float] = Field(..., description="Regressor values")
    y: list[float] = Field(..., description="Response values")

class BinomialRequest(BaseModel):
    counts: list[int] = Field(..., description="Articles per reference-list length; index is the length")
    n_trials: int = Field(..., description="Binomial n")
    year: float = Field(0.0, description="Cohort year, informational")

class AgeSurvivalRequest(BaseModel):
    growth: GrowthSpec = Field(..., description="Growth curve config, keyed by variant")
    t: float = Field(..., description="Publication time")
    ages: list[float] = Field(default_factory=list, description="Survival ages")

SETTINGS = loadSettings()
MODEL_SERVICE = ReferenceModelService(SETTINGS.quad_abs_tolerance, SETTINGS.quad_rel_tolerance,
                                      SETTINGS.bisection_tolerance)
MODEL_FITTER = ModelFitter()

app = FastAPI(
    title="refgrowth API",
    version="1.0.0",
    description=(
        "Reference-list growth model over HTTP.\n\n"
        "Evaluates expected reference-list lengths and reference-age statistics for a growth curve "
        "and citability kernel, and fits least-squares lines and binomial length distributions."
    ),
    docs_url="/docs",
    redoc_url="/redoc"
)

@app.exception_handler(ToolkitError)
async def toolkitErrorHandler(request: Request, exc: ToolkitError):
    logging.error(f"{request.url.path} failed ({exc.category}): {exc}")
    return JSONResponse(status_code=422, content=exc.toPayload())

@app.get("/", include_in_schema=False)
def root_redirect():
    return RedirectResponse(url="/docs")

predict_example = {
    "growth": {"variant": "polynomial", "coefficients": [0, 0, 34.7], "t0": 0},
    "kernel": {"variant": "constant", "q": 0.002},
    "years": [4, 8, 12],
    "ages": [1, 2, 5]
}

@app.post(
    "/predict",
    summary="Model predictions",
    description="P*, expected list length, mean/median reference age and survival per publication time.",
    response_model=PredictResponse,
    tags=["Model"]
)
def predict(payload: PredictRequest = Body(..., examples=[predict_example])):
    rows = MODEL_SERVICE.predictionTable(payload.kernel.build(), payload.growth.build(), payload.years, payload.ages)
    result = []
    for row in rows:
        survival = [SurvivalPoint(age=a, fraction=row[f"survival_{a:g}"])
                    for a in payload.ages if row[f"survival_{a:g}"] is not None]
        result.append(PredictionRow(
            t=row["t"], p_star=row["p_star"], l_star=row["l_star"], mean_age=row["mean_age"],
            median_age=row["median_age"], kernel_mean_age=row["kernel_mean_age"], survival=survival
        ))
    return PredictResponse(rows=result)

@app.post(
    "/fit/ols",
    summary="Least-squares line",
    description="Slope, intercept and R² of an unweighted least-squares fit.",
    response_model=FitResult,
    tags=["Fitting"]
)
def fitOls(payload: OlsRequest):
    return MODEL_FITTER.olsFit(payload.x, payload.y)

@app.post(
    "/fit/binomial",
    summary="Binomial length fit",
    description="Estimate p for Bin(n_trials, p) and test the fit with a pooled Pearson chi-square.",
    response_model=BinomialFit,
    tags=["Fitting"]
)
def fitBinomial(payload: BinomialRequest):
    if any(c < 0 for c in payload.counts):
        raise InconsistentHistogramError("histogram counts must be >= 0")
    hist = LengthHistogram(year=payload.year, counts=payload.counts, total=sum(payload.counts))
    return MODEL_FITTER.fitBinomial(hist, payload.n_trials)

@app.post(
    "/age-survival",
    summary="Reference-age statistics",
    description="Uniform-model mean and median reference age plus survival fractions at the given ages.",
    response_model=AgeStatistics,
    tags=["Model"]
)
def ageSurvival(payload: AgeSurvivalRequest):
    return MODEL_SERVICE.ageStatistics(payload.growth.build(), payload.t, payload.ages)
