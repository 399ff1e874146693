import argparse
import json
import logging
import sys

import pandas as pd

from config_loader import (ToolkitSettings, loadGrowthCurve, loadKernel, loadSettings, loadSimulationConfig,
                           validateOrRaise)
from corpus import CorpusService
from crossref_harvest import CrossrefHarvester
from crossref_harvest.harvester import readDoiFile
from errors import ConfigError, EmptyInputError, ToolkitError
from inference import ALL_FIELDS, ModelFitter
from reference_model import ReferenceModelService
from run_manifest import RunManifest, loadManifest, writeManifest
from simulation import CitationSimulator

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s",
    handlers=[logging.StreamHandler()]
)

PRECEDENCE_NOTE = ("Settings precedence: command-line flags, then REFGROWTH_* environment variables, "
                   "then the settings file (config.json), then built-in defaults.")


def parseAges(text: str) -> list:
    if not text:
        return []
    try:
        ages = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"--ages must be comma-separated numbers, got '{text}'") from e
    if any(a < 0 for a in ages):
        raise ConfigError(f"--ages must be >= 0, got '{text}'")
    return ages


def yearRange(fromYear: float, toYear: float, step: float) -> list:
    if step <= 0:
        raise ConfigError(f"--step must be > 0, got {step}")
    if toYear < fromYear:
        raise ConfigError(f"--to-year {toYear} precedes --from-year {fromYear}")
    count = int(round((toYear - fromYear) / step))
    return [fromYear + i * step for i in range(count + 1)]


def buildParser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="refgrowth",
        description="Reference-list growth model: predictions, simulation, fitting and corpus ingestion.",
        epilog=PRECEDENCE_NOTE,
    )
    parser.add_argument("--settings", default=None, help="Settings JSON (default: config.json or $REFGROWTH_CONFIG)")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="Warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    predict = commands.add_parser("predict", help="Tabulate P*, L*, mean/median age and survival per year",
                                  epilog=PRECEDENCE_NOTE)
    predict.add_argument("--growth", required=True, help="Growth curve JSON, or year,cumulative_count CSV")
    predict.add_argument("--kernel", required=True, help="Kernel JSON, or age,probability CSV")
    predict.add_argument("--t0", type=float, default=None, help="Override the growth curve's t0")
    predict.add_argument("--from-year", type=float, default=None, help="First year (default: t0)")
    predict.add_argument("--to-year", type=float, required=True, help="Last year")
    predict.add_argument("--step", type=float, default=1.0, help="Year step")
    predict.add_argument("--ages", default="", help="Survival ages, e.g. 1,2,5")
    predict.add_argument("--out", default="predictions.csv", help="Output CSV")

    simulate = commands.add_parser("simulate", help="Draw synthetic corpora under the Bernoulli citation process",
                                   epilog=PRECEDENCE_NOTE)
    simulate.add_argument("--config", required=True, help="Simulation JSON")
    simulate.add_argument("--seed", type=int, default=None, help="Override the config seed")
    simulate.add_argument("--replications", type=int, default=None, help="Override replications")
    simulate.add_argument("--sampling-mode", choices=("per_cohort_binomial", "per_pair_bernoulli"), default=None)
    simulate.add_argument("--workers", type=int, default=None, help="Worker processes for replications")
    simulate.add_argument("--out", default="corpus.csv", help="Article-level corpus CSV")
    simulate.add_argument("--articles-out", default=None, help="Ingest-schema article CSV")
    simulate.add_argument("--pseries-out", default=None, help="year,cumulative_count CSV of citable articles")
    simulate.add_argument("--histogram-out", default=None, help="Final-cohort year,length,count CSV")
    simulate.add_argument("--stats-out", default=None, help="Per-cohort length statistics JSON")

    agestats = commands.add_parser("agestats", help="Predicted against simulated reference-age statistics",
                                   epilog=PRECEDENCE_NOTE)
    agestats.add_argument("--config", required=True, help="Simulation JSON")
    agestats.add_argument("--at", type=float, required=True, help="Cohort year to report")
    agestats.add_argument("--seed", type=int, default=None, help="Override the config seed")
    agestats.add_argument("--replications", type=int, default=None, help="Override replications")
    agestats.add_argument("--ages", default="", help="Survival ages (default: every integer age in the window)")
    agestats.add_argument("--out", default="agestats.json", help="Output JSON")

    fit = commands.add_parser("fit", help="OLS fits of yearly aggregates", epilog=PRECEDENCE_NOTE)
    fit.add_argument("--aggregate", required=True, help="year,field,article_count,mean_refs,median_refs CSV")
    fit.add_argument("--pseries", default=None, help="year,cumulative_count[,field] CSV")
    fit.add_argument("--mode", choices=("LvT", "PvT", "LvP", "increment"), required=True)
    fit.add_argument("--statistic", choices=("mean", "median"), default="mean")
    fit.add_argument("--out", default="fit.json", help="Fit report JSON")
    fit.add_argument("--plot-out", default=None, help="Plot CSV field,mode,x,y,fitted")

    distfit = commands.add_parser("distfit", help="Binomial fit of a reference-list length histogram",
                                  epilog=PRECEDENCE_NOTE)
    distfit.add_argument("--hist", required=True, help="year,length,count CSV")
    distfit.add_argument("--ntrials", required=True, help="Integer n, or a P(t) CSV to read n at the year")
    distfit.add_argument("--year", type=int, default=None, help="Histogram year (default: latest)")
    distfit.add_argument("--out", default="distfit.json", help="Output JSON")

    ingest = commands.add_parser("ingest", help="Filter an article CSV and aggregate per year",
                                 epilog=PRECEDENCE_NOTE)
    ingest.add_argument("--in", dest="inputPath", required=True, help="id,year,field,n_references,n_pages CSV")
    ingest.add_argument("--min-refs", type=int, default=5, help="Drop articles with fewer references")
    ingest.add_argument("--from-year", type=int, default=None, help="Earliest year kept")
    ingest.add_argument("--to-year", type=int, default=None, help="Latest year kept")
    ingest.add_argument("--out", default="aggregates.csv", help="Yearly aggregate CSV")
    ingest.add_argument("--filtered-out", default=None, help="Retained articles CSV")

    harvest = commands.add_parser("harvest", help="Fetch reference counts per DOI", epilog=PRECEDENCE_NOTE)
    harvest.add_argument("--dois", required=True, help="One DOI per line, optional ',field'")
    harvest.add_argument("--endpoint", default=None, help="Metadata API base URL [$REFGROWTH_ENDPOINT]")
    harvest.add_argument("--rate", type=float, default=None, help="Requests per second [$REFGROWTH_RATE]")
    harvest.add_argument("--cache", default=None, help="Cache directory [$REFGROWTH_CACHE_DIR]")
    harvest.add_argument("--concurrency", type=int, default=None, help="Parallel requests [$REFGROWTH_CONCURRENCY]")
    harvest.add_argument("--offline", action="store_true", help="Replay from cache only")
    harvest.add_argument("--out", default="harvest.csv", help="Ingest-schema article CSV")

    rerun = commands.add_parser("rerun", help="Replay a run from its manifest")
    rerun.add_argument("--manifest", required=True, help="Path to a .manifest.json file")

    serve = commands.add_parser("serve", help="Serve the model over HTTP")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def parseArgs(argv: list) -> argparse.Namespace:
    return buildParser().parse_args(argv)


def runPredict(args, settings, argv: list) -> None:
    curve = loadGrowthCurve(args.growth, t0=args.t0)
    kernel = loadKernel(args.kernel)
    fromYear = args.from_year if args.from_year is not None else curve.t0
    if fromYear is None:
        raise ConfigError("--from-year is required for a curve without a finite t0")
    years = yearRange(fromYear, args.to_year, args.step)
    modelService = ReferenceModelService(settings.quad_abs_tolerance, settings.quad_rel_tolerance,
                                         settings.bisection_tolerance)
    rows = modelService.predictionTable(kernel, curve, years, parseAges(args.ages))
    pd.DataFrame(rows).to_csv(args.out, index=False)
    logging.info(f"Wrote {len(rows)} prediction rows to {args.out}.")
    writeManifest(RunManifest(
        command="predict", argv=argv, settings=settings.model_dump(),
        config={"growth": curve.describe(), "kernel": kernel.describe(), "years": years,
                "ages": parseAges(args.ages)},
        inputs=[args.growth, args.kernel], outputs=[args.out],
    ), args.out)


def runSimulate(args, settings, argv: list) -> None:
    config = loadSimulationConfig(args.config, {
        "seed": args.seed, "replications": args.replications,
        "sampling_mode": args.sampling_mode, "workers": args.workers,
    })
    simulator = CitationSimulator(settings.max_pair_budget)
    corpus = simulator.simulate(config)
    simulator.writeCorpusCsv(corpus, args.out)
    outputs = [args.out]
    if args.articles_out:
        simulator.writeArticlesCsv(corpus, args.articles_out)
        outputs.append(args.articles_out)
    if args.pseries_out:
        simulator.writePSeriesCsv(corpus, args.pseries_out)
        outputs.append(args.pseries_out)
    if args.histogram_out:
        simulator.writeHistogramCsv(corpus, args.histogram_out)
        outputs.append(args.histogram_out)
    if args.stats_out:
        stats = simulator.empiricalLengthStats(corpus)
        with open(args.stats_out, "w") as statsFile:
            json.dump([s.model_dump() for s in stats], statsFile, indent=2)
        outputs.append(args.stats_out)
    writeManifest(RunManifest(
        command="simulate", argv=argv, settings=settings.model_dump(),
        config=config.describe(), seed=config.seed,
        inputs=[args.config], outputs=outputs,
    ), args.out)


def runAgeStats(args, settings, argv: list) -> None:
    config = loadSimulationConfig(args.config, {"seed": args.seed, "replications": args.replications})
    simulator = CitationSimulator(settings.max_pair_budget)
    modelService = ReferenceModelService(settings.quad_abs_tolerance, settings.quad_rel_tolerance,
                                         settings.bisection_tolerance)
    corpus = simulator.simulate(config)
    ages = parseAges(args.ages) or None
    empirical = simulator.empiricalAgeStats(corpus, args.at, ages)
    survivalAges = [point.age for point in empirical.survival or []]
    predicted = modelService.ageStatistics(config.growth, args.at, survivalAges)
    report = {
        "year": args.at,
        "predicted": predicted.model_dump(),
        "empirical": empirical.model_dump(),
        "predicted_kernel_mean_age": modelService.kernelMeanAge(config.kernel, config.growth, args.at),
        "cohorts": simulator.compareAgeStatistics(corpus, config, modelService),
    }
    with open(args.out, "w") as reportFile:
        json.dump(report, reportFile, indent=2)
    logging.info(f"Wrote age statistics for t={args.at} to {args.out}.")
    writeManifest(RunManifest(
        command="agestats", argv=argv, settings=settings.model_dump(),
        config=config.describe(), seed=config.seed,
        inputs=[args.config], outputs=[args.out],
    ), args.out)


def runFit(args, settings, argv: list) -> None:
    corpusService = CorpusService(settings.min_year, settings.max_year)
    fitter = ModelFitter()
    aggregates = corpusService.readAggregateCsv(args.aggregate)
    pSeries = fitter.readPSeries(args.pseries) if args.pseries else None
    fits = fitter.fitSeries(aggregates, pSeries, args.mode, args.statistic)
    fitter.writeFitReport(fits, args.out)
    outputs = [args.out]
    if args.plot_out:
        fitter.writePlotCsv(fits, args.plot_out)
        outputs.append(args.plot_out)
    writeManifest(RunManifest(
        command="fit", argv=argv, settings=settings.model_dump(),
        config={"mode": args.mode, "statistic": args.statistic},
        inputs=[p for p in (args.aggregate, args.pseries) if p], outputs=outputs,
    ), args.out)


def resolveTrials(fitter: ModelFitter, ntrials: str, year: float) -> int:
    if ntrials.strip().isdigit():
        return int(ntrials)
    series = fitter.readPSeries(ntrials)
    if len(series) != 1 and ALL_FIELDS not in series:
        raise ConfigError(f"{ntrials} holds several fields; give --ntrials as an integer")
    values = series.get(ALL_FIELDS) or next(iter(series.values()))
    if int(year) not in values:
        raise EmptyInputError(f"{ntrials} has no P(t) value for year {int(year)}")
    return int(round(values[int(year)]))


def runDistFit(args, settings, argv: list) -> None:
    fitter = ModelFitter()
    hist = fitter.readHistogram(args.hist, args.year)
    nTrials = resolveTrials(fitter, args.ntrials, hist.year)
    result = fitter.fitBinomial(hist, nTrials)
    with open(args.out, "w") as resultFile:
        json.dump({"year": hist.year, **result.model_dump()}, resultFile, indent=2)
    logging.info(f"Wrote binomial fit to {args.out}.")
    writeManifest(RunManifest(
        command="distfit", argv=argv, settings=settings.model_dump(),
        config={"n_trials": nTrials, "year": hist.year},
        inputs=[args.hist, args.ntrials], outputs=[args.out],
    ), args.out)


def runIngest(args, settings, argv: list) -> None:
    corpusService = CorpusService(settings.min_year, settings.max_year)
    records, report = corpusService.loadAndFilter(args.inputPath, args.min_refs, args.from_year, args.to_year)
    aggregates = corpusService.aggregateYearly(records)
    corpusService.writeAggregateCsv(aggregates, args.out)
    outputs = [args.out]
    if args.filtered_out:
        corpusService.writeRecordsCsv(records, args.filtered_out)
        outputs.append(args.filtered_out)
    writeManifest(RunManifest(
        command="ingest", argv=argv, settings=settings.model_dump(),
        config={"min_refs": args.min_refs, "from_year": args.from_year, "to_year": args.to_year,
                "min_year": settings.min_year, "max_year": settings.max_year,
                "filter_report": report.model_dump()},
        inputs=[args.inputPath], outputs=outputs,
    ), args.out)


def runHarvest(args, settings, argv: list) -> None:
    endpoint = args.endpoint or settings.harvest_endpoint
    rate = args.rate if args.rate is not None else settings.harvest_rate
    cacheDir = args.cache or settings.harvest_cache_dir
    concurrency = args.concurrency if args.concurrency is not None else settings.harvest_concurrency
    harvester = CrossrefHarvester(
        endpoint=endpoint, rate=rate, cacheDir=cacheDir, concurrency=concurrency,
        maxRetries=settings.harvest_max_retries, backoffSeconds=settings.harvest_backoff_seconds,
        maxBackoffSeconds=settings.harvest_max_backoff_seconds, timeoutSeconds=settings.harvest_timeout_seconds,
        userAgent=settings.user_agent, offline=args.offline,
    )
    records, report = harvester.harvest(readDoiFile(args.dois))
    CorpusService(settings.min_year, settings.max_year).writeRecordsCsv(records, args.out)
    failuresPath = f"{args.out}.failures.json"
    harvester.writeFailures(report, failuresPath)
    # replays go offline so they never touch the network
    replayArgv = argv if "--offline" in argv else argv + ["--offline"]
    writeManifest(RunManifest(
        command="harvest", argv=replayArgv, settings=settings.model_dump(),
        config={"endpoint": endpoint, "rate": rate, "cache": cacheDir, "concurrency": concurrency},
        inputs=[args.dois], outputs=[args.out, failuresPath],
    ), args.out)


def runRerun(args, settings, argv: list) -> int:
    """Replay a manifest with the settings it recorded; the current config.json and environment are ignored."""
    manifest = loadManifest(args.manifest)
    replayArgs = parseArgs(manifest.argv)
    if manifest.settings is not None:
        settings = validateOrRaise(ToolkitSettings, manifest.settings, f"settings in {args.manifest}")
    else:
        settings = loadSettings(replayArgs.settings)
    logging.info(f"Replaying '{manifest.command}' from {args.manifest}.")
    return HANDLERS[replayArgs.command](replayArgs, settings, manifest.argv) or 0


def runServe(args, settings, argv: list) -> None:
    import uvicorn
    from controller import app
    logging.info("Starting server...")
    uvicorn.run(app, host=args.host, port=args.port)


HANDLERS = {
    "predict": runPredict,
    "simulate": runSimulate,
    "agestats": runAgeStats,
    "fit": runFit,
    "distfit": runDistFit,
    "ingest": runIngest,
    "harvest": runHarvest,
    "rerun": runRerun,
    "serve": runServe,
}


def main(argv: list = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parseArgs(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    elif args.quiet:
        logging.getLogger().setLevel(logging.WARNING)
    try:
        settings = loadSettings(args.settings)
        status = HANDLERS[args.command](args, settings, argv)
        return status or 0
    except ToolkitError as e:
        logging.error(f"{args.command} failed ({e.category}): {e}")
        print(json.dumps(e.toPayload()), file=sys.stderr)
        return e.exitCode
    except Exception as e:
        logging.exception(f"{args.command} failed unexpectedly")
        print(json.dumps({"status": "error", "category": "internal", "error": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
