import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import json
import pandas as pd
from unittest.mock import MagicMock
import pytest
from main import main, parseAges, yearRange
from errors import ConfigError

@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "settings.json").write_text("{}")
    return tmp_path

def run(workdir, *argv):
    return main(["--settings", str(workdir / "settings.json"), *argv])

def writeJson(path, data):
    path.write_text(json.dumps(data))
    return str(path)

def testParseAges():
    assert parseAges("1, 2,5") == [1.0, 2.0, 5.0]
    assert parseAges("") == []
    with pytest.raises(ConfigError):
        parseAges("1,x")

def testYearRange():
    assert yearRange(2000, 2002, 1) == [2000, 2001, 2002]
    with pytest.raises(ConfigError):
        yearRange(2002, 2000, 1)

def testPredictZeroKernelAndQuadraticMeanAge(workdir):
    growth = writeJson(workdir / "growth.json", {"variant": "polynomial", "coefficients": [0, 0, 25], "t0": 0})
    kernel = writeJson(workdir / "kernel.json", {"variant": "constant", "q": 0})
    out = str(workdir / "predictions.csv")
    assert run(workdir, "predict", "--growth", growth, "--kernel", kernel, "--to-year", "10", "--out", out) == 0
    table = pd.read_csv(out)
    assert (table["l_star"] == 0).all()
    later = table[table["t"] > 0]
    assert later["mean_age"].tolist() == pytest.approx((later["t"] / 3).tolist())
    assert os.path.exists(out + ".manifest.json")

def testPredictTabulatedMatchesLinear(workdir):
    pSeries = workdir / "p.csv"
    pSeries.write_text("year,cumulative_count\n" + "".join(f"{y},{100 * y}\n" for y in range(11)))
    linear = writeJson(workdir / "linear.json", {"variant": "linear", "rate": 100, "t0": 0})
    kernel = writeJson(workdir / "kernel.json", {"variant": "constant", "q": 0.01})
    tabulatedOut = str(workdir / "tabulated.csv")
    linearOut = str(workdir / "linear.csv")
    common = ["--kernel", kernel, "--to-year", "10", "--ages", "1,2"]
    assert run(workdir, "predict", "--growth", str(pSeries), *common, "--out", tabulatedOut) == 0
    assert run(workdir, "predict", "--growth", linear, *common, "--out", linearOut) == 0
    pd.testing.assert_frame_equal(pd.read_csv(tabulatedOut), pd.read_csv(linearOut), rtol=1e-12)

def testRerunReproducesOutput(workdir):
    growth = writeJson(workdir / "growth.json", {"variant": "linear", "rate": 40, "t0": 0})
    kernel = writeJson(workdir / "kernel.json", {"variant": "exponential_decay", "q0": 0.05, "lambda": 0.2})
    out = workdir / "predictions.csv"
    assert run(workdir, "predict", "--growth", growth, "--kernel", kernel, "--to-year", "8", "--out", str(out)) == 0
    before = out.read_bytes()
    out.unlink()
    assert main(["rerun", "--manifest", str(out) + ".manifest.json"]) == 0
    assert out.read_bytes() == before

def simulationConfig(workdir, **overrides):
    data = {"growth": {"variant": "linear", "rate": 300, "t0": 2000}, "kernel": {"variant": "constant", "q": 0.002},
            "t_end": 2008, "seed": 5, "replications": 3}
    data.update(overrides)
    return writeJson(workdir / "sim.json", data)

def testSimulateIsDeterministic(workdir):
    config = simulationConfig(workdir)
    first, second = workdir / "first.csv", workdir / "second.csv"
    assert run(workdir, "simulate", "--config", config, "--out", str(first)) == 0
    assert run(workdir, "simulate", "--config", config, "--out", str(second)) == 0
    assert first.read_bytes() == second.read_bytes()
    assert run(workdir, "simulate", "--config", config, "--seed", "6", "--out", str(second)) == 0
    assert first.read_bytes() != second.read_bytes()

def testSimulateRerunFromManifest(workdir):
    config = simulationConfig(workdir)
    out = workdir / "corpus.csv"
    assert run(workdir, "simulate", "--config", config, "--out", str(out), "--stats-out", str(workdir / "stats.json")) == 0
    before = out.read_bytes()
    assert main(["rerun", "--manifest", str(out) + ".manifest.json"]) == 0
    assert out.read_bytes() == before

def recoveredFit(workdir, q, rate, replications, seed=5):
    config = simulationConfig(workdir, growth={"variant": "linear", "rate": rate, "t0": 2000},
                              kernel={"variant": "constant", "q": q}, t_end=2010,
                              replications=replications, seed=seed)
    articles, pSeries = str(workdir / "articles.csv"), str(workdir / "pseries.csv")
    aggregates, report = str(workdir / "aggregates.csv"), str(workdir / "fit.json")
    assert run(workdir, "simulate", "--config", config, "--out", str(workdir / "corpus.csv"),
               "--articles-out", articles, "--pseries-out", pSeries) == 0
    assert run(workdir, "ingest", "--in", articles, "--min-refs", "0", "--out", aggregates) == 0
    assert run(workdir, "fit", "--aggregate", aggregates, "--pseries", pSeries, "--mode", "LvP", "--out", report) == 0
    return json.loads((workdir / "fit.json").read_text())[0]

@pytest.mark.parametrize("q", [1e-4, 1e-3])
def testSimulateIngestFitRecoversQ(workdir, q):
    fit = recoveredFit(workdir, q, rate=2000, replications=5)
    assert fit["slope"] == pytest.approx(q, rel=0.05)
    assert fit["r_squared"] > 0.99

def testAffineQErrorShrinksWithCorpusSize(workdir):
    q = 1e-3
    def rmsError(rate, replications):
        errors = [recoveredFit(workdir, q, rate, replications, seed)["slope"] - q for seed in range(5)]
        return (sum(e * e for e in errors) / len(errors)) ** 0.5
    # 100x the articles per year should cut the error about tenfold
    assert rmsError(1000, 10) < rmsError(100, 1) / 3

def testDistFitAcceptsSimulatedHistogram(workdir):
    config = simulationConfig(workdir, growth={"variant": "linear", "rate": 5000, "t0": 0}, t_end=1,
                              kernel={"variant": "constant", "q": 0.004}, final_cohort_size=10000, replications=1)
    hist, pSeries, out = str(workdir / "hist.csv"), str(workdir / "pseries.csv"), workdir / "distfit.json"
    assert run(workdir, "simulate", "--config", config, "--out", str(workdir / "corpus.csv"),
               "--histogram-out", hist, "--pseries-out", pSeries) == 0
    assert run(workdir, "distfit", "--hist", hist, "--ntrials", pSeries, "--out", str(out)) == 0
    result = json.loads(out.read_text())
    assert result["n_trials"] == 5000
    assert result["p_value"] > 0.01
    assert abs(result["p_hat"] - 0.004) < 3 * result["p_stderr"]

def testAgeStatsReport(workdir):
    config = simulationConfig(workdir, growth={"variant": "polynomial", "coefficients": [0, 0, 34.72], "t0": 0},
                              t_end=12, replications=20)
    out = workdir / "agestats.json"
    assert run(workdir, "agestats", "--config", config, "--at", "12", "--out", str(out)) == 0
    report = json.loads(out.read_text())
    assert report["predicted"]["mean_age"] == pytest.approx(4.0)
    assert report["empirical"]["mean_age"] == pytest.approx(4.0, rel=0.02)

def testMissingInputExitCode(workdir, capsys):
    kernel = writeJson(workdir / "kernel.json", {"variant": "constant", "q": 0.01})
    status = run(workdir, "predict", "--growth", str(workdir / "absent.json"), "--kernel", kernel, "--to-year", "5")
    assert status == 3
    payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert payload["category"] == "io"

def testInvalidConfigExitCode(workdir, capsys):
    growth = writeJson(workdir / "growth.json", {"variant": "linear", "rate": 10})
    kernel = writeJson(workdir / "kernel.json", {"variant": "constant", "q": 2})
    status = run(workdir, "predict", "--growth", growth, "--kernel", kernel, "--to-year", "5",
                 "--out", str(workdir / "p.csv"))
    assert status == 2
    payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert payload["status"] == "error"
    assert "q" in payload["error"]

def testDegenerateFitExitCode(workdir):
    aggregates = workdir / "aggregates.csv"
    aggregates.write_text("year,field,article_count,mean_refs,median_refs\n2000,econ,3,5.0,5.0\n")
    status = run(workdir, "fit", "--aggregate", str(aggregates), "--mode", "LvT", "--out", str(workdir / "fit.json"))
    assert status == 6

def testRerunKeepsRecordedSettings(workdir):
    articles = workdir / "articles.csv"
    articles.write_text("year,n_references\n2000,10\n2000,12\n2005,20\n")
    out = workdir / "aggregates.csv"
    assert run(workdir, "ingest", "--in", str(articles), "--min-refs", "0", "--out", str(out)) == 0
    before = out.read_bytes()
    (workdir / "settings.json").write_text(json.dumps({"max_year": 2002}))
    assert main(["rerun", "--manifest", str(out) + ".manifest.json"]) == 0
    assert out.read_bytes() == before
    fresh = workdir / "fresh.csv"
    assert run(workdir, "ingest", "--in", str(articles), "--min-refs", "0", "--out", str(fresh)) == 0
    assert fresh.read_bytes() != before

def crossrefResponse(url, *args, **kwargs):
    doi = url.rsplit("/", 1)[1]
    response = MagicMock()
    response.headers = {}
    if doi == "10.1%2Fbroken":
        response.status_code = 500
        response.text = ""
    elif doi == "10.1%2Fmissing":
        response.status_code = 404
        response.text = json.dumps({"status": "error"})
    else:
        response.status_code = 200
        response.text = json.dumps({"status": "ok", "message": {
            "reference-count": 20, "page": "1-12", "published-print": {"date-parts": [[2004]]}}})
    return response

def testHarvestRerunReplaysOffline(workdir, monkeypatch):
    (workdir / "settings.json").write_text(json.dumps({"harvest_max_retries": 0}))
    dois = workdir / "dois.txt"
    dois.write_text("10.1/a,econ\n10.1/b\n10.1/missing\n10.1/broken\n")
    monkeypatch.setattr('requests.get', crossrefResponse)
    out = workdir / "harvest.csv"
    failures = workdir / "harvest.csv.failures.json"
    assert run(workdir, "harvest", "--dois", str(dois), "--rate", "1000", "--cache", str(workdir / "cache"),
               "--out", str(out)) == 0
    before = (out.read_bytes(), failures.read_bytes())
    def noNetwork(*args, **kwargs):
        raise AssertionError("network used during rerun")
    monkeypatch.setattr('requests.get', noNetwork)
    assert main(["rerun", "--manifest", str(out) + ".manifest.json"]) == 0
    assert (out.read_bytes(), failures.read_bytes()) == before
    reasons = {f["doi"]: f["reason"] for f in json.loads(failures.read_text())["failures"]}
    assert reasons == {"10.1/missing": "not-found", "10.1/broken": "server-error"}
