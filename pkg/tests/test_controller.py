import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import pytest
from fastapi.testclient import TestClient
from controller import app

client = TestClient(app)

def testRootRedirectsToDocs():
    response = client.get("/", follow_redirects=False)
    assert response.status_code in (302, 307)
    assert response.headers["location"] == "/docs"

def testPredict():
    payload = {
        "growth": {"variant": "polynomial", "coefficients": [0, 0, 10], "t0": 0},
        "kernel": {"variant": "constant", "q": 0.01},
        "years": [0, 6],
        "ages": [3],
    }
    response = client.post("/predict", json=payload)
    assert response.status_code == 200
    rows = response.json()["rows"]
    assert rows[0]["mean_age"] is None
    assert rows[1]["l_star"] == pytest.approx(3.6)
    assert rows[1]["mean_age"] == pytest.approx(2.0)
    assert rows[1]["survival"] == [{"age": 3.0, "fraction": pytest.approx(0.25)}]

def testPredictRejectsUnknownVariant():
    payload = {"growth": {"variant": "logistic"}, "kernel": {"variant": "constant", "q": 0.01}, "years": [1]}
    assert client.post("/predict", json=payload).status_code == 422

def testPredictDomainErrorPayload():
    payload = {"growth": {"variant": "linear", "rate": 10, "t0": 2000},
               "kernel": {"variant": "constant", "q": 0.01}, "years": [1990]}
    response = client.post("/predict", json=payload)
    assert response.status_code == 422
    assert response.json()["category"] == "numeric"

def testOls():
    response = client.post("/fit/ols", json={"x": [1, 2, 3], "y": [1, 3, 2]})
    assert response.status_code == 200
    assert response.json()["slope"] == pytest.approx(0.5)
    assert response.json()["r_squared"] == pytest.approx(0.25)

def testOlsDegenerate():
    response = client.post("/fit/ols", json={"x": [2, 2], "y": [1, 3]})
    assert response.status_code == 422
    assert response.json()["category"] == "data-quality"

def testBinomial():
    response = client.post("/fit/binomial", json={"counts": [0, 0, 5], "n_trials": 2})
    assert response.status_code == 200
    assert response.json()["p_hat"] == 1

def testBinomialTrailingZeroCounts():
    response = client.post("/fit/binomial", json={"counts": [5, 3, 0, 0, 0], "n_trials": 2})
    assert response.status_code == 200
    assert response.json()["p_hat"] == pytest.approx(3 / 16)

def testBinomialNegativeCounts():
    response = client.post("/fit/binomial", json={"counts": [3, -1], "n_trials": 2})
    assert response.status_code == 422

def testAgeSurvival():
    payload = {"growth": {"variant": "linear", "rate": 20, "t0": 0}, "t": 10, "ages": [0, 5]}
    response = client.post("/age-survival", json=payload)
    assert response.status_code == 200
    body = response.json()
    assert body["mean_age"] == pytest.approx(5.0)
    assert body["median_age"] == pytest.approx(5.0)
    assert [p["fraction"] for p in body["survival"]] == pytest.approx([1.0, 0.5])
