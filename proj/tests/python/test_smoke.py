"""Smoke tests for the Python bindings: the main operations run end to end."""

import math

import pytest

import voikit


def test_builtin_models_listed():
    names = voikit.builtin_models()
    assert "linear-normal" in names
    assert "dr-tox" in names


def test_run_psa_is_deterministic():
    a = voikit.run_psa("beta-binomial", s=100, seed=7)
    b = voikit.run_psa("beta-binomial", s=100, seed=7)
    assert a.rows == 100
    assert a.parameter("p") == b.parameter("p")


def test_csv_round_trip():
    ds = voikit.run_psa("linear-normal", s=50, seed=3)
    again = voikit.PsaDataset.from_csv(ds.to_csv())
    assert again.parameter("phi") == ds.parameter("phi")


def test_evpi_and_curves():
    ds = voikit.run_psa("beta-binomial", s=2000, seed=1)
    est = voikit.evpi(ds, lam=20000.0)
    assert est["kind"] == "EVPI"
    assert est["value"] >= 0.0
    rows = voikit.curves(ds, [10000.0, 20000.0])
    ceac_at_first_lambda = [r["ceac"] for r in rows if r["lambda"] == 10000.0]
    assert math.isclose(sum(ceac_at_first_lambda), 1.0)


def test_evppi_and_evsi_chain():
    ds = voikit.run_psa("beta-binomial", s=2000, seed=11)
    evppi, aug = voikit.evppi(ds, ["p"], 20000.0, bootstrap=0)
    evpi = voikit.evpi(ds, 20000.0)
    assert 0.0 <= evppi["value"] <= evpi["value"] + 3.0 * (evpi["mc_se"] or 0.0)

    ga = voikit.evsi_ga(ds, "beta-binomial", [10, 50, 250], lam=20000.0)
    values = [row["value"] for row in ga]
    assert values == sorted(values)  # GA is monotone in N on a fixed PSA
    assert values[-1] <= evppi["value"] * 1.05 + 1.0

    is_est = voikit.evsi_is(aug, "beta-binomial", 50, lam=20000.0, seed=5)
    assert is_est["method"] == "is"
    assert is_est["value"] >= 0.0


def test_enbs_curve():
    result = voikit.enbs(
        [(10, 1.0), (50, 2.0), (250, 2.5)],
        incidence=1000.0,
        horizon=1,
        discount=0.0,
        fixed_cost=100.0,
        cost_per_participant=5.0,
    )
    assert result["optimal_N"] == 50
    assert result["research_worthwhile"]


def test_population_scale_discounting():
    value = voikit.population_scale(10.0, incidence=1000.0, horizon=2, discount=0.035)
    assert round(value, 2) == 19661.84


def test_errors_surface_as_voikit_error():
    with pytest.raises(voikit.VoikitError):
        voikit.run_psa("no-such-model", s=10, seed=1)
