import json
import math

import numpy as np
import pytest

from ivnonasym.exceptions import DataFormatError, DomainError
from ivnonasym.experiments import (
    ExperimentManifest,
    STUDIES,
    default_manifest,
    growing_dimension,
    load_manifest,
    run_study,
)


def tiny_manifest(study: str, seed=7) -> ExperimentManifest:
    if study == "endogeneity-sweep":
        return ExperimentManifest(
            study=study, M=25, n=80, d=2, eta_grid=[0.0, 1.0], seed=seed,
            mc_reps=20, prefactor_reps=5,
        )
    if study == "growing-dims":
        return ExperimentManifest(
            study=study, M=20, n_grid=[64, 128], seed=seed, mc_reps=20, prefactor_reps=5,
        )
    if study == "hard-tracewise":
        return ExperimentManifest(
            study=study, M=30, n=64, d=3, omega_grid=[0.0, 1.0],
            eta=0.1, nu=1.0, seed=seed,
        )
    if study == "corrected-ci-small-kappa":
        return ExperimentManifest(
            study=study, M=40, n=64, alpha1_grid=[4.0], b=1.0, seed=seed, kde_points=31,
        )
    return ExperimentManifest(
        study=study, M=40, n=64, alpha1_grid=[0.25], b=1.0,
        eta=0.1, nu=10.0, seed=seed, kde_points=31,
    )


class TestManifest:
    @pytest.mark.parametrize("study", STUDIES)
    def test_defaults_valid(self, study):
        m = default_manifest(study, seed=1)
        assert m.study == study and m.seed == 1

    def test_json_roundtrip(self, tmp_path):
        m = tiny_manifest("hard-tracewise")
        path = tmp_path / "m.json"
        path.write_text(m.to_json(), encoding="utf-8")
        back = load_manifest(path)
        assert back == m

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"study": "growing-dims", "M": 5, "n_grid": [8], "bogus": 1}))
        with pytest.raises(DataFormatError):
            load_manifest(path)

    def test_unknown_study(self):
        with pytest.raises(DataFormatError):
            ExperimentManifest(study="nope", M=10)

    def test_missing_required_field(self):
        with pytest.raises(DataFormatError):
            ExperimentManifest(study="endogeneity-sweep", M=10, n=100, d=2)

    def test_unsorted_grid(self):
        with pytest.raises(DataFormatError):
            ExperimentManifest(
                study="endogeneity-sweep", M=10, n=100, d=2, eta_grid=[1.0, 0.0]
            )

    def test_empty_grid(self):
        with pytest.raises(DataFormatError):
            ExperimentManifest(study="growing-dims", M=10, n_grid=[])

    def test_requires_seed_to_run(self):
        m = tiny_manifest("growing-dims", seed=None)
        with pytest.raises(DomainError):
            run_study(m)


class TestGrowingDimension:
    def test_values(self):
        # ceil(n ** 0.3) in IEEE double; 1024**0.3 lands just below 8
        assert [growing_dimension(n) for n in (256, 1024, 4096)] == [6, 8, 13]


class TestReproducibility:
    @pytest.mark.parametrize("study", STUDIES)
    def test_identical_seed_identical_csv(self, study):
        m = tiny_manifest(study)
        a = run_study(m).to_csv_string()
        b = run_study(tiny_manifest(study)).to_csv_string()
        assert a == b

    def test_different_seed_differs(self):
        a = run_study(tiny_manifest("hard-tracewise", seed=1)).to_csv_string()
        b = run_study(tiny_manifest("hard-tracewise", seed=2)).to_csv_string()
        assert a != b

    @pytest.mark.parametrize("study", ["hard-tracewise", "corrected-ci-small-kappa"])
    def test_worker_count_invariance(self, study):
        m = tiny_manifest(study)
        serial = run_study(m, workers=1).to_csv_string()
        parallel = run_study(tiny_manifest(study), workers=2).to_csv_string()
        assert serial == parallel


class TestSweep:
    def test_rows_and_columns(self):
        res = run_study(tiny_manifest("endogeneity-sweep"))
        assert len(res.rows) == 2
        for row in res.rows:
            assert row["asymptote"] == 1.0
            assert row["bound_rescaled"] > 0
            assert row["mse_se"] > 0
        assert res.rows[0]["eta"] == 0.0

    def test_single_trial_has_no_se(self):
        m = ExperimentManifest(
            study="endogeneity-sweep", M=1, n=50, d=2, eta_grid=[0.5],
            seed=3, mc_reps=5, prefactor_reps=2,
        )
        res = run_study(m)
        assert math.isnan(res.rows[0]["mse_se"])
        # a NaN standard error serializes as an absent cell
        line = res.to_csv_string().splitlines()[1]
        assert ",," in line


class TestGrowingDims:
    def test_rows(self):
        res = run_study(tiny_manifest("growing-dims"))
        assert [r["n"] for r in res.rows] == [64, 128]
        assert [r["d"] for r in res.rows] == [growing_dimension(64), growing_dimension(128)]


class TestHard:
    def test_trace_column(self):
        res = run_study(tiny_manifest("hard-tracewise"))
        assert res.rows[0]["trace_L"] == 1.0  # omega = 0
        assert res.rows[1]["trace_L"] == 1.0 + 2.0  # omega = 1, d = 3
        for row in res.rows:
            assert row["u_L_u"] == 1.0
            assert row["asymptote_log"] == 0.0


class TestCorrectedStudy:
    def test_row_kinds(self):
        res = run_study(tiny_manifest("corrected-ci-small-kappa"))
        kinds = {r["row_type"] for r in res.rows}
        assert kinds == {"trial", "summary", "kde"}
        trials = [r for r in res.rows if r["row_type"] == "trial"]
        assert len(trials) == 40
        assert all(r["regime"] in ("a", "b", "none") for r in trials)
        summary = [r for r in res.rows if r["row_type"] == "summary"][0]
        assert 0.0 <= summary["coverage_classical"] <= 1.0
        assert 0.0 <= summary["applicability"] <= 1.0
        kde = [r for r in res.rows if r["row_type"] == "kde"]
        assert all(r["density"] >= 0 for r in kde)
        grids = [r["grid"] for r in kde if r["curve"] == "classical"]
        assert grids == sorted(grids)

    def test_large_kappa_applicability_is_regime_b(self):
        res = run_study(tiny_manifest("corrected-ci-large-kappa"))
        trials = [r for r in res.rows if r["row_type"] == "trial"]
        for r in trials:
            assert r["applicable"] == (r["regime"] == "b")

    def test_coverage_flags_consistent(self):
        res = run_study(tiny_manifest("corrected-ci-small-kappa"))
        for r in res.rows:
            if r["row_type"] != "trial":
                continue
            assert r["covered_classical"] == (r["abs_error"] <= r["classical_half_width"])

    def test_csv_parses_back(self, tmp_path):
        import csv

        res = run_study(tiny_manifest("corrected-ci-large-kappa"))
        path = tmp_path / "out.csv"
        res.write_csv(path)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(res.rows)
        assert {r["row_type"] for r in rows} == {"trial", "summary", "kde"}
        assert all(r["schema_version"] == "1" for r in rows)
