import csv
import hashlib
import json

import pytest

from timeshift.cli import main
from timeshift.features import identity_scaler
from timeshift.logistic import load_model, pinned_model, save_model

TRIAL_HEADER = (
    "participant_id,trial_index,engagement_level,produced_time_s,"
    "reported_lower_than_30,reported_high_engagement,nontiming_task_error"
)

FEATURE_HEADER = (
    "t1_rel_error,t1_lower_than_30,high_visual_sensitivity,"
    "v2_engagement_level,change_in_engagement_level,label"
)


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_config(tmp_path, **overrides):
    payload = {"seed": 5, "sim": {"n_participants": 30, "n_trials": 2}}
    payload.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return path


class TestSimulate:
    def test_row_count_and_manifest(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "trials.csv"
        assert main(["simulate", "--config", str(config), "--output", str(out)]) == 0
        rows = out.read_text().strip().splitlines()
        assert rows[0] == TRIAL_HEADER
        assert len(rows) == 1 + 30 * 2
        manifest = json.loads((tmp_path / "trials.manifest.json").read_text())
        assert manifest["seed"] == 5
        assert "config_hash" in manifest
        balance = manifest["class_balance"]
        assert balance["increase"] + balance["decrease"] == 30

    def test_identical_config_identical_bytes(self, tmp_path):
        config = write_config(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["simulate", "--config", str(config), "--output", str(a)])
        main(["simulate", "--config", str(config), "--output", str(b)])
        assert sha(a) == sha(b)

    def test_noiseless_fixed_point_rows(self, tmp_path):
        config = write_config(
            tmp_path,
            sim={
                "n_participants": 4,
                "n_trials": 2,
                "engagement_assignment": ["low", "low"],
                "weber_fraction": 0.0,
                "memory_correction_weight": 0.0,
                "regression_weight": 0.0,
            },
        )
        out = tmp_path / "trials.csv"
        assert main(["simulate", "--config", str(config), "--output", str(out)]) == 0
        with out.open() as fh:
            produced = [float(row["produced_time_s"]) for row in csv.DictReader(fh)]
        assert produced == [30.0] * 8

    def test_invalid_sim_config_exits_2(self, tmp_path, capsys):
        config = write_config(tmp_path, sim={"weber_fraction": -1.0})
        out = tmp_path / "trials.csv"
        assert main(["simulate", "--config", str(config), "--output", str(out)]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError"


class TestExtract:
    def test_feature_row_matches_composition(self, tmp_path):
        trials = tmp_path / "trials.csv"
        trials.write_text(
            TRIAL_HEADER + "\n"
            "p1,1,low,45.0,false,true,\n"
            "p1,2,high,50.0,false,false,\n"
        )
        out = tmp_path / "features.csv"
        assert main(["extract", "--input", str(trials), "--output", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == FEATURE_HEADER
        assert lines[1] == "50.0,0,1,2,2,increase"

    def test_empty_input_exits_2(self, tmp_path, capsys):
        trials = tmp_path / "trials.csv"
        trials.write_text(TRIAL_HEADER + "\n")
        out = tmp_path / "features.csv"
        assert main(["extract", "--input", str(trials), "--output", str(out)]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "EmptyFileError"

    def test_missing_input_exits_2(self, tmp_path):
        assert (
            main(
                [
                    "extract",
                    "--input",
                    str(tmp_path / "nope.csv"),
                    "--output",
                    str(tmp_path / "f.csv"),
                ]
            )
            == 2
        )


class TestTrain:
    def _features_csv(self, tmp_path, n=40):
        path = tmp_path / "features.csv"
        rows = [FEATURE_HEADER]
        for i in range(n):
            rel = 60.0 if i % 2 == 0 else -40.0
            label = "decrease" if i % 2 == 0 else "increase"
            v2 = i % 3
            change = 1 if v2 == 0 else (i % 2 + 1 if v2 == 2 else i % 3)
            rows.append(f"{rel},{i % 2},{(i // 2) % 2},{v2},{change},{label}")
        path.write_text("\n".join(rows) + "\n")
        return path

    def test_model_roundtrips(self, tmp_path):
        features = self._features_csv(tmp_path)
        out = tmp_path / "model.json"
        assert main(["train", "--input", str(features), "--output", str(out)]) == 0
        model = load_model(out)
        clone_path = tmp_path / "clone.json"
        save_model(model, clone_path)
        assert load_model(clone_path) == model
        assert model.seed == 0

    def test_violating_feature_row_rejected(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text(FEATURE_HEADER + "\n0.0,0,0,0,2,increase\n")
        assert main(["train", "--input", str(path), "--output", str(tmp_path / "m.json")]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "FeatureDependencyError"
        assert "change_in_engagement_level" in err["message"]


class TestPredictAndExplain:
    @pytest.fixture()
    def pinned_setup(self, tmp_path):
        """Pinned model with an identity scaler: raw features are the z values."""
        model_path = tmp_path / "pinned.json"
        save_model(pinned_model(scaler=identity_scaler()), model_path)
        features = tmp_path / "features.csv"
        features.write_text(
            FEATURE_HEADER + "\n"
            "0.0,0,0,0,0,increase\n"
            "2.0,0,0,0,0,decrease\n"
        )
        return model_path, features

    def test_probabilities_match_pinned_examples(self, tmp_path, pinned_setup):
        model_path, features = pinned_setup
        out = tmp_path / "outcomes.csv"
        assert (
            main(
                [
                    "predict",
                    "--model", str(model_path),
                    "--features", str(features),
                    "--output", str(out),
                ]
            )
            == 0
        )
        with out.open() as fh:
            rows = list(csv.DictReader(fh))
        assert float(rows[0]["probability"]) == pytest.approx(0.50400, abs=1e-5)
        assert float(rows[1]["probability"]) == pytest.approx(0.79248, abs=1e-5)
        assert rows[0]["direction_pred"] == "decrease"
        assert rows[1]["magnitude_pred"] == "high_decrease"

    def test_explain_zero_vector_is_flat_waterfall(self, tmp_path, pinned_setup):
        model_path, features = pinned_setup
        out_dir = tmp_path / "shap"
        assert (
            main(
                [
                    "explain",
                    "--model", str(model_path),
                    "--features", str(features),
                    "--output-dir", str(out_dir),
                    "--row", "0",
                ]
            )
            == 0
        )
        waterfall = json.loads((out_dir / "shap_waterfall.json").read_text())
        assert all(entry["phi"] == 0.0 for entry in waterfall["entries"])
        assert waterfall["output_probability"] == pytest.approx(0.50400, abs=1e-5)
        aggregate = json.loads((out_dir / "shap_aggregate.json").read_text())
        assert "background" in aggregate
        assert (out_dir / "shap_scatter.csv").exists()

    def test_row_out_of_range_exits_2(self, tmp_path, pinned_setup):
        model_path, features = pinned_setup
        code = main(
            [
                "explain",
                "--model", str(model_path),
                "--features", str(features),
                "--output-dir", str(tmp_path / "shap"),
                "--row", "9",
            ]
        )
        assert code == 2


class TestEvaluate:
    def test_report_schema_and_per_sample(self, tmp_path):
        config = write_config(
            tmp_path,
            sim={"n_participants": 60, "n_trials": 2, "sensitivity_prevalence": 0.4},
        )
        trials = tmp_path / "trials.csv"
        main(["simulate", "--config", str(config), "--output", str(trials)])
        report_path = tmp_path / "report.json"
        code = main(
            [
                "evaluate",
                "--config", str(config),
                "--input", str(trials),
                "--output", str(report_path),
            ]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        for key in (
            "model_name", "n", "precision", "recall", "accuracy",
            "confusion", "magnitude_confusion", "seed", "C",
        ):
            assert key in report
        assert len(report["confusion"]) == 2
        assert len(report["magnitude_confusion"]) == 3
        assert report["baselines"][0]["model_name"] == "attention"
        per_sample = report_path.with_suffix(".per_sample.csv")
        with per_sample.open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == report["n"]
        assert set(rows[0]) == {
            "id", "probability", "direction_pred", "direction_actual",
            "delta_t", "magnitude_pred", "magnitude_actual",
        }
        total = sum(sum(row) for row in report["magnitude_confusion"])
        assert total == report["n"]


class TestMisc:
    def test_flags_override_config_values(self, tmp_path):
        config = write_config(tmp_path, seed=5)
        out = tmp_path / "trials.csv"
        main(["simulate", "--config", str(config), "--seed", "9", "--output", str(out)])
        manifest = json.loads((tmp_path / "trials.manifest.json").read_text())
        assert manifest["seed"] == 9
        assert manifest["params"]["rng_seed"] == 9

    def test_version_prints_pinned_coefficients(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["--version"])
        assert excinfo.value.code == 0
        out = capsys.readouterr().out
        assert "0.662" in out and "intercept=0.016" in out

    def test_bad_config_json_exits_2(self, tmp_path, capsys):
        config = tmp_path / "broken.json"
        config.write_text("{nope")
        out = tmp_path / "x.csv"
        assert main(["simulate", "--config", str(config), "--output", str(out)]) == 2
        assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"

    def test_missing_output_flag_exits_2(self, capsys):
        assert main(["simulate"]) == 2
        assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"
