import json
import os
import shutil

import numpy as np
import pytest

from dpslice import accounting, cli
from dpslice.accounting import MechanismDims

DATA = os.path.join(os.path.dirname(__file__), "data")
FIXTURE_CSV = os.path.join(DATA, "fixture.csv")
SCHEMA_JSON = os.path.join(DATA, "schema.json")


def run(argv):
    return cli.main(argv)


def write_config(path, **kw):
    with open(path, "w") as fh:
        for key, value in kw.items():
            fh.write(f"{key} = {value}\n")
    return str(path)


@pytest.fixture
def workdir(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(
        tmp_path / "pipeline.cfg",
        input_csv=FIXTURE_CSV,
        schema=SCHEMA_JSON,
        output_dir=out,
        k=1,
        m=8,
        sigma=0.5,
        delta=1e-5,
        seed=3,
        max_steps=4,
        batch_size=64,
        learning_rate=1e-3,
        real_csv=FIXTURE_CSV,
    )
    return tmp_path, out, cfg


class TestAccount:
    def test_report_matches_library(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = run(["account", "--sigma", "1.0", "--d", "100", "--k", "1",
                    "--m", "10", "--delta", "1e-5", "--out", str(out)])
        assert code == 0
        with open(out) as fh:
            report = json.load(fh)
        _, eps = accounting.optimize_alpha(1.0, MechanismDims(100, 1, 10), 1e-5)
        assert report["epsilon"] == pytest.approx(eps, abs=1e-9)
        assert "epsilon" in capsys.readouterr().out

    def test_fixed_alpha_hand_value(self, capsys):
        code = run(["account", "--sigma", "1.0", "--d", "100", "--k", "1",
                    "--m", "10", "--delta", "1e-5", "--alpha", "2.0"])
        assert code == 0
        assert "11.614966" in capsys.readouterr().out

    def test_amplified(self, tmp_path):
        out = tmp_path / "report.json"
        run(["account", "--sigma", "1.0", "--d", "100", "--k", "1", "--m", "10",
             "--delta", "1e-5", "--rate", "0.25", "--out", str(out)])
        with open(out) as fh:
            report = json.load(fh)
        eps, delta = accounting.amplify(
            report["epsilon_pre_amplification"], report["delta_pre_amplification"], 0.25
        )
        assert report["epsilon"] == pytest.approx(eps)
        assert report["delta"] == pytest.approx(delta)

    def test_infeasible_is_usage_error(self, capsys):
        code = run(["account", "--sigma", "1e-6", "--d", "2", "--k", "1",
                    "--m", "1", "--delta", "1e-5"])
        assert code == cli.EXIT_USAGE
        assert "error" in capsys.readouterr().err


class TestSlice:
    def test_writes_bundle_and_report(self, workdir, capsys):
        tmp_path, out, cfg = workdir
        assert run(["slice", "--config", cfg]) == 0
        assert (out / cli.BUNDLE_FILE).exists()
        with open(out / cli.REPORT_FILE) as fh:
            report = json.load(fh)
        # encoded width: 3 + 2 + 2 one-hot columns plus 2 numerical = 9
        _, eps = accounting.optimize_alpha(
            0.5, MechanismDims(9, 1, 8), 1e-5
        )
        assert report["epsilon"] == pytest.approx(eps, abs=1e-9)

    def test_seed_replay_byte_identical(self, workdir, tmp_path):
        _, out, cfg = workdir
        assert run(["slice", "--config", cfg]) == 0
        first = (out / cli.BUNDLE_FILE).read_bytes()
        shutil.rmtree(out)
        assert run(["slice", "--config", cfg]) == 0
        assert (out / cli.BUNDLE_FILE).read_bytes() == first

    def test_epsilon_calibration_round_trip(self, workdir):
        tmp_path, out, cfg = workdir
        cfg2 = write_config(
            tmp_path / "eps.cfg",
            input_csv=FIXTURE_CSV, schema=SCHEMA_JSON,
            output_dir=tmp_path / "out2", k=1, m=8,
            epsilon=5, delta=1e-5, subsample_rate=0.25, seed=3,
        )
        assert run(["slice", "--config", cfg2]) == 0
        with open(tmp_path / "out2" / cli.REPORT_FILE) as fh:
            report = json.load(fh)
        eps, delta = accounting.amplify(
            report["epsilon_pre_amplification"],
            report["delta_pre_amplification"], 0.25,
        )
        assert eps == pytest.approx(5.0, abs=1e-6)
        assert report["epsilon"] == pytest.approx(eps, abs=1e-9)
        assert report["epsilon"] < 5.0 + 1e-9

    def test_sigma_and_epsilon_conflict(self, workdir, capsys):
        _, _, cfg = workdir
        code = run(["slice", "--config", cfg, "--set", "epsilon=5"])
        assert code == cli.EXIT_USAGE
        assert "not both" in capsys.readouterr().err

    def test_schema_violation_is_data_error(self, workdir, tmp_path, capsys):
        tmp_path_, out, cfg = workdir
        bad = tmp_path / "bad.csv"
        with open(FIXTURE_CSV) as fh:
            lines = fh.readlines()
        lines[1] = lines[1].replace("corporate", "government")
        bad.write_text("".join(lines))
        code = run(["slice", "--config", cfg, "--set", f"input_csv={bad}"])
        assert code == cli.EXIT_DATA
        err = capsys.readouterr().err
        assert "government" in err and "row 0" in err

    def test_missing_input_is_data_error(self, workdir):
        _, _, cfg = workdir
        code = run(["slice", "--config", cfg, "--set", "input_csv=/nonexistent.csv"])
        assert code == cli.EXIT_DATA

    def test_missing_config_key(self, tmp_path):
        cfg = write_config(tmp_path / "c.cfg", input_csv=FIXTURE_CSV)
        assert run(["slice", "--config", cfg]) == cli.EXIT_USAGE

    def test_malformed_config_line(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("this is not a key value line\n")
        assert run(["slice", "--config", str(path)]) == cli.EXIT_USAGE


class TestPipelineStages:
    def test_train_requires_bundle(self, workdir, capsys):
        _, _, cfg = workdir
        assert run(["train", "--config", cfg]) == cli.EXIT_DATA
        assert "slice stage" in capsys.readouterr().err

    def test_generate_requires_model(self, workdir, capsys):
        _, _, cfg = workdir
        assert run(["slice", "--config", cfg]) == 0
        assert run(["generate", "--config", cfg]) == cli.EXIT_DATA
        assert "train stage" in capsys.readouterr().err

    def test_full_pipeline_and_stage_isolation(self, workdir, tmp_path, capsys):
        tmp_path_, out, cfg = workdir
        # slice on a copy of the input, then delete it: later stages are pure
        # post-processing and must not touch the raw data
        private = tmp_path / "private.csv"
        shutil.copy(FIXTURE_CSV, private)
        assert run(["slice", "--config", cfg, "--set", f"input_csv={private}"]) == 0
        private.unlink()
        assert run(["train", "--config", cfg]) == 0
        assert run(["generate", "--config", cfg, "--count", "120"]) == 0
        assert run(["evaluate", "--config", cfg, "--target", "status"]) == 0
        assert (out / cli.MODEL_FILE).exists()
        assert (out / cli.HISTORY_FILE).exists()
        syn = (out / cli.SYNTHETIC_FILE).read_text().splitlines()
        assert syn[0] == "segment,channel,status,income,tenure"
        assert len(syn) == 121
        with open(out / cli.METRICS_FILE) as fh:
            metrics = json.load(fh)
        for key in ("ks_complement", "tv_complement", "contingency_similarity",
                    "correlation_similarity", "logit_f1"):
            assert metrics[key] is not None
            assert 0.0 <= metrics[key] <= 1.0

    def test_generate_zero_rows(self, workdir):
        _, out, cfg = workdir
        assert run(["slice", "--config", cfg]) == 0
        assert run(["train", "--config", cfg]) == 0
        assert run(["generate", "--config", cfg, "--count", "0"]) == 0
        lines = (out / cli.SYNTHETIC_FILE).read_text().splitlines()
        assert lines == ["segment,channel,status,income,tenure"]

    def test_evaluate_real_vs_real_is_one(self, workdir):
        _, out, cfg = workdir
        out.mkdir(parents=True)
        assert run(["evaluate", "--config", cfg, "--real", FIXTURE_CSV,
                    "--synthetic", FIXTURE_CSV]) == 0
        with open(out / cli.METRICS_FILE) as fh:
            metrics = json.load(fh)
        for key in ("ks_complement", "tv_complement", "contingency_similarity",
                    "correlation_similarity"):
            assert metrics[key] == pytest.approx(1.0, abs=1e-12)

    def test_train_checkpoint_resume_matches(self, workdir, tmp_path):
        tmp_path_, out, cfg = workdir
        assert run(["slice", "--config", cfg]) == 0
        assert run(["train", "--config", cfg, "--set", "checkpoint_interval=2"]) == 0
        full_model = (out / cli.MODEL_FILE).read_bytes()
        # rerun the tail from the midpoint checkpoint
        assert run(["train", "--config", cfg,
                    "--set", f"resume={out / 'ckpt_0000002'}",
                    "--set", "checkpoint_interval=0"]) == 0
        assert (out / cli.MODEL_FILE).read_bytes() == full_model


class TestConfigParsing:
    def test_overrides_win(self, tmp_path):
        cfg = write_config(tmp_path / "c.cfg", a=1, b=2)
        got = cli.load_config(cfg, ["b=3", "c = 4"])
        assert got == {"a": "1", "b": "2"} | {"b": "3", "c": "4"}

    def test_comments_and_blanks(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("# comment\n\nkey = value  # trailing\n")
        assert cli.load_config(str(path), []) == {"key": "value"}

    def test_bad_override(self):
        with pytest.raises(cli.ConfigError):
            cli.load_config(None, ["noequals"])
