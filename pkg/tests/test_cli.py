"""End-to-end tests of the command-line interface.

Every test drives ``odml.cli.main`` in process and inspects exit codes,
emitted JSON, and the files written to a temp directory.
"""

import json
import os

import numpy as np
import pytest

import odml
import odml.regularizers
from odml import RegularizerSpec, SynthSpec, load_model, omega_convex, save_csv
from odml.cli import main


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    # class 2 is small so a threshold of 10 splits frequent from infrequent
    root = tmp_path_factory.mktemp("cli-data")
    spec = SynthSpec(
        num_classes=3,
        dim=3,
        class_sizes=(40, 40, 8),
        within_class_std=0.5,
        mean_radius=4.0,
        seed=5,
    )
    full = odml.synth_generate(spec)
    train, test = odml.stratified_split(full, 0.5, seed=6)
    save_csv(train, root / "train.csv")
    save_csv(test, root / "test.csv")
    return root


@pytest.fixture(scope="module")
def trained_model(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    cfg = write_config(out / "cfg.json", train_config(data_dir, out))
    assert main(["train", "--config", cfg]) == 0
    return out / "model.json"


def write_config(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def train_config(data_dir, out_dir, **train_overrides):
    train = dict(
        family="vnd",
        form="convex",
        gamma=0.05,
        epsilon=1e-5,
        stepsize=1e-3,
        batch_size=30,
        max_epochs=8,
        rel_tol=0.0,
        seed=0,
    )
    train.update(train_overrides)
    return {
        "train": train,
        "dataset_path": str(data_dir / "train.csv"),
        "output_dir": str(out_dir),
    }


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    out = json.loads(captured.out) if captured.out.strip() else None
    err = json.loads(captured.err) if captured.err.strip() else None
    return code, out, err


class TestSynth:
    def test_writes_csv_and_summary(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json",
            {
                "synth": {
                    "num_classes": 2,
                    "dim": 2,
                    "class_sizes": [8, 8],
                    "within_class_std": 0.3,
                    "mean_radius": 2.0,
                    "seed": 1,
                }
            },
        )
        out = tmp_path / "synth.csv"
        code, record, _ = run(capsys, ["synth", "--config", cfg, "--out", str(out)])
        assert code == 0
        assert record == {
            "dataset": str(out),
            "num_examples": 16,
            "dim": 2,
            "num_classes": 2,
        }
        loaded = odml.load_csv(out)
        assert loaded.num_examples == 16

    def test_requires_section(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", {})
        code, _, err = run(capsys, ["synth", "--config", cfg])
        assert code == 1
        assert err["exit_code"] == 1 and err["error"] == "UsageError"


class TestTrain:
    def test_model_matches_training_log(self, data_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json", train_config(data_dir, tmp_path / "run")
        )
        code, record, _ = run(capsys, ["train", "--config", cfg])
        assert code == 0
        assert record["epochs_run"] >= 1
        assert record["config_hash"]
        model, spec = load_model(record["model"])
        assert spec == RegularizerSpec("vnd", "convex", 0.05, 1e-5)
        last = open(record["log"]).read().splitlines()[-1].split(",")
        logged_penalty = float(last[2])
        assert abs(omega_convex(spec, model.matrix) - logged_penalty) <= 1e-9
        assert int(last[3]) == model.dim  # small gamma keeps full rank

    def test_zero_epochs_gives_identity(self, data_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json",
            train_config(data_dir, tmp_path / "run", max_epochs=0),
        )
        code, record, _ = run(capsys, ["train", "--config", cfg])
        assert code == 0
        model, _ = load_model(record["model"])
        assert np.allclose(model.matrix, np.eye(3), atol=1e-15)

    def test_deterministic_bytes(self, data_dir, tmp_path, capsys):
        paths = []
        for name in ("a", "b"):
            cfg = write_config(
                tmp_path / f"cfg-{name}.json",
                train_config(data_dir, tmp_path / name),
            )
            code, record, _ = run(capsys, ["train", "--config", cfg])
            assert code == 0
            paths.append(record)
        a, b = paths
        assert open(a["model"], "rb").read() == open(b["model"], "rb").read()
        assert open(a["log"], "rb").read() == open(b["log"], "rb").read()

    def test_seed_flag_overrides_config(self, data_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json", train_config(data_dir, tmp_path / "a")
        )
        code, base, _ = run(capsys, ["train", "--config", cfg])
        cfg2 = write_config(
            tmp_path / "cfg2.json", train_config(data_dir, tmp_path / "b")
        )
        code2, other, _ = run(capsys, ["train", "--config", cfg2, "--seed", "9"])
        assert code == code2 == 0
        assert base["config_hash"] != other["config_hash"]
        bytes_a = open(base["model"], "rb").read()
        bytes_b = open(other["model"], "rb").read()
        assert bytes_a != bytes_b

    def test_missing_dataset_is_a_data_error(self, data_dir, tmp_path, capsys):
        payload = train_config(data_dir, tmp_path / "run")
        payload["dataset_path"] = str(tmp_path / "absent.csv")
        cfg = write_config(tmp_path / "cfg.json", payload)
        code, _, err = run(capsys, ["train", "--config", cfg])
        assert code == 2
        assert err["exit_code"] == 2

    def test_unknown_train_key(self, data_dir, tmp_path, capsys):
        payload = train_config(data_dir, tmp_path / "run")
        payload["train"]["learning_rate"] = 0.1
        cfg = write_config(tmp_path / "cfg.json", payload)
        code, _, err = run(capsys, ["train", "--config", cfg])
        assert code == 1 and "learning_rate" in err["message"]

    def test_missing_config_file(self, tmp_path, capsys):
        code, _, err = run(
            capsys, ["train", "--config", str(tmp_path / "nope.json")]
        )
        assert code == 1 and err["error"] == "UsageError"


class TestEval:
    def test_writes_reports(self, data_dir, trained_model, tmp_path, capsys):
        capsys.readouterr()
        cfg = write_config(
            tmp_path / "cfg.json",
            {"eval": {"frequent_threshold": 10, "rank_tol": 1e-8}},
        )
        code, record, _ = run(
            capsys,
            [
                "eval",
                "--config",
                cfg,
                "--model",
                str(trained_model),
                "--data",
                str(data_dir / "test.csv"),
                "--out",
                str(tmp_path / "reports"),
            ],
        )
        assert code == 0
        on_disk = json.loads((tmp_path / "reports" / "report.json").read_text())
        assert record == on_disk
        assert 0.5 <= record["auc_all"] <= 1.0
        assert record["train_auc"] is None and record["gap"] is None
        assert (tmp_path / "reports" / "report.csv").exists()

    def test_train_data_fills_the_gap(self, data_dir, trained_model, tmp_path, capsys):
        capsys.readouterr()
        cfg = write_config(
            tmp_path / "cfg.json", {"eval": {"frequent_threshold": 10}}
        )
        code, record, _ = run(
            capsys,
            [
                "eval",
                "--config",
                cfg,
                "--model",
                str(trained_model),
                "--data",
                str(data_dir / "test.csv"),
                "--train-data",
                str(data_dir / "train.csv"),
                "--out",
                str(tmp_path / "reports"),
            ],
        )
        assert code == 0
        assert record["train_auc"] is not None
        assert record["gap"] == pytest.approx(
            abs(record["train_auc"] - record["auc_all"])
        )

    def test_requires_model(self, data_dir, tmp_path, capsys):
        code, _, err = run(
            capsys, ["eval", "--data", str(data_dir / "test.csv")]
        )
        assert code == 1 and "model" in err["message"]


class TestSweep:
    def sweep_payload(self, data_dir, out, gammas, **train_overrides):
        payload = train_config(data_dir, out, **train_overrides)
        payload["test_path"] = str(data_dir / "test.csv")
        payload["sweep"] = {"gamma_grid": gammas}
        payload["eval"] = {"frequent_threshold": 10}
        return payload

    def read_rows(self, path):
        lines = open(path).read().splitlines()
        header = lines[0].split(",")
        return [dict(zip(header, line.split(","))) for line in lines[1:]]

    def test_matches_train_plus_eval(self, data_dir, tmp_path, capsys):
        out_csv = tmp_path / "sweep.csv"
        cfg = write_config(
            tmp_path / "sweep.json",
            self.sweep_payload(data_dir, tmp_path, [0.01, 0.05]),
        )
        code, record, _ = run(
            capsys, ["sweep", "--config", cfg, "--out", str(out_csv)]
        )
        assert code == 0
        assert record == {"sweep": str(out_csv), "points": 2, "failed": 0}
        rows = self.read_rows(out_csv)
        assert [float(r["gamma"]) for r in rows] == [0.01, 0.05]

        # the 0.05 row must equal an independent train + eval at 0.05
        run_dir = tmp_path / "manual"
        cfg_train = write_config(
            tmp_path / "train.json", train_config(data_dir, run_dir, gamma=0.05)
        )
        code, trained, _ = run(capsys, ["train", "--config", cfg_train])
        assert code == 0
        cfg_eval = write_config(
            tmp_path / "eval.json", {"eval": {"frequent_threshold": 10}}
        )
        code, report, _ = run(
            capsys,
            [
                "eval",
                "--config",
                cfg_eval,
                "--model",
                trained["model"],
                "--data",
                str(data_dir / "test.csv"),
                "--out",
                str(run_dir),
            ],
        )
        assert code == 0
        row = rows[1]
        assert float(row["auc_all"]) == report["auc_all"]
        assert float(row["bs"]) == report["balance_score"]
        assert int(row["npv_learned"]) == report["npv"]

    def test_thread_count_does_not_change_bytes(
        self, data_dir, tmp_path, capsys, monkeypatch
    ):
        outputs = []
        for name, threads in (("one", "1"), ("two", "2")):
            monkeypatch.setenv("OD_THREADS", threads)
            out_csv = tmp_path / f"{name}.csv"
            cfg = write_config(
                tmp_path / f"{name}.json",
                self.sweep_payload(data_dir, tmp_path, [0.01, 0.05], max_epochs=3),
            )
            code, _, _ = run(capsys, ["sweep", "--config", cfg, "--out", str(out_csv)])
            assert code == 0
            outputs.append(out_csv.read_bytes())
        assert outputs[0] == outputs[1]

    def test_npv_grid_trains_projections(self, data_dir, tmp_path, capsys):
        out_csv = tmp_path / "sweep.csv"
        payload = self.sweep_payload(
            data_dir,
            tmp_path,
            [0.01],
            form="nonconvex",
            family="sfn",
            epsilon=None,
            max_epochs=3,
            restarts=1,
        )
        payload["sweep"]["npv_grid"] = [1, 2]
        cfg = write_config(tmp_path / "cfg.json", payload)
        code, record, _ = run(
            capsys, ["sweep", "--config", cfg, "--out", str(out_csv)]
        )
        assert code == 0 and record["points"] == 2
        rows = self.read_rows(out_csv)
        assert [r["npv"] for r in rows] == ["1", "2"]
        assert [r["npv_learned"] for r in rows] == ["1", "2"]

    def test_failed_point_is_recorded_not_fatal(self, data_dir, tmp_path, capsys):
        out_csv = tmp_path / "sweep.csv"
        cfg = write_config(
            tmp_path / "cfg.json",
            self.sweep_payload(data_dir, tmp_path, [-1.0, 0.05], max_epochs=3),
        )
        code, record, _ = run(
            capsys, ["sweep", "--config", cfg, "--out", str(out_csv)]
        )
        assert code == 0 and record["failed"] == 1
        rows = self.read_rows(out_csv)
        assert rows[0]["error"] and rows[0]["auc_all"] == ""
        assert rows[1]["error"] == "" and rows[1]["auc_all"]

    def test_empty_grid_is_a_usage_error(self, data_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json", self.sweep_payload(data_dir, tmp_path, [])
        )
        code, _, err = run(capsys, ["sweep", "--config", cfg])
        assert code == 1 and "gamma_grid" in err["message"]


class TestProxTest:
    def test_passes_by_default(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json", {"prox_test": {"problems_per_family": 60}}
        )
        code, record, _ = run(capsys, ["prox-test", "--config", cfg])
        assert code == 0
        assert record["passed"] is True
        assert record["failures"] == 0

    def test_broken_prox_is_caught(self, tmp_path, capsys, monkeypatch):
        # negative control: corrupt one closed-form constant and require exit 4
        real = odml.regularizers._ldd_quadratic_coeffs

        def wrong(problem):
            a, b = real(problem)
            return a, -b

        monkeypatch.setattr(odml.regularizers, "_ldd_quadratic_coeffs", wrong)
        cfg = write_config(
            tmp_path / "cfg.json", {"prox_test": {"problems_per_family": 60}}
        )
        code, record, _ = run(capsys, ["prox-test", "--config", cfg])
        assert code == 4
        assert record["passed"] is False and record["failures"] > 0


class TestTheory:
    def test_selftest_clean(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", {"theory": {"trials": 20}})
        out = tmp_path / "theory.json"
        code, record, _ = run(
            capsys, ["theory", "--config", cfg, "--selftest", "--out", str(out)]
        )
        assert code == 0
        assert record["violations"] == 0
        assert record["inverse_residual_ok"] is True
        assert json.loads(out.read_text()) == record

    def test_model_mode_psd(self, data_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "train.json", train_config(data_dir, tmp_path)
        )
        code, trained, _ = run(capsys, ["train", "--config", cfg])
        assert code == 0
        code, record, _ = run(
            capsys, ["theory", "--model", trained["model"]]
        )
        assert code == 0
        assert record["kind"] == "mahalanobis"
        assert record["trace_lemmas"]["vnd_holds"] is True
        assert record["trace_lemmas"]["ldd_holds"] is True
        assert set(record["generalization"]) == {"sfn", "vnd", "ldd"}
        for family in ("sfn", "vnd", "ldd"):
            assert record["generalization"][family]["bound"] > 0

    def test_model_mode_projection(self, data_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "train.json",
            train_config(
                data_dir,
                tmp_path,
                form="nonconvex",
                family="sfn",
                epsilon=None,
                gamma=0.5,
                num_projections=2,
                restarts=2,
                max_epochs=10,
            ),
        )
        code, trained, _ = run(capsys, ["train", "--config", cfg])
        assert code == 0
        code, record, _ = run(
            capsys,
            [
                "theory",
                "--model",
                trained["model"],
                "--data",
                str(data_dir / "train.csv"),
            ],
        )
        assert code == 0
        assert record["kind"] == "projection"
        assert record["cond_bounds"]["ldd_holds"] is True
        caps = record["imbalance"]
        assert caps["observed"] <= caps["ldd_cap"]

    def test_needs_model_or_selftest(self, capsys):
        code, _, err = run(capsys, ["theory"])
        assert code == 1 and "selftest" in err["message"]


def test_no_subcommand_is_usage(capsys):
    code, _, err = run(capsys, [])
    assert code == 1 and err["error"] == "UsageError"


def test_unknown_subcommand_is_usage(capsys):
    code, _, err = run(capsys, ["frobnicate"])
    assert code == 1
