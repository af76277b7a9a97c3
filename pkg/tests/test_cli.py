"""End-to-end tests for the command-line harness and its config layer."""

import os

import numpy as np
import pytest

from snnbench import config as C
from snnbench.arch import SCHEDULE_NAMES, schedule_mask
from snnbench.cli import main
from snnbench.report import BENCH_HEADER, read_bench_csv, row_energy_mj, write_bench_csv

from oracles import ref_pareto
from test_report import make_row

# Small synthetic problem: quarter-width net, 16x16 inputs, two time steps.
FAST = [
    "--set", "data.classes=3",
    "--set", "data.per_class=10",
    "--set", "data.size=16",
    "--set", "model.width_scale=0.25",
    "--set", "model.time_steps=2",
    "--set", "model.schedule=Ref-1",
    "--set", "train.max_epochs=2",
    "--set", "train.batch_size=8",
    "--set", "profile.batch_size=4",
]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    rc = main(["train", "--out", str(out)] + FAST)
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def ablated(tmp_path_factory):
    out = tmp_path_factory.mktemp("ablated")
    rc = main(["ablate", "--out", str(out)] + FAST)
    assert rc == 0
    return out


class TestConfigLayer:
    def test_defaults_alone_are_valid(self):
        cfg = C.effective_config(None, [])
        assert cfg == C.DEFAULTS

    def test_file_overrides_defaults(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("train.lr=0.01\n# a comment\n\nmodel.mode=cnn\n",
                        encoding="utf-8")
        cfg = C.effective_config(str(path), [])
        assert cfg["train.lr"] == "0.01"
        assert cfg["model.mode"] == "cnn"
        assert cfg["train.seed"] == C.DEFAULTS["train.seed"]

    def test_set_overrides_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("train.lr=0.01\n", encoding="utf-8")
        cfg = C.effective_config(str(path), ["train.lr=0.5"])
        assert cfg["train.lr"] == "0.5"

    def test_unknown_keys_listed_sorted(self):
        with pytest.raises(ValueError,
                           match="unknown config keys: aaa.x, zzz.y"):
            C.effective_config(None, ["zzz.y=1", "aaa.x=2"])

    def test_malformed_line_names_origin(self):
        with pytest.raises(ValueError, match="--set:1: expected key=value"):
            C.effective_config(None, ["no-equals-sign"])

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="no such config file"):
            C.effective_config(str(tmp_path / "gone.cfg"), [])

    def test_format_parse_round_trip(self):
        text = C.format_config(C.DEFAULTS)
        assert C.parse_config_text(text) == C.DEFAULTS

    def test_typed_getters(self):
        cfg = {"a.i": "7", "a.f": "2.5", "a.b": "yes", "a.l": "1,2,3",
               "a.e": "", "a.bad": "x"}
        assert C.cfg_int(cfg, "a.i") == 7
        assert C.cfg_float(cfg, "a.f") == 2.5
        assert C.cfg_bool(cfg, "a.b") is True
        assert C.cfg_int_list(cfg, "a.l") == (1, 2, 3)
        assert C.cfg_int_list(cfg, "a.e") == ()
        assert C.cfg_opt_int(cfg, "a.e") is None
        assert C.cfg_opt_float(cfg, "a.e") is None
        with pytest.raises(ValueError, match="needs an integer"):
            C.cfg_int(cfg, "a.bad")
        with pytest.raises(ValueError, match="needs a number"):
            C.cfg_float(cfg, "a.bad")
        with pytest.raises(ValueError, match="needs a boolean"):
            C.cfg_bool(cfg, "a.bad")
        with pytest.raises(ValueError, match="comma-separated integers"):
            C.cfg_int_list(cfg, "a.bad")

    def test_bool_spellings(self):
        for text, value in (("true", True), ("1", True), ("ON", True),
                            ("false", False), ("0", False), ("No", False)):
            assert C.cfg_bool({"k": text}, "k") is value


class TestTrainCommand:
    def test_writes_all_artifacts(self, trained):
        for name in ("checkpoint.bin", "train_log.csv", "grad_norms.csv",
                     "effective-config.txt"):
            assert os.path.isfile(trained / name), name

    def test_train_log_records_stop_reason(self, trained):
        text = (trained / "train_log.csv").read_text(encoding="utf-8")
        assert text.startswith("epoch,")
        assert "# stop=" in text

    def test_effective_config_reproduces_run(self, trained):
        text = (trained / "effective-config.txt").read_text(encoding="utf-8")
        cfg = C.parse_config_text(text)
        assert set(cfg) == set(C.DEFAULTS)
        assert cfg["train.max_epochs"] == "2"
        assert cfg["model.schedule"] == "Ref-1"
        assert cfg["model.width_scale"] == "0.25"

    def test_rerun_reproduces_checkpoint_bytes(self, trained, tmp_path):
        rc = main(["train", "--out", str(tmp_path / "again")] + FAST)
        assert rc == 0
        first = (trained / "checkpoint.bin").read_bytes()
        second = (tmp_path / "again" / "checkpoint.bin").read_bytes()
        assert first == second

    def test_unknown_set_key_exits_2(self, tmp_path, capsys):
        rc = main(["train", "--out", str(tmp_path / "o"),
                   "--set", "bogus.key=1"])
        assert rc == 2
        assert "unknown config keys: bogus.key" in capsys.readouterr().err

    def test_missing_config_file_exits_2(self, tmp_path, capsys):
        rc = main(["train", "--out", str(tmp_path / "o"),
                   "--config", str(tmp_path / "none.cfg")])
        assert rc == 2
        assert "no such config file" in capsys.readouterr().err


class TestEvalCommand:
    def test_eval_writes_metrics(self, trained, tmp_path, capsys):
        out = tmp_path / "eval"
        rc = main(["eval", "--out", str(out)] + FAST
                  + ["--set", f"eval.checkpoint={trained / 'checkpoint.bin'}"])
        assert rc == 0
        assert "eval: acc=" in capsys.readouterr().out
        lines = (out / "metrics.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "metric,value"
        values = dict(line.split(",") for line in lines[1:])
        assert 0.0 <= float(values["accuracy"]) <= 1.0
        assert 0.0 <= float(values["macro_f1"]) <= 1.0

    def test_missing_checkpoint_key_exits_2(self, tmp_path, capsys):
        rc = main(["eval", "--out", str(tmp_path / "o")] + FAST)
        assert rc == 2
        assert "eval.checkpoint is required" in capsys.readouterr().err

    def test_nonexistent_checkpoint_exits_2(self, tmp_path):
        rc = main(["eval", "--out", str(tmp_path / "o")] + FAST
                  + ["--set", f"eval.checkpoint={tmp_path / 'none.bin'}"])
        assert rc == 2


class TestProfileCommand:
    def test_cnn_mode_has_no_accumulate_ops(self, tmp_path):
        out = tmp_path / "prof"
        rc = main(["profile", "--out", str(out)] + FAST
                  + ["--set", "model.mode=cnn"])
        assert rc == 0
        row = read_bench_csv(str(out / "bench.csv"))[0]
        assert row.ac == 0
        assert row.mac > 0
        assert row.eta is None
        assert row.delta_acc is None
        assert row.energy_mj == row_energy_mj(row.ac, row.mac)
        layers = (out / "layers.csv").read_text(encoding="utf-8").splitlines()
        assert layers[0] == "layer_name,type,ac,mac,params,firing_rate"
        assert len(layers) > 1

    def test_snn_mode_reports_eta_and_delta(self, tmp_path):
        out = tmp_path / "prof"
        rc = main(["profile", "--out", str(out)] + FAST)
        assert rc == 0
        row = read_bench_csv(str(out / "bench.csv"))[0]
        assert row.model == "snn-squeezenet"
        assert row.mac > 0           # first analog layer plus membrane updates
        assert row.eta is not None and row.eta > 0
        assert row.delta_acc is not None

    def test_profile_accepts_trained_checkpoint(self, trained, tmp_path):
        out = tmp_path / "prof"
        rc = main(["profile", "--out", str(out)] + FAST
                  + ["--set", f"profile.checkpoint={trained / 'checkpoint.bin'}",
                     "--set", "profile.compare_cnn=false"])
        assert rc == 0
        row = read_bench_csv(str(out / "bench.csv"))[0]
        assert row.schedule == "Ref-1"
        assert row.params > 0

    def test_pruned_schedule_has_fewer_params(self, tmp_path):
        params = {}
        for name in ("Full", "Ref-1"):
            out = tmp_path / name
            rc = main(["profile", "--out", str(out)] + FAST
                      + ["--set", f"model.schedule={name}",
                         "--set", "profile.compare_cnn=false"])
            assert rc == 0
            params[name] = read_bench_csv(str(out / "bench.csv"))[0].params
        assert params["Ref-1"] < params["Full"]


class TestAblateCommand:
    def test_covers_every_schedule_in_order(self, ablated):
        rows = read_bench_csv(str(ablated / "bench.csv"))
        assert [r.schedule for r in rows] == list(SCHEDULE_NAMES)

    def test_schedules_csv_lists_retained_modules(self, ablated):
        lines = (ablated / "schedules.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "schedule,retained"
        assert len(lines) == 1 + len(SCHEDULE_NAMES)
        for line, name in zip(lines[1:], SCHEDULE_NAMES):
            schedule, retained = line.split(",")
            assert schedule == name
            assert retained == "+".join(sorted(schedule_mask(name)))

    def test_full_schedule_has_most_params(self, ablated):
        rows = read_bench_csv(str(ablated / "bench.csv"))
        by_name = {r.schedule: r for r in rows}
        full = by_name["Full"].params
        for name, row in by_name.items():
            if name != "Full":
                assert row.params < full, name

    def test_rerun_is_byte_identical(self, ablated, tmp_path):
        rc = main(["ablate", "--out", str(tmp_path / "again")] + FAST)
        assert rc == 0
        first = (ablated / "bench.csv").read_bytes()
        second = (tmp_path / "again" / "bench.csv").read_bytes()
        assert first == second


class TestReportCommand:
    def _rows(self):
        rng = np.random.default_rng(55)
        rows = []
        for i in range(12):
            ac = int(rng.integers(10**3, 10**7))
            mac = int(rng.integers(0, 10**5))
            rows.append(make_row(float(rng.uniform(0.3, 0.95)), ac, mac,
                                 schedule=f"S{i}"))
        return rows

    def test_report_marks_pareto_rows(self, tmp_path):
        rows = self._rows()
        bench = tmp_path / "bench.csv"
        write_bench_csv(rows, str(bench))
        out = tmp_path / "rep"
        rc = main(["report", "--out", str(out),
                   "--set", f"report.input={bench}"])
        assert rc == 0
        summary = (out / "summary.csv").read_text(encoding="utf-8").splitlines()
        assert summary[0] == BENCH_HEADER + ",pareto"
        got = [line.rsplit(",", 1)[1] for line in summary[1:]]
        expected = ["1" if f else "0"
                    for f in ref_pareto([(r.acc, r.energy_mj) for r in rows])]
        assert got == expected
        svg = (out / "report.svg").read_text(encoding="utf-8")
        assert svg.startswith("<svg ")
        assert svg.count("<circle") == len(rows)

    def test_missing_input_key_exits_2(self, tmp_path, capsys):
        rc = main(["report", "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "report.input is required" in capsys.readouterr().err

    def test_header_only_input_exits_2(self, tmp_path, capsys):
        bench = tmp_path / "bench.csv"
        bench.write_text(BENCH_HEADER + "\n", encoding="utf-8")
        rc = main(["report", "--out", str(tmp_path / "o"),
                   "--set", f"report.input={bench}"])
        assert rc == 2
        assert "no benchmark rows" in capsys.readouterr().err

    def test_nonexistent_input_exits_2(self, tmp_path, capsys):
        rc = main(["report", "--out", str(tmp_path / "o"),
                   "--set", f"report.input={tmp_path / 'gone.csv'}"])
        assert rc == 2
        assert "no such rows file" in capsys.readouterr().err


class TestArgumentParsing:
    def test_unknown_command_exits_via_argparse(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["frobnicate", "--out", str(tmp_path)])

    def test_out_flag_is_required(self):
        with pytest.raises(SystemExit):
            main(["train"])

    def test_bad_data_source_exits_2(self, tmp_path, capsys):
        rc = main(["profile", "--out", str(tmp_path / "o"),
                   "--set", "data.source=imagenet22k"])
        assert rc == 2
        assert "unknown data.source" in capsys.readouterr().err

    def test_cifar_requires_path(self, tmp_path, capsys):
        rc = main(["profile", "--out", str(tmp_path / "o"),
                   "--set", "data.source=cifar10"])
        assert rc == 2
        assert "data.path is required" in capsys.readouterr().err

    def test_data_limit_caps_profile_batch(self, tmp_path):
        out = tmp_path / "o"
        rc = main(["profile", "--out", str(out)] + FAST
                  + ["--set", "data.limit=2",
                     "--set", "profile.compare_cnn=false"])
        assert rc == 0
        assert os.path.isfile(out / "bench.csv")
