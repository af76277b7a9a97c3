"""Tests for benchmark rows, Pareto marking, and report rendering."""

import numpy as np
import pytest

from snnbench.report import (
    BENCH_HEADER,
    BenchRow,
    dominates,
    pareto_flags,
    read_bench_csv,
    render_scatter_svg,
    row_energy_mj,
    write_bench_csv,
    write_report,
)

from oracles import ref_pareto


def make_row(acc, ac, mac, schedule="Full", eta=None, delta=None):
    return BenchRow(model="snn-squeezenet", schedule=schedule, dataset="synth",
                    acc=acc, f1=acc, ac=ac, mac=mac, params=1000,
                    energy_mj=row_energy_mj(ac, mac), eta=eta, delta_acc=delta)


class TestBenchRow:
    def test_energy_must_recompute_from_counts(self):
        with pytest.raises(ValueError, match="does not recompute"):
            BenchRow(model="m", schedule="s", dataset="d", acc=0.5, f1=0.5,
                     ac=10, mac=10, params=1, energy_mj=1.0)

    def test_row_energy_formula(self):
        # 1e9 accumulate ops at 0.9 pJ and 1e9 multiply-accumulate at 4.6 pJ.
        assert row_energy_mj(10**9, 0) == pytest.approx(0.9)
        assert row_energy_mj(0, 10**9) == pytest.approx(4.6)
        assert row_energy_mj(0, 0) == 0.0


class TestDominance:
    def test_strictly_better_on_both_axes(self):
        a = make_row(0.9, 100, 0)
        b = make_row(0.8, 200, 0)
        assert dominates(a, b)
        assert not dominates(b, a)

    def test_equal_rows_do_not_dominate(self):
        a = make_row(0.9, 100, 0)
        b = make_row(0.9, 100, 0)
        assert not dominates(a, b)
        assert not dominates(b, a)

    def test_tie_on_one_axis_needs_strictness_on_other(self):
        cheaper = make_row(0.9, 50, 0)
        pricier = make_row(0.9, 100, 0)
        assert dominates(cheaper, pricier)
        assert not dominates(pricier, cheaper)

    def test_tradeoff_rows_are_incomparable(self):
        accurate = make_row(0.95, 500, 0)
        frugal = make_row(0.80, 50, 0)
        assert not dominates(accurate, frugal)
        assert not dominates(frugal, accurate)

    def test_missing_accuracy_counts_as_zero(self):
        blank = make_row(None, 100, 0)
        scored = make_row(0.5, 100, 0)
        assert dominates(scored, blank)


class TestParetoFlags:
    def test_three_point_frontier(self):
        rows = [make_row(0.9, 1000, 0), make_row(0.8, 100, 0),
                make_row(0.7, 500, 0)]
        # The third row is slower and less accurate than the second.
        assert pareto_flags(rows) == [True, True, False]

    def test_duplicates_share_the_frontier(self):
        rows = [make_row(0.9, 100, 0), make_row(0.9, 100, 0)]
        assert pareto_flags(rows) == [True, True]

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_quadratic_scan_on_random_rows(self, seed):
        rng = np.random.default_rng(900 + seed)
        rows = []
        for _ in range(100):
            ac = int(rng.integers(0, 10**7))
            mac = int(rng.integers(0, 10**6))
            rows.append(make_row(float(rng.uniform(0.1, 1.0)), ac, mac))
        expected = ref_pareto([(r.acc, r.energy_mj) for r in rows])
        assert pareto_flags(rows) == expected

    def test_matches_scan_with_heavy_ties(self):
        # Quantized values force exact ties on both axes.
        rng = np.random.default_rng(77)
        rows = [make_row(round(float(rng.uniform(0.5, 0.9)), 1),
                         int(rng.integers(1, 4)) * 1000, 0)
                for _ in range(60)]
        expected = ref_pareto([(r.acc, r.energy_mj) for r in rows])
        assert pareto_flags(rows) == expected


class TestBenchCsv:
    def test_round_trip_preserves_rows(self, tmp_path):
        rows = [make_row(0.9, 1234, 567, schedule="Full", eta=7.0, delta=-0.01),
                make_row(None, 0, 10, schedule="Single")]
        path = str(tmp_path / "bench.csv")
        write_bench_csv(rows, path)
        back = read_bench_csv(path)
        assert back == rows

    def test_header_is_pinned(self, tmp_path):
        path = str(tmp_path / "bench.csv")
        write_bench_csv([make_row(0.5, 1, 1)], path)
        first = open(path, encoding="utf-8").readline().rstrip("\n")
        assert first == ("model,schedule,dataset,acc,f1,ac,mac,params,"
                         "energy_mj,eta,delta_acc")

    def test_optional_fields_serialize_empty(self, tmp_path):
        path = str(tmp_path / "bench.csv")
        write_bench_csv([make_row(None, 10, 0)], path)
        line = open(path, encoding="utf-8").readlines()[1].rstrip("\n")
        parts = line.split(",")
        assert parts[3] == ""   # acc
        assert parts[9] == ""   # eta
        assert parts[10] == ""  # delta_acc

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="no such rows file"):
            read_bench_csv(str(tmp_path / "gone.csv"))

    def test_wrong_header_rejected(self, tmp_path):
        path = str(tmp_path / "bad.csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="first line must be the bench header"):
            read_bench_csv(path)

    def test_header_only_file_rejected(self, tmp_path):
        path = str(tmp_path / "empty.csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write(BENCH_HEADER + "\n")
        with pytest.raises(ValueError, match="no benchmark rows"):
            read_bench_csv(path)

    def test_short_row_rejected(self, tmp_path):
        path = str(tmp_path / "short.csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write(BENCH_HEADER + "\n")
            f.write("m,s,d,0.5\n")
        with pytest.raises(ValueError, match="expected 11 columns, got 4"):
            read_bench_csv(path)


class TestScatterSvg:
    def test_marker_classes_follow_flags(self):
        rows = [make_row(0.9, 100, 0), make_row(0.5, 1000, 0)]
        svg = render_scatter_svg(rows, pareto_flags(rows))
        assert svg.startswith("<svg ")
        assert svg.count('class="marker pareto"') == 1
        assert svg.count('class="marker"') == 1
        assert "</svg>" in svg

    def test_every_row_gets_a_point_and_label(self):
        rows = [make_row(0.5 + 0.05 * i, 100 * (i + 1), 0,
                         schedule=f"Ref-{i}") for i in range(5)]
        svg = render_scatter_svg(rows, pareto_flags(rows))
        assert svg.count("<circle") == 5
        for i in range(5):
            assert f"Ref-{i}" in svg

    def test_axis_labels_present(self):
        rows = [make_row(0.9, 100, 0)]
        svg = render_scatter_svg(rows, [True])
        assert "energy per image (mJ, log scale)" in svg
        assert "accuracy" in svg

    def test_single_point_degenerate_ranges(self):
        # One row leaves both axes with zero span; rendering must still work.
        svg = render_scatter_svg([make_row(0.75, 42, 0)], [True])
        assert svg.count("<circle") == 1

    def test_empty_rows_rejected(self):
        with pytest.raises(ValueError, match="empty row set"):
            render_scatter_svg([], [])


class TestWriteReport:
    def test_emits_summary_and_svg(self, tmp_path):
        rows = [make_row(0.9, 1000, 0), make_row(0.8, 100, 0),
                make_row(0.7, 500, 0)]
        summary_path, svg_path = write_report(rows, str(tmp_path / "out"))
        summary = open(summary_path, encoding="utf-8").read().splitlines()
        assert summary[0] == BENCH_HEADER + ",pareto"
        flags = [line.rsplit(",", 1)[1] for line in summary[1:]]
        assert flags == ["1", "1", "0"]
        svg = open(svg_path, encoding="utf-8").read()
        assert svg.count("<circle") == 3
