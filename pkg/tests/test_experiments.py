import filecmp
import os

import numpy as np
import pytest

from tcqpt.cli import main
from tcqpt.experiments import (CSV_HEADER, FIGURES, Case, FigureError, SweepResult, export,
                               figure_cases, read_branch, read_metadata, run_case, run_figure,
                               select_root)
from tcqpt.steady import find_all
from conftest import fig2_params


def test_metadata_round_trip_is_bit_identical(tmp_path):
    for fid in FIGURES:
        for case in figure_cases(fid, {"gamma_par": 0.1 + 1e-17 * 3, "omega_a_re": 1 / 3}):
            export(SweepResult(case, case.values()), tmp_path)
            back = read_metadata(tmp_path / f"{case.name}.meta")
            assert back == case
            for t in (case.start, case.stop):
                assert back.params(t) == case.params(t)


def test_empty_sweep_exports_header_only(tmp_path):
    case = figure_cases("fig2")[0]
    res = SweepResult(case, np.array([]), branches={"order": []})
    paths = export(res, tmp_path)
    assert len(paths) == 2
    with open(paths[1], encoding="utf-8") as fh:
        assert fh.read() == ",".join(CSV_HEADER) + "\n"
    assert read_branch(paths[1]) == []


def test_figure_errors():
    with pytest.raises(FigureError):
        figure_cases("fig9")
    with pytest.raises(FigureError):
        figure_cases("fig2", {"not_a_key": 1.0})
    with pytest.raises(FigureError):
        run_case(Case("x", fig2_params(1.0), "lam", 8, 9, 2, method="magic"))


def test_select_root_prefers_stable_ordered():
    roots = find_all(fig2_params(1.3))
    assert abs(select_root(roots).state.jm) > 0.1


def test_sweep_is_deterministic_across_threads(tmp_path):
    case = Case("det", fig2_params(1.0), "lambda_over_delta", 0.6, 1.8, 25,
                regime="gain_balanced")
    a = export(run_case(case, threads=1), tmp_path / "a")
    b = export(run_case(case, threads=4), tmp_path / "b")
    for pa, pb in zip(a, b):
        assert filecmp.cmp(pa, pb, shallow=False)


def test_fig2_export_shape(tmp_path):
    results = run_figure("fig2", threads=4)
    paths = [p for r in results for p in export(r, tmp_path)]
    csvs = [p for p in paths if p.endswith(".csv")]
    assert len(csvs) == 2
    for p in csvs:
        rows = read_branch(p)
        assert len(rows) == 501
        vals = [float(r["value"]) for r in rows]
        assert vals[0] == 0.5 and vals[-1] == 2.0
        assert all(float(r["residual_norm"]) < 1e-9 for r in rows)


def test_continuation_export_marks_folds(tmp_path):
    res = run_figure("figS2b", threads=2)[0]
    paths = export(res, tmp_path)
    folds = [r for p in paths if p.endswith(".csv") for r in read_branch(p) if r["fold"] == "1"]
    assert len(folds) == 2
    assert sorted(round(float(r["value"]), 2) for r in folds) == [0.30, 0.63]


# -- command line ------------------------------------------------------------


def test_cli_solve_and_errors(tmp_path, capsys):
    args = ["solve", "--delta_c", "6", "--delta_s", "6", "--lambda", "8", "--omega_a_re", "1",
            "--kappa_c", "1", "--gamma_perp", "1", "--gamma_par", "0.1",
            "--regime", "gain_balanced"]
    assert main(args) == 0
    assert '"roots"' in capsys.readouterr().out
    assert main(["solve", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["solve", "--delta_c", "-1", "--delta_s", "1", "--lambda", "1"]) == 2
    assert main(args + ["--jz", "nan"]) == 2
    runaway = ["dynamics", "--delta_c", "1", "--delta_s", "1", "--lambda", "0",
               "--omega_a_re", "1", "--kappa_g", "50", "--horizon", "100"]
    assert main(runaway) == 3
    assert main(["figure", "fig2", "--out", str(tmp_path), "--set", "gamma_par"]) == 2
    with pytest.raises(SystemExit):
        main(["figure", "fig9", "--out", str(tmp_path)])


def test_cli_sweep_writes_files(tmp_path, capsys):
    rc = main(["sweep", "--delta_c", "8", "--delta_s", "8", "--lambda", "8", "--omega_a_re", "1",
               "--kappa_c", "1", "--gamma_perp", "1", "--gamma_par", "0.1",
               "--regime", "gain_balanced", "--param", "lambda_over_delta",
               "--start", "0.8", "--stop", "1.6", "--points", "5", "--out", str(tmp_path)])
    assert rc == 0
    assert len(os.listdir(tmp_path)) == 2
