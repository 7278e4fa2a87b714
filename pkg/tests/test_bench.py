import json
import math

import numpy as np
import pytest

from llana.bench import BenchSettings, bench_surrogates, plot_series, read_report_csv, write_plot_data
from llana.llm import MockBackend
from llana.space import Observation, ParamSpec, SearchSpace, SizeError, sample_uniform, split_dataset

SPACE = SearchSpace(tuple(ParamSpec(n, "continuous", 0.0, 1.0) for n in ("a", "b", "c")))
COEF = np.array([2.0, -1.0, 0.5])


def linear_split(n_train=40, n_test=30, seed=0):
    configs = sample_uniform(SPACE, seed, n_train + n_test)
    rows = [Observation(c, (float(COEF @ [c["a"], c["b"], c["c"]]) + 1.0,)) for c in configs]
    return split_dataset(rows, n_train, n_test, seed)


FAST = dict(n_grid=(5, 10), repeats=2, gp_restarts=1, k_samples=2, m_candidates=3, bo_trials=7)


def test_row_counts_and_golden_header(tmp_path):
    settings = BenchSettings(surrogates=("gp", "forest"), **FAST)
    report = bench_surrogates(linear_split(), SPACE, ("y",), settings, out_dir=tmp_path)
    assert len(report.rows) == 2 * 2 * 2
    assert len(report.regret_rows) == 2 * 2 * 7
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "surrogate,n_observed,repeat,nrmse,r2,lpd"
    assert len(lines) == 9
    assert (tmp_path / "regret.csv").read_text().splitlines()[0] == "surrogate,trial,repeat,regret"
    mirror = json.loads((tmp_path / "report.json").read_text())
    assert set(mirror) == {"report", "regret", "errors"} and len(mirror["report"]) == 8


def test_reports_are_byte_identical(tmp_path):
    settings = BenchSettings(surrogates=("gp", "forest", "icl"), **FAST)
    for name in ("a", "b"):
        bench_surrogates(linear_split(), SPACE, ("y",), settings, out_dir=tmp_path / name)
    for f in ("report.csv", "regret.csv", "report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_parallel_cells_match_serial(tmp_path):
    base = dict(surrogates=("gp", "forest"), regret=False, n_grid=(5, 10), repeats=2, gp_restarts=1)
    bench_surrogates(linear_split(), SPACE, ("y",), BenchSettings(**base), out_dir=tmp_path / "s")
    bench_surrogates(linear_split(), SPACE, ("y",), BenchSettings(jobs=3, **base), out_dir=tmp_path / "p")
    assert (tmp_path / "s" / "report.csv").read_bytes() == (tmp_path / "p" / "report.csv").read_bytes()


def test_gp_fits_linear_data():
    split = linear_split()
    x = np.array([[o.config[n] for n in "abc"] for o in split.test])
    y = np.array([o.scores[0] for o in split.test])
    lsq = np.linalg.lstsq(np.column_stack([x, np.ones(len(x))]), y, rcond=None)[0]
    np.testing.assert_allclose(lsq, [*COEF, 1.0], atol=1e-10)
    report = bench_surrogates(split, SPACE, ("y",), BenchSettings(surrogates=("gp",), n_grid=(30,), repeats=1, regret=False))
    assert report.rows[0]["r2"] >= 0.99


def test_size_precondition():
    with pytest.raises(SizeError):
        bench_surrogates(linear_split(), SPACE, ("y",), BenchSettings(n_grid=(41,)))


def test_failed_cells_are_recorded_not_fatal(tmp_path):
    garbage = MockBackend(lambda messages, i, seed: "no numbers here")
    settings = BenchSettings(surrogates=("icl", "forest"), n_grid=(5,), repeats=1, regret=False, k_samples=2)
    report = bench_surrogates(linear_split(), SPACE, ("y",), settings, backend=garbage, out_dir=tmp_path)
    icl, forest = report.rows
    assert math.isnan(icl["nrmse"]) and not math.isnan(forest["nrmse"])
    assert len(report.errors) == 1 and report.errors[0]["surrogate"] == "icl"
    assert not report.all_failed
    assert json.loads((tmp_path / "report.json").read_text())["report"][0]["nrmse"] is None


def test_plot_series_aggregates():
    rows = [
        {"surrogate": "gp", "n_observed": "5", "nrmse": "0.2"},
        {"surrogate": "gp", "n_observed": "5", "nrmse": "0.4"},
        {"surrogate": "gp", "n_observed": "10", "nrmse": "nan"},
    ]
    assert plot_series(rows, "nrmse") == [("gp", 5, pytest.approx(0.3), pytest.approx(0.1))]


def test_plot_data_files(tmp_path):
    settings = BenchSettings(surrogates=("forest",), n_grid=(5,), repeats=2, bo_trials=6)
    bench_surrogates(linear_split(), SPACE, ("y",), settings, out_dir=tmp_path / "r")
    paths = write_plot_data(tmp_path / "r", tmp_path / "p")
    lines = paths["regret"].read_text().splitlines()
    assert lines[0] == "series,x,y_mean,y_std" and len(lines) == 7
    assert len(read_report_csv(paths["nrmse"])) == 1


def test_plot_data_from_empty_report(tmp_path):
    src = tmp_path / "r"
    src.mkdir()
    (src / "report.csv").write_text("surrogate,n_observed,repeat,nrmse,r2,lpd\n")
    (src / "regret.csv").write_text("surrogate,trial,repeat,regret\n")
    for path in write_plot_data(src, tmp_path / "p").values():
        assert path.read_text() == "series,x,y_mean,y_std\n"
