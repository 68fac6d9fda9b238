import json

import pytest

from hicra.metrics import MetricPoint, MetricSeries, write_series_csv
from hicra.report import write_report


def series(name, unit, values, gap_at=()):
    points = tuple(
        MetricPoint(i * 10, None if i in gap_at else v) for i, v in enumerate(values)
    )
    return MetricSeries(name=name, unit=unit, points=points)


def test_report_copies_tables_and_renders_figures(tmp_path):
    in_dir = tmp_path / "artifacts"
    in_dir.mkdir()
    write_series_csv(series("accuracy", "fraction", [0.1, 0.5, 0.9]), in_dir / "accuracy.csv")
    write_series_csv(
        series("token_entropy_all", "bits", [2.0, 1.0, 0.5], gap_at=(1,)),
        in_dir / "token_entropy_all.csv",
    )
    out_dir = tmp_path / "out"
    summary = write_report(in_dir, out_dir)

    assert sorted(summary.tables) == ["accuracy.csv", "token_entropy_all.csv"]
    assert (out_dir / "tables" / "accuracy.csv").exists()
    assert summary.figures
    for name in summary.figures:
        png = out_dir / "figures" / name
        assert png.stat().st_size > 0
    text = (out_dir / "summary.txt").read_text()
    assert "accuracy" in text


def test_report_merges_scalar_json(tmp_path):
    in_dir = tmp_path / "artifacts"
    in_dir.mkdir()
    write_series_csv(series("accuracy", "fraction", [1.0]), in_dir / "accuracy.csv")
    (in_dir / "metrics.json").write_text(json.dumps({"kind": "scalars", "pass_at_2": 0.7857}))
    (in_dir / "unrelated.json").write_text(json.dumps({"kind": "other", "x": 1}))
    summary = write_report(in_dir, tmp_path / "out")
    assert summary.scalars == {"pass_at_2": 0.7857}
    assert "pass_at_2" in (tmp_path / "out" / "summary.txt").read_text()


def test_report_runs_probe_when_training_bundle_present(tmp_path):
    in_dir = tmp_path / "artifacts"
    in_dir.mkdir()
    n = 40
    exec_values = [2.0, 1.5, 0.9] + [0.5] * (n - 3)
    rising = [0.02 * i for i in range(n)]
    for name, unit, values in [
        ("exec_entropy", "bits", exec_values),
        ("reward_mean", "fraction", rising),
        ("semantic_entropy", "bits", rising),
        ("semantic_entropy_success", "bits", rising),
    ]:
        write_series_csv(series(name, unit, values), in_dir / f"{name}.csv")
    out_dir = tmp_path / "out"
    summary = write_report(in_dir, out_dir)
    assert summary.probe is not None
    assert (out_dir / "figures" / "training_overview.png").exists()
    assert "probe" in (out_dir / "summary.txt").read_text()


def test_report_rejects_missing_input(tmp_path):
    with pytest.raises(ValueError, match="artifact"):
        write_report(tmp_path / "nope", tmp_path / "out")


def test_report_rejects_malformed_json(tmp_path):
    in_dir = tmp_path / "artifacts"
    in_dir.mkdir()
    (in_dir / "bad.json").write_text("{not json")
    with pytest.raises(ValueError, match="bad.json"):
        write_report(in_dir, tmp_path / "out")


def test_report_is_pure_function_of_inputs(tmp_path):
    in_dir = tmp_path / "artifacts"
    in_dir.mkdir()
    write_series_csv(series("accuracy", "fraction", [0.2, 0.4]), in_dir / "accuracy.csv")
    first = write_report(in_dir, tmp_path / "out1")
    second = write_report(in_dir, tmp_path / "out2")
    assert first.render() == second.render()
    assert (tmp_path / "out1" / "summary.txt").read_text() == (
        tmp_path / "out2" / "summary.txt"
    ).read_text()
