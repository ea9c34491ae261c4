import logging
import re

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from backtest import EquityCurve
from errors import ConfigError
from main import cli
from report import group_paths, write_report


def write_curve(path, n=20, start="2023-01-02", scale=1.0):
    path.parent.mkdir(parents=True, exist_ok=True)
    dates = pd.bdate_range(start, periods=n).date
    values = 1_000_000.0 * scale * (1.0 + 0.001 * np.arange(n))
    return EquityCurve(tuple(dates), values, path.stem).write_csv(path)


def test_single_curve_chart(tmp_path):
    curve = write_curve(tmp_path / "runs" / "equity.csv")
    svgs, long_path = write_report([curve], tmp_path / "report")
    (svg,) = svgs
    text = svg.read_text()
    assert text.count('id="curve-') == 1
    assert text.count("<polyline") == 1
    (points,) = re.findall(r'<polyline points="([^"]*)"', text)
    assert len(points.split()) == 20
    assert text.count('id="legend-') == 1
    frame = pd.read_csv(long_path)
    assert list(frame.columns) == ["date", "config", "equity"]
    assert set(frame["config"]) == {"runs"}


def test_every_curve_gets_a_line_and_a_legend_entry(tmp_path):
    paths = [write_curve(tmp_path / "grid" / f"cell{i}.csv", scale=1 + i / 10) for i in range(4)]
    (svg,), long_path = write_report(paths, tmp_path / "report")
    text = svg.read_text()
    for i in range(4):
        assert text.count(f'id="curve-{i}"') == 1
        assert text.count(f'id="legend-{i}"') == 1
    assert text.count("<polyline") == 4
    assert len(pd.read_csv(long_path)) == 80


def test_misaligned_curves_are_trimmed(tmp_path, caplog):
    a = write_curve(tmp_path / "grid" / "a.csv", n=20)
    b = write_curve(tmp_path / "grid" / "b.csv", n=15, start="2023-01-09")
    with caplog.at_level(logging.WARNING, logger="report"):
        write_report([a, b], tmp_path / "report")
    assert "trimmed" in caplog.text
    frame = pd.read_csv(tmp_path / "report" / "equity_long.csv")
    assert frame.groupby("config").size().tolist() == [15, 15]


def test_one_chart_per_folder(tmp_path):
    paths = [write_curve(tmp_path / "x" / "equity.csv"), write_curve(tmp_path / "y" / "equity.csv")]
    assert list(group_paths(paths)) == ["x", "y"]
    svgs, _ = write_report(paths, tmp_path / "report")
    assert [p.name for p in svgs] == ["x.svg", "y.svg"]


def test_charts_are_reproducible(tmp_path):
    curve = write_curve(tmp_path / "runs" / "equity.csv")
    (first,), _ = write_report([curve], tmp_path / "one")
    (second,), _ = write_report([curve], tmp_path / "two")
    assert first.read_bytes() == second.read_bytes()


def test_no_inputs(tmp_path):
    with pytest.raises(ConfigError):
        write_report([], tmp_path)
    result = CliRunner().invoke(cli, ["report"])
    assert result.exit_code == 2
