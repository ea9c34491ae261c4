import pandas as pd
import pytest

import grid
from config import GridAxes, load_run_config
from errors import ConfigError, DataError
from grid import RunManifest, best_in_column, grid_cells, run_grid
from hedging import HedgeSchedule
from market_data import write_market_csv
from strategy import ModelKind, SizingKind, StrategyKind

GRID_INI = """
[data]
dir = {data}
session_length = 60

[grid]
strategies = short_put
models = bsm
sizings = delta, vix
rehedging = naked, 20
otm = 0%
include_benchmark = {benchmark}
"""


@pytest.fixture(scope="module")
def data_dir(make_market, tmp_path_factory):
    directory = tmp_path_factory.mktemp("market")
    write_market_csv(make_market(seed=8), directory)
    return directory


def manifest(tmp_path, data_dir, out="grid", benchmark=False):
    ini = tmp_path / "grid.ini"
    ini.write_text(GRID_INI.format(data=data_dir, benchmark=str(benchmark).lower()), encoding="utf-8")
    return RunManifest.from_run(load_run_config(ini), tmp_path / out, threads=1)


def test_grid_runs_every_cell(tmp_path, data_dir):
    frame, path = run_grid(manifest(tmp_path, data_dir))
    assert path == tmp_path / "grid" / "results.csv"
    assert len(frame) == 4
    assert (frame["status"] == "ok").all()
    assert frame["model"].tolist() == ["NAKED", "BSM", "NAKED", "BSM"]
    assert frame["sizing"].tolist() == ["DELTA BSM", "DELTA", "VIX", "VIX"]
    assert frame["rehedging"].tolist() == ["-", "20", "-", "20"]
    assert len(list((tmp_path / "grid" / "equity").glob("*.csv"))) == 4


def test_benchmark_row_comes_first(tmp_path, data_dir):
    frame, _ = run_grid(manifest(tmp_path, data_dir, benchmark=True))
    assert len(frame) == 5
    assert frame.loc[0, "model"] == "B&H"
    assert (tmp_path / "grid" / "equity" / "buy-and-hold.csv").is_file()


def test_failing_cell_becomes_an_error_row(tmp_path, data_dir, monkeypatch):
    real = grid.run_backtest

    def flaky(cfg, store, progress=False):
        if cfg.sizing.kind is SizingKind.VIX:
            raise DataError("no VIX today")
        return real(cfg, store, progress)

    monkeypatch.setattr(grid, "run_backtest", flaky)
    frame, _ = run_grid(manifest(tmp_path, data_dir))
    failed = frame[frame["status"] == "error"]
    assert len(failed) == 2
    assert set(failed["message"]) == {"DataError: no VIX today"}
    assert (failed["arc"] == "").all()
    assert (frame[frame["status"] == "ok"]["arc"] != "").all()


def test_reruns_are_byte_identical(tmp_path, data_dir):
    _, first = run_grid(manifest(tmp_path, data_dir, out="a"))
    _, second = run_grid(manifest(tmp_path, data_dir, out="b"))
    assert first.read_bytes() == second.read_bytes()


def test_grid_without_data_or_seeds_is_rejected(tmp_path):
    with pytest.raises(ConfigError, match="market data"):
        RunManifest.from_run(load_run_config(), tmp_path)


def test_seeded_grid_adds_a_seed_column(tmp_path):
    ini = tmp_path / "seeds.ini"
    ini.write_text("[generator]\nn_days = 5\nwarmup_days = 0\nstrike_span = 3%\n"
                   "[data]\nsession_length = 60\n"
                   "[grid]\nstrategies = short_put\nmodels = bsm\nsizings = delta\nrehedging = naked\notm = 0%\n"
                   "seeds = 1, 2\n", encoding="utf-8")
    m = RunManifest.from_run(load_run_config(ini), tmp_path / "out", threads=1)
    assert m.with_seed_column
    frame, _ = run_grid(m)
    assert frame["seed"].tolist() == ["1", "2"]
    assert list(frame.columns).index("seed") == 5
    assert (frame["status"] == "ok").all()
    assert frame.loc[0, "arc"] != frame.loc[1, "arc"]


def axes(**overrides):
    values = dict(strategies=(StrategyKind.SHORT_PUT,), models=(ModelKind.BSM, ModelKind.VG),
                  sizings=(SizingKind.DELTA, SizingKind.VIX),
                  rehedging=(HedgeSchedule.parse("naked"), HedgeSchedule.parse("30")), otm=(0.0,))
    values.update(overrides)
    return GridAxes(**values)


def test_naked_vix_cells_are_deduplicated():
    cells = grid_cells(axes())
    assert len(cells) == 7
    assert sum(c.labels()["sizing"] == "VIX" and c.naked for c in cells) == 1


def test_impossible_moneyness_is_skipped():
    cells = grid_cells(axes(strategies=(StrategyKind.SHORT_STRADDLE, StrategyKind.SHORT_STRANGLE),
                            models=(ModelKind.BSM,), sizings=(SizingKind.DELTA,), otm=(0.0, 0.02)))
    assert [(c.strategy, c.otm) for c in cells] == [(StrategyKind.SHORT_STRADDLE, 0.0)] * 2 + \
        [(StrategyKind.SHORT_STRANGLE, 0.02)] * 2


def test_cell_labels():
    single = grid_cells(axes(models=(ModelKind.VG,), sizings=(SizingKind.DELTA,),
                             rehedging=(HedgeSchedule.parse("single"),), otm=(0.02,)))[0]
    assert single.labels() == {"options": "SHORT PUT", "model": "VG", "sizing": "DELTA", "rehedging": "SINGLE",
                               "otm": "2%"}
    assert single.slug == "short-put-vg-delta-single-2pct"


def test_best_in_column():
    frame = pd.DataFrame({
        "arc": ["0.1", "0.3", ""], "asd": ["0.2", "0.1", ""], "md": ["0.5", "0.4", ""], "mld": ["1.0", "0.5", ""],
        "ir": ["0.5", "3.0", ""], "ir2": ["0.1", "2.0", ""], "ir3": ["1", "9", ""],
        "cvar": ["-0.01", "-0.03", ""], "var": ["-0.005", "0.001", ""],
        "status": ["ok", "ok", "error"],
    })
    best = best_in_column(frame)
    assert best["arc"] == 1 and best["asd"] == 1 and best["mld"] == 1
    assert best["cvar"] == 0
    assert best["var"] == 1
    assert best_in_column(frame.iloc[[2]])["arc"] is None
