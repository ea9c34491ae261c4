"""Parameter grid: one backtest per strategy x model x sizing x rehedging x otm cell."""
import functools
import itertools
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pandas as pd
from tqdm import tqdm

from backtest import BacktestConfig, EquityCurve, run_backtest, run_buy_and_hold
from config import GridAxes, RunConfig
from errors import ConfigError
from hedging import HedgeKind, HedgeSchedule
from market_data import MarketStore, load_market_csv
from metrics import MetricsReport
from strategy import ModelKind, SizingKind, SizingRule, StrategyKind, StrategySpec
from synth_market import GeneratorConfig, generate

logger = logging.getLogger(__name__)

LABEL_COLUMNS = ["options", "model", "sizing", "rehedging", "otm"]
METRIC_COLUMNS = ["arc", "asd", "md", "mld", "ir", "ir2", "ir3", "cvar", "var"]
STATUS_COLUMNS = ["status", "message"]

HIGHER_IS_BETTER = ("arc", "ir", "ir2", "ir3")
LOWER_IS_BETTER = ("asd", "md", "mld")
NEAREST_ZERO = ("cvar", "var")


@dataclass(frozen=True)
class GridCell:
    strategy: StrategyKind
    model: ModelKind
    sizing: SizingKind
    hedge: HedgeSchedule
    otm: float

    @property
    def naked(self) -> bool:
        return self.hedge.kind is HedgeKind.NAKED

    def labels(self) -> Dict[str, str]:
        """Row labels in the results-table layout, e.g. NAKED / DELTA BSM / - for naked cells."""
        if self.naked:
            model = "NAKED"
            sizing = f"DELTA {self.model.value.upper()}" if self.sizing is SizingKind.DELTA else "VIX"
            rehedging = "-"
        else:
            model = self.model.value.upper()
            sizing = self.sizing.value.upper()
            rehedging = "SINGLE" if self.hedge.kind is HedgeKind.SINGLE else str(self.hedge.interval)
        return {
            "options": self.strategy.value.replace("_", " ").upper(),
            "model": model,
            "sizing": sizing,
            "rehedging": rehedging,
            "otm": f"{self.otm * 100:g}%",
        }

    @property
    def slug(self) -> str:
        text = "_".join(self.labels().values()).lower()
        return re.sub(r"[^a-z0-9]+", "-", text.replace("%", "pct")).strip("-")

    def backtest_config(self, base: BacktestConfig) -> BacktestConfig:
        return replace(
            base,
            strategy=StrategySpec(self.strategy, self.otm, base.strategy.dte),
            sizing=SizingRule(self.sizing, None, base.sizing.rho, base.sizing.window),
            hedge=self.hedge,
            model=self.model,
            record_minutes=False,
        )


def valid_cell(strategy: StrategyKind, otm: float) -> bool:
    if strategy is StrategyKind.SHORT_STRADDLE:
        return otm == 0
    if strategy is StrategyKind.SHORT_STRANGLE:
        return otm > 0
    return True


def grid_cells(axes: GridAxes) -> List[GridCell]:
    """Cells in axis order, without impossible straddle/strangle moneyness and without
    naked VIX-sized duplicates, whose result does not depend on the model."""
    cells, seen = [], set()
    for strategy, model, sizing, hedge, otm in itertools.product(
            axes.strategies, axes.models, axes.sizings, axes.rehedging, axes.otm):
        if not valid_cell(strategy, otm):
            continue
        cell = GridCell(strategy, model, sizing, hedge, otm)
        key = tuple(cell.labels().values())
        if key in seen:
            continue
        seen.add(key)
        cells.append(cell)
    return cells


@dataclass(frozen=True)
class RunManifest:
    """A grid run: configuration, data source, output directory and axes."""
    run: RunConfig
    out_dir: Path
    seeds: Tuple[Optional[int], ...] = (None,)
    threads: int = 1
    cells: Tuple[GridCell, ...] = field(default=())

    @classmethod
    def from_run(cls, run: RunConfig, out_dir: Union[str, Path], threads: int = 1) -> "RunManifest":
        seeds: Tuple[Optional[int], ...] = run.grid.seeds or (None,)
        if seeds == (None,) and run.data_dir is None:
            raise ConfigError("grid needs market data: pass --data or set [grid] seeds")
        return cls(run, Path(out_dir), seeds, threads, tuple(grid_cells(run.grid)))

    @property
    def with_seed_column(self) -> bool:
        return self.seeds != (None,)

    def source(self, seed: Optional[int]) -> tuple:
        if seed is None:
            return ("csv", str(self.run.data_dir), self.run.session_length)
        return ("synthetic", replace(self.run.generator, seed=seed))

    def tasks(self) -> List[tuple]:
        """(index, seed, cell or None for the benchmark, source) in output row order."""
        tasks = []
        base = self.run.backtest
        for seed in self.seeds:
            if self.run.grid.include_benchmark:
                tasks.append((len(tasks), seed, None, self.source(seed), base))
            for cell in self.cells:
                tasks.append((len(tasks), seed, cell, self.source(seed), base))
        return tasks


@functools.lru_cache(maxsize=4)
def load_source(source: tuple) -> MarketStore:
    """Store for a task source; cached per process since stores are immutable."""
    if source[0] == "csv":
        return load_market_csv(source[1], session_length=source[2])
    cfg: GeneratorConfig = source[1]
    return generate(cfg)


def _fmt(value: Optional[float]) -> str:
    return "" if value is None or not math.isfinite(value) else repr(float(value))


def run_cell(task: tuple) -> Tuple[int, Dict[str, str], Optional[EquityCurve]]:
    """Run one task; failures become a status=error row instead of propagating."""
    index, seed, cell, source, base = task
    if cell is None:
        labels = {"options": "-", "model": "B&H", "sizing": "-", "rehedging": "-", "otm": "-"}
    else:
        labels = cell.labels()
    row = dict(labels)
    if seed is not None:
        row["seed"] = str(seed)
    try:
        store = load_source(source)
        if cell is None:
            result = run_buy_and_hold(store, base.initial_cash, base.commission, base.fill,
                                      base.etf_ratio, base.start, base.end)
        else:
            result = run_backtest(cell.backtest_config(base), store)
        report = MetricsReport.from_curve(result.equity)
        row.update(arc=_fmt(report.arc), asd=_fmt(report.asd), md=_fmt(report.md), mld=_fmt(report.mld),
                   ir=_fmt(report.ir), ir2=_fmt(report.ir2), ir3=_fmt(report.ir3),
                   cvar=_fmt(report.cvar95), var=_fmt(report.var95), status="ok", message="")
        return index, row, result.equity
    except Exception as e:
        kind = type(e).__name__
        logger.error(f"Grid cell {' '.join(labels.values())} failed: {kind}: {e}")
        row.update({c: "" for c in METRIC_COLUMNS})
        row.update(status="error", message=f"{kind}: {e}")
        return index, row, None


def _execute(tasks: List[tuple], threads: int, progress: bool) -> List[Tuple[int, Dict[str, str], Optional[EquityCurve]]]:
    bar = tqdm(total=len(tasks), desc="Grid", unit="cell", disable=not progress)
    results = []
    try:
        if threads <= 1 or len(tasks) <= 1:
            for task in tasks:
                results.append(run_cell(task))
                bar.update(1)
        else:
            with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
                futures = [pool.submit(run_cell, task) for task in tasks]
                for future in as_completed(futures):
                    results.append(future.result())
                    bar.update(1)
    finally:
        bar.close()
    return sorted(results, key=lambda r: r[0])


def run_grid(manifest: RunManifest, progress: bool = False) -> Tuple[pd.DataFrame, Path]:
    """Run every cell and write ``results.csv`` plus ``equity/<cell>.csv`` once all cells finish.

    Raises:
        ConfigError: The output directory cannot be written.
    """
    tasks = manifest.tasks()
    logger.info(f"Grid: {len(tasks)} cell(s) over {len(manifest.seeds)} data set(s), {manifest.threads} worker(s)")
    results = _execute(tasks, manifest.threads, progress)

    columns = list(LABEL_COLUMNS) + (["seed"] if manifest.with_seed_column else []) + METRIC_COLUMNS + STATUS_COLUMNS
    frame = pd.DataFrame([row for _, row, _ in results], columns=columns)
    equity_dir = manifest.out_dir / "equity"
    try:
        equity_dir.mkdir(parents=True, exist_ok=True)
        for (index, seed, cell, _, _), (_, _, curve) in zip(tasks, results):
            if curve is None:
                continue
            name = "buy-and-hold" if cell is None else cell.slug
            if seed is not None:
                name += f"_seed{seed}"
            curve.write_csv(equity_dir / f"{name}.csv")
        path = manifest.out_dir / "results.csv"
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise ConfigError(f"cannot write grid output to {manifest.out_dir}: {e}") from None
    failed = int((frame["status"] == "error").sum())
    logger.info(f"Grid finished: {len(frame) - failed} ok, {failed} failed; results in {path}")
    return frame, path


def best_in_column(frame: pd.DataFrame) -> Dict[str, Optional[int]]:
    """Row position of the best value in each metric column, over rows that have one."""
    best: Dict[str, Optional[int]] = {}
    for column in METRIC_COLUMNS:
        values = pd.to_numeric(frame[column], errors="coerce")
        values = values[frame["status"] == "ok"].dropna()
        if values.empty:
            best[column] = None
        elif column in HIGHER_IS_BETTER:
            best[column] = int(values.idxmax())
        elif column in LOWER_IS_BETTER:
            best[column] = int(values.idxmin())
        else:
            best[column] = int(values.abs().idxmin())
    return best
