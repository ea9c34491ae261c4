#!/usr/bin/env python3
import hashlib
import json
import logging
from dataclasses import asdict
from pathlib import Path

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from backtest import run_backtest
from calibration import calibrate_store, write_params_csv
from config import Config, RunConfig, __version__, load_run_config
from errors import VolWriterError
from grid import LABEL_COLUMNS, METRIC_COLUMNS, RunManifest, best_in_column, run_grid
from market_data import OPTIONS_FILE, RATES_FILE, UNDERLYING_FILE, VIX_FILE, MarketStore, load_market_csv, write_market_csv
from metrics import MetricsReport, summary_stats, underlying_close_returns
from report import write_report
from synth_market import generate

logger = logging.getLogger(__name__)
console = Console()


class CommandError(click.ClickException):
    """ClickException that keeps the library error's exit code."""

    def __init__(self, error: VolWriterError) -> None:
        super().__init__(str(error))
        self.exit_code = error.exit_code


def setup_logging(verbose: bool = False) -> None:
    handlers = [RichHandler(console=Console(stderr=True), show_path=False)]
    if Config.LOG_FILE:
        file_handler = logging.FileHandler(Config.LOG_FILE)
        file_handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))
        handlers.append(file_handler)
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, Config.LOG_LEVEL, logging.INFO),
        format='%(message)s',
        handlers=handlers,
        force=True,
    )


def market_digest(directory: Path) -> str:
    """sha256 over the four market files, in schema order."""
    digest = hashlib.sha256()
    for name in (UNDERLYING_FILE, OPTIONS_FILE, VIX_FILE, RATES_FILE):
        digest.update(name.encode())
        digest.update((directory / name).read_bytes())
    return digest.hexdigest()


def load_store(run: RunConfig) -> MarketStore:
    """CSV data from ``--data``/``[data] dir``, else a synthetic market from ``[generator]``."""
    if run.data_dir is not None:
        return load_market_csv(run.data_dir, session_length=run.session_length)
    logger.info(f"No data directory given; generating a synthetic market with seed {run.generator.seed}")
    return generate(run.generator, progress=True)


def _cell(value) -> str:
    if value is None or value == "":
        return "-"
    return f"{value:.6g}" if isinstance(value, float) else str(value)


def metrics_table(title: str, values: dict) -> Table:
    table = Table(title=title)
    table.add_column("metric")
    table.add_column("value", justify="right")
    for key, value in values.items():
        table.add_row(key, _cell(value))
    return table


config_option = click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                             help="INI run configuration")
data_option = click.option('--data', 'data_dir', type=click.Path(file_okay=False), default=None,
                           help="Directory with underlying.csv, options.csv, vix.csv and rates.csv")
seed_option = click.option('--seed', type=int, default=None, help="Override [generator] seed")


def out_option(default: str):
    return click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=default, show_default=True,
                        help="Output directory")


@click.group()
@click.version_option(__version__)
@click.option('--verbose', '-v', is_flag=True, help="Debug logging")
def cli(verbose):
    """Systematic index option writing: synthetic markets, BSM/VG hedged backtests and reports."""
    setup_logging(verbose)


@cli.command(name="generate")
@config_option
@out_option("data")
@seed_option
def generate_cmd(config_path, out_dir, seed):
    """Write a synthetic market as the four CSV files and print its digest."""
    try:
        run = load_run_config(config_path, seed=seed)
        store = generate(run.generator, progress=True)
        out = Path(out_dir)
        write_market_csv(store, out)
        digest = market_digest(out)
        logger.info(f"Wrote {len(store.dates)} sessions to {out}")
        click.echo(f"sha256 {digest}")
    except VolWriterError as e:
        logger.error(f"Generate failed: {e}")
        raise CommandError(e)


@cli.command()
@config_option
@data_option
@out_option("out")
@seed_option
def calibrate(config_path, data_dir, out_dir, seed):
    """Fit VG parameters at every refit minute and write vg_params.csv."""
    try:
        run = load_run_config(config_path, data_dir, seed)
        store = load_store(run)
        fits = calibrate_store(store, run.calibration, progress=True)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = write_params_csv(fits, out / "vg_params.csv")
        stale = sum(p.stale for _, p in fits)
        click.echo(f"{len(fits)} fits ({stale} stale) written to {path}")
    except VolWriterError as e:
        logger.error(f"Calibration failed: {e}")
        raise CommandError(e)


@cli.command()
@config_option
@data_option
@out_option("out")
@seed_option
def backtest(config_path, data_dir, out_dir, seed):
    """Run one configuration; writes equity.csv, trades.csv and metrics.json."""
    try:
        run = load_run_config(config_path, data_dir, seed)
        store = load_store(run)
        result = run_backtest(run.backtest, store, progress=True)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.equity.write_csv(out / "equity.csv")
        result.trades.write_csv(out / "trades.csv")
        if result.ledger is not None:
            result.ledger.to_csv(out / "ledger.csv", index=False, lineterminator="\n")
        report = MetricsReport.from_curve(result.equity)
        report.write_json(out / "metrics.json")
        console.print(metrics_table(run.backtest.label, report.to_dict()))
    except VolWriterError as e:
        logger.error(f"Backtest failed: {e}")
        raise CommandError(e)


@cli.command()
@config_option
@data_option
@out_option("out")
@seed_option
def grid(config_path, data_dir, out_dir, seed):
    """Run the strategy x model x sizing x rehedging x otm grid into results.csv."""
    try:
        run = load_run_config(config_path, data_dir, seed)
        manifest = RunManifest.from_run(run, out_dir, Config.threads())
        frame, path = run_grid(manifest, progress=True)
    except VolWriterError as e:
        logger.error(f"Grid failed: {e}")
        raise CommandError(e)

    best = best_in_column(frame)
    table = Table(title=f"Grid results ({path})")
    columns = LABEL_COLUMNS + (["seed"] if manifest.with_seed_column else []) + METRIC_COLUMNS + ["status"]
    for column in columns:
        table.add_column(column, justify="right" if column in METRIC_COLUMNS else "left")
    for i, row in frame.iterrows():
        cells = []
        for column in columns:
            text = row[column] if row[column] != "" else "-"
            if column in METRIC_COLUMNS and text != "-":
                text = f"{float(text):.4g}"
                if best[column] == i:
                    text = f"[bold]{text}[/bold]"
            cells.append(text)
        table.add_row(*cells)
    console.print(table)


@cli.command()
@config_option
@data_option
@out_option("out")
@seed_option
def stats(config_path, data_dir, out_dir, seed):
    """Descriptive statistics of the underlying's daily close returns."""
    try:
        run = load_run_config(config_path, data_dir, seed)
        store = load_store(run)
        summary = asdict(summary_stats(underlying_close_returns(store)))
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stats.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        console.print(metrics_table("Underlying daily returns", summary))
    except VolWriterError as e:
        logger.error(f"Stats failed: {e}")
        raise CommandError(e)


@cli.command()
@click.argument('equity_csvs', nargs=-1, type=click.Path(exists=True, dir_okay=False))
@out_option("report")
def report(equity_csvs, out_dir):
    """Equity-line SVG per input folder plus a merged long-format CSV."""
    if not equity_csvs:
        raise click.UsageError("report needs at least one equity CSV")
    try:
        svgs, long_path = write_report(list(equity_csvs), out_dir)
    except VolWriterError as e:
        logger.error(f"Report failed: {e}")
        raise CommandError(e)
    for path in svgs:
        click.echo(f"Wrote {path}")
    click.echo(f"Wrote {long_path}")


if __name__ == '__main__':
    cli()
