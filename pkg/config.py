"""Environment settings and the INI run configuration."""
import configparser
import difflib
import logging
import os
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

from dotenv import load_dotenv

from backtest import BacktestConfig
from calibration import CalibrationConfig
from errors import ConfigError, InvalidInputError
from hedging import HedgeSchedule
from market_data import DEFAULT_MAX_STALENESS, DEFAULT_SESSION_LENGTH
from portfolio import CommissionModel, FillModel
from strategy import ModelKind, SizingKind, SizingRule, StrategyKind, StrategySpec
from synth_market import GeneratorConfig
from variance_gamma import PricingGrid

__version__ = "0.1.0"

logger = logging.getLogger(__name__)

load_dotenv()


class Config(object):
    LOG_LEVEL = os.environ.get("VOLWRITER_LOG_LEVEL", "INFO").upper()
    LOG_FILE = os.environ.get("VOLWRITER_LOG_FILE", "")

    @staticmethod
    def threads() -> int:
        """Grid worker cap from VOLWRITER_THREADS; 1 runs cells inline."""
        raw = os.environ.get("VOLWRITER_THREADS", "")
        if not raw.strip():
            return os.cpu_count() or 1
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"VOLWRITER_THREADS must be an integer, got {raw!r}") from None
        if value < 1:
            raise ConfigError(f"VOLWRITER_THREADS must be at least 1, got {value}")
        return value


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value not in configparser.ConfigParser.BOOLEAN_STATES:
        raise ValueError(f"not a boolean: {text!r}")
    return configparser.ConfigParser.BOOLEAN_STATES[value]


def _optional_date(text: str) -> Optional[date]:
    return date.fromisoformat(text.strip()) if text.strip() else None


def _optional_str(text: str) -> Optional[str]:
    return text.strip() or None


def _list(item: Callable[[str], Any]) -> Callable[[str], Tuple]:
    def parse(text: str) -> Tuple:
        return tuple(item(part.strip()) for part in text.split(",") if part.strip())
    return parse


def _percent(text: str) -> float:
    text = text.strip()
    return float(text[:-1]) / 100.0 if text.endswith("%") else float(text)


_G = GeneratorConfig()
_C = CalibrationConfig()
_COST = CommissionModel()

SCHEMA: Dict[str, Dict[str, Tuple[Callable[[str], Any], Any]]] = {
    "generator": {
        "seed": (int, _G.seed),
        "n_days": (int, _G.n_days),
        "start": (date.fromisoformat, _G.start),
        "s0": (float, _G.s0),
        "process": (str.strip, _G.process.value),
        "mu": (float, _G.mu),
        "sigma_real": (float, _G.sigma_real),
        "vg_sigma": (float, _G.vg_sigma),
        "vg_nu": (float, _G.vg_nu),
        "vg_theta": (float, _G.vg_theta),
        "quote_model": (str.strip, "bsm"),
        "iv_level": (float, _G.iv_level),
        "iv_skew": (float, _G.iv_skew),
        "quote_sigma": (float, _G.quote_sigma),
        "quote_nu": (float, _G.quote_nu),
        "quote_theta": (float, _G.quote_theta),
        "spread": (float, _G.spread),
        "underlying_spread": (float, _G.underlying_spread),
        "strike_spacing": (float, _G.strike_spacing),
        "strike_span": (_percent, _G.strike_span),
        "dte_list": (_list(int), _G.dte_list),
        "risk_free": (float, _G.risk_free),
        "div_yield": (float, _G.div_yield),
        "iv_vol": (float, _G.iv_vol),
        "iv_persistence": (float, _G.iv_persistence),
        "warmup_days": (int, _G.warmup_days),
        "quote_every": (int, _G.quote_every),
        "grid_points": (int, _G.grid_points),
    },
    "data": {
        "dir": (_optional_str, None),
        "session_length": (int, DEFAULT_SESSION_LENGTH),
        "max_staleness": (int, DEFAULT_MAX_STALENESS),
    },
    "strategy": {
        "kind": (str.strip, StrategyKind.SHORT_PUT.value),
        "otm": (_percent, 0.0),
        "dte": (int, 7),
    },
    "sizing": {
        "kind": (str.strip, SizingKind.DELTA.value),
        "model": (_optional_str, None),
        "rho": (float, 1.4),
        "window": (int, 252),
    },
    "hedging": {
        "schedule": (str.strip, "naked"),
        "model": (str.strip, ModelKind.BSM.value),
        "minutes_before_close": (int, 30),
        "dividend_adjusted_delta": (_bool, False),
    },
    "costs": {
        "per_option_contract": (float, _COST.per_option_contract),
        "option_order_minimum": (float, _COST.option_order_minimum),
        "per_etf_share": (float, _COST.per_etf_share),
        "etf_order_minimum": (float, _COST.etf_order_minimum),
        "index_settlement_fee": (float, _COST.index_settlement_fee),
        "spread_fraction": (float, 1.0),
        "etf_ratio": (float, 0.1),
        "multiplier": (float, 100.0),
    },
    "backtest": {
        "initial_cash": (float, 1_000_000.0),
        "start": (_optional_date, None),
        "end": (_optional_date, None),
        "record_minutes": (_bool, False),
    },
    "calibration": {
        "refit_interval": (int, _C.refit_interval),
        "sigma_min": (float, _C.sigma_bounds[0]),
        "sigma_max": (float, _C.sigma_bounds[1]),
        "nu_min": (float, _C.nu_bounds[0]),
        "nu_max": (float, _C.nu_bounds[1]),
        "theta_min": (float, _C.theta_bounds[0]),
        "theta_max": (float, _C.theta_bounds[1]),
        "max_iterations": (int, _C.max_iterations),
        "tolerance": (float, _C.tolerance),
        "min_bid": (float, _C.min_bid),
        "min_mid": (float, _C.min_mid),
        "moneyness_window": (float, _C.moneyness_window),
        "min_quotes": (int, _C.min_quotes),
        "grid_points": (int, _C.grid.n_points),
        "max_points": (int, _C.grid.max_points),
    },
    "grid": {
        "strategies": (_list(str), tuple(k.value for k in StrategyKind)),
        "models": (_list(str), tuple(m.value for m in ModelKind)),
        "sizings": (_list(str), tuple(s.value for s in SizingKind)),
        "rehedging": (_list(str), ("naked", "30", "130", "single")),
        "otm": (_list(_percent), (0.0, 0.02, 0.05, 0.10)),
        "seeds": (_list(int), ()),
        "include_benchmark": (_bool, False),
    },
}


def _suggest(name: str, choices) -> str:
    close = difflib.get_close_matches(name, list(choices), n=1)
    return f"; did you mean {close[0]!r}?" if close else ""


@dataclass(frozen=True)
class GridAxes:
    strategies: Tuple[StrategyKind, ...]
    models: Tuple[ModelKind, ...]
    sizings: Tuple[SizingKind, ...]
    rehedging: Tuple[HedgeSchedule, ...]
    otm: Tuple[float, ...]
    seeds: Tuple[int, ...] = ()
    include_benchmark: bool = False


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs, parsed and validated."""
    generator: GeneratorConfig
    backtest: BacktestConfig
    calibration: CalibrationConfig
    grid: GridAxes
    data_dir: Optional[Path] = None
    session_length: int = DEFAULT_SESSION_LENGTH
    source: Optional[Path] = None
    values: Dict[str, Dict[str, Any]] = field(default_factory=dict, repr=False, compare=False)

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        return self if seed is None else replace(self, generator=replace(self.generator, seed=seed))


def read_sections(path: Optional[Union[str, Path]]) -> Dict[str, Dict[str, Any]]:
    """Typed values for every schema key, file values over defaults.

    Raises:
        ConfigError: Missing file, unknown section or key, or a value that does not parse.
    """
    values = {section: {key: default for key, (_, default) in keys.items()} for section, keys in SCHEMA.items()}
    if path is None:
        return values
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]{_suggest(section, SCHEMA)}")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]{_suggest(key, SCHEMA[section])}")
            parse = SCHEMA[section][key][0]
            try:
                values[section][key] = parse(raw)
            except ValueError as e:
                raise ConfigError(f"{path}: [{section}] {key} = {raw!r}: {e}") from None
    logger.debug(f"Read configuration from {path}")
    return values


def _generator(v: Dict[str, Any], session_length: int) -> GeneratorConfig:
    return GeneratorConfig(session_length=session_length, **v)


def _calibration(v: Dict[str, Any], max_staleness: int) -> CalibrationConfig:
    return CalibrationConfig(
        refit_interval=v["refit_interval"],
        max_staleness=max_staleness,
        sigma_bounds=(v["sigma_min"], v["sigma_max"]),
        nu_bounds=(v["nu_min"], v["nu_max"]),
        theta_bounds=(v["theta_min"], v["theta_max"]),
        max_iterations=v["max_iterations"],
        tolerance=v["tolerance"],
        min_bid=v["min_bid"],
        min_mid=v["min_mid"],
        moneyness_window=v["moneyness_window"],
        min_quotes=v["min_quotes"],
        grid=PricingGrid(v["grid_points"], max_points=v["max_points"]),
    )


def _backtest(values: Dict[str, Dict[str, Any]], calibration: CalibrationConfig) -> BacktestConfig:
    strategy, sizing, hedging = values["strategy"], values["sizing"], values["hedging"]
    costs, bt = values["costs"], values["backtest"]
    return BacktestConfig(
        strategy=StrategySpec(strategy["kind"], strategy["otm"], strategy["dte"]),
        sizing=SizingRule(sizing["kind"], sizing["model"], sizing["rho"], sizing["window"]),
        hedge=HedgeSchedule.parse(hedging["schedule"]),
        model=ModelKind(hedging["model"]),
        initial_cash=bt["initial_cash"],
        etf_ratio=costs["etf_ratio"],
        commission=CommissionModel(
            per_option_contract=costs["per_option_contract"],
            option_order_minimum=costs["option_order_minimum"],
            per_etf_share=costs["per_etf_share"],
            etf_order_minimum=costs["etf_order_minimum"],
            index_settlement_fee=costs["index_settlement_fee"],
        ),
        fill=FillModel(costs["spread_fraction"]),
        hedge_minute_before_close=hedging["minutes_before_close"],
        multiplier=costs["multiplier"],
        max_staleness=values["data"]["max_staleness"],
        dividend_adjusted_delta=hedging["dividend_adjusted_delta"],
        calibration=calibration,
        start=bt["start"],
        end=bt["end"],
        record_minutes=bt["record_minutes"],
    )


def _grid(v: Dict[str, Any]) -> GridAxes:
    axes = GridAxes(
        strategies=tuple(StrategyKind(s) for s in v["strategies"]),
        models=tuple(ModelKind(m) for m in v["models"]),
        sizings=tuple(SizingKind(s) for s in v["sizings"]),
        rehedging=tuple(HedgeSchedule.parse(h) for h in v["rehedging"]),
        otm=tuple(v["otm"]),
        seeds=tuple(v["seeds"]),
        include_benchmark=v["include_benchmark"],
    )
    for name in ("strategies", "models", "sizings", "rehedging", "otm"):
        if not getattr(axes, name):
            raise ConfigError(f"[grid] {name} is empty")
    return axes


def load_run_config(path: Optional[Union[str, Path]] = None, data_dir: Optional[Union[str, Path]] = None,
                    seed: Optional[int] = None) -> RunConfig:
    """Parse ``path`` (defaults only when None); ``data_dir`` and ``seed`` override the file."""
    values = read_sections(path)
    session_length = values["data"]["session_length"]
    try:
        calibration = _calibration(values["calibration"], values["data"]["max_staleness"])
        run = RunConfig(
            generator=_generator(values["generator"], session_length),
            backtest=_backtest(values, calibration),
            calibration=calibration,
            grid=_grid(values["grid"]),
            data_dir=Path(data_dir or values["data"]["dir"]) if (data_dir or values["data"]["dir"]) else None,
            session_length=session_length,
            source=Path(path) if path else None,
            values=values,
        )
    except (InvalidInputError, ValueError) as e:
        raise ConfigError(f"{path or 'defaults'}: {e}") from None
    return run.with_seed(seed)
