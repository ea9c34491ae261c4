"""Equity-line charts (SVG) and the merged long-format equity CSV."""
import logging
import re
import xml.etree.ElementTree as ET
from collections import OrderedDict
from datetime import date
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")

import numpy as np
import pandas as pd
from matplotlib import rc_context
from matplotlib.figure import Figure

from backtest import EquityCurve
from errors import ConfigError, DataError

logger = logging.getLogger(__name__)

SVG_PARAMS = {
    "svg.fonttype": "none",
    "svg.hashsalt": "volwriter",
    "path.simplify": False,
}
LONG_COLUMNS = ["date", "config", "equity"]
SVG_NS = "http://www.w3.org/2000/svg"
SVG_PREFIXES = {
    "": SVG_NS,
    "xlink": "http://www.w3.org/1999/xlink",
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "cc": "http://creativecommons.org/ns#",
    "dc": "http://purl.org/dc/elements/1.1/",
}


def curve_name(path: Path) -> str:
    """Per-cell files are all called ``equity.csv``; name those after their folder."""
    return path.parent.name if path.stem == "equity" and path.parent.name else path.stem


def load_curves(paths: Sequence[Union[str, Path]]) -> List[EquityCurve]:
    if not paths:
        raise ConfigError("report needs at least one equity CSV")
    return [EquityCurve.read_csv(Path(p), curve_name(Path(p))) for p in paths]


def align_curves(curves: Sequence[EquityCurve]) -> List[EquityCurve]:
    """Restrict every curve to the dates all of them share."""
    common = set(curves[0].dates)
    for c in curves[1:]:
        common &= set(c.dates)
    if not common:
        raise DataError("equity curves share no dates: " + ", ".join(c.name for c in curves))
    aligned = []
    for c in curves:
        if len(c.dates) != len(common):
            logger.warning(f"Curve {c.name} trimmed from {len(c.dates)} to {len(common)} shared dates")
        keep = np.array([d in common for d in c.dates])
        aligned.append(EquityCurve(tuple(d for d in c.dates if d in common), c.values[keep], c.name))
    return aligned


def long_frame(curves: Sequence[EquityCurve]) -> pd.DataFrame:
    frames = []
    for c in curves:
        frame = c.to_frame()
        frame.insert(1, "config", c.name)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)[LONG_COLUMNS]


def _lines_to_polylines(path: Path, n_curves: int) -> None:
    """Rewrite each curve's ``<path d="M .. L ..">`` as a ``<polyline>`` with the same style."""
    for prefix, uri in SVG_PREFIXES.items():
        ET.register_namespace(prefix, uri)
    tree = ET.parse(path)
    for group in tree.getroot().iter(f"{{{SVG_NS}}}g"):
        if not group.get("id", "").startswith("curve-"):
            continue
        for pos, child in enumerate(list(group)):
            d = child.get("d") if child.tag == f"{{{SVG_NS}}}path" else None
            if d is None or set(re.findall(r"[A-Za-z]", d)) - {"M", "L"} or d.count("M") != 1:
                continue
            coords = re.findall(r"-?\d+(?:\.\d+)?", d)
            attrs = {"points": " ".join(f"{x},{y}" for x, y in zip(coords[::2], coords[1::2]))}
            attrs.update((k, v) for k, v in child.attrib.items() if k != "d")
            group.remove(child)
            group.insert(pos, ET.Element(f"{{{SVG_NS}}}polyline", attrs))
    tree.write(path, encoding="utf-8", xml_declaration=True)
    found = sum(1 for _ in tree.getroot().iter(f"{{{SVG_NS}}}polyline"))
    if found != n_curves:
        logger.warning(f"{path.name}: {found} polylines for {n_curves} curves")


def equity_svg(curves: Sequence[EquityCurve], path: Union[str, Path], title: str = "Equity lines") -> Path:
    """One line per curve; line i carries gid ``curve-i`` and its legend label ``legend-i``."""
    path = Path(path)
    with rc_context(SVG_PARAMS):
        fig = Figure(figsize=(10, 5))
        ax = fig.subplots()
        for i, c in enumerate(curves):
            (line,) = ax.plot(list(c.dates), c.values, label=c.name, linewidth=1.2)
            line.set_gid(f"curve-{i}")
        ax.set_title(title)
        ax.set_xlabel("date")
        ax.set_ylabel("equity")
        ax.grid(True, alpha=0.3)
        legend = ax.legend(loc="best")
        for i, text in enumerate(legend.get_texts()):
            text.set_gid(f"legend-{i}")
        fig.autofmt_xdate()
        fig.savefig(path, format="svg", metadata={"Date": None})
    _lines_to_polylines(path, len(curves))
    return path


def group_paths(paths: Sequence[Union[str, Path]]) -> "OrderedDict[str, List[Path]]":
    """Inputs grouped by parent directory, in first-seen order."""
    groups: Dict[Path, List[Path]] = OrderedDict()
    for p in map(Path, paths):
        groups.setdefault(p.parent.resolve(), []).append(p)
    named: "OrderedDict[str, List[Path]]" = OrderedDict()
    for parent, members in groups.items():
        name = parent.name or "equity"
        while name in named:
            name += "_"
        named[name] = members
    return named


def write_report(paths: Sequence[Union[str, Path]], out_dir: Union[str, Path]) -> Tuple[List[Path], Path]:
    """SVG per input group plus ``equity_long.csv`` over all inputs.

    Raises:
        ConfigError: No input files.
        DataError: A file is not an equity CSV or a group shares no dates.
    """
    if not paths:
        raise ConfigError("report needs at least one equity CSV")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    svgs: List[Path] = []
    everything: List[EquityCurve] = []
    for name, members in group_paths(paths).items():
        curves = align_curves(load_curves(members))
        svgs.append(equity_svg(curves, out_dir / f"{name}.svg", title=f"Equity lines: {name}"))
        everything.extend(curves)
        logger.info(f"Plotted {len(curves)} curve(s) to {svgs[-1]}")
    long_path = out_dir / "equity_long.csv"
    long_frame(everything).to_csv(long_path, index=False, lineterminator="\n")
    return svgs, long_path
