"""File formats: CSV tables, key-value coefficient files, YAML configs."""
from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Mapping

import pandas as pd
import yaml

from .accessibility import AccessibilitySurface
from .domain import (
    CELL_COLUMNS,
    HOUSEHOLD_COLUMNS,
    SEGMENTS,
    MovingRateTable,
    ScenarioSpec,
    SegmentCoefficients,
)
from .errors import ConfigError, DataError
from .network import EDGE_COLUMNS

CELL_DTYPES = {
    "cell_id": "int64",
    "housing_stock": "int64",
    "city": "str",
    "in_daa": "bool",
    "in_ufaa": "bool",
}
HOUSEHOLD_DTYPES = {c: "int64" for c in HOUSEHOLD_COLUMNS if c != "age_of_head"}
HOUSEHOLD_DTYPES["age_of_head"] = "float64"

# float formatting that survives a write/read round trip bit for bit
FLOAT_FORMAT = "%.17g"


def _read_csv(path, columns, dtypes) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    frame = frame[list(columns)]
    for col, dtype in dtypes.items():
        if col in frame.columns:
            if dtype == "bool" and frame[col].dtype != bool:
                frame[col] = frame[col].astype(str).str.lower().isin(["true", "1", "yes"])
            else:
                frame[col] = frame[col].astype(dtype)
    return frame


def write_csv(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_cells(path) -> pd.DataFrame:
    return _read_csv(path, CELL_COLUMNS, CELL_DTYPES)


def read_households(path) -> pd.DataFrame:
    return _read_csv(path, HOUSEHOLD_COLUMNS, HOUSEHOLD_DTYPES)


def read_edges(path) -> pd.DataFrame:
    return _read_csv(path, EDGE_COLUMNS, {"from_cell": "int64", "to_cell": "int64",
                                          "length_m": "float64"})


def rates_to_frame(rates: MovingRateTable) -> pd.DataFrame:
    return pd.DataFrame(rates.bands, columns=["age_from", "age_to", "did_not_move_ratio"])


def read_moving_rates(path) -> MovingRateTable:
    frame = _read_csv(path, ("age_from", "age_to", "did_not_move_ratio"),
                      {"age_from": "float64", "age_to": "float64",
                       "did_not_move_ratio": "float64"})
    return MovingRateTable(tuple(frame.itertuples(index=False, name=None)))


def read_surface(path, scenario: str | None = None) -> AccessibilitySurface:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    return AccessibilitySurface.from_frame(frame, scenario)


def write_surface(surface: AccessibilitySurface, path) -> Path:
    return write_csv(surface.to_frame(), path)


# ---------------------------------------------------------------------------
# key = value files


def parse_key_values(text: str, source: str = "<text>") -> dict[str, float]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = float(value)
        except ValueError:
            raise DataError(f"{source}:{lineno}: {value!r} is not a number") from None
    return out


def read_key_values(path) -> dict[str, float]:
    path = Path(path)
    try:
        return parse_key_values(path.read_text(), str(path))
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None


def write_key_values(values: Mapping[str, float], path, header: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    lines += [f"{k} = {float(v)!r}" for k, v in values.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_segment_coefficients(path) -> SegmentCoefficients:
    values = read_key_values(path)
    try:
        segment = int(values.pop("segment"))
    except KeyError:
        raise DataError(f"{path}: missing 'segment' key") from None
    return SegmentCoefficients.from_dict(segment, values)


def write_segment_coefficients(coef: SegmentCoefficients, path, header: str = "") -> Path:
    values = {"segment": coef.segment, **coef.as_dict(), "size": coef.size_coefficient}
    return write_key_values(values, path, header)


def preset_segments() -> dict[int, SegmentCoefficients]:
    """The published coefficients of all five segments."""
    out = {}
    base = resources.files("resloc") / "data"
    for s in SEGMENTS:
        values = parse_key_values((base / f"segment_{s}.txt").read_text(), f"segment_{s}.txt")
        values.pop("segment")
        out[s] = SegmentCoefficients.from_dict(s, values)
    return out


def preset_hedonic() -> dict[str, float]:
    """The published land-price model coefficients."""
    text = (resources.files("resloc") / "data" / "hedonic.txt").read_text()
    return parse_key_values(text, "hedonic.txt")


# ---------------------------------------------------------------------------
# YAML


def read_yaml(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigError(f"no such config file: {path}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def read_scenario(path) -> ScenarioSpec:
    return ScenarioSpec.from_mapping(read_yaml(path))


def write_scenario(spec: ScenarioSpec, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = spec.to_mapping()
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path
