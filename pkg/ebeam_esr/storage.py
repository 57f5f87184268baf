import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from .errors import ParseError
from .spectro import Spectrum

PathLike = Union[str, Path]

SPECTRUM_COLUMNS = ("omega_rad_s", "value_V")
IQ_COLUMNS = ("omega", "i_V", "q_V")


@dataclass
class RunReport:
    scenario_digest: str
    command: str
    outputs: List[Dict] = field(default_factory=list)
    provenance: Dict[str, str] = field(default_factory=dict)
    wall_time_s: float = 0.0


def store_frame(df: pd.DataFrame, path: PathLike) -> None:
    """CSV with header, '.' decimal, LF endings and round-trip float precision."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def load_frame(path: PathLike, columns) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"cannot read CSV {path}: {e}")
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ParseError(f"missing column(s) {', '.join(missing)}", field=missing[0])
    for col in columns:
        if not pd.api.types.is_numeric_dtype(df[col]):
            raise ParseError("column is not numeric", field=col)
    return df


def load_spectrum(path: PathLike) -> Spectrum:
    df = load_frame(path, SPECTRUM_COLUMNS)
    try:
        return Spectrum(df["omega_rad_s"].to_numpy(dtype=float), df["value_V"].to_numpy(dtype=float))
    except ValueError as e:
        raise ParseError(str(e))


def load_iq(path: PathLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    df = load_frame(path, IQ_COLUMNS)
    return tuple(df[c].to_numpy(dtype=float) for c in IQ_COLUMNS)


def format_report(mapping: Dict[str, str]) -> str:
    return "".join(f"{key}={value}\n" for key, value in mapping.items())


def parse_report(text: str) -> Dict[str, str]:
    return {k: v for k, v in dotenv_values(stream=io.StringIO(text)).items() if v is not None}


def write_report(path: PathLike, mapping: Dict[str, str]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(format_report(mapping), encoding="utf-8", newline="\n")


def read_report(path: PathLike) -> Dict[str, str]:
    return parse_report(Path(path).read_text(encoding="utf-8"))


def write_run_report(path: PathLike, report: RunReport) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(asdict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")
