"""Data ingestion and JSON output for the command line."""

import csv
import json
import math
import sys
from dataclasses import dataclass
from typing import Any, Optional, TextIO

import jsonschema
import numpy as np

from src.config.defaults import NEG_INF_TOKEN
from src.core.errors import DataError, OutputSchemaError
from src.utils.persistence import load_schema

HEADER = ("w1", "w2")


@dataclass(frozen=True)
class Dataset:
    """Rows of a two-column data file."""
    rows: np.ndarray
    source_path: str

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])


def _parse_value(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {line}: '{text.strip()}' is not a number", line=line) from None
    if not math.isfinite(value):
        raise DataError(f"line {line}: non-finite value '{text.strip()}'", line=line)
    return value


def load_csv(path: str) -> Dataset:
    """
    Load a CSV file with header "w1,w2".

    Args:
        path: file path

    Returns:
        Dataset with rows in file order

    Raises:
        DataError: missing file or header, malformed row (with line number),
            NaN/inf values, or no data rows
    """
    try:
        f = open(path, "r", encoding="utf-8", newline="")
    except OSError as e:
        raise DataError(f"cannot open data file '{path}': {e}") from e

    rows = []
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip().lower() for h in header) != HEADER:
            raise DataError(f"'{path}': first line must be the header w1,w2", line=1)

        for record in reader:
            line = reader.line_num
            if not record or all(not field.strip() for field in record):
                continue
            if len(record) != 2:
                raise DataError(f"line {line}: expected 2 fields, found {len(record)}", line=line)
            rows.append([_parse_value(record[0], line), _parse_value(record[1], line)])

    if not rows:
        raise DataError(f"'{path}' contains no data rows")
    return Dataset(rows=np.array(rows, dtype=np.float64), source_path=path)


def save_csv(path: str, rows, header: bool = True) -> None:
    """
    Write rows with shortest round-trip float formatting.

    Args:
        path: destination
        rows: n x p array
        header: write "w1,w2,..." first
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        if header:
            writer.writerow([f"w{i + 1}" for i in range(rows.shape[1])])
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def to_jsonable(obj: Any) -> Any:
    """
    Convert numpy types and non-finite floats for JSON output.

    -inf becomes "-inf", +inf becomes "inf" and NaN becomes null.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return NEG_INF_TOKEN if x < 0 else "inf"
        return x
    return obj


def emit_json(payload: Any, stream: Optional[TextIO] = None) -> str:
    """
    Write payload as one JSON document.

    Floats use Python's shortest repr, which round-trips every double.
    """
    text = json.dumps(to_jsonable(payload), sort_keys=True, allow_nan=False)
    stream = sys.stdout if stream is None else stream
    stream.write(text + "\n")
    stream.flush()
    return text


def validate_output(schema_name: str, payload: Any) -> None:
    """
    Check a payload against its published schema.

    Raises:
        OutputSchemaError: the payload does not match; names the failing path
    """
    try:
        jsonschema.validate(to_jsonable(payload), load_schema(schema_name))
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "(root)"
        raise OutputSchemaError(f"{schema_name} output invalid at {path}: {e.message}",
                                schema=schema_name) from e
