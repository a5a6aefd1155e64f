"""Artifact writers: delimited tables, schema-checked JSON, and figures.

All outputs are deterministic: floats print with 17 significant digits,
JSON keys are sorted, and figures carry no software or timestamp metadata,
so a rerun with the same manifest and seed reproduces every file byte for
byte.
"""

import csv
import json
import math
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

FLOAT_FMT = "%.17g"
FIGURE_DPI = 150


def format_cell(value) -> str:
    """One CSV cell: 17-digit floats, plain integers, lowercase booleans."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int,)):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return FLOAT_FMT % value
    return str(value)


def write_csv(path, header, rows) -> Path:
    """UTF-8 CSV with comma separator, '.' decimal, and a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    return path


def sanitize(obj):
    """JSON-safe copy: numpy scalars to python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, bool):
        return obj
    if hasattr(obj, "item") and not hasattr(obj, "__len__"):
        obj = obj.item()
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if hasattr(obj, "tolist"):
        return sanitize(obj.tolist())
    return obj


@lru_cache(maxsize=1)
def load_schema() -> dict:
    text = (resources.files("grushin") / "schemas" / "summary.schema.json"
            ).read_text(encoding="utf-8")
    return json.loads(text)


def validate_summary(payload: dict) -> None:
    """Raise jsonschema.ValidationError if the summary violates the schema."""
    jsonschema.validate(payload, load_schema(),
                        cls=jsonschema.Draft202012Validator)


def write_summary(path, payload: dict) -> Path:
    """Schema-checked JSON summary with sorted keys and a trailing newline."""
    clean = sanitize(payload)
    validate_summary(clean)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(clean, sort_keys=True, indent=2, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def save_figure(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=FIGURE_DPI, metadata={"Software": None})
    plt.close(fig)
    return path
