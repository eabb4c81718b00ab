"""Reading prediction logs and writing reports, curves and rejector specs.

Dataset files are csv (header row required) or jsonl with the columns
``id``, ``confidence``, ``correct`` and optionally ``group`` and ``logit``.
Other columns are carried through untouched.  Lines starting with ``#``
before the csv header, or a leading jsonl object with a ``_provenance`` key,
hold a provenance header and are skipped on load.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import re
import sys
import tempfile
from dataclasses import dataclass, field, fields, is_dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from . import __version__
from .cost_core import REJECT_ALL, Dataset, Threshold, format_threshold, parse_threshold
from .errors import DataFormatError, EmptyDatasetError, RejectGateError, UnsupportedVersionError
from .metrics import ValueCurve, ValueCurveRow
from .rejector import RejectorSpec

REQUIRED_COLUMNS = ("id", "confidence", "correct")
REPORT_SCHEMA = "rejectgate.report/1"
REJECTOR_FORMAT = "rejectgate.rejector"
REJECTOR_VERSION = 1
CURVE_HEADER = ("threshold", "deployed_mean_value", "expected_mean_value", "acceptance_rate")

_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_BOOLEANS = {"true": True, "false": False, "1": True, "0": False}


def infer_format(path: str | os.PathLike, default: str = "csv") -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    if suffix == ".csv":
        return "csv"
    if suffix == ".json":
        return "json"
    if suffix in (".md", ".markdown"):
        return "markdown"
    return default


def _parse_decimal(value: Any, what: str, where: str) -> float:
    if isinstance(value, bool):
        raise DataFormatError(f"{where}: {what} must be a decimal number, got {value!r}")
    if isinstance(value, (int, float)):
        x = float(value)
    elif isinstance(value, str) and _DECIMAL.match(value.strip()):
        x = float(value.strip())
    else:
        raise DataFormatError(f"{where}: {what} must be a decimal number, got {value!r}")
    if not math.isfinite(x):
        raise DataFormatError(f"{where}: {what} must be finite, got {value!r}")
    return x


def _parse_bool(value: Any, where: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, int) and value in (0, 1):
        return bool(value)
    if isinstance(value, str) and value.strip() in _BOOLEANS:
        return _BOOLEANS[value.strip()]
    raise DataFormatError(f"{where}: correct must be one of true/false/1/0, got {value!r}")


def _optional(value: Any) -> Any:
    return None if value is None or value == "" else value


def _build(rows: Iterable[tuple[int, Mapping[str, Any]]], columns: list[str], group_col: str) -> Dataset:
    ids, conf, correct, groups, logits = [], [], [], [], []
    extra_cols = [c for c in columns if c not in (*REQUIRED_COLUMNS, group_col, "logit")]
    extras: dict[str, list] = {c: [] for c in extra_cols}
    for row_no, row in rows:
        where = f"row {row_no}"
        for col in REQUIRED_COLUMNS:
            if row.get(col) is None or row.get(col) == "":
                raise DataFormatError(f"{where}: missing value for required column {col!r}")
        c = _parse_decimal(row["confidence"], "confidence", where)
        if not 0.0 <= c <= 1.0:
            raise DataFormatError(f"{where}: confidence {row['confidence']!r} outside [0, 1]")
        ids.append(str(row["id"]))
        conf.append(c)
        correct.append(_parse_bool(row["correct"], where))
        g = _optional(row.get(group_col))
        groups.append(None if g is None else str(g))
        lg = _optional(row.get("logit"))
        logits.append(None if lg is None else _parse_decimal(lg, "logit", where))
        for col in extra_cols:
            extras[col].append(row.get(col))
    if not ids:
        raise EmptyDatasetError()
    return Dataset(ids=ids, confidence=conf, correct=correct, group=groups, logit=logits, extras=extras)


def _read_csv(text: str, group_col: str) -> Dataset:
    lines = text.splitlines(keepends=True)
    skip = 0
    while skip < len(lines) and lines[skip].startswith("#"):
        skip += 1
    reader = csv.DictReader(io.StringIO("".join(lines[skip:])))
    columns = list(reader.fieldnames or [])
    for col in REQUIRED_COLUMNS:
        if col not in columns:
            raise DataFormatError(f"missing required column {col!r}")
    return _build(((i, r) for i, r in enumerate(reader, start=1)), columns, group_col)


def _read_jsonl(text: str, group_col: str) -> Dataset:
    rows: list[tuple[int, dict]] = []
    columns: list[str] = []
    seen: set[str] = set()
    row_no = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"line {line_no}: invalid json ({exc.msg} at column {exc.colno})") from None
        if not isinstance(obj, dict):
            raise DataFormatError(f"line {line_no}: expected a json object")
        if not rows and row_no == 0 and "_provenance" in obj:
            continue
        row_no += 1
        for col in REQUIRED_COLUMNS:
            if col not in obj:
                raise DataFormatError(f"row {row_no}: missing required column {col!r}")
        for key in obj:
            if key not in seen:
                seen.add(key)
                columns.append(key)
        rows.append((row_no, obj))
    return _build(rows, columns, group_col)


def load_dataset(path: str | os.PathLike, format: str | None = None, group_col: str = "group") -> Dataset:
    """Load a prediction log; errors name the offending row."""
    fmt = format or infer_format(path)
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "csv":
        return _read_csv(text, group_col)
    if fmt == "jsonl":
        return _read_jsonl(text, group_col)
    raise RejectGateError(f"unsupported dataset format {fmt!r}")


def _json_value(x: Any) -> Any:
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _csv_cell(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def dump_dataset(d: Dataset, format: str = "csv", provenance: Mapping[str, Any] | None = None) -> str:
    """Serialize a dataset; optional columns are written only when some record has them."""
    cols = list(REQUIRED_COLUMNS)
    has_group = any(g is not None for g in d.group)
    has_logit = not np.all(np.isnan(d.logit))
    if has_group:
        cols.append("group")
    if has_logit:
        cols.append("logit")
    cols.extend(d.extras)

    def record(i: int) -> dict:
        rec = {"id": d.ids[i], "confidence": float(d.confidence[i]), "correct": bool(d.correct[i])}
        if has_group:
            rec["group"] = d.group[i]
        if has_logit:
            rec["logit"] = None if math.isnan(d.logit[i]) else float(d.logit[i])
        for name, values in d.extras.items():
            rec[name] = _json_value(values[i])
        return rec

    buf = io.StringIO()
    if format == "jsonl":
        if provenance is not None:
            buf.write(json.dumps({"_provenance": provenance}, sort_keys=True) + "\n")
        for i in range(d.n):
            buf.write(json.dumps(record(i)) + "\n")
    elif format == "csv":
        if provenance is not None:
            buf.write("# provenance: " + json.dumps(provenance, sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for i in range(d.n):
            rec = record(i)
            writer.writerow([_csv_cell(rec[c]) for c in cols])
    else:
        raise RejectGateError(f"unsupported dataset format {format!r}")
    return buf.getvalue()


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the target directory, then rename over the target."""
    target = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=target.parent or Path("."), prefix=f".{target.name}.", suffix=".tmp")
    except OSError as exc:
        raise RejectGateError(f"cannot write {target}: {exc.strerror}") from None
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except OSError as exc:
        Path(tmp).unlink(missing_ok=True)
        raise RejectGateError(f"cannot write {target}: {exc.strerror}") from None


def emit(text: str, path: str | os.PathLike | None) -> None:
    """Write to ``path``, or to stdout when no path is given."""
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        atomic_write(path, text)


def save_dataset(d: Dataset, path, format: str | None = None, provenance: Mapping[str, Any] | None = None) -> None:
    emit(dump_dataset(d, format or infer_format(path), provenance), path)


def file_digest(path: str | os.PathLike) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dataset_digest(d: Dataset) -> str:
    return "sha256:" + hashlib.sha256(dump_dataset(d, "jsonl").encode()).hexdigest()


# --- reports -----------------------------------------------------------------


@dataclass
class ReportDocument:
    """Versioned report envelope.

    ``sections`` maps section names (``calibration``, ``value_at_threshold``,
    ``groups``, ...) to plain json-ready dicts; ``parameters`` echoes every
    setting that influenced the numbers.
    """

    kind: str
    sections: dict[str, Any]
    parameters: dict[str, Any] = field(default_factory=dict)
    input_digest: str | None = None
    deterministic: bool = False

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "tool": "rejectgate",
            "tool_version": __version__,
            "kind": self.kind,
            "generated_at": None if self.deterministic else datetime.now(timezone.utc).isoformat(),
            "input_digest": self.input_digest,
            "parameters": _plain(self.parameters),
            **{name: _plain(body) for name, body in self.sections.items()},
        }


def _plain(x: Any) -> Any:
    """Convert nested report content into json-ready values."""
    if x is REJECT_ALL:
        return "REJECT_ALL"
    if hasattr(x, "to_dict"):
        return _plain(x.to_dict())
    if is_dataclass(x) and not isinstance(x, type):
        return _plain({f.name: getattr(x, f.name) for f in fields(x)})
    if isinstance(x, Mapping):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        items = sorted(x) if isinstance(x, (set, frozenset)) else x
        return [_plain(v) for v in items]
    return _json_value(x)


def render_json(doc: ReportDocument) -> str:
    return json.dumps(doc.to_dict(), indent=2) + "\n"


def flatten(obj: Any, prefix: str = "") -> list[tuple[str, Any]]:
    """Leaf ``(dotted.path, value)`` pairs of a json-ready object."""
    if isinstance(obj, dict):
        if not obj:
            return [(prefix, {})]
        out = []
        for k, v in obj.items():
            out.extend(flatten(v, f"{prefix}.{k}" if prefix else str(k)))
        return out
    if isinstance(obj, list):
        if not obj:
            return [(prefix, [])]
        out = []
        for i, v in enumerate(obj):
            out.extend(flatten(v, f"{prefix}[{i}]"))
        return out
    return [(prefix, obj)]


def _md_value(v: Any) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6g}"
    if v == {} or v == []:
        return json.dumps(v)
    return str(v).replace("|", "\\|")


def render_markdown(doc: ReportDocument) -> str:
    data = doc.to_dict()
    lines = [f"# rejectgate {data['kind']} report", ""]
    header = ("schema", "tool", "tool_version", "kind", "generated_at", "input_digest")
    for key in header:
        lines.append(f"- **{key}**: {_md_value(data[key])}")
    for section, body in data.items():
        if section in header:
            continue
        lines += ["", f"## {section}", "", "| field | value |", "|---|---|"]
        for path, value in flatten(body, section):
            lines.append(f"| {path} | {_md_value(value)} |")
    return "\n".join(lines) + "\n"


def write_report(doc: ReportDocument, path=None, format: str = "json") -> None:
    if format == "json":
        text = render_json(doc)
    elif format == "markdown":
        text = render_markdown(doc)
    else:
        raise RejectGateError(f"unsupported report format {format!r}")
    emit(text, path)


# --- value curves ------------------------------------------------------------


def dump_curve(curve: ValueCurve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for row in curve.rows:
        writer.writerow(
            [
                format_threshold(row.threshold),
                repr(row.deployed_mean_value),
                repr(row.expected_mean_value),
                repr(row.acceptance_rate),
            ]
        )
    return buf.getvalue()


def write_curve(curve: ValueCurve, path=None) -> None:
    if not curve.rows:
        raise RejectGateError("cannot write an empty value curve")
    emit(dump_curve(curve), path)


def read_curve(path) -> ValueCurve:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CURVE_HEADER:
            raise DataFormatError(f"{path}: unexpected curve header {header}")
        rows = []
        for i, rec in enumerate(reader, start=1):
            try:
                rows.append(ValueCurveRow(parse_threshold(rec[0]), float(rec[1]), float(rec[2]), float(rec[3])))
            except (ValueError, IndexError) as exc:
                raise DataFormatError(f"{path}: row {i}: {exc}") from None
    return ValueCurve(tuple(rows))


# --- rejector specs ----------------------------------------------------------


def _threshold_doc(t: Threshold):
    return "REJECT_ALL" if t is REJECT_ALL else float(t)


def rejector_to_dict(spec: RejectorSpec) -> dict:
    return {
        "format": REJECTOR_FORMAT,
        "version": REJECTOR_VERSION,
        "kind": spec.kind,
        "global_threshold": _threshold_doc(spec.global_threshold),
        "group_thresholds": {g: _threshold_doc(t) for g, t in sorted(spec.group_thresholds.items())},
        "trusted_groups": sorted(spec.trusted_groups),
        "cost_k": _json_value(spec.cost_k),
        "degenerate": spec.degenerate,
        "fit_metadata": _plain(spec.fit_metadata),
    }


def rejector_from_dict(doc: Any) -> RejectorSpec:
    if not isinstance(doc, dict):
        raise DataFormatError("rejector document must be a json object")
    if doc.get("format") != REJECTOR_FORMAT:
        raise DataFormatError(f"not a rejector document (format={doc.get('format')!r})")
    if doc.get("version") != REJECTOR_VERSION:
        raise UnsupportedVersionError(f"unsupported spec version {doc.get('version')!r}")
    try:
        cost_k = doc["cost_k"]
        return RejectorSpec(
            kind=doc["kind"],
            global_threshold=parse_threshold(doc["global_threshold"]),
            group_thresholds={g: parse_threshold(t) for g, t in doc["group_thresholds"].items()},
            trusted_groups=frozenset(doc["trusted_groups"]),
            cost_k=math.nan if cost_k is None else float(cost_k),
            fit_metadata=doc.get("fit_metadata", {}),
        )
    except KeyError as exc:
        raise DataFormatError(f"rejector document is missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError, AttributeError) as exc:
        raise DataFormatError(f"malformed rejector document: {exc}") from None


def save_rejector(spec: RejectorSpec, path) -> None:
    emit(json.dumps(rejector_to_dict(spec), indent=2) + "\n", path)


def load_rejector(path) -> RejectorSpec:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return rejector_from_dict(doc)
