"""Machine-readable run reports.

Reports serialize to JSON deterministically: fixed key order, floats
printed with 17 significant digits so values round-trip bit-exactly and
two runs with the same inputs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

VERSION = "0.1.0"


@dataclass
class CheckRecord:
    """One named check: identity tag, verdict, measured value, tolerance."""

    name: str
    anchor: str
    passed: bool
    value: float | None
    tol: float | None
    witnesses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "pass": self.passed,
            "value": self.value,
            "tol": self.tol,
            "witnesses": self.witnesses,
        }


@dataclass
class Report:
    config: dict
    checks: list[CheckRecord] = field(default_factory=list)
    version: str = VERSION

    def add(self, name: str, anchor: str, passed: bool, value=None, tol=None,
            witnesses=None) -> CheckRecord:
        rec = CheckRecord(name, anchor, bool(passed),
                          None if value is None else float(value),
                          None if tol is None else float(tol),
                          witnesses if witnesses is not None else [])
        self.checks.append(rec)
        return rec

    @property
    def overall_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config": self.config,
            "checks": [c.to_dict() for c in self.checks],
            "pass": self.overall_pass,
        }


def format_float(x: float) -> str:
    """17-significant-digit formatting; round-trips any finite float64."""
    if x != x:
        return '"nan"'
    if x == float("inf"):
        return '"inf"'
    if x == float("-inf"):
        return '"-inf"'
    return format(x, ".17g")


def dumps(value, indent: int = 0) -> str:
    """Deterministic JSON text with controlled float formatting."""
    pad = "  " * indent
    pad_in = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f'{pad_in}{json.dumps(str(k))}: {dumps(v, indent + 1)}'
                 for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if len(value) == 0:
            return "[]"
        items = [f"{pad_in}{dumps(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(value, np.ndarray):
        return dumps(value.tolist(), indent)
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    if value is None:
        return "null"
    return json.dumps(str(value))


def dumps_report(report: Report) -> str:
    return dumps(report.to_dict()) + "\n"


def parse_report(text: str) -> dict:
    return json.loads(text)


def csv_lines(header: list[str], rows) -> str:
    """CSV with a header row, '.' decimal separator, newline-terminated."""
    out = [",".join(header)]
    for row in rows:
        cells = []
        for x in row:
            if isinstance(x, (float, np.floating)):
                cells.append(format(float(x), ".17g"))
            else:
                cells.append(str(x))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"
