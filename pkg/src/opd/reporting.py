"""Run reports, invariant-check records, and deterministic serialization.

Reports must be byte-identical across repeated runs with the same seed, so
everything is emitted through a small canonical JSON writer: mapping order
is the insertion order of the dicts we build, floats are printed with 17
significant digits (which round-trips doubles exactly), and rationals are
serialized as "p/q" strings.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional


def format_real(x: float) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return f"{x:.17g}"


def emit_json(obj: Any, out: io.TextIOBase, indent: int = 0) -> None:
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            out.write(pad + "  " + json.dumps(str(k)) + ": ")
            emit_json(v, out, indent + 2)
            out.write(",\n" if i < len(items) - 1 else "\n")
        out.write(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.write("[]")
            return
        compact = all(isinstance(v, (int, float, bool)) and not isinstance(v, dict) for v in obj)
        if compact:
            out.write("[" + ", ".join(_scalar(v) for v in obj) + "]")
        else:
            out.write("[\n")
            for i, v in enumerate(obj):
                out.write(pad + "  ")
                emit_json(v, out, indent + 2)
                out.write(",\n" if i < len(obj) - 1 else "\n")
            out.write(pad + "]")
    else:
        out.write(_scalar(obj))


def _scalar(v) -> str:
    if v is None:
        return "null"
    if hasattr(v, "item") and type(v).__module__ == "numpy":
        v = v.item()
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Fraction):
        return json.dumps(str(v) if v.denominator != 1 else str(v.numerator))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format_real(v)
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot serialize {type(v)}")


def dumps_canonical(obj: Any) -> str:
    buf = io.StringIO()
    emit_json(obj, buf)
    buf.write("\n")
    return buf.getvalue()


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


@dataclass
class RunReport:
    kind: str
    mode: str
    params: dict
    rows: list[dict]
    summary: dict
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "format": "opd-report",
            "version": 1,
            "kind": self.kind,
            "mode": self.mode,
            "params": self.params,
            "rows": self.rows,
            "summary": self.summary,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return dumps_canonical(self.to_dict())

    def summary_block(self) -> str:
        """Fixed-order key=value lines for scripting."""
        lines = [f"kind={self.kind}", f"mode={self.mode}"]
        for k, v in self.params.items():
            lines.append(f"param.{k}={_plain(v)}")
        for k, v in self.summary.items():
            lines.append(f"{k}={_plain(v)}")
        passed = sum(1 for c in self.checks for _ in [0] if c.passed)
        lines.append(f"checks_passed={passed}")
        lines.append(f"checks_total={len(self.checks)}")
        for c in self.checks:
            lines.append(f"check.{c.name}={'pass' if c.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        """Per-round table; columns are the union of row keys, in first-seen order."""
        cols: list[str] = []
        for row in self.rows:
            for k in row:
                if k not in cols and not isinstance(row[k], (list, tuple)):
                    cols.append(k)
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for row in self.rows:
            cells = []
            for c in cols:
                v = row.get(c, "")
                if isinstance(v, bool):
                    cells.append("1" if v else "0")
                elif isinstance(v, float):
                    cells.append(f"{v:.17g}")
                else:
                    cells.append(str(v))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    @staticmethod
    def from_dict(d: dict) -> "RunReport":
        checks = [
            CheckResult(c["name"], c["passed"], c["residual"], c["tolerance"], c.get("detail", ""))
            for c in d.get("checks", [])
        ]
        return RunReport(
            kind=d["kind"],
            mode=d["mode"],
            params=d["params"],
            rows=d["rows"],
            summary=d["summary"],
            checks=checks,
        )


def _plain(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, Fraction):
        return str(v)
    if v is None:
        return "none"
    return str(v)
