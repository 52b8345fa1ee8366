"""Reports and their deterministic JSON / text serialisation.

Report data is a tree of dicts, lists, strings, booleans, ints, floats,
``Fraction`` and ``complex`` values.  Rationals serialise as
``{"num", "den", "decimal"}`` objects and complex numbers as ``{"re", "im"}``
so that parsing the JSON back yields an equal tree.
"""
from __future__ import annotations

import dataclasses
import json
import math
from enum import Enum
from fractions import Fraction
from typing import Any

import numpy as np

from .expr import Expr, to_str
from .jet import JetPoint


def normalize(obj) -> Any:
    """Convert library values into the plain report tree."""
    if isinstance(obj, Enum):
        return obj.value
    if obj is None or isinstance(obj, (bool, str)):
        return str(obj) if isinstance(obj, str) else obj
    if isinstance(obj, Fraction):
        return Fraction(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (complex, np.complexfloating)):
        z = complex(obj)
        return z if z.imag != 0 else normalize(z.real)
    if isinstance(obj, Expr):
        return to_str(obj)
    if isinstance(obj, JetPoint):
        return {n: normalize(c) for n, c in zip(obj.names, obj.coords)}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: normalize(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return [normalize(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = [normalize(v) for v in obj]
        return sorted(items, key=repr) if isinstance(obj, (set, frozenset)) else items
    return str(obj)


@dataclasses.dataclass
class Report:
    job: dict
    results: dict = dataclasses.field(default_factory=dict)
    warnings: list = dataclasses.field(default_factory=list)
    files: list = dataclasses.field(default_factory=list)

    def as_tree(self) -> dict:
        return {"job": self.job, "results": self.results, "warnings": self.warnings,
                "files": self.files}

    def to_json(self) -> str:
        return dumps(self.as_tree()) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Report":
        tree = loads(text)
        return cls(tree["job"], tree["results"], tree["warnings"], tree.get("files", []))

    def to_text(self) -> str:
        lines = []
        diag = self.results.get("diagnose")
        if isinstance(diag, dict) and "verdict" in diag:
            lines.append(diag["verdict"])
        _text_lines(lines, "results", self.results, 0)
        if self.warnings:
            lines.append("warnings:")
            lines.extend(f"  - {w}" for w in self.warnings)
        if self.files:
            lines.append("files:")
            lines.extend(f"  - {f}" for f in self.files)
        return "\n".join(lines) + "\n"


def _fmt_float(v: float) -> str:
    s = "%.17g" % v
    if all(c not in s for c in ".eEn"):
        s += ".0"
    return s


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, Fraction):
        return _encode({"num": obj.numerator, "den": obj.denominator,
                        "decimal": _fmt_float(float(obj))}, indent, level)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, complex):
        return _encode({"re": obj.real, "im": obj.imag}, indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(obj[k], indent, level + 1)}"
                 for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(tree, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys and ``%.17g`` floats."""
    return _encode(tree, indent, 0)


def _decode_hook(d: dict):
    keys = set(d)
    if keys == {"num", "den", "decimal"}:
        return Fraction(d["num"], d["den"])
    if keys == {"re", "im"}:
        return complex(d["re"], d["im"])
    return d


def loads(text: str):
    return json.loads(text, object_hook=_decode_hook)


def _scalar(v) -> str:
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(v, float):
        return "%.17g" % v
    if isinstance(v, complex):
        return f"{v.real:.17g}{v.imag:+.17g}i"
    if v is None:
        return "-"
    return str(v)


def _text_lines(lines: list, key: str, val, depth: int) -> None:
    ind = "  " * depth
    if isinstance(val, dict):
        lines.append(f"{ind}{key}:")
        for k in sorted(val):
            _text_lines(lines, k, val[k], depth + 1)
    elif isinstance(val, list) and any(isinstance(v, (dict, list)) for v in val):
        lines.append(f"{ind}{key}:")
        for i, v in enumerate(val):
            _text_lines(lines, f"[{i}]", v, depth + 1)
    elif isinstance(val, list):
        lines.append(f"{ind}{key}: [" + ", ".join(_scalar(v) for v in val) + "]")
    else:
        lines.append(f"{ind}{key}: {_scalar(val)}")
