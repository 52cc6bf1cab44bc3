"""Canonical JSON helpers shared by all NDJSON sidecar formats.

Canonical form: insertion-ordered keys, no insignificant whitespace, floats
in their shortest round-trip representation, non-finite numbers rejected on
both paths.
"""

from __future__ import annotations

import json
from typing import Any


def dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _reject_constant(name: str) -> float:
    raise ValueError(f"non-finite number {name!r}")


def loads(text: str) -> Any:
    return json.loads(text, parse_constant=_reject_constant)
