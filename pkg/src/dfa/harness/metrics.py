"""Append-only metrics file: one JSON record per line.

Record: ``{"kind": ..., "config_hash": ..., "timestamp": ..., "fields": {...}}``.
Timestamps honour ``SOURCE_DATE_EPOCH`` so that reruns can be byte-identical.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from dfa.errors import FormatError

KINDS = ("epoch", "attack", "ood", "analysis")


def now() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch is not None else time.time()
    return datetime.fromtimestamp(t, tz=timezone.utc).isoformat(timespec="seconds")


def _plain(v):
    # numpy scalars -> python; non-finite floats are not valid JSON
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return {"nan": "nan", "inf": "inf", "-inf": "-inf"}[str(v)]
    return v


def _restore(v):
    if isinstance(v, str) and v in ("nan", "inf", "-inf"):
        return float(v)
    return v


@dataclass
class MetricsRecord:
    kind: str
    config_hash: str
    fields: dict = field(default_factory=dict)
    timestamp: str = field(default_factory=now)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FormatError(f"unknown record kind {self.kind!r}")

    def to_json(self) -> str:
        d = asdict(self)
        d["fields"] = {k: _plain(v) for k, v in self.fields.items()}
        return json.dumps(d, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, line: str) -> "MetricsRecord":
        d = json.loads(line)
        d["fields"] = {k: _restore(v) for k, v in d["fields"].items()}
        return cls(**d)


def append(path, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a") as f:
        for rec in records:
            f.write(rec.to_json() + "\n")


def read(path) -> list[MetricsRecord]:
    out = []
    with Path(path).open() as f:
        for n, line in enumerate(f, 1):
            if line.strip():
                try:
                    out.append(MetricsRecord.from_json(line))
                except (ValueError, TypeError, KeyError) as e:
                    raise FormatError(f"{path}:{n}: unparseable metrics record ({e})")
    return out
