"""Small shared helpers: staged seeding and stable JSON output."""

from __future__ import annotations

import json
import zlib


def stage_seed(seed: int, stage: str) -> int:
    """Derive a named sub-seed so pipeline stages can be rerun independently."""
    return (int(seed) * 0x9E3779B1 + zlib.crc32(stage.encode("utf-8"))) % (2**31)


def dumps_stable(obj) -> str:
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_stable(obj))
