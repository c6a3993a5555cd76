"""Minimal `key = value` config file reader/writer.

Blank lines and lines starting with '#' are ignored; keys are single tokens,
values are the remainder of the line after the first '='.
"""

from __future__ import annotations


def parse_kv(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if not key:
                raise ValueError(f"{path}:{lineno}: empty key")
            if key in out:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value.strip()
    return out


def write_kv(path: str, entries: dict[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key, value in entries.items():
            f.write(f"{key} = {value}\n")
