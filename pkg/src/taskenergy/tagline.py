"""Tagged-line text format shared by traces, output datasets and reports.

One record per line::

    TAG key=value key=value ...

Values never contain whitespace; free-text values are percent-encoded.
Blank lines and lines starting with ``#`` are ignored. Floats are written
with ``repr`` so they round-trip bit-exactly; timestamps use six decimals
(microsecond resolution).
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping
from urllib.parse import quote, unquote

_SAFE = "/:_-.@+"


class TaggedLineError(ValueError):
    pass


def fmt_float(value: float) -> str:
    return repr(float(value))


def fmt_time(seconds: float) -> str:
    return f"{seconds:.6f}"


def fmt_str(value: str) -> str:
    return quote(value, safe=_SAFE) if value else "-"


def parse_str(value: str) -> str:
    return "" if value == "-" else unquote(value)


def fmt_map(values: Mapping[int, float | int]) -> str:
    if not values:
        return "-"
    return ",".join(f"{k}:{v!r}" for k, v in sorted(values.items()))


def parse_map(text: str, cast=float) -> dict[int, float]:
    if text == "-" or not text:
        return {}
    out = {}
    for item in text.split(","):
        key, sep, value = item.partition(":")
        if not sep:
            raise TaggedLineError(f"bad map item {item!r}")
        out[int(key)] = cast(value)
    return out


def format_line(tag: str, fields: Mapping[str, object]) -> str:
    parts = [tag]
    for key, value in fields.items():
        if isinstance(value, float):
            text = fmt_float(value)
        elif isinstance(value, bool):
            text = "1" if value else "0"
        else:
            text = str(value)
        if not text or any(c.isspace() for c in text):
            raise TaggedLineError(f"field {key}={text!r} is empty or contains whitespace")
        parts.append(f"{key}={text}")
    return " ".join(parts)


def parse_line(line: str) -> tuple[str, dict[str, str]]:
    tokens = line.split()
    if not tokens:
        raise TaggedLineError("empty line")
    tag, fields = tokens[0], {}
    for tok in tokens[1:]:
        key, sep, value = tok.partition("=")
        if not sep or not key:
            raise TaggedLineError(f"malformed field {tok!r}")
        if key in fields:
            raise TaggedLineError(f"duplicate field {key!r}")
        fields[key] = value
    return tag, fields


def iter_lines(text: str | Iterable[str]) -> Iterator[tuple[int, str, dict[str, str]]]:
    """Yield ``(line_number, tag, fields)`` for every non-comment line."""
    lines = text.splitlines() if isinstance(text, str) else text
    for number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tag, fields = parse_line(line)
        yield number, tag, fields
