"""Sectioned text format for network specs.

The format is line oriented::

    # comment
    [system]
    omega0 = 376.99111843077515

    [buses]
    1 2 3

    [lines]
    from=1 to=2 g=0.5 b=-10.0 c=0.001

    [machines]
    bus=1 kind=two_axis M=0.1 D=0.01 X=0.9 Xprime=0.1 tau_d=6 tau_q=0.5

Scalar sections (``system``, ``sweep``, ``solver``) hold ``key = value`` lines, where
several whitespace-separated values form a list. Table sections (``lines``,
``machines``) hold one record of ``key=value`` tokens per line. ``buses`` lists bus ids.
"""

from __future__ import annotations

import importlib.resources
import logging
import typing as t
from pathlib import Path

import pydantic

from .exceptions import ConfigError
from .params import NetworkSpec

logger = logging.getLogger(__name__)

Scalar = int | float | bool | str
SCALAR_SECTIONS: t.Final = ("system", "sweep", "solver")
TABLE_SECTIONS: t.Final = ("lines", "machines")
SECTIONS: t.Final = ("system", "buses", "lines", "machines", "sweep", "solver")
BUNDLED_SPECS: t.Final = ("ieee9", "ieee9_lossless")


def _coerce(token: str) -> Scalar:
    lowered = token.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(token)
        except ValueError:
            pass
    return token


class _Collector:
    """Accumulates parsed records and the source line of every field."""

    def __init__(self) -> None:
        self.data: dict[str, t.Any] = {}
        self.lines: dict[tuple[t.Any, ...], int] = {}

    def scalar(self, section: str, key: str, values: list[str], lineno: int) -> None:
        coerced = [_coerce(v) for v in values]
        block = self.data.setdefault(section, {})
        if key in block:
            raise ConfigError(f"duplicate key '{key}' in [{section}]", line=lineno)
        block[key] = coerced[0] if len(coerced) == 1 else coerced
        self.lines[(section, key)] = lineno
        self.lines.setdefault((section,), lineno)

    def record(self, section: str, tokens: list[str], lineno: int) -> None:
        entry: dict[str, Scalar] = {}
        for token in tokens:
            key, sep, value = token.partition("=")
            if not sep or not key or not value:
                raise ConfigError(f"expected key=value, got '{token}'", line=lineno)
            if key in entry:
                raise ConfigError(f"duplicate key '{key}'", line=lineno)
            entry[key] = _coerce(value)
        rows = self.data.setdefault(section, [])
        self.lines[(section, len(rows))] = lineno
        self.lines.setdefault((section,), lineno)
        rows.append(entry)

    def buses(self, tokens: list[str], lineno: int) -> None:
        ids = self.data.setdefault("buses", [])
        for token in tokens:
            value = _coerce(token)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"bus id must be an integer, got '{token}'", line=lineno)
            self.lines[("buses", len(ids))] = lineno
            ids.append(value)
        self.lines.setdefault(("buses",), lineno)

    def line_of(self, loc: tuple[t.Any, ...]) -> int | None:
        for cut in range(len(loc), 0, -1):
            if loc[:cut] in self.lines:
                return self.lines[loc[:cut]]
        return None


def parse_spec_text(text: str, *, source: str = "<string>") -> NetworkSpec:
    """Parse and validate a spec.

    Raises:
        ConfigError: On grammar or schema violations, with the offending line number.

    """
    collected = _Collector()
    section: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header '{line}'", line=lineno)
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", line=lineno)
            continue
        if section is None:
            raise ConfigError("content before the first section header", line=lineno)
        if section in SCALAR_SECTIONS:
            key, sep, value = line.partition("=")
            if not sep or not key.strip() or not value.split():
                raise ConfigError(f"expected 'key = value' in [{section}]", line=lineno)
            collected.scalar(section, key.strip(), value.split(), lineno)
        elif section in TABLE_SECTIONS:
            collected.record(section, line.split(), lineno)
        else:
            collected.buses(line.split(), lineno)

    if not collected.data:
        raise ConfigError(f"{source} declares no sections")
    try:
        spec = NetworkSpec.model_validate(collected.data)
    except pydantic.ValidationError as exc:
        first = exc.errors()[0]
        loc = tuple(first["loc"])
        field = ".".join(str(part) for part in loc) or "spec"
        raise ConfigError(f"{field}: {first['msg']}", line=collected.line_of(loc)) from exc
    logger.debug(
        "Parsed %s: %d buses, %d lines, %d machines",
        source,
        len(spec.buses),
        len(spec.lines),
        len(spec.machines),
    )
    return spec


def bundled_spec_path(name: str) -> Path:
    """Location of a spec shipped with the package, by bare name."""
    stem = name.removesuffix(".cfg")
    if stem not in BUNDLED_SPECS:
        raise ConfigError(f"no bundled spec named '{name}' (have {', '.join(BUNDLED_SPECS)})")
    resource = importlib.resources.files("gridpassivity") / "data" / f"{stem}.cfg"
    return Path(str(resource))


def parse_spec(path: str | Path) -> NetworkSpec:
    """Read a spec file; a bare bundled name such as ``ieee9`` is resolved to package data.

    Raises:
        ConfigError: If the file is missing or invalid.

    """
    path = Path(path)
    if not path.exists() and path.parent == Path() and path.stem in BUNDLED_SPECS:
        path = bundled_spec_path(path.name)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_spec_text(text, source=str(path))


def _format(value: t.Any) -> str:  # noqa: ANN401
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, list | tuple):
        return " ".join(_format(v) for v in value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def serialize_spec(spec: NetworkSpec) -> str:
    """Render a spec in the text format; parsing the result gives back an equal spec."""
    data = spec.model_dump(by_alias=True, exclude_none=True)
    out: list[str] = []
    for section in SECTIONS:
        out.append(f"[{section}]")
        if section == "buses":
            out.append(" ".join(str(bus) for bus in data["buses"]))
        elif section in TABLE_SECTIONS:
            out.extend(
                " ".join(f"{key}={_format(value)}" for key, value in row.items())
                for row in data[section]
            )
        else:
            out.extend(f"{key} = {_format(value)}" for key, value in data[section].items())
        out.append("")
    return "\n".join(out)
