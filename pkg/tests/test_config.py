"""Tests for the spec text format."""

from pathlib import Path

import pytest

from gridpassivity.config import (
    BUNDLED_SPECS,
    bundled_spec_path,
    parse_spec,
    parse_spec_text,
    serialize_spec,
)
from gridpassivity.exceptions import ConfigError
from gridpassivity.params import MachineKind, NetworkSpec

TWO_BUS = """\
# two classical machines
[buses]
1 2
[lines]
from=1 to=2 g=0.0 b=-5.0
[machines]
bus=1 kind=classical M=0.1 D=0.01 X=0.3
bus=2 kind=classical M=0.1 D=0.01 X=0.3
"""


@pytest.mark.parametrize("name", BUNDLED_SPECS)
def test_bundled_specs(name: str) -> None:
    """Both bundled networks declare 9 buses, 9 lines, and 6 machines."""
    spec = parse_spec(name)
    assert len(spec.buses) == 9
    assert len(spec.lines) == 9
    assert len(spec.machines) == 6
    assert spec.machine_buses == (1, 2, 3, 5, 6, 8)
    assert spec.passive_buses == (4, 7, 9)
    assert spec.system.name == name
    assert bundled_spec_path(f"{name}.cfg").is_file()


def test_bundled_lossless_variant(
    ieee9_spec: NetworkSpec,
    ieee9_lossless_spec: NetworkSpec,
) -> None:
    """The lossless file is the lossy one with conductance removed."""
    assert all(line.g == 0.0 for line in ieee9_lossless_spec.lines)
    assert ieee9_spec.lossless().lines == ieee9_lossless_spec.lines
    assert ieee9_spec.machines == ieee9_lossless_spec.machines


def test_ieee9_generators_need_calibration(ieee9_spec: NetworkSpec) -> None:
    """Generators leave V_fd unset; loads carry constant power references."""
    generators = [m for m in ieee9_spec.machines if m.kind is MachineKind.TWO_AXIS]
    loads = [m for m in ieee9_spec.machines if m.kind is MachineKind.CLASSICAL]
    assert [m.bus for m in generators] == [1, 2, 3]
    assert all(m.v_fd is None for m in generators)
    assert [m.p_m for m in loads] == [-1.25, -0.9, -1.0]


def test_parse_minimal_text() -> None:
    """Settings sections are optional."""
    spec = parse_spec_text(TWO_BUS)
    assert spec.buses == (1, 2)
    assert spec.lines[0].b == -5.0
    assert spec.lines[0].c == 0.0
    assert spec.sweep.resolution == 61
    assert spec.solver.newton_tol == 1e-10


def test_scalar_sections() -> None:
    """``key = value`` lines set scalars and lists."""
    spec = parse_spec_text(
        TWO_BUS + "[sweep]\nrange = -1 1\nresolution = 11\nworkers = 4\ncontinuation = no\n",
    )
    assert spec.sweep.delta_range == (-1.0, 1.0)
    assert len(spec.sweep.axis()) == 11
    assert spec.sweep.workers == 4
    assert spec.sweep.continuation is False


def test_round_trip(ieee9_spec: NetworkSpec) -> None:
    """Serializing and parsing gives back an equal spec."""
    text = serialize_spec(ieee9_spec)
    assert parse_spec_text(text) == ieee9_spec
    assert serialize_spec(parse_spec_text(text)) == text


def test_parse_file(tmp_path: Path) -> None:
    """Specs are read from disk."""
    path = tmp_path / "pair.cfg"
    path.write_text(TWO_BUS, encoding="utf-8")
    assert parse_spec(path) == parse_spec_text(TWO_BUS)
    assert parse_spec(str(path)).machines[1].bus == 2


@pytest.mark.parametrize(
    ("text", "line", "match"),
    [
        ("", None, "no sections"),
        ("# only a comment\n", None, "no sections"),
        ("1 2\n[buses]\n", 1, "before the first section"),
        ("[buses\n1 2\n", 1, "malformed section header"),
        ("[nodes]\n1 2\n", 1, "unknown section"),
        ("[buses]\n1 two\n", 2, "integer"),
        (TWO_BUS + "bus=3 kind\n", 9, "key=value"),
        (TWO_BUS.replace("X=0.3\nbus=2", "X=0.3 X=0.4\nbus=2"), 7, "duplicate key"),
        (TWO_BUS + "[sweep]\nresolution = 3\nresolution = 4\n", 11, "duplicate key"),
        (TWO_BUS + "[sweep]\nresolution\n", 10, "key = value"),
        (TWO_BUS.replace("D=0.01 X=0.3\n", "D=-0.01 X=0.3\n", 1), 7, "machines.0.D"),
        (TWO_BUS.replace("b=-5.0", "b=5.0"), 5, "lines.0.b"),
        (TWO_BUS.replace("bus=2 kind=classical", "bus=3 kind=classical"), None, "unknown bus 3"),
    ],
)
def test_errors_carry_line_numbers(text: str, line: int | None, match: str) -> None:
    """Grammar and schema violations point at the offending line."""
    with pytest.raises(ConfigError, match=match) as excinfo:
        parse_spec_text(text)
    assert excinfo.value.line == line


def test_unknown_bundled_name() -> None:
    """Only the shipped names resolve to package data."""
    with pytest.raises(ConfigError, match="no bundled spec"):
        bundled_spec_path("ieee14")


def test_missing_file(tmp_path: Path) -> None:
    """An unreadable path is a config error."""
    with pytest.raises(ConfigError, match="cannot read"):
        parse_spec(tmp_path / "missing.cfg")
