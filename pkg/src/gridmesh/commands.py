"""The one-line command strings that are the only way a sheet is mutated.

Grammar, one command per line, single ASCII spaces as separators:

    set <ADDR> value n <number>
    set <ADDR> text t <payload-to-end-of-line>
    set <ADDR> formula <payload-to-end-of-line>
    set <ADDR> empty

Serialization is canonical (uppercase address, shortest number form), so
parse(serialize(c)) == c and serialize(parse(text)) canonicalizes text.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import FormulaSyntaxError, MalformedAddress, MalformedCommand
from .sheet import (
    EMPTY,
    CellAddress,
    Formula,
    Num,
    Number,
    Sheet,
    Text,
    format_address,
    format_number,
    parse_address,
    parse_number,
)


@dataclass(frozen=True)
class SetNumber:
    addr: CellAddress
    value: float


@dataclass(frozen=True)
class SetText:
    addr: CellAddress
    text: str


@dataclass(frozen=True)
class SetFormula:
    addr: CellAddress
    source: str


@dataclass(frozen=True)
class SetEmpty:
    addr: CellAddress


Command = SetNumber | SetText | SetFormula | SetEmpty


def parse_command(text: str) -> Command:
    """Parse one command line. Raises MalformedCommand."""
    if "\n" in text or "\r" in text:
        raise MalformedCommand("command must be a single line")
    parts = text.split(" ", 3)
    if parts[0] != "set" or len(parts) < 3:
        raise MalformedCommand(f"unrecognized command: {text!r}")
    try:
        addr = parse_address(parts[1])
    except MalformedAddress as exc:
        raise MalformedCommand(str(exc)) from exc
    kind = parts[2]
    rest = parts[3] if len(parts) > 3 else ""

    if kind == "empty":
        if rest:
            raise MalformedCommand(f"trailing data after 'empty': {rest!r}")
        return SetEmpty(addr)
    if kind == "value":
        sub = rest.split(" ")
        if len(sub) != 2 or sub[0] != "n":
            raise MalformedCommand(f"bad value payload: {rest!r}")
        try:
            return SetNumber(addr, parse_number(sub[1]))
        except ValueError as exc:
            raise MalformedCommand(str(exc)) from exc
    if kind == "text":
        sub = rest.split(" ", 1)
        if sub[0] != "t":
            raise MalformedCommand(f"bad text payload: {rest!r}")
        payload = sub[1] if len(sub) > 1 else ""
        try:
            Text(payload)
        except ValueError as exc:
            raise MalformedCommand(str(exc)) from exc
        return SetText(addr, payload)
    if kind == "formula":
        if not rest:
            raise MalformedCommand("empty formula source")
        from .formula import parse_formula
        try:
            parse_formula(rest)
        except (FormulaSyntaxError, MalformedAddress) as exc:
            raise MalformedCommand(str(exc)) from exc
        return SetFormula(addr, rest)
    raise MalformedCommand(f"unknown verb: {kind!r}")


def serialize_command(cmd: Command) -> str:
    label = format_address(cmd.addr)
    if isinstance(cmd, SetNumber):
        return f"set {label} value n {format_number(cmd.value)}"
    if isinstance(cmd, SetText):
        return f"set {label} text t {cmd.text}"
    if isinstance(cmd, SetFormula):
        return f"set {label} formula {cmd.source}"
    if isinstance(cmd, SetEmpty):
        return f"set {label} empty"
    raise TypeError(f"not a command: {cmd!r}")


def command_content(cmd: Command):
    """The cell content a command writes (EMPTY for SetEmpty)."""
    if isinstance(cmd, SetNumber):
        return Number(cmd.value)
    if isinstance(cmd, SetText):
        return Text(cmd.text)
    if isinstance(cmd, SetFormula):
        return Formula(cmd.source, Num(0.0))
    return EMPTY


def command_for_content(addr: CellAddress, content) -> Command:
    """The command that writes this content; validates formulas up front."""
    if content is EMPTY:
        return SetEmpty(addr)
    if isinstance(content, Number):
        return SetNumber(addr, content.value)
    if isinstance(content, Text):
        return SetText(addr, content.value)
    if isinstance(content, Formula):
        from .errors import MalformedFormula
        from .formula import parse_formula
        try:
            parse_formula(content.source)
        except (FormulaSyntaxError, MalformedAddress) as exc:
            raise MalformedFormula(str(exc)) from exc
        return SetFormula(addr, content.source)
    raise TypeError(f"not cell content: {content!r}")


def sheet_set_commands(sheet: Sheet) -> list[Command]:
    """Commands that write every non-empty cell, in row-major order."""
    out: list[Command] = []
    for addr in sheet.sorted_addresses():
        content = sheet.cells[addr]
        if isinstance(content, Number):
            out.append(SetNumber(addr, content.value))
        elif isinstance(content, Text):
            out.append(SetText(addr, content.value))
        elif isinstance(content, Formula):
            out.append(SetFormula(addr, content.source))
    return out


def apply_command(sheet: Sheet, cmd: Command, recalc: bool = True) -> Sheet:
    """Write one cell (last writer wins) and recalculate.

    Mutates and returns the given sheet. Callers replaying a whole log can
    pass recalc=False and recalculate once at the end; results are identical.
    """
    sheet.set_cell(cmd.addr, command_content(cmd))
    if recalc:
        from .formula import recalculate_sheet
        recalculate_sheet(sheet)
    return sheet


def replay_log(commands, name: str = "sheet") -> Sheet:
    """Left-fold of apply_command from an empty sheet; pure in the log."""
    sheet = Sheet(name)
    for cmd in commands:
        apply_command(sheet, cmd, recalc=False)
    from .formula import recalculate_sheet
    recalculate_sheet(sheet)
    return sheet
