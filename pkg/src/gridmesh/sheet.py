"""Cell addressing, the sheet data model and the canonical save-string format.

A sheet is a sparse map from addresses to contents; an address is a 1-based
(col, row) pair written in A1 notation with bijective base-26 column letters
(A..Z, AA..ZZ).  The save string is the line-oriented interchange format:

    socialcalc-save 1 <sheet-name>
    cell <ADDR> value n <number>
    cell <ADDR> text t <text-to-end-of-line>
    cell <ADDR> formula <formula-source-to-end-of-line>

UTF-8, LF line endings, single ASCII spaces as separators.  Serialization is
deterministic (row-major) so equal sheets produce byte-identical strings.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, NamedTuple, Union

from .errors import (
    BadHeader,
    FormulaSyntaxError,
    MalformedAddress,
    MalformedFormula,
    MalformedLine,
)

MAX_COL = 702       # "ZZ"
MAX_ROW = 100_000


class CellAddress(NamedTuple):
    col: int
    row: int

    def __str__(self) -> str:
        return format_address(self)


_ADDRESS_RE = re.compile(r"([A-Za-z]{1,3})([0-9]{1,6})\Z")


def parse_address(text: str) -> CellAddress:
    """Parse A1 notation, case-insensitively. Raises MalformedAddress."""
    m = _ADDRESS_RE.match(text)
    if not m:
        raise MalformedAddress(f"not a cell address: {text!r}")
    letters, digits = m.group(1).upper(), m.group(2)
    col = 0
    for ch in letters:
        col = col * 26 + (ord(ch) - ord("A") + 1)
    row = int(digits)
    if not (1 <= col <= MAX_COL):
        raise MalformedAddress(f"column out of range: {text!r}")
    if not (1 <= row <= MAX_ROW):
        raise MalformedAddress(f"row out of range: {text!r}")
    return CellAddress(col, row)


def format_address(addr: CellAddress) -> str:
    """Uppercase A1 form; inverse of parse_address on valid addresses."""
    if not address_in_bounds(addr):
        raise ValueError(f"address out of bounds: {addr!r}")
    col, letters = addr.col, ""
    while col > 0:
        col, rem = divmod(col - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return f"{letters}{addr.row}"


def address_in_bounds(addr: CellAddress) -> bool:
    return 1 <= addr.col <= MAX_COL and 1 <= addr.row <= MAX_ROW


# --- computed values ------------------------------------------------------

class ErrorCode(Enum):
    DIV0 = "DIV0"
    REF = "REF"
    CIRC = "CIRC"
    NAME = "NAME"
    VALUE = "VALUE"


_ERROR_DISPLAY = {
    ErrorCode.DIV0: "#DIV/0!",
    ErrorCode.REF: "#REF!",
    ErrorCode.CIRC: "#CIRC!",
    ErrorCode.NAME: "#NAME!",
    ErrorCode.VALUE: "#VALUE!",
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Err:
    code: ErrorCode

    def display(self) -> str:
        return _ERROR_DISPLAY[self.code]


ComputedValue = Union[Num, Str, Err]


# --- cell contents --------------------------------------------------------

class _EmptyType:
    """Singleton marker for absent cells; absence in the map means Empty."""

    _instance: "_EmptyType | None" = None

    def __new__(cls) -> "_EmptyType":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Empty"


EMPTY = _EmptyType()

_CONTROL_CHARS = re.compile(r"[\x00-\x1f\x7f]")


@dataclass(frozen=True)
class Number:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"cell numbers must be finite, got {self.value!r}")


@dataclass(frozen=True)
class Text:
    value: str

    def __post_init__(self):
        if _CONTROL_CHARS.search(self.value):
            raise ValueError("cell text must be a single line without control characters")


@dataclass(frozen=True)
class Formula:
    source: str
    cached: ComputedValue


CellContent = Union[_EmptyType, Number, Text, Formula]


# --- numbers on the wire --------------------------------------------------

_NUMBER_RE = re.compile(r"[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?\Z")


def parse_number(text: str) -> float:
    """Strict decimal parse: sign, fraction, exponent; finite only.

    Rejects everything float() is lenient about (inf, nan, underscores, hex).
    """
    if not _NUMBER_RE.match(text):
        raise ValueError(f"not a number: {text!r}")
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"number out of range: {text!r}")
    return value


def format_number(value: float) -> str:
    """Shortest round-trip decimal; integral values drop the '.0'."""
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


# --- sheet ----------------------------------------------------------------

_NAME_RE = re.compile(r"[!-~]{1,64}\Z")   # printable ASCII, no whitespace


def valid_sheet_name(name: str) -> bool:
    return bool(_NAME_RE.match(name)) and "/" not in name and "\\" not in name \
        and name not in (".", "..")


class Sheet:
    """Sparse cell grid. Single-writer mutable; no Empty entries are stored."""

    def __init__(self, name: str = "sheet"):
        if not valid_sheet_name(name):
            raise ValueError(f"bad sheet name: {name!r}")
        self.name = name
        self.cells: dict[CellAddress, CellContent] = {}

    def set_cell(self, addr: CellAddress, content: CellContent) -> "Sheet":
        """Replace one cell. Empty removes the entry. Formulas must parse.

        The caller triggers recalculation; this only stores.
        """
        if not address_in_bounds(addr):
            raise MalformedAddress(f"address out of bounds: {addr!r}")
        if content is EMPTY:
            self.cells.pop(addr, None)
            return self
        if isinstance(content, Formula):
            from .formula import parse_formula  # sheet stores what formula validates
            if not content.source:
                raise MalformedFormula("empty formula source")
            try:
                parse_formula(content.source)
            except (FormulaSyntaxError, MalformedAddress) as exc:
                raise MalformedFormula(str(exc)) from exc
        self.cells[addr] = content
        return self

    def get_cell(self, addr: CellAddress) -> CellContent:
        if not address_in_bounds(addr):
            raise MalformedAddress(f"address out of bounds: {addr!r}")
        return self.cells.get(addr, EMPTY)

    def copy(self) -> "Sheet":
        dup = Sheet(self.name)
        dup.cells = dict(self.cells)   # contents are immutable
        return dup

    def sorted_addresses(self) -> list[CellAddress]:
        """Row-major order (row, then col) over non-empty cells."""
        return sorted(self.cells, key=lambda a: (a.row, a.col))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sheet):
            return NotImplemented
        return self.name == other.name and self.cells == other.cells

    def __repr__(self) -> str:
        return f"Sheet({self.name!r}, {len(self.cells)} cells)"


def _cell_line(addr: CellAddress, content: CellContent) -> str:
    label = format_address(addr)
    if isinstance(content, Number):
        return f"cell {label} value n {format_number(content.value)}"
    if isinstance(content, Text):
        return f"cell {label} text t {content.value}"
    if isinstance(content, Formula):
        return f"cell {label} formula {content.source}"
    raise TypeError(f"cannot serialize {content!r}")


def serialize_sheet(sheet: Sheet) -> str:
    lines = [f"socialcalc-save 1 {sheet.name}"]
    for addr in sheet.sorted_addresses():
        lines.append(_cell_line(addr, sheet.cells[addr]))
    return "\n".join(lines) + "\n"


def iter_save_cells(text: str) -> Iterator[tuple[int, CellAddress, CellContent]]:
    """Yield (line_no, addr, content) from a save string body, validating as it goes."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for idx, line in enumerate(lines[1:], start=2):
        if line == "":
            continue   # tolerated on input, never emitted
        parts = line.split(" ", 3)
        if len(parts) < 3 or parts[0] != "cell":
            raise MalformedLine(idx, f"unrecognized line: {line!r}")
        try:
            addr = parse_address(parts[1])
        except MalformedAddress as exc:
            raise MalformedLine(idx, str(exc)) from exc
        kind = parts[2]
        rest = parts[3] if len(parts) > 3 else ""
        try:
            if kind == "value":
                sub = rest.split(" ")
                if len(sub) != 2 or sub[0] != "n":
                    raise ValueError(f"bad value payload: {rest!r}")
                content: CellContent = Number(parse_number(sub[1]))
            elif kind == "text":
                sub = rest.split(" ", 1)
                if sub[0] != "t":
                    raise ValueError(f"bad text payload: {rest!r}")
                content = Text(sub[1] if len(sub) > 1 else "")
            elif kind == "formula":
                if not rest:
                    raise ValueError("empty formula source")
                content = Formula(rest, Num(0.0))   # caller recalculates
            else:
                raise ValueError(f"unknown cell kind: {kind!r}")
        except ValueError as exc:
            raise MalformedLine(idx, str(exc)) from exc
        yield idx, addr, content


def parse_save_string(text: str) -> Sheet:
    """Inverse of serialize_sheet; tolerant of cell-line order, recalculates formulas."""
    first, _, _ = text.partition("\n")
    head = first.split(" ")
    if len(head) != 3 or head[0] != "socialcalc-save" or head[1] != "1" \
            or not valid_sheet_name(head[2]):
        raise BadHeader(f"bad save header: {first!r}")
    sheet = Sheet(head[2])
    for line_no, addr, content in iter_save_cells(text):
        try:
            sheet.set_cell(addr, content)
        except MalformedFormula as exc:
            raise MalformedLine(line_no, str(exc)) from exc
    from .formula import recalculate_sheet
    recalculate_sheet(sheet)
    return sheet
