"""Foreign tabular data -> canonical save string, through pluggable adapters.

Built-in adapters cover .csv (RFC-4180-style, strict) and .scsave (identity
after validation). Binary spreadsheet formats are deliberately out: the
adapter interface is the seam where such decoders would plug in, and an
unknown extension is a first-class NoAdapter outcome.

Imported cells are values or text only - a field like "=SUM(A1:A2)" stays
text, so imports can never inject formulas.
"""

from __future__ import annotations

import os.path
from dataclasses import dataclass, field

from .errors import (
    BadEncoding,
    BadRequest,
    EmbeddedNewline,
    NoAdapter,
    TooManyColumns,
    TooManyRows,
    UnbalancedQuote,
)
from .sheet import (
    EMPTY,
    MAX_COL,
    MAX_ROW,
    CellAddress,
    CellContent,
    Number,
    Sheet,
    Text,
    parse_number,
    parse_save_string,
    serialize_sheet,
    valid_sheet_name,
)


@dataclass(frozen=True)
class ImportOptions:
    delimiter: str = ","
    has_header: bool = False
    sheet_name: str = "imported"

    def __post_init__(self):
        d = self.delimiter
        if len(d) != 1 or not ("!" <= d <= "~" or d == " ") or d in ('"', "\n", "\r"):
            raise BadRequest(f"bad delimiter: {d!r}")
        if not valid_sheet_name(self.sheet_name):
            raise BadRequest(f"bad sheet name: {self.sheet_name!r}")


def infer_cell_type(field_text: str) -> CellContent:
    """'' -> Empty; strict finite number -> Number; anything else -> Text."""
    if field_text == "":
        return EMPTY
    try:
        return Number(parse_number(field_text))
    except ValueError:
        return Text(field_text)


def _split_csv(text: str, delimiter: str) -> list[list[str]]:
    """Strict RFC-4180-ish parse. Quoted fields may hold the delimiter and
    doubled quotes, never newlines; stray quotes are errors."""
    rows: list[list[str]] = []
    fields: list[str] = []
    buf: list[str] = []
    line = 1
    state = "start"          # start | plain | quoted | after_quote
    row_started = False

    def end_field():
        fields.append("".join(buf))
        buf.clear()

    def end_row():
        nonlocal row_started
        end_field()
        rows.append(fields.copy())
        fields.clear()
        row_started = False

    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\r":                      # normalize \r\n and bare \r
            if state == "quoted":
                raise EmbeddedNewline(line)
            if i + 1 < len(text) and text[i + 1] == "\n":
                i += 1
            ch = "\n"
        if state == "start":
            row_started = True
            if ch == '"':
                state = "quoted"
            elif ch == delimiter:
                end_field()
            elif ch == "\n":
                end_row()
                line += 1
            else:
                buf.append(ch)
                state = "plain"
        elif state == "plain":
            if ch == '"':
                raise UnbalancedQuote(line)
            if ch == delimiter:
                end_field()
                state = "start"
            elif ch == "\n":
                end_row()
                line += 1
                state = "start"
            else:
                buf.append(ch)
        elif state == "quoted":
            if ch == "\n":
                raise EmbeddedNewline(line)
            if ch == '"':
                state = "after_quote"
            else:
                buf.append(ch)
        else:                                # after_quote
            if ch == '"':
                buf.append('"')
                state = "quoted"
            elif ch == delimiter:
                end_field()
                state = "start"
            elif ch == "\n":
                end_row()
                line += 1
                state = "start"
            else:
                raise UnbalancedQuote(line)
        i += 1

    if state == "quoted":
        raise UnbalancedQuote(line)
    if row_started or buf or fields:
        end_row()
    return rows


def import_csv(data: bytes, options: ImportOptions | None = None) -> str:
    """CSV bytes -> canonical save string. Field (r, c) lands at (col c, row r);
    with has_header the first row is omitted (rows keep their numbers)."""
    options = options or ImportOptions()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise BadEncoding(str(exc)) from exc
    if text.startswith("﻿"):
        text = text[1:]
    rows = _split_csv(text, options.delimiter)
    if len(rows) > MAX_ROW:
        raise TooManyRows(f"{len(rows)} rows")
    sheet = Sheet(options.sheet_name)
    for r, fields in enumerate(rows, start=1):
        if options.has_header and r == 1:
            continue
        if len(fields) > MAX_COL:
            raise TooManyColumns(f"row {r}: {len(fields)} columns")
        for c, field_text in enumerate(fields, start=1):
            content = infer_cell_type(field_text)
            if content is not EMPTY:
                sheet.set_cell(CellAddress(c, r), content)
    return serialize_sheet(sheet)


# --- adapters ---------------------------------------------------------------


class CsvAdapter:
    name = "csv"
    extensions = (".csv",)

    def sniff(self, head: bytes) -> bool:
        return False   # no reliable magic for CSV

    def convert(self, data: bytes, options: ImportOptions | None = None) -> str:
        return import_csv(data, options)


class ScsaveAdapter:
    name = "scsave"
    extensions = (".scsave",)

    def sniff(self, head: bytes) -> bool:
        return head.startswith(b"socialcalc-save 1 ")

    def convert(self, data: bytes, options: ImportOptions | None = None) -> str:
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise BadEncoding(str(exc)) from exc
        parse_save_string(text)   # validation only; output is the input
        return text


BUILTIN_ADAPTERS = (CsvAdapter(), ScsaveAdapter())


def convert(filename: str, data: bytes, options: ImportOptions | None = None,
            adapters=BUILTIN_ADAPTERS) -> str:
    """Route to the first adapter claiming the file: extension first, then
    content sniff. Raises NoAdapter with the unclaimed extension."""
    ext = os.path.splitext(filename)[1].lower()
    for adapter in adapters:
        if ext in adapter.extensions:
            return adapter.convert(data, options)
    head = data[:64]
    for adapter in adapters:
        if adapter.sniff(head):
            return adapter.convert(data, options)
    raise NoAdapter(ext)
