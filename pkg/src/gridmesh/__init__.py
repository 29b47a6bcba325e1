"""gridmesh: a collaborative cloud spreadsheet.

Sheets are mutated exclusively through one-line command strings, sequenced
by an authoritative sync server and pulled by polling clients; includes a
CSV importer and a scheduled server-side analytics engine.
"""

from .sheet import (
    EMPTY,
    CellAddress,
    CellContent,
    ComputedValue,
    Err,
    ErrorCode,
    Formula,
    Num,
    Number,
    Sheet,
    Str,
    Text,
    format_address,
    format_number,
    parse_address,
    parse_number,
    parse_save_string,
    serialize_sheet,
)
from .formula import (
    evaluate_formula,
    extract_references,
    parse_formula,
    recalculate_sheet,
)
from .commands import (
    Command,
    SetEmpty,
    SetFormula,
    SetNumber,
    SetText,
    apply_command,
    parse_command,
    replay_log,
    serialize_command,
)

__version__ = "0.1.0"
