"""Scheduled server-side analytics: range aggregates and linear prediction.

Jobs run against the live materialized sheet and append one result row per
run to a named results snapshot (a growing sheet), so analytics never race
user edits in the command log. Result rows are laid out as:

    A: computed_at (unix seconds)   B: job id   C: kind label
    D: value  (or slope)            E: intercept  F: next_prediction (TREND)

Error values land in column D as their display code (e.g. #REF!).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import BadJobSpec, InsufficientData
from .formula import Call, NumLit, Range, SheetResolver, StrLit, evaluate_formula
from .sheet import (
    CellAddress,
    ComputedValue,
    Err,
    ErrorCode,
    Num,
    Number,
    Sheet,
    Str,
    Text,
    address_in_bounds,
    format_address,
    parse_address,
)

AGGREGATE_KINDS = ("SUM", "MEAN", "MIN", "MAX", "COUNT", "COUNTIF")
JOB_KINDS = AGGREGATE_KINDS + ("TREND",)

_FORMULA_NAME = {"MEAN": "AVERAGE"}


@dataclass(frozen=True)
class TrendLine:
    slope: float
    intercept: float
    next_prediction: float


@dataclass(frozen=True)
class JobSpec:
    id: str
    author: str
    group: str
    start: CellAddress
    end: CellAddress
    kind: str
    criterion: float | str | None
    period_s: float
    output_snapshot: str
    created_at: float
    next_due: float

    def range_text(self) -> str:
        return f"{format_address(self.start)}:{format_address(self.end)}"


@dataclass(frozen=True)
class JobResult:
    job_id: str
    computed_at: float
    value: ComputedValue | TrendLine


def parse_range_text(text: str) -> tuple[CellAddress, CellAddress]:
    """ "C2:C6" -> normalized (start, end). Raises BadJobSpec."""
    first, sep, second = text.partition(":")
    if not sep:
        raise BadJobSpec(f"not a range: {text!r}")
    try:
        a, b = parse_address(first), parse_address(second)
    except Exception as exc:
        raise BadJobSpec(str(exc)) from exc
    return (CellAddress(min(a.col, b.col), min(a.row, b.row)),
            CellAddress(max(a.col, b.col), max(a.row, b.row)))


def validate_job_spec(spec: JobSpec) -> JobSpec:
    if spec.kind not in JOB_KINDS:
        raise BadJobSpec(f"unknown kind {spec.kind!r}")
    if not (address_in_bounds(spec.start) and address_in_bounds(spec.end)):
        raise BadJobSpec("range out of bounds")
    if spec.start.col > spec.end.col or spec.start.row > spec.end.row:
        raise BadJobSpec("range not normalized")
    if spec.period_s < 1.0:
        raise BadJobSpec("period must be at least 1s")
    if spec.kind == "TREND" and spec.start.col != spec.end.col:
        raise BadJobSpec("TREND range must be a single column")
    if spec.kind == "COUNTIF" and spec.criterion is None:
        raise BadJobSpec("COUNTIF needs a criterion")
    return spec


def compute_aggregate(sheet: Sheet, start: CellAddress, end: CellAddress,
                      kind: str, criterion: float | str | None = None) -> ComputedValue:
    """Range aggregate with exactly the formula engine's semantics.

    Shares the engine's implementation by evaluating the equivalent call.
    """
    if kind not in AGGREGATE_KINDS:
        raise BadJobSpec(f"not an aggregate kind: {kind!r}")
    args: tuple = (Range(start, end),)
    if kind == "COUNTIF":
        lit = NumLit(float(criterion)) if isinstance(criterion, (int, float)) \
            else StrLit(str(criterion))
        args = (Range(start, end), lit)
    call = Call(_FORMULA_NAME.get(kind, kind), args)
    return evaluate_formula(call, SheetResolver(sheet))


def linear_trend(values: list[float]) -> TrendLine:
    """Ordinary least squares of values against their 1-based index."""
    n = len(values)
    if n < 2:
        raise InsufficientData(f"need at least 2 values, got {n}")
    x_mean = (n + 1) / 2.0
    y_mean = sum(values) / n
    sxy = 0.0
    sxx = 0.0
    for i, y in enumerate(values, start=1):
        dx = i - x_mean
        sxy += dx * (y - y_mean)
        sxx += dx * dx
    slope = sxy / sxx
    intercept = y_mean - slope * x_mean
    return TrendLine(slope, intercept, slope * (n + 1) + intercept)


def column_numbers(sheet: Sheet, start: CellAddress, end: CellAddress) -> list[float]:
    """Numeric values of a single-column range, top to bottom."""
    resolver = SheetResolver(sheet)
    out = []
    for row in range(start.row, end.row + 1):
        value = resolver(CellAddress(start.col, row))
        if isinstance(value, Num):
            out.append(value.value)
    return out


def run_job(spec: JobSpec, sheet: Sheet, now: float) -> JobResult:
    """Compute one result from a consistent sheet snapshot."""
    if spec.kind == "TREND":
        try:
            value: ComputedValue | TrendLine = linear_trend(
                column_numbers(sheet, spec.start, spec.end))
        except InsufficientData:
            value = Err(ErrorCode.VALUE)
    else:
        value = compute_aggregate(sheet, spec.start, spec.end, spec.kind, spec.criterion)
    return JobResult(spec.id, now, value)


def next_due_after(spec: JobSpec, now: float) -> float:
    """Fixed-rate advance on the created_at grid; skips all but one miss."""
    periods = int((now - spec.created_at) // spec.period_s) + 1
    return spec.created_at + periods * spec.period_s


def append_result_row(results: Sheet, result: JobResult, kind_label: str) -> None:
    row = max((a.row for a in results.cells), default=0) + 1
    results.set_cell(CellAddress(1, row), Number(result.computed_at))
    results.set_cell(CellAddress(2, row), Text(result.job_id))
    results.set_cell(CellAddress(3, row), Text(kind_label))
    value = result.value
    if isinstance(value, TrendLine):
        results.set_cell(CellAddress(4, row), Number(value.slope))
        results.set_cell(CellAddress(5, row), Number(value.intercept))
        results.set_cell(CellAddress(6, row), Number(value.next_prediction))
    elif isinstance(value, Num):
        results.set_cell(CellAddress(4, row), Number(value.value))
    elif isinstance(value, Str):
        results.set_cell(CellAddress(4, row), Text(value.value))
    else:
        results.set_cell(CellAddress(4, row), Text(value.display()))


def job_to_wire(spec: JobSpec) -> dict:
    return {
        "id": spec.id,
        "author": spec.author,
        "group": spec.group,
        "kind": spec.kind,
        "criterion": spec.criterion,
        "range": spec.range_text(),
        "period_s": spec.period_s,
        "output_snapshot": spec.output_snapshot,
        "created_at": spec.created_at,
        "next_due": spec.next_due,
    }


def job_from_wire(data: dict) -> JobSpec:
    start, end = parse_range_text(data["range"])
    spec = JobSpec(
        id=data["id"],
        author=data["author"],
        group=data["group"],
        start=start,
        end=end,
        kind=data["kind"],
        criterion=data.get("criterion"),
        period_s=float(data["period_s"]),
        output_snapshot=data["output_snapshot"],
        created_at=float(data["created_at"]),
        next_due=float(data["next_due"]),
    )
    return validate_job_spec(spec)


def reschedule(spec: JobSpec, next_due: float) -> JobSpec:
    return replace(spec, next_due=next_due)
