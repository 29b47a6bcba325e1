"""Seeded random generators shared by property tests and the acceptance suite."""

from __future__ import annotations

import random

from gridmesh.commands import SetEmpty, SetFormula, SetNumber, SetText
from gridmesh.formula import recalculate_sheet
from gridmesh.sheet import CellAddress, Formula, Num, Number, Sheet, Text

TEXT_ALPHABET = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 _-.,;!?'\"éß漢字"


def random_number(rng: random.Random) -> float:
    roll = rng.random()
    if roll < 0.4:
        return float(rng.randint(-1000, 1000))
    if roll < 0.7:
        return rng.uniform(-1e6, 1e6)
    if roll < 0.85:
        return rng.uniform(-1, 1) * 10.0 ** rng.randint(-30, 30)
    return rng.choice([0.0, -0.0, 1.0, -1.0, 0.5, 1e-300, 1e300, 123456.789])


def random_text(rng: random.Random, max_len: int = 24) -> str:
    return "".join(rng.choice(TEXT_ALPHABET) for _ in range(rng.randint(0, max_len)))


def random_addr(rng: random.Random, cols: int = 8, rows: int = 12) -> CellAddress:
    return CellAddress(rng.randint(1, cols), rng.randint(1, rows))


def random_formula_source(rng: random.Random, cols: int = 8, rows: int = 12) -> str:
    """Small formula pool over the grid; cycles are allowed and welcome."""
    def ref():
        return str(random_addr(rng, cols, rows))

    def rng_ref():
        a, b = random_addr(rng, cols, rows), random_addr(rng, cols, rows)
        return f"{CellAddress(min(a.col, b.col), min(a.row, b.row))}:" \
               f"{CellAddress(max(a.col, b.col), max(a.row, b.row))}"

    pick = rng.random()
    if pick < 0.25:
        return f"{ref()}{rng.choice(['+', '-', '*'])}{rng.randint(1, 9)}"
    if pick < 0.45:
        return f"{rng.choice(['SUM', 'COUNT', 'MIN', 'MAX', 'AVERAGE'])}({rng_ref()})"
    if pick < 0.6:
        return f"COUNTIF({rng_ref()},{rng.choice(['1', '2', chr(34) + 'P' + chr(34)])})"
    if pick < 0.75:
        return f"IF({ref()}>{rng.randint(0, 5)},{ref()},{rng.randint(0, 99)})"
    if pick < 0.9:
        return f"{ref()}/{ref()}"
    return f"({ref()}+{ref()})*{rng.uniform(0, 2):.3f}"


def random_command(rng: random.Random, cols: int = 8, rows: int = 12):
    addr = random_addr(rng, cols, rows)
    roll = rng.random()
    if roll < 0.45:
        return SetNumber(addr, random_number(rng))
    if roll < 0.65:
        return SetText(addr, random_text(rng))
    if roll < 0.85:
        return SetFormula(addr, random_formula_source(rng, cols, rows))
    return SetEmpty(addr)


def random_sheet(rng: random.Random, max_cells: int = 30, cols: int = 8, rows: int = 12,
                 with_formulas: bool = True) -> Sheet:
    sheet = Sheet(f"rand{rng.randint(0, 999999)}")
    for _ in range(rng.randint(0, max_cells)):
        addr = random_addr(rng, cols, rows)
        roll = rng.random()
        if roll < 0.5:
            sheet.set_cell(addr, Number(random_number(rng)))
        elif roll < 0.8 or not with_formulas:
            sheet.set_cell(addr, Text(random_text(rng)))
        else:
            sheet.set_cell(addr, Formula(random_formula_source(rng, cols, rows), Num(0.0)))
    recalculate_sheet(sheet)
    return sheet
