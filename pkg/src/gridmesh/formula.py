"""Formula language: parser, evaluator, dependency ordering, cycle detection.

Grammar (loosest binding first):

    comparison   :=  additive (("<" | "<=" | ">" | ">=" | "=" | "<>") additive)*
    additive     :=  multiplicative (("+" | "-") multiplicative)*
    multiplicative := unary (("*" | "/") unary)*
    unary        :=  "-" unary | power
    power        :=  atom ("^" unary)?          right-associative
    atom         :=  NUMBER | STRING | ref | call | "(" comparison ")"
    call         :=  NAME "(" (arg ("," arg)*)? ")"
    arg          :=  ref ":" ref | comparison    ranges only directly inside calls

With this layout -2^2 evaluates to -(2^2) = -4 and 2^-3 to 2^(-3).
String literals are double-quoted and cannot contain a quote or newline.

Evaluation semantics (the test oracle implements the same table independently):

* Empty cells coerce to 0 in scalar positions and are skipped inside ranges.
* Text operands of arithmetic, negation or an ordering comparison -> Err(VALUE).
* "=" and "<>" compare Num by value and Str exactly; mixed kinds are unequal.
* Errors propagate outward, leftmost operand first; non-finite results -> Err(VALUE);
  division by zero -> Err(DIV0).  Comparisons yield Num 1 / Num 0.
* SUM/AVERAGE/MIN/MAX/COUNT: range cells that are Str are skipped, scalar Str
  args are Err(VALUE) (except COUNT, which just does not count them); AVERAGE
  of zero numerics -> Err(DIV0); MIN/MAX of zero numerics -> Num 0.
* COUNTIF(range, criterion): exact Num/Str match, empty cells never match.
* IF(cond, a, b): nonzero Num cond takes a, zero takes b, only the taken
  branch is evaluated; a Str or Err cond -> Err(VALUE).
* Unknown function names parse fine and evaluate to Err(NAME) without
  touching their arguments; wrong arity -> Err(VALUE).
* References outside the grid bounds -> Err(REF).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Optional, Union

from .errors import FormulaSyntaxError, MalformedAddress
from .sheet import (
    EMPTY,
    CellAddress,
    ComputedValue,
    Err,
    ErrorCode,
    Formula,
    Num,
    Number,
    Sheet,
    Str,
    Text,
    address_in_bounds,
    parse_address,
)

# --- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class NumLit:
    value: float


@dataclass(frozen=True)
class StrLit:
    value: str


@dataclass(frozen=True)
class Ref:
    addr: CellAddress


@dataclass(frozen=True)
class Range:
    start: CellAddress   # normalized: start.col <= end.col, start.row <= end.row
    end: CellAddress


@dataclass(frozen=True)
class Unary:
    op: str              # only "-"
    expr: "FormulaAst"


@dataclass(frozen=True)
class Binary:
    op: str              # + - * / ^ < <= > >= = <>
    left: "FormulaAst"
    right: "FormulaAst"


@dataclass(frozen=True)
class Call:
    name: str            # case-folded to uppercase
    args: tuple["FormulaAst", ...]


FormulaAst = Union[NumLit, StrLit, Ref, Range, Unary, Binary, Call]

KNOWN_FUNCTIONS = frozenset({"SUM", "AVERAGE", "MIN", "MAX", "COUNT", "COUNTIF", "IF"})

# --- tokenizer -------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""(?P<ws>[ \t]+)
      | (?P<number>(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)
      | (?P<string>"[^"\n]*")
      | (?P<ident>[A-Za-z][A-Za-z0-9]*)
      | (?P<op><=|>=|<>|[-+*/^<>=(),:])
    """,
    re.VERBOSE,
)

_ADDRESS_SHAPE = re.compile(r"[A-Za-z]{1,3}[0-9]+\Z")


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise FormulaSyntaxError(pos, f"unexpected character {source[pos]!r}")
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def take(self) -> _Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def expect_op(self, text: str) -> _Token:
        tok = self.peek()
        if tok.kind != "op" or tok.text != text:
            raise FormulaSyntaxError(tok.pos, f"expected {text!r}")
        return self.take()

    def parse(self) -> FormulaAst:
        ast = self.comparison()
        tok = self.peek()
        if tok.kind != "eof":
            raise FormulaSyntaxError(tok.pos, f"unexpected {tok.text!r}")
        return ast

    def comparison(self) -> FormulaAst:
        node = self.additive()
        while self.peek().kind == "op" and self.peek().text in ("<", "<=", ">", ">=", "=", "<>"):
            op = self.take().text
            node = Binary(op, node, self.additive())
        return node

    def additive(self) -> FormulaAst:
        node = self.multiplicative()
        while self.peek().kind == "op" and self.peek().text in ("+", "-"):
            op = self.take().text
            node = Binary(op, node, self.multiplicative())
        return node

    def multiplicative(self) -> FormulaAst:
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in ("*", "/"):
            op = self.take().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> FormulaAst:
        if self.peek().kind == "op" and self.peek().text == "-":
            self.take()
            return Unary("-", self.unary())
        return self.power()

    def power(self) -> FormulaAst:
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            return Binary("^", base, self.unary())   # exponent may carry its own sign
        return base

    def atom(self) -> FormulaAst:
        tok = self.peek()
        if tok.kind == "number":
            self.take()
            value = float(tok.text)
            if not math.isfinite(value):
                raise FormulaSyntaxError(tok.pos, f"number out of range: {tok.text!r}")
            return NumLit(value)
        if tok.kind == "string":
            self.take()
            return StrLit(tok.text[1:-1])
        if tok.kind == "ident":
            return self.ref_or_call(allow_range=False)
        if tok.kind == "op" and tok.text == "(":
            self.take()
            node = self.comparison()
            self.expect_op(")")
            return node
        raise FormulaSyntaxError(tok.pos, f"expected a value, got {tok.text!r}")

    def ref_or_call(self, allow_range: bool) -> FormulaAst:
        tok = self.take()
        follow = self.peek()
        if follow.kind == "op" and follow.text == "(":
            self.take()
            args: list[FormulaAst] = []
            if not (self.peek().kind == "op" and self.peek().text == ")"):
                args.append(self.call_arg())
                while self.peek().kind == "op" and self.peek().text == ",":
                    self.take()
                    args.append(self.call_arg())
            self.expect_op(")")
            return Call(tok.text.upper(), tuple(args))
        if not _ADDRESS_SHAPE.match(tok.text):
            raise FormulaSyntaxError(tok.pos, f"unknown name {tok.text!r}")
        addr = parse_address(tok.text)   # MalformedAddress surfaces as-is
        if follow.kind == "op" and follow.text == ":":
            if not allow_range:
                raise FormulaSyntaxError(follow.pos, "range only allowed as a function argument")
            self.take()
            end_tok = self.take()
            if end_tok.kind != "ident" or not _ADDRESS_SHAPE.match(end_tok.text):
                raise FormulaSyntaxError(end_tok.pos, "expected a cell address after ':'")
            other = parse_address(end_tok.text)
            start = CellAddress(min(addr.col, other.col), min(addr.row, other.row))
            end = CellAddress(max(addr.col, other.col), max(addr.row, other.row))
            return Range(start, end)
        return Ref(addr)

    def call_arg(self) -> FormulaAst:
        tok = self.peek()
        if tok.kind == "ident" and _ADDRESS_SHAPE.match(tok.text) \
                and self.peek(1).kind == "op" and self.peek(1).text == ":":
            return self.ref_or_call(allow_range=True)
        return self.comparison()


@lru_cache(maxsize=8192)
def parse_formula(source: str) -> FormulaAst:
    """Parse a formula source string; raises FormulaSyntaxError / MalformedAddress.

    Results are cached: sources are immutable and ASTs are frozen.
    """
    if "\n" in source or "\r" in source:
        raise FormulaSyntaxError(0, "formula must be a single line")
    return _Parser(source).parse()


def extract_references(ast: FormulaAst) -> set[CellAddress]:
    """Every referenced address, with ranges fully expanded.

    Expansion is O(range area); recalculation uses the containment-based
    dependency graph below instead of this.
    """
    out: set[CellAddress] = set()
    stack: list[FormulaAst] = [ast]
    while stack:
        node = stack.pop()
        if isinstance(node, Ref):
            out.add(node.addr)
        elif isinstance(node, Range):
            for col in range(node.start.col, node.end.col + 1):
                for row in range(node.start.row, node.end.row + 1):
                    out.add(CellAddress(col, row))
        elif isinstance(node, Unary):
            stack.append(node.expr)
        elif isinstance(node, Binary):
            stack.append(node.left)
            stack.append(node.right)
        elif isinstance(node, Call):
            stack.extend(node.args)
    return out


# --- evaluation ------------------------------------------------------------

# A resolver maps an address to its computed value, or None for an empty cell.
Resolver = Callable[[CellAddress], Optional[ComputedValue]]

_VALUE_ERR = Err(ErrorCode.VALUE)
_DIV0_ERR = Err(ErrorCode.DIV0)


class SheetResolver:
    """Resolver over a sheet's stored contents and cached formula values.

    Provides the fast range path so huge ranges cost O(populated cells).
    """

    def __init__(self, sheet: Sheet):
        self.sheet = sheet

    def __call__(self, addr: CellAddress) -> ComputedValue | None:
        return content_value(self.sheet.cells.get(addr, EMPTY))

    def nonempty_in_range(self, start: CellAddress, end: CellAddress
                          ) -> Iterable[tuple[CellAddress, ComputedValue]]:
        hits = [a for a in self.sheet.cells
                if start.col <= a.col <= end.col and start.row <= a.row <= end.row]
        hits.sort(key=lambda a: (a.row, a.col))
        for a in hits:
            value = self(a)
            if value is not None:
                yield a, value


def content_value(content) -> ComputedValue | None:
    """Stored cell content as a computed value (None for Empty)."""
    if content is EMPTY:
        return None
    if isinstance(content, Number):
        return Num(content.value)
    if isinstance(content, Text):
        return Str(content.value)
    if isinstance(content, Formula):
        return content.cached
    raise TypeError(f"not cell content: {content!r}")


def _range_values(rng: Range, resolve: Resolver
                  ) -> Iterable[tuple[CellAddress, ComputedValue]]:
    """Non-empty values inside a range, row-major. Uses the resolver's fast
    path when it has one; otherwise walks the rectangle."""
    fast = getattr(resolve, "nonempty_in_range", None)
    if fast is not None:
        yield from fast(rng.start, rng.end)
        return
    for row in range(rng.start.row, rng.end.row + 1):
        for col in range(rng.start.col, rng.end.col + 1):
            value = resolve(CellAddress(col, row))
            if value is not None:
                yield CellAddress(col, row), value


def _as_scalar_num(value: ComputedValue | None) -> Num | Err:
    """Scalar numeric coercion: Empty -> 0, Str -> VALUE, Err passes through."""
    if value is None:
        return Num(0.0)
    if isinstance(value, Err):
        return value
    if isinstance(value, Str):
        return _VALUE_ERR
    return value


def _finite(value: float) -> ComputedValue:
    if isinstance(value, complex) or not math.isfinite(value):
        return _VALUE_ERR
    return Num(value)


def evaluate_formula(ast: FormulaAst, resolve: Resolver) -> ComputedValue:
    """Evaluate an AST against a resolver. Never raises; errors are values."""
    result = _eval(ast, resolve)
    return Num(0.0) if result is None else result


def _eval(ast: FormulaAst, resolve: Resolver) -> ComputedValue | None:
    if isinstance(ast, NumLit):
        return Num(ast.value)
    if isinstance(ast, StrLit):
        return Str(ast.value)
    if isinstance(ast, Ref):
        if not address_in_bounds(ast.addr):
            return Err(ErrorCode.REF)
        return resolve(ast.addr)
    if isinstance(ast, Range):
        return _VALUE_ERR   # a bare range is not a scalar
    if isinstance(ast, Unary):
        operand = _as_scalar_num(_eval(ast.expr, resolve))
        if isinstance(operand, Err):
            return operand
        return Num(-operand.value)
    if isinstance(ast, Binary):
        return _eval_binary(ast, resolve)
    if isinstance(ast, Call):
        return _eval_call(ast, resolve)
    raise TypeError(f"not a formula node: {ast!r}")


def _eval_binary(ast: Binary, resolve: Resolver) -> ComputedValue | None:
    left = _eval(ast.left, resolve)
    if isinstance(left, Err):
        return left
    right = _eval(ast.right, resolve)
    if isinstance(right, Err):
        return right

    if ast.op in ("=", "<>"):
        lv = Num(0.0) if left is None else left
        rv = Num(0.0) if right is None else right
        if isinstance(lv, Num) and isinstance(rv, Num):
            equal = lv.value == rv.value
        elif isinstance(lv, Str) and isinstance(rv, Str):
            equal = lv.value == rv.value
        else:
            equal = False
        return Num(1.0 if equal == (ast.op == "=") else 0.0)

    lnum = _as_scalar_num(left)
    if isinstance(lnum, Err):
        return lnum
    rnum = _as_scalar_num(right)
    if isinstance(rnum, Err):
        return rnum
    a, b = lnum.value, rnum.value

    if ast.op == "+":
        return _finite(a + b)
    if ast.op == "-":
        return _finite(a - b)
    if ast.op == "*":
        return _finite(a * b)
    if ast.op == "/":
        if b == 0.0:
            return _DIV0_ERR
        return _finite(a / b)
    if ast.op == "^":
        try:
            return _finite(a ** b)
        except ZeroDivisionError:
            return _DIV0_ERR
        except OverflowError:
            return _VALUE_ERR
    if ast.op == "<":
        return Num(1.0 if a < b else 0.0)
    if ast.op == "<=":
        return Num(1.0 if a <= b else 0.0)
    if ast.op == ">":
        return Num(1.0 if a > b else 0.0)
    if ast.op == ">=":
        return Num(1.0 if a >= b else 0.0)
    raise TypeError(f"unknown operator {ast.op!r}")


def _collect_numbers(args: tuple[FormulaAst, ...], resolve: Resolver,
                     count_scalar_text: bool) -> list[float] | Err:
    """Numeric operands for the aggregate family.

    Range cells: Num collected, Str skipped, Err propagates.
    Scalar args: Empty coerces to 0; Str is Err(VALUE) unless the caller
    (COUNT) merely ignores non-numerics.
    """
    numbers: list[float] = []
    for arg in args:
        if isinstance(arg, Range):
            for _, value in _range_values(arg, resolve):
                if isinstance(value, Err):
                    return value
                if isinstance(value, Num):
                    numbers.append(value.value)
            continue
        value = _eval(arg, resolve)
        if isinstance(value, Err):
            return value
        if isinstance(value, Str):
            if count_scalar_text:
                continue
            return _VALUE_ERR
        numbers.append(0.0 if value is None else value.value)
    return numbers


def _eval_call(ast: Call, resolve: Resolver) -> ComputedValue | None:
    name = ast.name
    if name not in KNOWN_FUNCTIONS:
        return Err(ErrorCode.NAME)

    if name == "IF":
        if len(ast.args) != 3:
            return _VALUE_ERR
        cond = _eval(ast.args[0], resolve)
        if cond is None:
            cond = Num(0.0)
        if not isinstance(cond, Num):
            return _VALUE_ERR
        return _eval(ast.args[1] if cond.value != 0.0 else ast.args[2], resolve)

    if name == "COUNTIF":
        if len(ast.args) != 2 or not isinstance(ast.args[0], Range):
            return _VALUE_ERR
        cells: list[ComputedValue] = []
        for _, value in _range_values(ast.args[0], resolve):
            if isinstance(value, Err):
                return value
            cells.append(value)
        criterion = _eval(ast.args[1], resolve)
        if isinstance(criterion, Err):
            return criterion
        if criterion is None:
            criterion = Num(0.0)
        hits = 0
        for value in cells:
            if isinstance(value, Num) and isinstance(criterion, Num):
                hits += value.value == criterion.value
            elif isinstance(value, Str) and isinstance(criterion, Str):
                hits += value.value == criterion.value
        return Num(float(hits))

    numbers = _collect_numbers(ast.args, resolve, count_scalar_text=(name == "COUNT"))
    if isinstance(numbers, Err):
        return numbers
    if name == "SUM":
        return _finite(math.fsum(numbers))
    if name == "COUNT":
        return Num(float(len(numbers)))
    if name == "AVERAGE":
        if not numbers:
            return _DIV0_ERR
        return _finite(math.fsum(numbers) / len(numbers))
    if name == "MIN":
        return Num(min(numbers)) if numbers else Num(0.0)
    if name == "MAX":
        return Num(max(numbers)) if numbers else Num(0.0)
    raise TypeError(f"unhandled function {name!r}")   # unreachable


# --- whole-sheet recalculation ---------------------------------------------


@dataclass
class DependencyGraph:
    """Reads-edges between formula cells (the cells recalculation must order).

    Edges are restricted to addresses that can affect evaluation order, i.e.
    formula cells hit by a direct reference or contained in a referenced
    range; static values impose no ordering so they are left out.
    """

    edges: dict[CellAddress, set[CellAddress]] = field(default_factory=dict)
    reverse: dict[CellAddress, set[CellAddress]] = field(default_factory=dict)

    @classmethod
    def build(cls, sheet: Sheet) -> "DependencyGraph":
        formula_cells = {addr for addr, c in sheet.cells.items() if isinstance(c, Formula)}
        graph = cls()
        for addr in formula_cells:
            graph.edges[addr] = set()
            graph.reverse.setdefault(addr, set())
        for addr in formula_cells:
            ast = parse_formula(sheet.cells[addr].source)   # type: ignore[union-attr]
            deps = graph.edges[addr]
            stack: list[FormulaAst] = [ast]
            while stack:
                node = stack.pop()
                if isinstance(node, Ref):
                    if node.addr in formula_cells:
                        deps.add(node.addr)
                elif isinstance(node, Range):
                    for other in formula_cells:
                        if node.start.col <= other.col <= node.end.col \
                                and node.start.row <= other.row <= node.end.row:
                            deps.add(other)
                elif isinstance(node, Unary):
                    stack.append(node.expr)
                elif isinstance(node, Binary):
                    stack.append(node.left)
                    stack.append(node.right)
                elif isinstance(node, Call):
                    stack.extend(node.args)
            for dep in deps:
                graph.reverse[dep].add(addr)
        return graph

    def cycle_tainted(self) -> set[CellAddress]:
        """Cells on a dependency cycle plus every transitive reader of one."""
        on_cycle = self._cycle_members()
        tainted = set(on_cycle)
        frontier = list(on_cycle)
        while frontier:
            node = frontier.pop()
            for reader in self.reverse.get(node, ()):
                if reader not in tainted:
                    tainted.add(reader)
                    frontier.append(reader)
        return tainted

    def _cycle_members(self) -> set[CellAddress]:
        # Iterative Tarjan SCC; members of any SCC bigger than one cell,
        # plus self-loops, are on a cycle.
        index: dict[CellAddress, int] = {}
        low: dict[CellAddress, int] = {}
        on_stack: set[CellAddress] = set()
        stack: list[CellAddress] = []
        members: set[CellAddress] = set()
        counter = 0

        for root in sorted(self.edges, key=lambda a: (a.row, a.col)):
            if root in index:
                continue
            work: list[tuple[CellAddress, list[CellAddress], int]] = [
                (root, sorted(self.edges[root], key=lambda a: (a.row, a.col)), 0)]
            index[root] = low[root] = counter
            counter += 1
            stack.append(root)
            on_stack.add(root)
            while work:
                node, deps, di = work[-1]
                if di < len(deps):
                    work[-1] = (node, deps, di + 1)
                    dep = deps[di]
                    if dep not in index:
                        index[dep] = low[dep] = counter
                        counter += 1
                        stack.append(dep)
                        on_stack.add(dep)
                        work.append(
                            (dep, sorted(self.edges[dep], key=lambda a: (a.row, a.col)), 0))
                    elif dep in on_stack:
                        low[node] = min(low[node], index[dep])
                else:
                    work.pop()
                    if work:
                        parent = work[-1][0]
                        low[parent] = min(low[parent], low[node])
                    if low[node] == index[node]:
                        scc = []
                        while True:
                            member = stack.pop()
                            on_stack.discard(member)
                            scc.append(member)
                            if member == node:
                                break
                        if len(scc) > 1 or node in self.edges[node]:
                            members.update(scc)
        return members


def recalculate_sheet(sheet: Sheet) -> Sheet:
    """Refresh every formula's cached value, in dependency order.

    Cells on a cycle, and cells that transitively read one, cache Err(CIRC).
    Every other formula is evaluated exactly once.
    """
    graph = DependencyGraph.build(sheet)
    tainted = graph.cycle_tainted()
    for addr in tainted:
        source = sheet.cells[addr].source   # type: ignore[union-attr]
        sheet.cells[addr] = Formula(source, Err(ErrorCode.CIRC))

    # Cached values are written back before any reader runs, so resolving
    # through the sheet itself always sees up-to-date dependencies.
    resolver = SheetResolver(sheet)

    remaining = {addr: {d for d in deps if d not in tainted}
                 for addr, deps in graph.edges.items() if addr not in tainted}
    ready = sorted((a for a, deps in remaining.items() if not deps),
                   key=lambda a: (a.row, a.col))
    done = 0
    while ready:
        addr = ready.pop()
        done += 1
        ast = parse_formula(sheet.cells[addr].source)   # type: ignore[union-attr]
        value = evaluate_formula(ast, resolver)
        sheet.cells[addr] = Formula(sheet.cells[addr].source, value)   # type: ignore[union-attr]
        for reader in sorted(graph.reverse.get(addr, ()), key=lambda a: (a.row, a.col)):
            if reader in tainted or reader not in remaining:
                continue
            deps = remaining[reader]
            deps.discard(addr)
            if not deps:
                ready.append(reader)
    if done != len(remaining):   # pragma: no cover - cycle detection owns this
        raise RuntimeError("recalculation order incomplete")
    return sheet
