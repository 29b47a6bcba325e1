// Formula parser/evaluator mirroring the server's semantics, so formula
// cells render their computed values without a round trip. Same table:
// empty -> 0 in scalar spots, skipped in ranges; text in arithmetic ->
// #VALUE!; /0 -> #DIV/0!; unknown function -> #NAME!; -2^2 = -4; cycles and
// their readers -> #CIRC!.

import {
  Addr,
  Cell,
  SheetData,
  Value,
  addrKey,
  inBounds,
  keyAddr,
  parseAddress,
} from "./sheet.js";

export type Ast =
  | { t: "num"; value: number }
  | { t: "str"; value: string }
  | { t: "ref"; addr: Addr }
  | { t: "range"; start: Addr; end: Addr }
  | { t: "neg"; expr: Ast }
  | { t: "bin"; op: string; left: Ast; right: Ast }
  | { t: "call"; name: string; args: Ast[] };

export class FormulaError extends Error {
  constructor(message: string, public position: number) {
    super(message);
  }
}

const KNOWN = new Set(["SUM", "AVERAGE", "MIN", "MAX", "COUNT", "COUNTIF", "IF"]);

interface Token {
  kind: "number" | "string" | "ident" | "op" | "eof";
  text: string;
  pos: number;
}

const TOKEN_RE =
  /([ \t]+)|((?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)|("[^"\n]*")|([A-Za-z][A-Za-z0-9]*)|(<=|>=|<>|[-+*/^<>=(),:])/y;

function tokenize(source: string): Token[] {
  const out: Token[] = [];
  let pos = 0;
  while (pos < source.length) {
    TOKEN_RE.lastIndex = pos;
    const m = TOKEN_RE.exec(source);
    if (!m) throw new FormulaError(`unexpected character '${source[pos]}'`, pos);
    if (m[2] !== undefined) out.push({ kind: "number", text: m[2], pos });
    else if (m[3] !== undefined) out.push({ kind: "string", text: m[3], pos });
    else if (m[4] !== undefined) out.push({ kind: "ident", text: m[4], pos });
    else if (m[5] !== undefined) out.push({ kind: "op", text: m[5], pos });
    pos = TOKEN_RE.lastIndex;
  }
  out.push({ kind: "eof", text: "", pos: source.length });
  return out;
}

const ADDRESS_SHAPE = /^[A-Za-z]{1,3}[0-9]+$/;

class Parser {
  private i = 0;
  constructor(private tokens: Token[]) {}

  private peek(ahead = 0): Token {
    return this.tokens[Math.min(this.i + ahead, this.tokens.length - 1)];
  }

  private take(): Token {
    const tok = this.tokens[this.i];
    if (tok.kind !== "eof") this.i++;
    return tok;
  }

  private expectOp(text: string): void {
    const tok = this.peek();
    if (tok.kind !== "op" || tok.text !== text) {
      throw new FormulaError(`expected '${text}'`, tok.pos);
    }
    this.take();
  }

  parse(): Ast {
    const ast = this.comparison();
    const tok = this.peek();
    if (tok.kind !== "eof") throw new FormulaError(`unexpected '${tok.text}'`, tok.pos);
    return ast;
  }

  private comparison(): Ast {
    let node = this.additive();
    while (this.peek().kind === "op" && ["<", "<=", ">", ">=", "=", "<>"].includes(this.peek().text)) {
      const op = this.take().text;
      node = { t: "bin", op, left: node, right: this.additive() };
    }
    return node;
  }

  private additive(): Ast {
    let node = this.multiplicative();
    while (this.peek().kind === "op" && (this.peek().text === "+" || this.peek().text === "-")) {
      const op = this.take().text;
      node = { t: "bin", op, left: node, right: this.multiplicative() };
    }
    return node;
  }

  private multiplicative(): Ast {
    let node = this.unary();
    while (this.peek().kind === "op" && (this.peek().text === "*" || this.peek().text === "/")) {
      const op = this.take().text;
      node = { t: "bin", op, left: node, right: this.unary() };
    }
    return node;
  }

  private unary(): Ast {
    if (this.peek().kind === "op" && this.peek().text === "-") {
      this.take();
      return { t: "neg", expr: this.unary() };
    }
    return this.power();
  }

  private power(): Ast {
    const base = this.atom();
    if (this.peek().kind === "op" && this.peek().text === "^") {
      this.take();
      return { t: "bin", op: "^", left: base, right: this.unary() };
    }
    return base;
  }

  private atom(): Ast {
    const tok = this.peek();
    if (tok.kind === "number") {
      this.take();
      const value = Number(tok.text);
      if (!Number.isFinite(value)) throw new FormulaError("number out of range", tok.pos);
      return { t: "num", value };
    }
    if (tok.kind === "string") {
      this.take();
      return { t: "str", value: tok.text.slice(1, -1) };
    }
    if (tok.kind === "ident") return this.refOrCall(false);
    if (tok.kind === "op" && tok.text === "(") {
      this.take();
      const node = this.comparison();
      this.expectOp(")");
      return node;
    }
    throw new FormulaError(`expected a value, got '${tok.text}'`, tok.pos);
  }

  private refOrCall(allowRange: boolean): Ast {
    const tok = this.take();
    const follow = this.peek();
    if (follow.kind === "op" && follow.text === "(") {
      this.take();
      const args: Ast[] = [];
      if (!(this.peek().kind === "op" && this.peek().text === ")")) {
        args.push(this.callArg());
        while (this.peek().kind === "op" && this.peek().text === ",") {
          this.take();
          args.push(this.callArg());
        }
      }
      this.expectOp(")");
      return { t: "call", name: tok.text.toUpperCase(), args };
    }
    if (!ADDRESS_SHAPE.test(tok.text)) throw new FormulaError(`unknown name '${tok.text}'`, tok.pos);
    const addr = parseAddress(tok.text);
    if (!addr) throw new FormulaError(`bad address '${tok.text}'`, tok.pos);
    if (follow.kind === "op" && follow.text === ":") {
      if (!allowRange) throw new FormulaError("range only allowed as a function argument", follow.pos);
      this.take();
      const endTok = this.take();
      const other = endTok.kind === "ident" && ADDRESS_SHAPE.test(endTok.text)
        ? parseAddress(endTok.text) : null;
      if (!other) throw new FormulaError("expected a cell address after ':'", endTok.pos);
      return {
        t: "range",
        start: { col: Math.min(addr.col, other.col), row: Math.min(addr.row, other.row) },
        end: { col: Math.max(addr.col, other.col), row: Math.max(addr.row, other.row) },
      };
    }
    return { t: "ref", addr };
  }

  private callArg(): Ast {
    const tok = this.peek();
    if (tok.kind === "ident" && ADDRESS_SHAPE.test(tok.text)
        && this.peek(1).kind === "op" && this.peek(1).text === ":") {
      return this.refOrCall(true);
    }
    return this.comparison();
  }
}

export function parseFormula(source: string): Ast {
  if (source.includes("\n") || source.includes("\r")) {
    throw new FormulaError("formula must be a single line", 0);
  }
  return new Parser(tokenize(source)).parse();
}

// --- evaluation ---------------------------------------------------------------

type Resolver = (addr: Addr) => Value | null;

const VALUE_ERR: Value = { kind: "err", code: "VALUE" };
const DIV0_ERR: Value = { kind: "err", code: "DIV0" };

function finite(x: number): Value {
  return Number.isFinite(x) ? { kind: "num", num: x } : VALUE_ERR;
}

type NumOrErr = Extract<Value, { kind: "num" } | { kind: "err" }>;

function asScalarNum(v: Value | null): NumOrErr {
  if (v === null) return { kind: "num", num: 0 };
  if (v.kind === "str") return VALUE_ERR as NumOrErr;
  return v;
}

function* rangeValues(start: Addr, end: Addr, resolve: Resolver): Generator<Value> {
  for (let row = start.row; row <= end.row; row++) {
    for (let col = start.col; col <= end.col; col++) {
      const v = resolve({ col, row });
      if (v !== null) yield v;
    }
  }
}

export function evaluateFormula(ast: Ast, resolve: Resolver): Value {
  const result = ev(ast, resolve);
  return result === null ? { kind: "num", num: 0 } : result;
}

function ev(ast: Ast, resolve: Resolver): Value | null {
  switch (ast.t) {
    case "num":
      return { kind: "num", num: ast.value };
    case "str":
      return { kind: "str", str: ast.value };
    case "ref":
      if (!inBounds(ast.addr)) return { kind: "err", code: "REF" };
      return resolve(ast.addr);
    case "range":
      return VALUE_ERR;
    case "neg": {
      const v = asScalarNum(ev(ast.expr, resolve));
      return v.kind === "err" ? v : { kind: "num", num: -v.num };
    }
    case "bin":
      return evBinary(ast, resolve);
    case "call":
      return evCall(ast, resolve);
  }
}

function evBinary(ast: Extract<Ast, { t: "bin" }>, resolve: Resolver): Value | null {
  const lv = ev(ast.left, resolve);
  if (lv !== null && lv.kind === "err") return lv;
  const rv = ev(ast.right, resolve);
  if (rv !== null && rv.kind === "err") return rv;

  if (ast.op === "=" || ast.op === "<>") {
    const a = lv === null ? ({ kind: "num", num: 0 } as Value) : lv;
    const b = rv === null ? ({ kind: "num", num: 0 } as Value) : rv;
    let equal = false;
    if (a.kind === "num" && b.kind === "num") equal = a.num === b.num;
    else if (a.kind === "str" && b.kind === "str") equal = a.str === b.str;
    return { kind: "num", num: equal === (ast.op === "=") ? 1 : 0 };
  }

  const a = asScalarNum(lv);
  if (a.kind === "err") return a;
  const b = asScalarNum(rv);
  if (b.kind === "err") return b;
  const x = a.num;
  const y = b.num;

  switch (ast.op) {
    case "+": return finite(x + y);
    case "-": return finite(x - y);
    case "*": return finite(x * y);
    case "/": return y === 0 ? DIV0_ERR : finite(x / y);
    case "^":
      if (x === 0 && y < 0) return DIV0_ERR;
      return finite(x ** y);
    case "<": return { kind: "num", num: x < y ? 1 : 0 };
    case "<=": return { kind: "num", num: x <= y ? 1 : 0 };
    case ">": return { kind: "num", num: x > y ? 1 : 0 };
    case ">=": return { kind: "num", num: x >= y ? 1 : 0 };
  }
  throw new Error(`unknown operator ${ast.op}`);
}

function collectNumbers(args: Ast[], resolve: Resolver, countScalarText: boolean): number[] | Value {
  const numbers: number[] = [];
  for (const arg of args) {
    if (arg.t === "range") {
      for (const v of rangeValues(arg.start, arg.end, resolve)) {
        if (v.kind === "err") return v;
        if (v.kind === "num") numbers.push(v.num);
      }
      continue;
    }
    const v = ev(arg, resolve);
    if (v !== null && v.kind === "err") return v;
    if (v !== null && v.kind === "str") {
      if (countScalarText) continue;
      return VALUE_ERR;
    }
    numbers.push(v === null ? 0 : (v as { num: number }).num);
  }
  return numbers;
}

function evCall(ast: Extract<Ast, { t: "call" }>, resolve: Resolver): Value | null {
  const name = ast.name;
  if (!KNOWN.has(name)) return { kind: "err", code: "NAME" };

  if (name === "IF") {
    if (ast.args.length !== 3) return VALUE_ERR;
    let cond = ev(ast.args[0], resolve);
    if (cond === null) cond = { kind: "num", num: 0 };
    if (cond.kind !== "num") return VALUE_ERR;
    return ev(ast.args[cond.num !== 0 ? 1 : 2], resolve);
  }

  if (name === "COUNTIF") {
    if (ast.args.length !== 2 || ast.args[0].t !== "range") return VALUE_ERR;
    const cells: Value[] = [];
    for (const v of rangeValues(ast.args[0].start, ast.args[0].end, resolve)) {
      if (v.kind === "err") return v;
      cells.push(v);
    }
    let crit = ev(ast.args[1], resolve);
    if (crit !== null && crit.kind === "err") return crit;
    if (crit === null) crit = { kind: "num", num: 0 };
    let hits = 0;
    for (const v of cells) {
      if (v.kind === "num" && crit.kind === "num" && v.num === crit.num) hits++;
      else if (v.kind === "str" && crit.kind === "str" && v.str === crit.str) hits++;
    }
    return { kind: "num", num: hits };
  }

  const numbers = collectNumbers(ast.args, resolve, name === "COUNT");
  if (!Array.isArray(numbers)) return numbers;
  switch (name) {
    case "SUM":
      return finite(numbers.reduce((s, x) => s + x, 0));
    case "COUNT":
      return { kind: "num", num: numbers.length };
    case "AVERAGE":
      if (!numbers.length) return DIV0_ERR;
      return finite(numbers.reduce((s, x) => s + x, 0) / numbers.length);
    case "MIN":
      return { kind: "num", num: numbers.length ? Math.min(...numbers) : 0 };
    case "MAX":
      return { kind: "num", num: numbers.length ? Math.max(...numbers) : 0 };
  }
  throw new Error(`unhandled function ${name}`);
}

// --- recalculation -----------------------------------------------------------

function staticDeps(ast: Ast, formulaKeys: Set<string>): Set<string> {
  const deps = new Set<string>();
  const todo: Ast[] = [ast];
  while (todo.length) {
    const node = todo.pop()!;
    switch (node.t) {
      case "ref": {
        const key = addrKey(node.addr);
        if (formulaKeys.has(key)) deps.add(key);
        break;
      }
      case "range":
        for (const key of formulaKeys) {
          const a = keyAddr(key);
          if (node.start.col <= a.col && a.col <= node.end.col
              && node.start.row <= a.row && a.row <= node.end.row) {
            deps.add(key);
          }
        }
        break;
      case "neg":
        todo.push(node.expr);
        break;
      case "bin":
        todo.push(node.left, node.right);
        break;
      case "call":
        todo.push(...node.args);
        break;
    }
  }
  return deps;
}

// Kahn peeling: whatever cannot be topologically resolved is on a cycle or
// reads one; those cells cache #CIRC! and everything else evaluates once.
export function recalculate(sheet: SheetData): void {
  const formulas = new Map<string, Ast>();
  for (const [key, cell] of sheet.cells) {
    if (cell.kind === "formula") {
      try {
        formulas.set(key, parseFormula(cell.source));
      } catch {
        sheet.cells.set(key, { ...cell, cached: { kind: "err", code: "NAME" } });
      }
    }
  }
  const keys = new Set(formulas.keys());
  const deps = new Map<string, Set<string>>();
  const readers = new Map<string, Set<string>>();
  for (const [key, ast] of formulas) {
    deps.set(key, staticDeps(ast, keys));
    if (!readers.has(key)) readers.set(key, new Set());
  }
  for (const [key, d] of deps) {
    for (const dep of d) {
      readers.get(dep)!.add(key);
    }
  }

  const remaining = new Map<string, Set<string>>();
  for (const [key, d] of deps) remaining.set(key, new Set(d));
  const ready: string[] = [];
  for (const [key, d] of remaining) if (!d.size) ready.push(key);

  const resolve = (addr: Addr): Value | null => {
    const cell = sheet.cells.get(addrKey(addr));
    if (!cell) return null;
    if (cell.kind === "number") return { kind: "num", num: cell.value };
    if (cell.kind === "text") return { kind: "str", str: cell.value };
    return cell.cached;
  };

  const done = new Set<string>();
  while (ready.length) {
    const key = ready.pop()!;
    done.add(key);
    const cell = sheet.cells.get(key)! as Extract<Cell, { kind: "formula" }>;
    const value = evaluateFormula(formulas.get(key)!, resolve);
    sheet.cells.set(key, { ...cell, cached: value });
    for (const reader of readers.get(key) ?? []) {
      const rem = remaining.get(reader);
      if (rem) {
        rem.delete(key);
        if (!rem.size && !done.has(reader)) ready.push(reader);
      }
    }
  }
  for (const key of keys) {
    if (!done.has(key)) {
      const cell = sheet.cells.get(key)! as Extract<Cell, { kind: "formula" }>;
      sheet.cells.set(key, { ...cell, cached: { kind: "err", code: "CIRC" } });
    }
  }
}
