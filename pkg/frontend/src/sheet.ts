// Sheet data model mirrored from the server: A1 addressing, cell contents,
// computed values, and the line-oriented save-string format.

export const MAX_COL = 702; // "ZZ"
export const MAX_ROW = 100000;

export type ErrorCode = "DIV0" | "REF" | "CIRC" | "NAME" | "VALUE";

export type Value =
  | { kind: "num"; num: number }
  | { kind: "str"; str: string }
  | { kind: "err"; code: ErrorCode };

export type Cell =
  | { kind: "number"; value: number }
  | { kind: "text"; value: string }
  | { kind: "formula"; source: string; cached: Value };

export interface Addr {
  col: number;
  row: number;
}

export interface SheetData {
  name: string;
  cells: Map<string, Cell>; // keyed by "col,row"
}

export function addrKey(a: Addr): string {
  return `${a.col},${a.row}`;
}

export function keyAddr(key: string): Addr {
  const [c, r] = key.split(",");
  return { col: Number(c), row: Number(r) };
}

const ADDRESS_RE = /^([A-Za-z]{1,3})([0-9]{1,6})$/;

export function parseAddress(text: string): Addr | null {
  const m = ADDRESS_RE.exec(text);
  if (!m) return null;
  let col = 0;
  for (const ch of m[1].toUpperCase()) col = col * 26 + (ch.charCodeAt(0) - 64);
  const row = Number(m[2]);
  if (col < 1 || col > MAX_COL || row < 1 || row > MAX_ROW) return null;
  return { col, row };
}

export function colLabel(col: number): string {
  let label = "";
  while (col > 0) {
    const rem = (col - 1) % 26;
    label = String.fromCharCode(65 + rem) + label;
    col = (col - 1 - rem) / 26;
  }
  return label;
}

export function formatAddress(a: Addr): string {
  return `${colLabel(a.col)}${a.row}`;
}

export function inBounds(a: Addr): boolean {
  return a.col >= 1 && a.col <= MAX_COL && a.row >= 1 && a.row <= MAX_ROW;
}

// --- numbers -------------------------------------------------------------

const NUMBER_RE = /^[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?$/;

export function parseNumberStrict(text: string): number | null {
  if (!NUMBER_RE.test(text)) return null;
  const value = Number(text);
  return Number.isFinite(value) ? value : null;
}

// Canonical form matching the server's serializer byte for byte: integral
// values below 1e16 print as integers, everything else as Python repr()
// (positional for decimal exponents in [-4, 16), scientific otherwise with
// a sign and two-digit-padded exponent).
export function formatNumber(v: number): string {
  if (Number.isInteger(v) && Math.abs(v) < 1e16) {
    return v === 0 ? "0" : String(v);
  }
  const s = String(v); // shortest round-trip digits
  const m = /^(-?)([0-9]+)(?:\.([0-9]+))?(?:e([+-][0-9]+))?$/.exec(s);
  if (!m) return s;
  const sign = m[1];
  const intPart = m[2];
  const fracPart = m[3] ?? "";
  const expPart = m[4] ? Number(m[4]) : 0;
  let digits: string;
  let e: number;
  if (intPart !== "0") {
    digits = intPart + fracPart;
    e = intPart.length - 1 + expPart;
  } else {
    const stripped = fracPart.replace(/^0+/, "");
    digits = stripped;
    e = -(fracPart.length - stripped.length) - 1 + expPart;
  }
  digits = digits.replace(/0+$/, "") || "0";
  if (e >= 16 || e < -4) {
    const mant = digits.length > 1 ? `${digits[0]}.${digits.slice(1)}` : digits;
    const esign = e < 0 ? "-" : "+";
    const eabs = String(Math.abs(e)).padStart(2, "0");
    return `${sign}${mant}e${esign}${eabs}`;
  }
  if (e >= 0) {
    const ip = digits.slice(0, e + 1).padEnd(e + 1, "0");
    return `${sign}${ip}.${digits.slice(e + 1) || "0"}`;
  }
  return `${sign}0.${"0".repeat(-e - 1)}${digits}`;
}

// --- values ----------------------------------------------------------------

const ERROR_DISPLAY: Record<ErrorCode, string> = {
  DIV0: "#DIV/0!",
  REF: "#REF!",
  CIRC: "#CIRC!",
  NAME: "#NAME!",
  VALUE: "#VALUE!",
};

export function errorDisplay(code: ErrorCode): string {
  return ERROR_DISPLAY[code];
}

export function valueDisplay(v: Value): string {
  switch (v.kind) {
    case "num":
      return formatNumber(v.num);
    case "str":
      return v.str;
    case "err":
      return errorDisplay(v.code);
  }
}

export function cellDisplay(cell: Cell): string {
  switch (cell.kind) {
    case "number":
      return formatNumber(cell.value);
    case "text":
      return cell.value;
    case "formula":
      return valueDisplay(cell.cached);
  }
}

const CONTROL_RE = /[\x00-\x1f\x7f]/;

export function validText(text: string): boolean {
  return !CONTROL_RE.test(text);
}

// --- save strings --------------------------------------------------------------

export class SaveStringError extends Error {}

export function parseSaveString(text: string): SheetData {
  const lines = text.split("\n");
  if (lines.length && lines[lines.length - 1] === "") lines.pop();
  const head = (lines[0] ?? "").split(" ");
  if (head.length !== 3 || head[0] !== "socialcalc-save" || head[1] !== "1") {
    throw new SaveStringError(`bad save header: ${lines[0] ?? ""}`);
  }
  const sheet: SheetData = { name: head[2], cells: new Map() };
  for (let i = 1; i < lines.length; i++) {
    const line = lines[i];
    if (line === "") continue;
    const parts = line.split(" ");
    if (parts[0] !== "cell" || parts.length < 3) {
      throw new SaveStringError(`line ${i + 1}: unrecognized: ${line}`);
    }
    const addr = parseAddress(parts[1]);
    if (!addr) throw new SaveStringError(`line ${i + 1}: bad address ${parts[1]}`);
    const kind = parts[2];
    let cell: Cell;
    if (kind === "value") {
      const num = parts[3] === "n" && parts.length === 5 ? parseNumberStrict(parts[4]) : null;
      if (num === null) throw new SaveStringError(`line ${i + 1}: bad number`);
      cell = { kind: "number", value: num };
    } else if (kind === "text") {
      if (parts.length < 4 || parts[3] !== "t") {
        throw new SaveStringError(`line ${i + 1}: bad text payload`);
      }
      cell = { kind: "text", value: parts.slice(4).join(" ") };
    } else if (kind === "formula") {
      const source = parts.slice(3).join(" ");
      if (!source) throw new SaveStringError(`line ${i + 1}: empty formula`);
      cell = { kind: "formula", source, cached: { kind: "num", num: 0 } };
    } else {
      throw new SaveStringError(`line ${i + 1}: unknown kind ${kind}`);
    }
    sheet.cells.set(addrKey(addr), cell);
  }
  return sheet;
}

export function cloneSheet(sheet: SheetData): SheetData {
  return { name: sheet.name, cells: new Map(sheet.cells) };
}

export function usedExtent(sheet: SheetData): { cols: number; rows: number } {
  let cols = 0;
  let rows = 0;
  for (const key of sheet.cells.keys()) {
    const a = keyAddr(key);
    if (a.col > cols) cols = a.col;
    if (a.row > rows) rows = a.row;
  }
  return { cols, rows };
}
