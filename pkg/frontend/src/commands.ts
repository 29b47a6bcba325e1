// Command strings: the only mutation the UI ever sends, and what the feed
// replays back. The "=" prefix is a UI convention only; the wire carries
// plain formula sources.

import { FormulaError, parseFormula } from "./formula.js";
import {
  Addr,
  SheetData,
  addrKey,
  formatAddress,
  formatNumber,
  parseAddress,
  parseNumberStrict,
  validText,
} from "./sheet.js";

export type Command =
  | { t: "number"; addr: Addr; value: number }
  | { t: "text"; addr: Addr; text: string }
  | { t: "formula"; addr: Addr; source: string }
  | { t: "empty"; addr: Addr };

export class CommandError extends Error {}

export function parseCommand(line: string): Command {
  const parts = line.split(" ");
  if (parts[0] !== "set" || parts.length < 3) throw new CommandError(`unrecognized: ${line}`);
  const addr = parseAddress(parts[1]);
  if (!addr) throw new CommandError(`bad address: ${parts[1]}`);
  const kind = parts[2];
  if (kind === "empty") {
    if (parts.length !== 3) throw new CommandError("trailing data after 'empty'");
    return { t: "empty", addr };
  }
  if (kind === "value") {
    const num = parts.length === 5 && parts[3] === "n" ? parseNumberStrict(parts[4]) : null;
    if (num === null) throw new CommandError(`bad number payload: ${line}`);
    return { t: "number", addr, value: num };
  }
  if (kind === "text") {
    if (parts.length < 4 || parts[3] !== "t") throw new CommandError(`bad text payload: ${line}`);
    return { t: "text", addr, text: parts.slice(4).join(" ") };
  }
  if (kind === "formula") {
    const source = parts.slice(3).join(" ");
    if (!source) throw new CommandError("empty formula");
    return { t: "formula", addr, source };
  }
  throw new CommandError(`unknown verb: ${kind}`);
}

export function serializeCommand(cmd: Command): string {
  const label = formatAddress(cmd.addr);
  switch (cmd.t) {
    case "number":
      return `set ${label} value n ${formatNumber(cmd.value)}`;
    case "text":
      return `set ${label} text t ${cmd.text}`;
    case "formula":
      return `set ${label} formula ${cmd.source}`;
    case "empty":
      return `set ${label} empty`;
  }
}

// What typing `raw` into a cell means: "=" prefix is a formula, strictly
// numeric text is a number, empty clears, anything else is text.
export function editToCommand(addr: Addr, raw: string): Command {
  if (raw === "") return { t: "empty", addr };
  if (raw.startsWith("=")) {
    const source = raw.slice(1);
    if (!source) throw new CommandError("empty formula");
    try {
      parseFormula(source);
    } catch (err) {
      if (err instanceof FormulaError) throw new CommandError(`bad formula: ${err.message}`);
      throw err;
    }
    return { t: "formula", addr, source };
  }
  const num = parseNumberStrict(raw);
  if (num !== null) return { t: "number", addr, value: num };
  if (!validText(raw)) throw new CommandError("text must be a single line");
  return { t: "text", addr, text: raw };
}

export function applyCommand(sheet: SheetData, cmd: Command): void {
  const key = addrKey(cmd.addr);
  switch (cmd.t) {
    case "empty":
      sheet.cells.delete(key);
      return;
    case "number":
      sheet.cells.set(key, { kind: "number", value: cmd.value });
      return;
    case "text":
      sheet.cells.set(key, { kind: "text", value: cmd.text });
      return;
    case "formula":
      sheet.cells.set(key, { kind: "formula", source: cmd.source, cached: { kind: "num", num: 0 } });
      return;
  }
}
