import { describe, expect, it } from "vitest";

import {
  CommandError,
  applyCommand,
  editToCommand,
  parseCommand,
  serializeCommand,
} from "../src/commands.js";
import { SheetData } from "../src/sheet.js";

const A1 = { col: 1, row: 1 };

describe("editToCommand (what typing into a cell sends)", () => {
  it("= prefix becomes a formula command without the =", () => {
    expect(serializeCommand(editToCommand(A1, "=SUM(B1:B3)")))
      .toBe("set A1 formula SUM(B1:B3)");
  });

  it("numeric text becomes a canonical number", () => {
    expect(serializeCommand(editToCommand(A1, "42"))).toBe("set A1 value n 42");
    expect(serializeCommand(editToCommand(A1, "42.0"))).toBe("set A1 value n 42");
    expect(serializeCommand(editToCommand(A1, "-3.5e2"))).toBe("set A1 value n -350");
  });

  it("empty clears the cell", () => {
    expect(serializeCommand(editToCommand(A1, ""))).toBe("set A1 empty");
  });

  it("anything else is text", () => {
    expect(serializeCommand(editToCommand(A1, "hello world")))
      .toBe("set A1 text t hello world");
    expect(serializeCommand(editToCommand(A1, "12 apples")))
      .toBe("set A1 text t 12 apples");
  });

  it("malformed formulas throw before anything is sent", () => {
    expect(() => editToCommand(A1, "=1+")).toThrow(CommandError);
    expect(() => editToCommand(A1, "=")).toThrow(CommandError);
  });
});

describe("command round trips", () => {
  it("parses what it serializes", () => {
    for (const line of [
      "set A1 value n 5",
      "set B2 text t hello world",
      "set C3 formula SUM(A1:B2)",
      "set ZZ9 empty",
      "set A1 text t ",
    ]) {
      expect(serializeCommand(parseCommand(line))).toBe(line);
    }
  });

  it("rejects garbage", () => {
    for (const line of ["", "frobnicate A1", "set ?? value n 5", "set A1 value n abc"]) {
      expect(() => parseCommand(line)).toThrow(CommandError);
    }
  });
});

describe("applyCommand", () => {
  it("is last-writer-wins at the cell", () => {
    const sheet: SheetData = { name: "s", cells: new Map() };
    applyCommand(sheet, parseCommand("set A1 value n 1"));
    applyCommand(sheet, parseCommand("set A1 value n 2"));
    expect(sheet.cells.get("1,1")).toEqual({ kind: "number", value: 2 });
    applyCommand(sheet, parseCommand("set A1 empty"));
    expect(sheet.cells.has("1,1")).toBe(false);
  });
});
