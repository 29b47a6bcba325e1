// Grid rendering: a pure function of (display sheet, selection). Numbers
// right-align, text left-aligns, formula cells show their computed value,
// errors show their code.

import {
  Addr,
  SheetData,
  addrKey,
  cellDisplay,
  colLabel,
  usedExtent,
} from "./sheet.js";

const MIN_COLS = 8;
const MIN_ROWS = 12;
const MAX_RENDER_COLS = 40;
const MAX_RENDER_ROWS = 100;

export function gridExtent(sheet: SheetData, selection: Addr): { cols: number; rows: number } {
  const used = usedExtent(sheet);
  return {
    cols: Math.min(MAX_RENDER_COLS, Math.max(MIN_COLS, used.cols + 1, selection.col)),
    rows: Math.min(MAX_RENDER_ROWS, Math.max(MIN_ROWS, used.rows + 1, selection.row)),
  };
}

export function renderGrid(table: HTMLTableElement, sheet: SheetData, selection: Addr): void {
  const { cols, rows } = gridExtent(sheet, selection);
  table.textContent = "";

  const doc = table.ownerDocument;
  const thead = doc.createElement("thead");
  const headRow = doc.createElement("tr");
  headRow.appendChild(doc.createElement("th")); // corner
  for (let col = 1; col <= cols; col++) {
    const th = doc.createElement("th");
    th.textContent = colLabel(col);
    headRow.appendChild(th);
  }
  thead.appendChild(headRow);
  table.appendChild(thead);

  const tbody = doc.createElement("tbody");
  for (let row = 1; row <= rows; row++) {
    const tr = doc.createElement("tr");
    const th = doc.createElement("th");
    th.textContent = String(row);
    tr.appendChild(th);
    for (let col = 1; col <= cols; col++) {
      const td = doc.createElement("td");
      const cell = sheet.cells.get(addrKey({ col, row }));
      td.dataset.addr = `${colLabel(col)}${row}`;
      if (cell) {
        td.textContent = cellDisplay(cell);
        if (cell.kind === "number") td.className = "num";
        else if (cell.kind === "text") td.className = "text";
        else {
          const v = cell.cached;
          td.className = v.kind === "num" ? "num" : v.kind === "err" ? "err" : "text";
        }
      }
      if (col === selection.col && row === selection.row) {
        td.classList.add("selected");
      }
      tr.appendChild(td);
    }
    tbody.appendChild(tr);
  }
  table.appendChild(tbody);
}

/** What the formula bar shows for the selected cell: source for formulas
 * ("=" prefixed), the literal content otherwise. */
export function formulaBarText(sheet: SheetData, selection: Addr): string {
  const cell = sheet.cells.get(addrKey(selection));
  if (!cell) return "";
  if (cell.kind === "formula") return `=${cell.source}`;
  return cellDisplay(cell);
}
