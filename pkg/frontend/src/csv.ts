import type { Grid } from "./xmlgrid.js";

function field(value: string): string {
  if (/[",\r\n]/.test(value)) {
    return '"' + value.replace(/"/g, '""') + '"';
  }
  return value;
}

/** RFC 4180 text (CRLF line ends, header row first). */
export function toCsv(grid: Grid): string {
  const lines: string[] = [];
  if (grid.columns.length > 0) {
    lines.push(grid.columns.map(field).join(","));
  }
  for (const row of grid.rows) {
    lines.push(row.map(field).join(","));
  }
  return lines.join("\r\n") + (lines.length > 0 ? "\r\n" : "");
}

/** Hand the text to the browser as a file download. */
export function offerDownload(filename: string, text: string, doc: Document = document): void {
  const a = doc.createElement("a");
  if (typeof URL.createObjectURL === "function") {
    a.href = URL.createObjectURL(new Blob([text], { type: "text/csv;charset=utf-8" }));
  } else {
    a.href = "data:text/csv;charset=utf-8," + encodeURIComponent(text);
  }
  a.download = filename;
  doc.body.appendChild(a);
  a.click();
  a.remove();
  if (a.href.startsWith("blob:")) {
    URL.revokeObjectURL(a.href);
  }
}
