/** Turn a gateway result document into a column/row grid.
 *
 * The body is anonymous (dataset > item > element); column labels travel
 * separately in the X-Columns header.
 */

export interface Grid {
  columns: string[];
  rows: string[][];
}

export function splitColumns(header: string): string[] {
  if (header === "") return [];
  return header.split(",");
}

export function parseDataset(xml: string, columnHeader: string): Grid {
  const doc = new DOMParser().parseFromString(xml, "application/xml");
  if (doc.getElementsByTagName("parsererror").length > 0) {
    throw new Error("response body is not well-formed XML");
  }
  const root = doc.documentElement;
  if (!root || root.tagName !== "dataset") {
    throw new Error(`unexpected document root <${root?.tagName ?? "?"}>`);
  }
  const rows: string[][] = [];
  for (const item of Array.from(root.children)) {
    if (item.tagName !== "item") {
      throw new Error(`unexpected element <${item.tagName}> under <dataset>`);
    }
    const cells: string[] = [];
    for (const el of Array.from(item.children)) {
      if (el.tagName !== "element") {
        throw new Error(`unexpected element <${el.tagName}> under <item>`);
      }
      cells.push(el.textContent ?? "");
    }
    rows.push(cells);
  }
  const columns = splitColumns(columnHeader);
  // header and body travel separately; refuse mismatched shapes
  for (const row of rows) {
    if (columns.length > 0 && row.length !== columns.length) {
      throw new Error(
        `row has ${row.length} cells but header names ${columns.length} columns`,
      );
    }
  }
  return { columns, rows };
}
