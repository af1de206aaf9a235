import { describe, expect, it } from "vitest";
import { parseDataset, splitColumns } from "../src/xmlgrid.js";

const GENDER_XML = `<?xml version="1.0" encoding="UTF-8"?>
<dataset>
  <item>
    <element>F</element>
    <element>184</element>
  </item>
  <item>
    <element>M</element>
    <element>192</element>
  </item>
</dataset>
`;

describe("parseDataset", () => {
  it("reads rows in document order", () => {
    const grid = parseDataset(GENDER_XML, "Gender,COUNT(*)");
    expect(grid.columns).toEqual(["Gender", "COUNT(*)"]);
    expect(grid.rows).toEqual([
      ["F", "184"],
      ["M", "192"],
    ]);
  });

  it("handles the empty dataset", () => {
    const grid = parseDataset(
      '<?xml version="1.0" encoding="UTF-8"?>\n<dataset>\n</dataset>\n',
      "Country,n",
    );
    expect(grid.columns).toEqual(["Country", "n"]);
    expect(grid.rows).toEqual([]);
  });

  it("decodes escaped content", () => {
    const xml = `<?xml version="1.0" encoding="UTF-8"?>
<dataset>
  <item>
    <element>&lt;b&gt;&amp;co</element>
    <element>"quoted"</element>
  </item>
</dataset>
`;
    const grid = parseDataset(xml, "a,b");
    expect(grid.rows).toEqual([["<b>&co", '"quoted"']]);
  });

  it("rejects malformed XML", () => {
    expect(() => parseDataset("<dataset><item></dataset>", "a")).toThrow(/well-formed/);
  });

  it("rejects foreign document shapes", () => {
    expect(() => parseDataset("<nope/>", "")).toThrow(/unexpected document root/);
    expect(() => parseDataset("<dataset><row/></dataset>", "")).toThrow(/under <dataset>/);
  });

  it("rejects a row/header width mismatch", () => {
    const xml = "<dataset><item><element>1</element></item></dataset>";
    expect(() => parseDataset(xml, "a,b")).toThrow(/1 cells but header names 2/);
  });
});

describe("splitColumns", () => {
  it("splits on commas and keeps empty header empty", () => {
    expect(splitColumns("Country,TotalNum")).toEqual(["Country", "TotalNum"]);
    expect(splitColumns("")).toEqual([]);
    expect(splitColumns("COUNT(*)")).toEqual(["COUNT(*)"]);
  });
});
