import { describe, expect, it } from "vitest";
import { offerDownload, toCsv } from "../src/csv.js";

describe("toCsv", () => {
  it("emits header then rows with CRLF", () => {
    const text = toCsv({ columns: ["Gender", "n"], rows: [["F", "184"], ["M", "192"]] });
    expect(text).toBe("Gender,n\r\nF,184\r\nM,192\r\n");
  });

  it("quotes fields containing commas, quotes, and newlines", () => {
    const text = toCsv({ columns: ["a"], rows: [['say "hi", ok\nnew']] });
    expect(text).toBe('a\r\n"say ""hi"", ok\nnew"\r\n');
  });

  it("produces nothing for a fully empty grid", () => {
    expect(toCsv({ columns: [], rows: [] })).toBe("");
  });
});

describe("offerDownload", () => {
  it("clicks a temporary anchor carrying the file", () => {
    let clicked: HTMLAnchorElement | null = null;
    const orig = HTMLAnchorElement.prototype.click;
    HTMLAnchorElement.prototype.click = function (this: HTMLAnchorElement) {
      clicked = this;
    };
    try {
      offerDownload("out.csv", "a,b\r\n");
    } finally {
      HTMLAnchorElement.prototype.click = orig;
    }
    expect(clicked).not.toBeNull();
    expect(clicked!.download).toBe("out.csv");
    expect(clicked!.href).toMatch(/^(blob:|data:text\/csv)/);
    // removed from the document again
    expect(document.querySelector("a")).toBeNull();
  });
});
