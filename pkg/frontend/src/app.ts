/** Single-page query console.
 *
 * One view tree, rebuilt section by section. At most one query is in
 * flight at a time; starting a run disables every run control until the
 * response lands or the user cancels.
 */

import {
  ColumnCatalog,
  GatewayClient,
  GatewayError,
  LoginResult,
  ParamSpec,
  QueryDescriptor,
  QueryListing,
  Violation,
} from "./api.js";
import { buildQuery, ComposerState, Filter } from "./compose.js";
import { offerDownload, toCsv } from "./csv.js";
import { Grid, parseDataset } from "./xmlgrid.js";

export interface ConsoleOptions {
  baseUrl?: string;
  fetchFn?: typeof fetch;
}

type Child = Node | string;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    node.setAttribute(k, v);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

function inputTypeFor(dtype: string): string {
  switch (dtype) {
    case "date":
      return "date";
    case "int":
      return "number";
    default:
      return "text";
  }
}

/** Wrap every occurrence of the single-quoted names from violation
 * details in <mark>, so the offending fragment stands out. */
export function highlightFragments(text: string, violations: Violation[]): DocumentFragment {
  const targets = new Set<string>();
  for (const v of violations) {
    for (const m of v.detail.matchAll(/'([^']+)'/g)) {
      targets.add(m[1]);
    }
  }
  const frag = document.createDocumentFragment();
  if (targets.size === 0) {
    frag.append(text);
    return frag;
  }
  const pattern = new RegExp(
    [...targets].map((t) => t.replace(/[.*+?^${}()|[\]\\]/g, "\\$&")).join("|"),
    "g",
  );
  let last = 0;
  for (const m of text.matchAll(pattern)) {
    frag.append(text.slice(last, m.index));
    frag.append(el("mark", {}, m[0]));
    last = m.index + m[0].length;
  }
  frag.append(text.slice(last));
  return frag;
}

export function mountConsole(root: HTMLElement, opts: ConsoleOptions = {}): void {
  const client = new GatewayClient(opts.baseUrl ?? "", opts.fetchFn);

  // session state lives here and nowhere else; a refresh starts over
  let session: LoginResult | null = null;
  let listing: QueryListing | null = null;
  let catalog: ColumnCatalog | null = null;
  let inflight: AbortController | null = null;
  let lastGrid: Grid | null = null;

  const header = el("header", { class: "console-header" });
  const main = el("main", { class: "console-main" });
  const resultBox = el("section", { class: "result-box" });
  const errorBox = el("section", { class: "error-box", hidden: "" });
  root.replaceChildren(header, main, errorBox, resultBox);

  function setError(content: Node | null): void {
    if (content === null) {
      errorBox.hidden = true;
      errorBox.replaceChildren();
    } else {
      errorBox.hidden = false;
      errorBox.replaceChildren(content);
    }
  }

  function describeError(err: unknown, queryText: string | null): Node {
    const box = el("div", {});
    if (err instanceof GatewayError) {
      box.append(
        el("p", { class: "error-line" },
          el("code", { class: "error-code" }, err.code),
          ` ${err.message}`),
      );
      if (err.violations.length > 0) {
        const list = el("ul", { class: "violations" });
        for (const v of err.violations) {
          list.append(
            el("li", { class: "violation" },
              el("code", { class: "rule" }, v.rule),
              ` at ${v.location}: ${v.detail}`),
          );
        }
        box.append(list);
        if (queryText !== null) {
          const pre = el("pre", { class: "query-echo" });
          pre.append(highlightFragments(queryText, err.violations));
          box.append(pre);
        }
      } else if (err.offset !== null && queryText !== null) {
        // parse errors point at a byte offset; draw a caret under it
        const caret = " ".repeat(err.offset) + "^";
        box.append(el("pre", { class: "query-echo" }, `${queryText}\n${caret}`));
      }
    } else if (err instanceof Error && err.name === "AbortError") {
      box.append(el("p", { class: "error-line" }, "query cancelled"));
    } else {
      box.append(el("p", { class: "error-line" }, String(err)));
    }
    return box;
  }

  function renderGrid(grid: Grid, sourceLabel: string): void {
    lastGrid = grid;
    const table = el("table", { class: "result-table" });
    if (grid.columns.length > 0) {
      const tr = el("tr", {});
      for (const name of grid.columns) {
        tr.append(el("th", {}, name));
      }
      table.append(el("thead", {}, tr));
    }
    const tbody = el("tbody", {});
    for (const row of grid.rows) {
      const tr = el("tr", {});
      for (const cell of row) {
        tr.append(el("td", {}, cell));
      }
      tbody.append(tr);
    }
    table.append(tbody);

    const bar = el("div", { class: "result-bar" },
      el("span", { class: "result-meta" },
        `${sourceLabel}: ${grid.rows.length} row${grid.rows.length === 1 ? "" : "s"}`),
    );
    const csv = el("button", { type: "button", class: "csv-button" }, "Download CSV");
    csv.addEventListener("click", () => {
      if (lastGrid) offerDownload("result.csv", toCsv(lastGrid));
    });
    bar.append(csv);

    const children: Child[] = [bar];
    if (grid.rows.length === 0) {
      children.push(el("p", { class: "empty-note" }, "empty result (nothing above the suppression threshold, or no matching rows)"));
    }
    children.push(el("div", { class: "table-scroll" }, table));
    resultBox.replaceChildren(...children);
  }

  function setRunning(running: boolean): void {
    for (const btn of root.querySelectorAll<HTMLButtonElement>("button.run-button")) {
      btn.disabled = running;
    }
    const old = resultBox.querySelector(".running-bar");
    if (old) old.remove();
    if (running) {
      const cancel = el("button", { type: "button", class: "cancel-button" }, "Cancel");
      cancel.addEventListener("click", () => inflight?.abort());
      resultBox.prepend(el("div", { class: "running-bar" }, "running... ", cancel));
    }
  }

  async function runGuarded(
    label: string,
    queryText: string | null,
    go: (signal: AbortSignal) => Promise<{ xml: string; columnHeader: string }>,
  ): Promise<void> {
    if (inflight) return; // one query at a time
    inflight = new AbortController();
    setError(null);
    setRunning(true);
    try {
      const res = await go(inflight.signal);
      renderGrid(parseDataset(res.xml, res.columnHeader), label);
    } catch (err) {
      if (err instanceof GatewayError && err.status === 401) {
        // session expired server-side; fall back to the login view
        session = null;
        client.logout();
        render();
      }
      setError(describeError(err, queryText));
    } finally {
      inflight = null;
      setRunning(false);
    }
  }

  // --- login view ---

  function renderLogin(): void {
    header.replaceChildren(el("h1", {}, "query console"));
    resultBox.replaceChildren();
    setError(null);

    const user = el("input", { type: "text", name: "username", autocomplete: "username" });
    const pass = el("input", { type: "password", name: "password", autocomplete: "current-password" });
    const role = el("input", { type: "text", name: "role" });
    const note = el("p", { class: "login-note" });
    const form = el("form", { class: "login-form" },
      el("label", {}, "user ", user),
      el("label", {}, "password ", pass),
      el("label", {}, "role ", role),
      el("button", { type: "submit" }, "Sign in"),
      note,
    );
    form.addEventListener("submit", async (ev) => {
      ev.preventDefault();
      note.textContent = "";
      try {
        session = await client.login(user.value, pass.value, role.value);
        listing = await client.listQueries();
        catalog = listing.dynamic_allowed ? await client.columnCatalog() : null;
        render();
      } catch (err) {
        session = null;
        client.logout();
        note.textContent = err instanceof GatewayError ? err.message : String(err);
      }
    });
    main.replaceChildren(form);
  }

  // --- authenticated views ---

  function paramField(spec: ParamSpec): [HTMLLabelElement, HTMLInputElement] {
    const input = el("input", {
      type: inputTypeFor(spec.dtype),
      name: spec.name,
      "data-param": spec.name,
    });
    if (spec.required) input.required = true;
    const label = el("label", { class: "param-field" },
      `${spec.name}${spec.required ? "" : " (optional)"} `,
      input,
    );
    return [label, input];
  }

  function storedCard(q: QueryDescriptor): HTMLElement {
    const inputs: HTMLInputElement[] = [];
    const form = el("form", { class: "param-form" });
    for (const spec of q.params) {
      const [label, input] = paramField(spec);
      inputs.push(input);
      form.append(label);
    }
    form.append(el("button", { type: "submit", class: "run-button" }, "Run"));
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const params: Record<string, string> = {};
      for (const input of inputs) {
        if (input.value !== "") params[input.getAttribute("data-param")!] = input.value;
      }
      void runGuarded(q.name, null, (signal) => client.runStored(q.url_path, params, signal));
    });
    return el("article", { class: "query-card", "data-query": q.url_path },
      el("h3", {}, q.name),
      el("p", { class: "query-desc" }, q.description),
      form,
    );
  }

  function composerSection(cat: ColumnCatalog): HTMLElement {
    const tables = Object.keys(cat.tables).sort();
    const tableSel = el("select", { class: "composer-table" });
    for (const t of tables) tableSel.append(el("option", { value: t }, t));

    const groupSel = el("select", { class: "composer-group" });
    const distinctSel = el("select", { class: "composer-distinct" });
    const filterBox = el("div", { class: "composer-filters" });

    interface FilterControl {
      read(): Filter | null;
    }
    let controls: FilterControl[] = [];

    function rebuildForTable(): void {
      const cols = cat.tables[tableSel.value] ?? [];
      groupSel.replaceChildren(el("option", { value: "" }, "(no grouping)"));
      distinctSel.replaceChildren(el("option", { value: "" }, "count rows"));
      filterBox.replaceChildren();
      controls = [];
      for (const col of cols) {
        groupSel.append(el("option", { value: col.name }, col.name));
        distinctSel.append(el("option", { value: col.name }, `count distinct ${col.name}`));
        if (col.dtype === "date") {
          const from = el("input", { type: "date", class: "filter-from", "data-col": col.name });
          const to = el("input", { type: "date", class: "filter-to", "data-col": col.name });
          filterBox.append(el("label", { class: "filter-row" }, `${col.name} from `, from, " to ", to));
          controls.push({
            read: () =>
              from.value === "" && to.value === ""
                ? null
                : { kind: "range", column: col.name, from: from.value, to: to.value },
          });
        } else if (col.dtype === "enum" && col.values) {
          const sel = el("select", { class: "filter-enum", "data-col": col.name });
          sel.append(el("option", { value: "" }, "(any)"));
          for (const v of col.values) sel.append(el("option", { value: v }, v));
          filterBox.append(el("label", { class: "filter-row" }, `${col.name} = `, sel));
          controls.push({
            read: () =>
              sel.value === "" ? null : { kind: "equals", column: col.name, value: sel.value },
          });
        }
      }
    }
    tableSel.addEventListener("change", rebuildForTable);
    rebuildForTable();

    // advanced: type the query text directly; :name placeholders become fields
    const advToggle = el("input", { type: "checkbox", class: "advanced-toggle" });
    const rawText = el("textarea", { class: "raw-query", rows: "3" });
    const rawParams = el("div", { class: "raw-params" });
    const advanced = el("div", { class: "advanced-box", hidden: "" }, rawText, rawParams);
    advToggle.addEventListener("change", () => {
      advanced.hidden = !advToggle.checked;
    });
    rawText.addEventListener("input", () => {
      const names = [...new Set([...rawText.value.matchAll(/:([A-Za-z_][A-Za-z0-9_]*)/g)].map((m) => m[1]))];
      const existing = new Map(
        [...rawParams.querySelectorAll<HTMLInputElement>("input")].map((i) => [i.getAttribute("data-raw-param")!, i.value]),
      );
      rawParams.replaceChildren();
      for (const name of names) {
        const input = el("input", { type: "text", "data-raw-param": name });
        input.value = existing.get(name) ?? "";
        rawParams.append(el("label", { class: "param-field" }, `:${name} `, input));
      }
    });

    const runBtn = el("button", { type: "submit", class: "run-button" }, "Run dynamic query");
    const form = el("form", { class: "composer-form" },
      el("label", {}, "table ", tableSel),
      el("label", {}, "measure ", distinctSel),
      el("label", {}, "group by ", groupSel),
      filterBox,
      el("label", { class: "advanced-label" }, advToggle, " advanced: raw query text"),
      advanced,
      runBtn,
    );
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      let text: string;
      let params: Record<string, string>;
      if (advToggle.checked) {
        text = rawText.value;
        params = {};
        for (const input of rawParams.querySelectorAll<HTMLInputElement>("input")) {
          params[input.getAttribute("data-raw-param")!] = input.value;
        }
      } else {
        const state: ComposerState = {
          table: tableSel.value,
          distinctColumn: distinctSel.value,
          groupBy: groupSel.value,
          filters: controls.map((c) => c.read()).filter((f): f is Filter => f !== null),
        };
        try {
          ({ text, params } = buildQuery(state));
        } catch (err) {
          setError(describeError(err, null));
          return;
        }
      }
      void runGuarded("dynamic query", text, (signal) => client.runDynamic(text, params, signal));
    });

    return el("section", { class: "dynamic-section" },
      el("h2", {}, "dynamic query"),
      form,
    );
  }

  function render(): void {
    if (session === null || listing === null) {
      renderLogin();
      return;
    }
    const who = el("span", { class: "whoami" }, `${session.username} @ ${session.role}`);
    const logout = el("button", { type: "button", class: "logout-button" }, "Sign out");
    logout.addEventListener("click", () => {
      inflight?.abort();
      client.logout();
      session = null;
      listing = null;
      catalog = null;
      lastGrid = null;
      render();
    });
    header.replaceChildren(el("h1", {}, "query console"), who, logout);

    const stored = el("section", { class: "stored-section" },
      el("h2", {}, "authorized queries"));
    for (const q of listing.queries) {
      stored.append(storedCard(q));
    }
    if (listing.queries.length === 0) {
      stored.append(el("p", {}, "no queries granted to this role"));
    }

    const sections: Child[] = [stored];
    if (listing.dynamic_allowed && catalog !== null) {
      sections.push(composerSection(catalog));
    }
    main.replaceChildren(...sections);
    resultBox.replaceChildren();
    setError(null);
  }

  render();
}
