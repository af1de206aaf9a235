/** Build query text from the structured composer form.
 *
 * Filter values never get spliced into the text: each one becomes a
 * named parameter, so the server's typed binding and injection scan see
 * the raw value.
 */

export interface RangeFilter {
  kind: "range";
  column: string;
  from: string; // empty string disables that bound
  to: string;
}

export interface EqualsFilter {
  kind: "equals";
  column: string;
  value: string;
}

export type Filter = RangeFilter | EqualsFilter;

export interface ComposerState {
  table: string;
  distinctColumn: string; // "" means COUNT(*)
  groupBy: string; // "" means no grouping
  filters: Filter[];
}

export interface ComposedQuery {
  text: string;
  params: Record<string, string>;
}

const IDENT = /^[A-Za-z_][A-Za-z0-9_]*$/;

function checkIdent(name: string, what: string): string {
  if (!IDENT.test(name)) {
    throw new Error(`${what} ${JSON.stringify(name)} is not a plain identifier`);
  }
  return name;
}

export function buildQuery(state: ComposerState): ComposedQuery {
  const table = checkIdent(state.table, "table");
  const params: Record<string, string> = {};
  let next = 0;
  const bind = (value: string): string => {
    const name = `p${next++}`;
    params[name] = value;
    return `:${name}`;
  };

  const select: string[] = [];
  if (state.groupBy !== "") {
    select.push(checkIdent(state.groupBy, "group-by column"));
  }
  if (state.distinctColumn !== "") {
    const col = checkIdent(state.distinctColumn, "count column");
    select.push(`COUNT(DISTINCT ${col}) AS n`);
  } else {
    select.push("COUNT(*) AS n");
  }

  const conds: string[] = [];
  for (const f of state.filters) {
    const col = checkIdent(f.column, "filter column");
    if (f.kind === "range") {
      if (f.from !== "") conds.push(`${col} >= ${bind(f.from)}`);
      if (f.to !== "") conds.push(`${col} <= ${bind(f.to)}`);
    } else if (f.value !== "") {
      conds.push(`${col} = ${bind(f.value)}`);
    }
  }

  let text = `SELECT ${select.join(", ")} FROM ${table}`;
  if (conds.length > 0) text += ` WHERE ${conds.join(" AND ")}`;
  if (state.groupBy !== "") text += ` GROUP BY ${state.groupBy}`;
  return { text, params };
}
