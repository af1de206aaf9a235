/** Typed client for the gateway's HTTP surface.
 *
 * The session token lives in a field on the client instance and nowhere
 * else: no cookies, no localStorage, nothing that survives a refresh.
 */

export interface ParamSpec {
  name: string;
  dtype: string;
  required: boolean;
}

export interface QueryDescriptor {
  id: number;
  name: string;
  description: string;
  url_path: string;
  params: ParamSpec[];
}

export interface QueryListing {
  queries: QueryDescriptor[];
  dynamic_allowed: boolean;
}

export interface LoginResult {
  token: string;
  expires_at: string;
  role: string;
  username: string;
}

export interface Violation {
  rule: string;
  detail: string;
  location: string;
}

export interface ColumnInfo {
  name: string;
  dtype: string;
  values?: string[];
}

export interface ColumnCatalog {
  tables: Record<string, ColumnInfo[]>;
}

/** Raw XML body plus the parsed X-Columns header. */
export interface QueryResponse {
  xml: string;
  columnHeader: string;
}

export class GatewayError extends Error {
  readonly status: number;
  readonly code: string;
  readonly violations: Violation[];
  readonly offset: number | null;

  constructor(
    status: number,
    code: string,
    message: string,
    violations: Violation[] = [],
    offset: number | null = null,
  ) {
    super(message);
    this.name = "GatewayError";
    this.status = status;
    this.code = code;
    this.violations = violations;
    this.offset = offset;
  }
}

type FetchFn = typeof fetch;

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let code = "error";
  let message = `request failed with status ${res.status}`;
  let violations: Violation[] = [];
  let offset: number | null = null;
  try {
    const body = await res.json();
    const err = body?.error;
    if (err && typeof err === "object") {
      if (typeof err.code === "string") code = err.code;
      if (typeof err.message === "string") message = err.message;
      if (Array.isArray(err.violations)) violations = err.violations;
      if (typeof err.offset === "number") offset = err.offset;
    }
  } catch {
    // non-JSON error body; keep the status-line message
  }
  throw new GatewayError(res.status, code, message, violations, offset);
}

export class GatewayClient {
  readonly baseUrl: string;
  private readonly fetchFn: FetchFn;
  token: string | null = null;

  constructor(baseUrl = "", fetchFn?: FetchFn) {
    // trailing slash would double up when paths are appended
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((...args) => fetch(...args));
  }

  private headers(json: boolean): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h["Content-Type"] = "application/json";
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  async login(username: string, password: string, role: string): Promise<LoginResult> {
    const res = await this.fetchFn(`${this.baseUrl}/auth/login`, {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify({ username, password, role }),
    });
    await raiseForStatus(res);
    const out = (await res.json()) as LoginResult;
    this.token = out.token;
    return out;
  }

  logout(): void {
    this.token = null;
  }

  async listQueries(): Promise<QueryListing> {
    const res = await this.fetchFn(`${this.baseUrl}/queries`, {
      headers: this.headers(false),
    });
    await raiseForStatus(res);
    return (await res.json()) as QueryListing;
  }

  async columnCatalog(): Promise<ColumnCatalog> {
    const res = await this.fetchFn(`${this.baseUrl}/meta/columns`, {
      headers: this.headers(false),
    });
    await raiseForStatus(res);
    return (await res.json()) as ColumnCatalog;
  }

  async runStored(
    urlPath: string,
    params: Record<string, string>,
    signal?: AbortSignal,
  ): Promise<QueryResponse> {
    const qs = new URLSearchParams(params).toString();
    const url = `${this.baseUrl}/q/${encodeURIComponent(urlPath)}` + (qs ? `?${qs}` : "");
    const res = await this.fetchFn(url, { headers: this.headers(false), signal });
    await raiseForStatus(res);
    return {
      xml: await res.text(),
      columnHeader: res.headers.get("X-Columns") ?? "",
    };
  }

  async runDynamic(
    queryText: string,
    params: Record<string, string>,
    signal?: AbortSignal,
  ): Promise<QueryResponse> {
    const res = await this.fetchFn(`${this.baseUrl}/dynamic`, {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify({ query_text: queryText, params }),
      signal,
    });
    await raiseForStatus(res);
    return {
      xml: await res.text(),
      columnHeader: res.headers.get("X-Columns") ?? "",
    };
  }
}
