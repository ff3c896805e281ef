// Typed client for the local feedmask service. Every mutating call carries
// an X-Request-Id so a retried request replays instead of re-executing.

export interface Rule {
  id: string;
  text: string;
  active: boolean;
  version: number;
  createdAt: string;
  history: string[];
}

export interface FilteringNeed {
  text: string;
  sourceSessionId: string;
  sourceRound: number;
}

export interface PendingAction {
  id: string;
  kind: "Add" | "Update";
  proposedText: string;
  status: string;
  sourceNeed: FilteringNeed;
  targetRuleId: string | null;
  targetRuleVersion: number | null;
  duplicateOf: string | null;
}

export interface ChatMessage {
  speaker: "user" | "agent";
  text: string;
  timestamp: string;
}

export interface Session {
  id: string;
  strategy: string;
  messages: ChatMessage[];
  status: string;
}

export interface ConverseResult {
  sessionId: string;
  agentText: string;
  round: number;
  need: FilteringNeed | null;
  action: PendingAction | null;
}

export interface Profile {
  version: number;
  bands: Record<string, string[]>;
}

export interface FilterRecord {
  itemId: string;
  matchedRuleId: string;
  day: string;
  decision: {
    itemId: string;
    ruleId: string;
    ruleVersion: number;
    matched: boolean;
    itemTopics: string[];
    ruleTopics: string[];
    rationale: string;
    timestamp: string;
  };
}

export interface RecordsPage {
  total: number;
  offset: number;
  records: FilterRecord[];
}

export interface StatRow {
  ruleId: string;
  day: string;
  processed: number;
  filtered: number;
  efficiency: number | null;
}

export interface GraphNode {
  id: string;
  label: string;
}

export interface GraphView {
  nodes: GraphNode[];
  edges: [string, string, number][];
}

export interface ResolveResult {
  action: PendingAction;
  rule: Rule | null;
}

/** Error body the service uses for every non-success response. */
export class ApiCallError extends Error {
  status: number;
  code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

let requestCounter = 0;

function nextRequestId(): string {
  const c = globalThis.crypto as Crypto | undefined;
  if (c && typeof c.randomUUID === "function") return c.randomUUID();
  requestCounter += 1;
  return `req-${Date.now()}-${requestCounter}`;
}

export class ApiClient {
  private base: string;
  private fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, "");
    // bind, otherwise a bare window.fetch loses its receiver
    this.fetchFn = fetchFn ?? ((url, init) => globalThis.fetch(url, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (method !== "GET") headers["X-Request-Id"] = nextRequestId();
    let response: Response;
    try {
      response = await this.fetchFn(this.base + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiCallError(0, "unreachable", String(err));
    }
    if (!response.ok) {
      let code = "unknown";
      let message = `HTTP ${response.status}`;
      try {
        const doc = (await response.json()) as { error?: { code?: string; message?: string } };
        if (doc.error) {
          code = doc.error.code ?? code;
          message = doc.error.message ?? message;
        }
      } catch {
        // non-JSON error body; keep the fallback code
      }
      throw new ApiCallError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  getRules(): Promise<{ rules: Rule[] }> {
    return this.request("GET", "/rules");
  }

  createRule(text: string): Promise<Rule> {
    return this.request("POST", "/rules", { text });
  }

  updateRule(ruleId: string, text: string): Promise<Rule> {
    return this.request("PATCH", `/rules/${ruleId}`, { text });
  }

  deleteRule(ruleId: string): Promise<{ deleted: string }> {
    return this.request("DELETE", `/rules/${ruleId}`);
  }

  setRuleActive(ruleId: string, active: boolean): Promise<Rule> {
    const verb = active ? "activate" : "deactivate";
    return this.request("POST", `/rules/${ruleId}/${verb}`);
  }

  getProfile(): Promise<Profile> {
    return this.request("GET", "/profile");
  }

  getGraph(): Promise<GraphView> {
    return this.request("GET", "/profile/graph");
  }

  getRecords(offset = 0, limit = 50): Promise<RecordsPage> {
    return this.request("GET", `/filter-records?offset=${offset}&limit=${limit}`);
  }

  getStats(): Promise<{ stats: StatRow[] }> {
    return this.request("GET", "/filter-stats");
  }

  openConversation(strategy: string): Promise<Session> {
    return this.request("POST", "/conversations", { strategy });
  }

  sendMessage(sessionId: string, text: string): Promise<ConverseResult> {
    return this.request("POST", `/conversations/${sessionId}/messages`, { text });
  }

  getConversation(sessionId: string): Promise<Session> {
    return this.request("GET", `/conversations/${sessionId}`);
  }

  pendingActions(): Promise<{ actions: PendingAction[] }> {
    return this.request("GET", "/actions/pending");
  }

  confirmAction(actionId: string, confirmed: boolean, editedText?: string): Promise<ResolveResult> {
    return this.request("POST", `/actions/${actionId}/confirm`, {
      confirmed,
      editedText: editedText ?? null,
    });
  }
}
