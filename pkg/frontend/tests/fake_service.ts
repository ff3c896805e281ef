// In-memory stand-in for the feedmask HTTP service, close enough for the
// webapp flows: conversations, pending actions, rules, profile, records.

import {
  ChatMessage,
  PendingAction,
  Profile,
  Rule,
} from "../src/api.js";

const MIL_TEXT =
  "I do not want to see content related to mother-in-law and daughter-in-law relationships";

interface FakeSession {
  id: string;
  strategy: string;
  messages: ChatMessage[];
  status: string;
}

function json(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function apiError(status: number, code: string, message: string): Response {
  return json({ error: { code, message, details: {} } }, status);
}

export class FakeService {
  rules: Rule[] = [];
  actions: PendingAction[] = [];
  sessions = new Map<string, FakeSession>();
  profile: Profile = { version: 0, bands: {} };
  down = false;
  staleOnConfirm = false;
  seenRequestIds: string[] = [];
  private ruleSeq = 0;
  private actionSeq = 0;
  private sessionSeq = 0;
  private tick = 0;

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    if (this.down) throw new TypeError("fetch failed");
    const method = init?.method ?? "GET";
    const parsed = new URL(url, "http://fake.local");
    const path = parsed.pathname;
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    const headers = (init?.headers ?? {}) as Record<string, string>;
    if (method !== "GET") {
      const id = headers["X-Request-Id"];
      if (id) this.seenRequestIds.push(id);
    }
    return this.route(method, path, body);
  };

  private now(): string {
    this.tick += 1;
    return `2024-01-01T00:00:${String(this.tick % 60).padStart(2, "0")}Z`;
  }

  private route(method: string, path: string, body: any): Response {
    if (method === "GET" && path === "/rules") return json({ rules: this.rules });
    if (method === "POST" && path === "/rules") return json(this.addRule(body.text), 201);
    const ruleToggle = path.match(/^\/rules\/(r\d+)\/(activate|deactivate)$/);
    if (method === "POST" && ruleToggle) {
      const rule = this.rules.find((r) => r.id === ruleToggle[1]);
      if (!rule) return apiError(404, "not_found", `no such resource: ${ruleToggle[1]}`);
      rule.active = ruleToggle[2] === "activate";
      return json(rule);
    }

    if (method === "GET" && path === "/profile") return json(this.profile);
    if (method === "GET" && path === "/filter-records")
      return json({ total: 0, offset: 0, records: [] });
    if (method === "GET" && path === "/filter-stats") return json({ stats: [] });

    if (method === "POST" && path === "/conversations") {
      this.sessionSeq += 1;
      const session: FakeSession = {
        id: `s${String(this.sessionSeq).padStart(6, "0")}`,
        strategy: body.strategy,
        messages: [
          { speaker: "agent", text: "Here is your profile. What should change?", timestamp: this.now() },
        ],
        status: "open",
      };
      this.sessions.set(session.id, session);
      return json(session, 201);
    }

    const message = path.match(/^\/conversations\/(s\d+)\/messages$/);
    if (method === "POST" && message) {
      const session = this.sessions.get(message[1]!);
      if (!session) return apiError(404, "not_found", `no such resource: ${message[1]}`);
      session.messages.push({ speaker: "user", text: body.text, timestamp: this.now() });
      session.messages.push({ speaker: "agent", text: "Noted. Anything else?", timestamp: this.now() });
      let action: PendingAction | null = null;
      if (String(body.text).includes("mother-in-law")) {
        this.actionSeq += 1;
        action = {
          id: `a${String(this.actionSeq).padStart(6, "0")}`,
          kind: "Add",
          proposedText: MIL_TEXT,
          status: "proposed",
          sourceNeed: { text: MIL_TEXT, sourceSessionId: session.id, sourceRound: 1 },
          targetRuleId: null,
          targetRuleVersion: null,
          duplicateOf: null,
        };
        this.actions.push(action);
      }
      return json({
        sessionId: session.id,
        agentText: "Noted. Anything else?",
        round: 1,
        need: action ? action.sourceNeed : null,
        action,
      });
    }

    const conversation = path.match(/^\/conversations\/(s\d+)$/);
    if (method === "GET" && conversation) {
      const session = this.sessions.get(conversation[1]!);
      if (!session) return apiError(404, "not_found", `no such resource: ${conversation[1]}`);
      return json(session);
    }

    if (method === "GET" && path === "/actions/pending") {
      return json({ actions: this.actions.filter((a) => a.status === "proposed") });
    }

    const confirm = path.match(/^\/actions\/(a\d+)\/confirm$/);
    if (method === "POST" && confirm) {
      const action = this.actions.find((a) => a.id === confirm[1]);
      if (!action) return apiError(404, "not_found", `no such resource: ${confirm[1]}`);
      if (action.status !== "proposed")
        return apiError(409, "action_resolved", `action ${action.id} already ${action.status}`);
      if (this.staleOnConfirm)
        return apiError(409, "stale_action", `rule changed under action ${action.id}`);
      if (body.confirmed) {
        action.status = "confirmed";
        const rule = this.addRule(body.editedText ?? action.proposedText);
        return json({ action, rule });
      }
      action.status = "rejected";
      return json({ action, rule: null });
    }

    return apiError(404, "not_found", `no such resource: ${path}`);
  }

  private addRule(text: string): Rule {
    this.ruleSeq += 1;
    const rule: Rule = {
      id: `r${String(this.ruleSeq).padStart(6, "0")}`,
      text,
      active: true,
      version: 1,
      createdAt: this.now(),
      history: [],
    };
    this.rules.push(rule);
    return rule;
  }
}

export { MIL_TEXT };
