// View state and the poll loop. The store owns nothing authoritative:
// every screen can be rebuilt from API data alone after a reload.

import {
  ApiCallError,
  ApiClient,
  ChatMessage,
  PendingAction,
  Profile,
  RecordsPage,
  Rule,
  Session,
  StatRow,
} from "./api.js";

export type Route =
  | { name: "main" }
  | { name: "rules" }
  | { name: "chat"; strategy: "ProfileExplanation" | "RecordExplanation" }
  | { name: "records" }
  | { name: "profile" };

export interface Scheduler {
  set(fn: () => void, ms: number): number;
  clear(id: number): void;
}

const intervalScheduler: Scheduler = {
  set: (fn, ms) => setInterval(fn, ms) as unknown as number,
  clear: (id) => clearInterval(id),
};

export const POLL_MS = 2000;

export interface StoreState {
  route: Route;
  rules: Rule[];
  pendingActions: PendingAction[];
  sessionId: string | null;
  transcript: ChatMessage[];
  chatInput: string;
  profile: Profile | null;
  records: RecordsPage | null;
  stats: StatRow[];
  banner: string | null;
  staleActionIds: Set<string>;
  busy: boolean;
}

export class Store {
  api: ApiClient;
  state: StoreState;
  private scheduler: Scheduler;
  private pollHandle: number | null = null;
  private listeners: Array<() => void> = [];

  constructor(api: ApiClient, scheduler?: Scheduler) {
    this.api = api;
    this.scheduler = scheduler ?? intervalScheduler;
    this.state = {
      route: { name: "main" },
      rules: [],
      pendingActions: [],
      sessionId: null,
      transcript: [],
      chatInput: "",
      profile: null,
      records: null,
      stats: [],
      banner: null,
      staleActionIds: new Set(),
      busy: false,
    };
  }

  subscribe(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  private fail(err: unknown): void {
    if (err instanceof ApiCallError && err.status > 0) {
      this.state.banner = `service error: ${err.message}`;
    } else {
      this.state.banner = "cannot reach the feedmask service";
    }
    this.notify();
  }

  private clearBanner(): void {
    this.state.banner = null;
  }

  // -- navigation ------------------------------------------------------

  async goto(route: Route): Promise<void> {
    if (this.state.route.name === "chat" && route.name !== "chat") this.stopPolling();
    this.state.route = route;
    this.notify();
    try {
      if (route.name === "rules") {
        await this.refreshRules();
      } else if (route.name === "records") {
        const [records, stats] = await Promise.all([this.api.getRecords(), this.api.getStats()]);
        this.state.records = records;
        this.state.stats = stats.stats;
      } else if (route.name === "profile") {
        this.state.profile = await this.api.getProfile();
      } else if (route.name === "chat") {
        await this.openChat(route.strategy);
      }
      this.clearBanner();
    } catch (err) {
      this.fail(err);
      return;
    }
    this.notify();
  }

  async refreshRules(): Promise<void> {
    const out = await this.api.getRules();
    this.state.rules = out.rules;
  }

  // -- chat ------------------------------------------------------------

  private async openChat(strategy: "ProfileExplanation" | "RecordExplanation"): Promise<void> {
    const session = await this.api.openConversation(strategy);
    this.state.sessionId = session.id;
    this.state.transcript = session.messages;
    this.state.pendingActions = [];
    this.state.staleActionIds = new Set();
    this.startPolling();
  }

  async sendChat(text: string): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!sessionId || !text.trim()) return;
    this.state.busy = true;
    this.state.chatInput = "";
    this.notify();
    try {
      await this.api.sendMessage(sessionId, text);
      const session = await this.api.getConversation(sessionId);
      this.state.transcript = session.messages;
      this.clearBanner();
    } catch (err) {
      this.fail(err);
    }
    this.state.busy = false;
    this.notify();
  }

  prefillChat(label: string): void {
    this.state.chatInput = `I don't want to see content about ${label}`;
    void this.goto({ name: "chat", strategy: "ProfileExplanation" });
  }

  // -- pending-action polling -------------------------------------------

  startPolling(): void {
    if (this.pollHandle !== null) return;
    this.pollHandle = this.scheduler.set(() => {
      void this.pollOnce();
    }, POLL_MS);
  }

  stopPolling(): void {
    if (this.pollHandle !== null) {
      this.scheduler.clear(this.pollHandle);
      this.pollHandle = null;
    }
  }

  get polling(): boolean {
    return this.pollHandle !== null;
  }

  async pollOnce(): Promise<void> {
    try {
      const out = await this.api.pendingActions();
      this.state.pendingActions = out.actions;
      this.clearBanner();
    } catch (err) {
      this.fail(err);
      return;
    }
    this.notify();
  }

  // -- confirmation dialog ------------------------------------------------

  async submitConfirmation(actionId: string, editedText: string, confirmed: boolean): Promise<void> {
    this.state.busy = true;
    this.notify();
    try {
      await this.api.confirmAction(actionId, confirmed, confirmed ? editedText : undefined);
      this.state.pendingActions = this.state.pendingActions.filter((a) => a.id !== actionId);
      this.state.staleActionIds.delete(actionId);
      await this.refreshRules();
      this.clearBanner();
    } catch (err) {
      if (err instanceof ApiCallError && err.code === "stale_action") {
        // rule moved under the proposal: keep the dialog, ask for a refresh
        this.state.staleActionIds.add(actionId);
      } else {
        this.fail(err);
      }
    }
    this.state.busy = false;
    this.notify();
  }

  async refreshAction(actionId: string): Promise<void> {
    this.state.staleActionIds.delete(actionId);
    await this.pollOnce();
  }

  // -- rule management ------------------------------------------------------

  async createRule(text: string): Promise<void> {
    if (!text.trim()) return;
    try {
      await this.api.createRule(text.trim());
      await this.refreshRules();
      this.clearBanner();
    } catch (err) {
      this.fail(err);
      return;
    }
    this.notify();
  }

  async toggleRule(rule: Rule): Promise<void> {
    try {
      await this.api.setRuleActive(rule.id, !rule.active);
      await this.refreshRules();
      this.clearBanner();
    } catch (err) {
      this.fail(err);
      return;
    }
    this.notify();
  }

  async editRule(ruleId: string, text: string): Promise<void> {
    if (!text.trim()) return;
    try {
      await this.api.updateRule(ruleId, text.trim());
      await this.refreshRules();
      this.clearBanner();
    } catch (err) {
      this.fail(err);
      return;
    }
    this.notify();
  }

  async removeRule(ruleId: string): Promise<void> {
    try {
      await this.api.deleteRule(ruleId);
      await this.refreshRules();
      this.clearBanner();
    } catch (err) {
      this.fail(err);
      return;
    }
    this.notify();
  }
}
