// DOM rendering. Each render wipes the root and rebuilds from store state;
// in-progress input survives via drafts kept on the store, not the DOM.

import { PendingAction, Rule } from "./api.js";
import { Store } from "./store.js";

const BAND_ORDER = ["Very liked", "Fairly liked", "Neutral", "Fairly disliked", "Very disliked"];

// drafts for the confirm dialog, keyed by action id; cleared on resolve
const actionDrafts = new Map<string, string>();

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function button(label: string, cls: string, onClick: () => void): HTMLButtonElement {
  const b = el("button", { class: cls, type: "button" }, label);
  b.addEventListener("click", onClick);
  return b;
}

function navBar(store: Store): HTMLElement {
  const nav = el("nav", { class: "topnav" });
  nav.append(
    button("Home", "nav-main", () => void store.goto({ name: "main" })),
    button("Rules", "nav-rules", () => void store.goto({ name: "rules" })),
    button("Records", "nav-records", () => void store.goto({ name: "records" })),
    button("Profile", "nav-profile", () => void store.goto({ name: "profile" })),
  );
  return nav;
}

function mainPage(store: Store): HTMLElement {
  const page = el("section", { class: "main-page" });
  page.append(el("h1", {}, "feedmask"));
  page.append(
    el("p", {}, "A local filter between your feed and you. Pick an entry point:"),
  );
  const entries = el("div", { class: "entries" });
  entries.append(
    button("Manage filtering rules", "entry-rules", () => void store.goto({ name: "rules" })),
    button("Talk about my preference profile", "entry-chat-profile", () =>
      void store.goto({ name: "chat", strategy: "ProfileExplanation" }),
    ),
    button("Talk about filtered items", "entry-chat-records", () =>
      void store.goto({ name: "chat", strategy: "RecordExplanation" }),
    ),
  );
  page.append(entries);
  return page;
}

function ruleRow(store: Store, rule: Rule): HTMLTableRowElement {
  const row = el("tr", { class: "rule-row", "data-rule-id": rule.id });
  row.append(el("td", { class: "rule-text" }, rule.text));
  row.append(el("td", { class: "rule-status" }, rule.active ? "active" : "off"));
  row.append(el("td", { class: "rule-version" }, `v${rule.version}`));
  const actions = el("td", { class: "rule-actions" });
  actions.append(
    button(rule.active ? "Disable" : "Enable", "rule-toggle", () => void store.toggleRule(rule)),
    button("Edit", "rule-edit", () => {
      const text = window.prompt("Rule text", rule.text);
      if (text !== null) void store.editRule(rule.id, text);
    }),
    button("Delete", "rule-delete", () => void store.removeRule(rule.id)),
  );
  row.append(actions);
  return row;
}

function rulesPage(store: Store): HTMLElement {
  const page = el("section", { class: "rules-page" });
  page.append(el("h1", {}, "Filtering rules"));
  const table = el("table", { class: "rules-table" });
  const head = el("tr");
  for (const heading of ["Rule", "Status", "Version", ""]) head.append(el("th", {}, heading));
  table.append(head);
  for (const rule of store.state.rules) table.append(ruleRow(store, rule));
  page.append(table);
  if (store.state.rules.length === 0) {
    page.append(el("p", { class: "rules-empty" }, "No rules yet. Add one below or start a chat."));
  }

  const form = el("div", { class: "rule-form" });
  const input = el("input", { type: "text", class: "rule-new-text", placeholder: "I do not want to see ..." });
  form.append(
    input,
    button("Add rule", "rule-new-submit", () => {
      void store.createRule(input.value);
      input.value = "";
    }),
  );
  page.append(form);
  return page;
}

function confirmDialog(store: Store, action: PendingAction): HTMLElement {
  const dialog = el("div", { class: "confirm-dialog", "data-action-id": action.id });
  const heading = action.kind === "Add" ? "Proposed new rule" : "Proposed rule update";
  dialog.append(el("h3", {}, heading));
  if (action.duplicateOf) {
    dialog.append(el("p", { class: "duplicate-note" }, `Looks similar to rule ${action.duplicateOf}; confirming updates that rule.`));
  }
  const textarea = el("textarea", { class: "action-text" });
  textarea.value = actionDrafts.get(action.id) ?? action.proposedText;
  textarea.addEventListener("input", () => actionDrafts.set(action.id, textarea.value));
  dialog.append(textarea);

  if (store.state.staleActionIds.has(action.id)) {
    dialog.append(
      el("p", { class: "stale-note" }, "The target rule changed since this was proposed. Refresh and review again."),
    );
    dialog.append(
      button("Refresh", "stale-refresh", () => {
        actionDrafts.delete(action.id);
        void store.refreshAction(action.id);
      }),
    );
  }

  const buttons = el("div", { class: "confirm-buttons" });
  buttons.append(
    button("Confirm", "action-confirm", () => {
      const text = actionDrafts.get(action.id) ?? action.proposedText;
      actionDrafts.delete(action.id);
      void store.submitConfirmation(action.id, text, true);
    }),
    button("Reject", "action-reject", () => {
      actionDrafts.delete(action.id);
      void store.submitConfirmation(action.id, "", false);
    }),
  );
  dialog.append(buttons);
  return dialog;
}

function chatPage(store: Store): HTMLElement {
  const page = el("section", { class: "chat-page" });
  const strategy = store.state.route.name === "chat" ? store.state.route.strategy : "ProfileExplanation";
  page.append(
    el("h1", {}, strategy === "ProfileExplanation" ? "About your profile" : "About filtered items"),
  );

  const transcript = el("div", { class: "transcript" });
  for (const message of store.state.transcript) {
    const bubble = el("div", { class: `msg msg-${message.speaker}` });
    bubble.append(el("span", { class: "msg-speaker" }, message.speaker));
    bubble.append(el("span", { class: "msg-text" }, message.text));
    transcript.append(bubble);
  }
  page.append(transcript);

  // dialog shown iff something is pending; one proposal reviewed at a time
  const pending = store.state.pendingActions[0];
  if (pending) page.append(confirmDialog(store, pending));

  const form = el("div", { class: "chat-form" });
  const input = el("input", { type: "text", class: "chat-input" });
  input.value = store.state.chatInput;
  input.addEventListener("input", () => {
    store.state.chatInput = input.value;
  });
  const send = button("Send", "chat-send", () => {
    void store.sendChat(input.value);
  });
  if (store.state.busy) send.disabled = true;
  form.append(input, send);
  page.append(form);
  return page;
}

function recordsPage(store: Store): HTMLElement {
  const page = el("section", { class: "records-page" });
  page.append(el("h1", {}, "Filtered items"));
  const records = store.state.records;
  if (!records || records.records.length === 0) {
    page.append(el("p", { class: "records-empty" }, "Nothing has been filtered yet."));
  } else {
    const table = el("table", { class: "records-table" });
    const head = el("tr");
    for (const h of ["Item", "Rule", "Day", "Why"]) head.append(el("th", {}, h));
    table.append(head);
    for (const record of records.records) {
      const row = el("tr", { class: "record-row" });
      row.append(el("td", {}, record.itemId));
      row.append(el("td", {}, record.matchedRuleId));
      row.append(el("td", {}, record.day));
      row.append(el("td", { class: "record-rationale" }, record.decision.rationale));
      table.append(row);
    }
    page.append(table);
    page.append(el("p", { class: "records-total" }, `${records.total} filtered in total`));
  }

  if (store.state.stats.length > 0) {
    const table = el("table", { class: "stats-table" });
    const head = el("tr");
    for (const h of ["Rule", "Day", "Processed", "Filtered", "Efficiency"]) head.append(el("th", {}, h));
    table.append(head);
    for (const row of store.state.stats) {
      const tr = el("tr", { class: "stat-row" });
      tr.append(el("td", {}, row.ruleId));
      tr.append(el("td", {}, row.day));
      tr.append(el("td", {}, String(row.processed)));
      tr.append(el("td", {}, String(row.filtered)));
      tr.append(el("td", {}, row.efficiency === null ? "-" : row.efficiency.toFixed(4)));
      table.append(tr);
    }
    page.append(el("h2", {}, "Per rule, per day"));
    page.append(table);
  }
  return page;
}

function profilePage(store: Store): HTMLElement {
  const page = el("section", { class: "profile-page" });
  page.append(el("h1", {}, "Preference profile"));
  const profile = store.state.profile;
  if (!profile || BAND_ORDER.every((band) => (profile.bands[band] ?? []).length === 0)) {
    page.append(
      el(
        "p",
        { class: "profile-empty" },
        "No profile yet. It builds itself from impressions as you use your feed.",
      ),
    );
    return page;
  }
  page.append(el("p", { class: "profile-version" }, `version ${profile.version}`));
  for (const band of BAND_ORDER) {
    const section = el("div", { class: "band", "data-band": band });
    section.append(el("h3", {}, band));
    const list = el("div", { class: "band-labels" });
    const labels = profile.bands[band] ?? [];
    if (labels.length === 0) {
      list.append(el("span", { class: "band-empty" }, "(none)"));
    }
    for (const label of labels) {
      // clicking a feature jumps into chat with a prefilled complaint
      list.append(button(label, "band-label", () => store.prefillChat(label)));
    }
    section.append(list);
    page.append(section);
  }
  return page;
}

export function renderApp(root: HTMLElement, store: Store): void {
  root.textContent = "";
  if (store.state.banner) {
    root.append(el("div", { class: "banner", role: "alert" }, store.state.banner));
  }
  root.append(navBar(store));
  switch (store.state.route.name) {
    case "main":
      root.append(mainPage(store));
      break;
    case "rules":
      root.append(rulesPage(store));
      break;
    case "chat":
      root.append(chatPage(store));
      break;
    case "records":
      root.append(recordsPage(store));
      break;
    case "profile":
      root.append(profilePage(store));
      break;
  }
}
