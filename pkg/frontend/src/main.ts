import { ApiClient } from "./api.js";
import { Store } from "./store.js";
import { renderApp } from "./views.js";

function apiBase(): string {
  const meta = document.querySelector('meta[name="feedmask-api"]');
  const fromMeta = meta?.getAttribute("content");
  if (fromMeta) return fromMeta;
  // opened as a file: assume the default serve address
  if (window.location.protocol === "file:") return "http://127.0.0.1:8787";
  return "";
}

const store = new Store(new ApiClient(apiBase()));
const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

store.subscribe(() => renderApp(root, store));
renderApp(root, store);
