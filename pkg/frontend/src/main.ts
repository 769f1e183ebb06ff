import { ApiClient } from "./api.js";
import { bootstrap } from "./app.js";

const params = new URLSearchParams(window.location.search);
const api = new ApiClient(params.get("api") ?? "");

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app container");
}

void bootstrap(root, api).catch((err) => {
  root.textContent = `failed to start: ${err instanceof Error ? err.message : String(err)}`;
});
