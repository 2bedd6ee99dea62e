import { buildApp } from "./dom.js";

function defaultServerUrl(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("server") ?? "http://127.0.0.1:8000";
}

window.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const app = buildApp(root, { serverUrl: defaultServerUrl() });

  // Wire an optional conditioning-frame picker; generation also works
  // without one, starting from pure noise conditioning on the prompt alone.
  const picker = document.getElementById("cond-file") as HTMLInputElement | null;
  picker?.addEventListener("change", () => {
    const file = picker.files?.[0];
    if (!file) {
      app.setCondFrame(null);
      return;
    }
    const reader = new FileReader();
    reader.onload = () => {
      const url = String(reader.result);
      const b64 = url.slice(url.indexOf(",") + 1);
      app.setCondFrame(b64);
    };
    reader.readAsDataURL(file);
  });
});
