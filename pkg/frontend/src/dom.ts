/**
 * Plain-DOM wiring for the steering client. No framework: the controller
 * owns all state and this layer renders it, appending new log rows as they
 * arrive (the on-screen log is as append-only as the data behind it).
 */

import type { FetchLike } from "./api.js";
import {
  SessionController,
  type ControllerOptions,
} from "./controller.js";
import type { LogEntry } from "./log.js";
import type { PlayerFrame } from "./player.js";

export interface AppOptions {
  serverUrl?: string;
  fetchImpl?: FetchLike;
  controller?: ControllerOptions;
  now?: () => number;
  /** Drive playback from an interval timer (on by default; tests tick by
   * hand through `paintNow`). */
  startTicker?: boolean;
}

export interface App {
  root: HTMLElement;
  controller: SessionController | null;
  /** Base64 PNG used as the conditioning frame for the next connect. */
  setCondFrame(b64: string | null): void;
  connect(): Promise<void>;
  /** Run one playback tick and paint the result if the cursor moved. */
  paintNow(): void;
  dispose(): void;
}

const MOVES = ["left", "right", "up", "down", "stay"] as const;
const EVENTS = ["none", "jump", "flash"] as const;

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

export function buildApp(root: HTMLElement, opts: AppOptions = {}): App {
  const doc = root.ownerDocument;
  const now = opts.now ?? (() => Date.now());

  const serverInput = el(doc, "input", {
    "data-testid": "server-url",
    value: opts.serverUrl ?? "http://127.0.0.1:8000",
    placeholder: "service url",
  });
  const promptInput = el(doc, "input", {
    "data-testid": "prompt",
    placeholder: "prompt, e.g. a blue square explores the grid.",
  });
  const connectBtn = el(doc, "button", { "data-testid": "connect" }, "connect");
  const topbar = el(doc, "div", { class: "topbar" });
  topbar.append(serverInput, promptInput, connectBtn);

  const bannerText = el(doc, "span", { "data-testid": "banner-text" });
  const retryBtn = el(doc, "button", { "data-testid": "retry" }, "retry");
  const banner = el(doc, "div", { "data-testid": "banner", class: "banner", hidden: "" });
  banner.append(bannerText, retryBtn);

  const status = el(doc, "div", { "data-testid": "status" }, "idle");
  const transcriptCheck = el(doc, "span", { "data-testid": "transcript-check" });
  const statusRow = el(doc, "div", { class: "status-row" });
  statusRow.append(status, transcriptCheck);

  const canvas = el(doc, "canvas", {
    "data-testid": "canvas",
    width: "256",
    height: "256",
  });
  const frameFallback = el(doc, "img", {
    "data-testid": "frame-fallback",
    alt: "current frame",
    width: "256",
    height: "256",
  });
  const frameCount = el(doc, "span", { "data-testid": "frame-count" }, "0 frames");
  const cursorLabel = el(doc, "span", { "data-testid": "playback-cursor" }, "-");
  const playbackBox = el(doc, "div", { class: "playback" });
  playbackBox.append(canvas, frameFallback, frameCount, cursorLabel);

  const logList = el(doc, "ol", { "data-testid": "log", class: "log" });
  const pendingRun = el(doc, "div", { "data-testid": "pending-run", class: "pending" });
  const queuedList = el(doc, "ul", { "data-testid": "queued", class: "queued" });

  const palette = el(doc, "div", { "data-testid": "palette", class: "palette" });
  const moveButtons: HTMLButtonElement[] = [];
  for (const move of MOVES) {
    const b = el(doc, "button", { "data-action": move }, `(${move}).`);
    moveButtons.push(b);
    palette.append(b);
  }
  const eventSelect = el(doc, "select", { "data-testid": "event-select" });
  for (const ev of EVENTS) {
    eventSelect.append(el(doc, "option", { value: ev }, ev));
  }
  palette.append(eventSelect);

  const interveneText = el(doc, "input", {
    "data-testid": "intervene-text",
    placeholder: "free-text intervention",
  });
  const interveneSubmit = el(
    doc,
    "button",
    { "data-testid": "intervene-submit", type: "submit" },
    "steer",
  );
  const interveneNote = el(doc, "div", { "data-testid": "intervene-note" });
  const interveneForm = el(doc, "form", { "data-testid": "intervene-form" });
  interveneForm.append(interveneText, interveneSubmit);

  root.append(
    topbar,
    banner,
    statusRow,
    playbackBox,
    logList,
    pendingRun,
    queuedList,
    palette,
    interveneForm,
    interveneNote,
  );

  // Feature-test before touching getContext: test DOMs without a canvas
  // implementation log noisy "not implemented" errors from inside it.
  const view = doc.defaultView;
  const ctx =
    view && "CanvasRenderingContext2D" in view ? canvas.getContext("2d") : null;
  if (ctx) ctx.imageSmoothingEnabled = false;

  let controller: SessionController | null = null;
  let condFrame: string | null = null;
  let renderedEntries = 0;
  let ticker: ReturnType<typeof setInterval> | null = null;
  /** Feedback from the most recent submission attempt; render() owns the
   * note element, so transient messages must live here to survive it. */
  let noteText = "";

  function paint(frame: PlayerFrame): void {
    const url = `data:image/png;base64,${frame.pngBase64}`;
    if (ctx) {
      const image = new (doc.defaultView as Window & typeof globalThis).Image();
      image.onload = () => {
        ctx.drawImage(image, 0, 0, canvas.width, canvas.height);
      };
      image.src = url;
    }
    frameFallback.setAttribute("src", url);
    cursorLabel.textContent = `chunk ${frame.chunkIndex} frame ${frame.frameIndex}`;
  }

  function entryRow(entry: LogEntry): HTMLLIElement {
    const li = el(doc, "li", { class: `entry entry-${entry.kind}` });
    if (entry.kind === "done") {
      li.classList.add("done-marker");
      li.append(el(doc, "span", { class: "badge badge-done" }, "done"));
      li.append(el(doc, "span", {}, ` rollout finished (${entry.reason})`));
      return li;
    }
    li.append(
      el(doc, "span", { class: `badge badge-${entry.source}` }, entry.source),
    );
    li.append(el(doc, "span", { class: "ts" }, ` ${entry.timestampS.toFixed(4)}s `));
    if (entry.kind === "text") {
      li.append(el(doc, "span", { class: "text" }, entry.text));
    } else {
      const strip = el(doc, "span", { class: "thumbs" });
      for (const png of entry.frames) {
        strip.append(
          el(doc, "img", {
            class: "thumb",
            width: "32",
            height: "32",
            src: `data:image/png;base64,${png}`,
          }),
        );
      }
      if (entry.frames.length === 0) {
        strip.append(
          el(doc, "span", { class: "lost" }, `${entry.nFrames} frames (not retransmitted)`),
        );
      }
      li.append(strip);
    }
    if (entry.recovered) {
      li.append(el(doc, "span", { class: "recovered" }, " [recovered]"));
    }
    return li;
  }

  function render(): void {
    if (!controller) return;
    const entries = controller.log.entries;
    for (; renderedEntries < entries.length; renderedEntries++) {
      logList.append(entryRow(entries[renderedEntries]!));
    }
    status.textContent =
      `${controller.state}` +
      (controller.doneReason ? ` (${controller.doneReason})` : "") +
      ` | ${controller.elementCount} elements`;
    if (controller.transcriptDiffs === null) {
      transcriptCheck.textContent = "";
    } else if (controller.transcriptDiffs.length === 0) {
      transcriptCheck.textContent = "transcript verified against server";
    } else {
      transcriptCheck.textContent = `transcript mismatch: ${controller.transcriptDiffs.length} differences`;
    }
    if (controller.banner === null) {
      banner.setAttribute("hidden", "");
    } else {
      banner.removeAttribute("hidden");
      bannerText.textContent = controller.banner;
    }
    retryBtn.toggleAttribute("hidden", controller.state !== "failed");
    frameCount.textContent = `${controller.player.frameCount} frames`;
    pendingRun.textContent =
      controller.pendingRun.length > 0
        ? `model (unflushed${controller.pendingRunOrphaned ? ", lost at end" : ""}): ${controller.pendingRun.join("")}`
        : "";
    queuedList.textContent = "";
    for (const q of controller.queued) {
      queuedList.append(
        el(doc, "li", { class: "queued-item" }, `queued @ ${q.ackTimestampS}s: ${q.text}`),
      );
    }
    for (const text of controller.unconfirmed) {
      queuedList.append(
        el(doc, "li", { class: "queued-item unconfirmed" }, `unconfirmed: ${text}`),
      );
    }
    for (const text of controller.notApplied) {
      queuedList.append(
        el(doc, "li", { class: "queued-item not-applied" }, `never applied: ${text}`),
      );
    }
    const disabled = controller.interventionDisabledReason !== null;
    interveneText.toggleAttribute("disabled", disabled);
    interveneSubmit.toggleAttribute("disabled", disabled);
    for (const b of moveButtons) b.toggleAttribute("disabled", disabled);
    interveneNote.textContent = disabled
      ? controller.interventionDisabledReason!
      : noteText;
  }

  function setNote(text: string): void {
    noteText = text;
    interveneNote.textContent = text;
  }

  function submit(text: string): void {
    if (!controller) {
      setNote("connect to a session first");
      return;
    }
    if (text.trim() === "") {
      setNote("intervention text is empty; nothing sent");
      return;
    }
    const c = controller;
    void c.submitIntervention(text).then((r) => {
      if (r.accepted) {
        setNote(`queued for ${r.appliedAtS}s`);
      } else {
        setNote(c.interventionNote ?? r.reason ?? "submission failed");
      }
      render();
    });
  }

  interveneForm.addEventListener("submit", (e) => {
    e.preventDefault();
    submit(interveneText.value);
    interveneText.value = "";
  });
  for (const b of moveButtons) {
    b.addEventListener("click", (e) => {
      e.preventDefault();
      const move = b.getAttribute("data-action")!;
      const suffix = eventSelect.value !== "none" ? ` ${eventSelect.value}.` : "";
      submit(`(${move}).${suffix}`);
    });
  }
  retryBtn.addEventListener("click", () => controller?.retry());

  const app: App = {
    root,
    get controller() {
      return controller;
    },
    setCondFrame(b64) {
      condFrame = b64;
    },
    async connect() {
      if (controller) {
        controller.stop();
        logList.textContent = "";
        renderedEntries = 0;
      }
      controller = new SessionController(serverInput.value, {
        ...opts.controller,
        fetchImpl: opts.fetchImpl ?? opts.controller?.fetchImpl,
        onChange: render,
      });
      const done = controller.start(promptInput.value, condFrame ?? undefined);
      render();
      await done;
      render();
    },
    paintNow() {
      if (!controller) return;
      const frame = controller.player.tick(now());
      if (frame) paint(frame);
    },
    dispose() {
      if (ticker !== null) clearInterval(ticker);
      controller?.stop();
    },
  };

  connectBtn.addEventListener("click", () => {
    void app.connect();
  });

  if (opts.startTicker ?? true) {
    ticker = setInterval(() => {
      if (!controller) return;
      if (!controller.player.isRunning) controller.player.start(now());
      app.paintNow();
    }, controllerTickMs());
  }

  return app;
}

/** Half the nominal frame interval, so due frames are picked up promptly. */
function controllerTickMs(): number {
  return 1000 / 16 / 2;
}
