/**
 * Session controller: one browser-side event loop per live rollout.
 *
 * The loop serializes everything the client does to a session: queued
 * interventions are flushed, then one step request is issued, then its
 * events are folded into the log. At most one step request is ever in
 * flight. Intervention placement in the log is deferred until the next step
 * response proves the server actually applied it (the service queues
 * steering text and applies it at the first step that starts with an empty
 * text buffer), which keeps the client log equal to the server transcript
 * entry-for-entry rather than optimistically close to it.
 */

import {
  ApiClient,
  ApiError,
  NetworkError,
  chunkTimestamp,
  type ChunkEvent,
  type DoneEvent,
  type FetchLike,
  type GenerationConfig,
  type InterveneResponse,
  type SessionRecord,
  type StepEvent,
  type StepResponse,
} from "./api.js";
import {
  EventLog,
  parseTranscript,
  projectLog,
  diffTranscript,
  type TranscriptChunkEntry,
} from "./log.js";
import { FramePlayer } from "./player.js";

export type ConnectionState =
  | "idle"
  | "connecting"
  | "streaming"
  | "reconnecting"
  | "failed"
  | "done";

export interface ControllerOptions {
  /** Pause between step polls; the polling cadence. */
  pollIntervalMs?: number;
  /** Events requested per step poll. */
  eventsPerPoll?: number;
  /** Base delay between reconnect attempts. */
  reconnectDelayMs?: number;
  /** Automatic attempts before giving up and showing the retry control. */
  maxReconnectAttempts?: number;
  /** Compare the client log against GET /transcript once the session ends. */
  verifyOnDone?: boolean;
  /** Generation settings forwarded to session creation. */
  config?: GenerationConfig;
  fetchImpl?: FetchLike;
  sleep?: (ms: number) => Promise<void>;
  onChange?: () => void;
}

export interface SubmitResult {
  accepted: boolean;
  reason?: string;
  appliedAtS?: number;
}

interface OutboxItem {
  text: string;
  resolve: (r: SubmitResult) => void;
}

interface QueuedIntervention {
  text: string;
  ackTimestampS: number;
}

const defaultSleep = (ms: number) =>
  new Promise<void>((resolve) => setTimeout(resolve, ms));

export class SessionController {
  readonly client: ApiClient;
  readonly log = new EventLog();
  readonly player = new FramePlayer();

  state: ConnectionState = "idle";
  banner: string | null = null;
  sessionId: string | null = null;
  record: SessionRecord | null = null;
  elementCount = 0;
  doneReason: string | null = null;
  /** null until verified; [] means the log matched the server transcript. */
  transcriptDiffs: string[] | null = null;
  /** Set once any events had to be rebuilt from the server transcript. */
  degraded = false;
  interventionDisabledReason: string | null = null;
  /** Feedback from the last rejected submission (empty text, bad tokens). */
  interventionNote: string | null = null;

  /** Model tokens observed since the last flush boundary. */
  pendingRun: string[] = [];
  /** True when the unflushed run will never reach the transcript because the
   * session ended without a flush boundary. */
  pendingRunOrphaned = false;
  /** Acknowledged interventions awaiting proof of application. */
  queued: QueuedIntervention[] = [];
  /** Interventions whose POST failed mid-flight; outcome unknown until a
   * transcript sync settles it. */
  unconfirmed: string[] = [];
  /** Acknowledged interventions the session ended before applying. */
  notApplied: string[] = [];

  private readonly opts: Required<
    Pick<
      ControllerOptions,
      | "pollIntervalMs"
      | "eventsPerPoll"
      | "reconnectDelayMs"
      | "maxReconnectAttempts"
      | "verifyOnDone"
    >
  >;
  private readonly config?: GenerationConfig;
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly onChange?: () => void;

  private outbox: OutboxItem[] = [];
  private bufferEmpty = true;
  private nextChunkIndex = 0;
  private gapPending = false;
  private stopped = false;
  private loopActive = false;
  private inFlightSteps = 0;
  private startArgs: { prompt: string; condFrame?: string } | null = null;
  private donePromise: Promise<void> | null = null;
  private resolveDone: (() => void) | null = null;

  constructor(serverUrl: string, options: ControllerOptions = {}) {
    this.client = new ApiClient(serverUrl, options.fetchImpl);
    this.opts = {
      pollIntervalMs: options.pollIntervalMs ?? 250,
      eventsPerPoll: options.eventsPerPoll ?? 8,
      reconnectDelayMs: options.reconnectDelayMs ?? 1000,
      maxReconnectAttempts: options.maxReconnectAttempts ?? 5,
      verifyOnDone: options.verifyOnDone ?? true,
    };
    this.config = options.config;
    this.sleep = options.sleep ?? defaultSleep;
    this.onChange = options.onChange;
  }

  private notify(): void {
    this.onChange?.();
  }

  /**
   * Create the session and poll it to completion. Resolves when the session
   * is done, the loop is stopped, or reconnection gives up.
   */
  start(prompt: string, condFrame?: string): Promise<void> {
    if (this.state !== "idle") {
      throw new Error(`start() called in state ${this.state}`);
    }
    this.startArgs = { prompt, condFrame };
    this.donePromise = new Promise<void>((resolve) => {
      this.resolveDone = resolve;
    });
    void this.connectAndRun();
    return this.donePromise;
  }

  /** Manual retry control for the failed state. */
  retry(): void {
    if (this.state !== "failed") return;
    this.banner = null;
    if (this.sessionId === null) {
      void this.connectAndRun();
    } else {
      this.state = "reconnecting";
      this.notify();
      void this.runLoop();
    }
  }

  /** Stop polling; the server session is left as-is. */
  stop(): void {
    this.stopped = true;
  }

  /**
   * Queue steering text for the live rollout. Empty submissions are blocked
   * before any request is made. The returned promise settles when the
   * service acknowledges (or rejects) the intervention.
   */
  submitIntervention(text: string): Promise<SubmitResult> {
    if (text.trim() === "") {
      this.interventionNote = "intervention text is empty; nothing sent";
      this.notify();
      return Promise.resolve({ accepted: false, reason: "empty_text" });
    }
    if (this.interventionDisabledReason !== null) {
      this.notify();
      return Promise.resolve({
        accepted: false,
        reason: this.interventionDisabledReason,
      });
    }
    if (this.state === "idle" || this.state === "failed") {
      return Promise.resolve({
        accepted: false,
        reason: `no live session (state: ${this.state})`,
      });
    }
    return new Promise<SubmitResult>((resolve) => {
      this.outbox.push({ text, resolve });
      this.notify();
    });
  }

  private finishLoop(): void {
    this.loopActive = false;
    // The start() promise settles at any terminal state. A later retry()
    // revives the controller but not the promise; callers observing a
    // revived session should watch the view instead.
    if (this.state === "done" || this.state === "failed" || this.stopped) {
      this.resolveDone?.();
    }
  }

  private async connectAndRun(): Promise<void> {
    const args = this.startArgs!;
    this.state = "connecting";
    this.notify();
    let record: SessionRecord;
    try {
      record = await this.client.createSession({
        prompt: args.prompt,
        ...(args.condFrame !== undefined ? { cond_frame: args.condFrame } : {}),
        ...(this.config !== undefined ? { config: this.config } : {}),
      });
    } catch (err) {
      this.state = "failed";
      this.banner =
        err instanceof ApiError
          ? `the server rejected the session: ${err.message}`
          : `cannot reach the server: ${(err as Error).message}`;
      this.notify();
      this.finishLoop();
      return;
    }
    this.record = record;
    this.sessionId = record.id;
    this.elementCount = record.element_count;
    this.log.append({
      kind: "text",
      timestampS: 0,
      text: args.prompt,
      source: "user",
    });
    if (args.condFrame !== undefined) {
      this.log.append({ kind: "text", timestampS: 0, text: "<bof>", source: "user" });
      this.log.append({
        kind: "chunk",
        timestampS: 0,
        source: "user",
        chunkIndex: 0,
        frames: [args.condFrame],
        nFrames: 1,
      });
      this.log.append({ kind: "text", timestampS: 0, text: "<eof>", source: "user" });
      this.player.append([
        { pngBase64: args.condFrame, chunkIndex: 0, frameIndex: 0 },
      ]);
      this.nextChunkIndex = 1;
    } else {
      this.nextChunkIndex = 0;
    }
    this.bufferEmpty = true;
    this.state = "streaming";
    this.banner = null;
    this.notify();
    await this.runLoop();
  }

  private async runLoop(): Promise<void> {
    if (this.loopActive) throw new Error("poll loop already running");
    this.loopActive = true;
    const id = this.sessionId!;
    while (!this.stopped && (this.state === "streaming" || this.state === "reconnecting")) {
      if (this.state === "reconnecting") {
        const recovered = await this.reconnect(id);
        if (!recovered) break;
      }
      try {
        await this.drainOutbox(id);
        if (this.stopped || this.state !== "streaming") continue;
        if (this.inFlightSteps !== 0) {
          throw new Error("step request already in flight");
        }
        this.inFlightSteps += 1;
        let resp: StepResponse;
        try {
          // While a gap is unresolved, poll one event at a time so each
          // transcript sync covers exactly one server-side step.
          const nEvents = this.gapPending ? 1 : this.opts.eventsPerPoll;
          resp = await this.client.step(id, nEvents);
        } finally {
          this.inFlightSteps -= 1;
        }
        await this.handleStepResponse(resp);
        if (this.state !== "streaming") continue;
        await this.sleep(this.opts.pollIntervalMs);
      } catch (err) {
        if (err instanceof NetworkError) {
          // The request may or may not have executed server-side; treat the
          // history beyond what we saw as unknown until a transcript sync.
          this.gapPending = true;
          this.state = "reconnecting";
          this.banner = `connection lost: ${err.message}`;
          this.notify();
        } else if (err instanceof ApiError && err.code === "unknown_session") {
          this.state = "failed";
          this.banner =
            "the server no longer knows this session (it may have restarted); reconnection is not possible";
          this.notify();
          break;
        } else {
          this.state = "failed";
          this.banner = `unexpected error: ${(err as Error).message}`;
          this.notify();
          break;
        }
      }
    }
    if (this.state === "done" && this.opts.verifyOnDone) {
      await this.verifyTranscript(id);
    }
    this.finishLoop();
  }

  private async reconnect(id: string): Promise<boolean> {
    for (
      let attempt = 1;
      attempt <= this.opts.maxReconnectAttempts && !this.stopped;
      attempt++
    ) {
      this.banner = `connection lost; retrying (attempt ${attempt} of ${this.opts.maxReconnectAttempts})`;
      this.notify();
      await this.sleep(this.opts.reconnectDelayMs * Math.min(attempt, 4));
      try {
        this.record = await this.client.getSession(id);
        this.elementCount = this.record.element_count;
        this.state = "streaming";
        this.banner = this.degraded
          ? "reconnected; some events were rebuilt from the server transcript"
          : "reconnected";
        this.notify();
        return true;
      } catch (err) {
        if (err instanceof ApiError) {
          this.state = "failed";
          this.banner = `cannot resume session: ${err.message}`;
          this.notify();
          return false;
        }
        // Still unreachable; try again.
      }
    }
    if (!this.stopped) {
      this.state = "failed";
      this.banner =
        "connection lost and automatic retries exhausted; use retry to continue";
      this.notify();
    }
    return false;
  }

  private async drainOutbox(id: string): Promise<void> {
    while (this.outbox.length > 0 && this.state === "streaming") {
      const item = this.outbox[0]!;
      let ack: InterveneResponse;
      try {
        ack = await this.client.intervene(id, item.text);
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          this.interventionDisabledReason = `interventions are closed: ${err.message}`;
          item.resolve({ accepted: false, reason: err.code });
          this.outbox.shift();
          this.notify();
          continue;
        }
        if (err instanceof ApiError) {
          this.interventionNote = `intervention rejected: ${err.message}`;
          item.resolve({ accepted: false, reason: err.code });
          this.outbox.shift();
          this.notify();
          continue;
        }
        // Network failure: the service may or may not have queued the text.
        this.unconfirmed.push(item.text);
        item.resolve({
          accepted: false,
          reason: "connection lost before acknowledgement; outcome unknown",
        });
        this.outbox.shift();
        throw err;
      }
      this.queued.push({ text: item.text, ackTimestampS: ack.applied_at_s });
      item.resolve({ accepted: true, appliedAtS: ack.applied_at_s });
      this.outbox.shift();
      this.notify();
    }
  }

  private async handleStepResponse(resp: StepResponse): Promise<void> {
    const events = resp.events;
    const first = events[0];
    if (first !== undefined) {
      this.settleQueuedInterventions(first);
    }
    for (const event of events) {
      await this.handleEvent(event);
    }
    this.elementCount = resp.element_count;
    this.notify();
  }

  /**
   * Acknowledged interventions are applied by the server at the start of the
   * first step that begins with an empty text buffer, except when that step
   * terminates before sampling (already done, or the element budget is
   * exhausted). The first event of a step response tells us which case
   * happened.
   */
  private settleQueuedInterventions(firstEvent: StepEvent): void {
    // During a gap the buffer mirror is unreliable and the transcript sync
    // recovers applied interventions itself, so stay out of its way.
    if (this.gapPending) return;
    if (this.queued.length === 0 || !this.bufferEmpty) return;
    const terminatedEarly =
      firstEvent.type === "done" &&
      (firstEvent.reason === "already_done" || firstEvent.reason === "max_elements");
    if (terminatedEarly) {
      for (const q of this.queued) this.notApplied.push(q.text);
      this.queued = [];
      this.notify();
      return;
    }
    const ts = chunkTimestamp(this.nextChunkIndex);
    for (const q of this.queued) {
      this.log.append({ kind: "text", timestampS: ts, text: q.text, source: "user" });
    }
    this.queued = [];
    this.notify();
  }

  private async handleEvent(event: StepEvent): Promise<void> {
    if (event.type === "text") {
      this.pendingRun.push(event.text);
      this.bufferEmpty = false;
      this.notify();
      return;
    }
    if (event.type === "chunk") {
      await this.handleChunk(event);
      return;
    }
    await this.handleDone(event);
  }

  private async handleChunk(event: ChunkEvent): Promise<void> {
    if (this.gapPending) {
      await this.syncFromTranscript(event);
    } else {
      const ts = event.timestamp_s;
      if (this.pendingRun.length > 0) {
        this.log.append({
          kind: "text",
          timestampS: ts,
          text: this.pendingRun.join(""),
          source: "model",
        });
        this.pendingRun = [];
      }
      this.log.append({ kind: "text", timestampS: ts, text: "<bof>", source: "model" });
      this.log.append({
        kind: "chunk",
        timestampS: ts,
        source: "model",
        chunkIndex: event.chunk_index,
        frames: event.frames_png_base64,
        nFrames: event.frames_png_base64.length,
      });
      this.log.append({ kind: "text", timestampS: ts, text: "<eof>", source: "model" });
      this.player.append(
        event.frames_png_base64.map((png, i) => ({
          pngBase64: png,
          chunkIndex: event.chunk_index,
          frameIndex: i,
        })),
      );
      this.nextChunkIndex = event.chunk_index + 1;
    }
    this.bufferEmpty = true;
    this.notify();
  }

  private async handleDone(event: DoneEvent): Promise<void> {
    let reason = event.reason;
    if (this.gapPending) {
      const sawEos = await this.syncFromTranscript(null);
      if (sawEos && reason === "already_done") reason = "eos";
      this.bufferEmpty = true;
    } else if (event.reason === "eos") {
      const ts = chunkTimestamp(this.nextChunkIndex);
      if (this.pendingRun.length > 0) {
        this.log.append({
          kind: "text",
          timestampS: ts,
          text: this.pendingRun.join(""),
          source: "model",
        });
        this.pendingRun = [];
      }
      this.log.append({ kind: "text", timestampS: ts, text: "<eos>", source: "model" });
      this.bufferEmpty = true;
    } else if (this.pendingRun.length > 0) {
      // No flush boundary was reached: the sampled run never enters the
      // transcript. Keep it visible but out of the canonical projection.
      this.pendingRunOrphaned = true;
    }
    for (const q of this.queued) this.notApplied.push(q.text);
    this.queued = [];
    const lastTs =
      this.log.length > 0
        ? this.log.entries[this.log.length - 1]!.timestampS
        : 0;
    this.log.append({ kind: "done", timestampS: lastTs, reason });
    this.doneReason = reason;
    this.state = "done";
    this.interventionDisabledReason =
      "the session is finished; interventions can no longer be applied";
    this.notify();
  }

  /**
   * Rebuild any transcript entries the client missed (a step executed but
   * its response was lost). Entries the client already holds must prefix-
   * match the server's; everything beyond is appended verbatim, with frames
   * attached only for `liveChunk`, the chunk event that triggered this sync.
   * Returns whether the appended tail contains the end-of-sequence marker.
   */
  private async syncFromTranscript(liveChunk: ChunkEvent | null): Promise<boolean> {
    const id = this.sessionId!;
    const raw = await this.client.transcript(id);
    const server = parseTranscript(raw);
    const have = projectLog(this.log.entries);
    const prefixDiffs = diffTranscript(have, server.slice(0, have.length));
    if (prefixDiffs.length > 0) {
      this.banner = `client and server transcripts diverged: ${prefixDiffs[0]}`;
      this.transcriptDiffs = prefixDiffs;
      this.notify();
      throw new Error(this.banner);
    }
    const tail = server.slice(have.length);
    if (tail.length === 0) {
      // The lost request never executed; nothing was missed.
      this.gapPending = false;
      this.banner = "reconnected; no events were lost";
      this.notify();
      return false;
    }
    let sawEos = false;
    const chunkTail = tail.filter(
      (e): e is TranscriptChunkEntry => e.type === "chunk",
    );
    let chunkSeen = 0;
    for (const entry of tail) {
      if (entry.type === "text") {
        sawEos = sawEos || entry.text === "<eos>";
        const appliedUser =
          entry.source === "user" ? this.takeRecoveredIntervention(entry.text) : false;
        this.log.append({
          kind: "text",
          timestampS: entry.timestamp_s,
          text: entry.text,
          source: entry.source === "user" ? "user" : "model",
          recovered: !appliedUser ? true : undefined,
        });
      } else {
        chunkSeen += 1;
        const isLive =
          liveChunk !== null && chunkSeen === chunkTail.length;
        if (isLive) {
          this.log.append({
            kind: "chunk",
            timestampS: entry.timestamp_s,
            source: "model",
            chunkIndex: liveChunk.chunk_index,
            frames: liveChunk.frames_png_base64,
            nFrames: liveChunk.frames_png_base64.length,
          });
          this.player.append(
            liveChunk.frames_png_base64.map((png, i) => ({
              pngBase64: png,
              chunkIndex: liveChunk.chunk_index,
              frameIndex: i,
            })),
          );
          this.nextChunkIndex = liveChunk.chunk_index + 1;
        } else {
          // The service never re-indexes chunks, so a recovered chunk's
          // index is the one the client was expecting next.
          this.log.append({
            kind: "chunk",
            timestampS: entry.timestamp_s,
            source: entry.source === "user" ? "user" : "model",
            chunkIndex: this.nextChunkIndex,
            frames: [],
            nFrames: entry.frame_checksums.length,
            recovered: true,
          });
          this.nextChunkIndex += 1;
        }
      }
    }
    this.pendingRun = [];
    this.gapPending = false;
    this.degraded = true;
    this.banner =
      "recovered missed events from the server transcript; frames from the lost response were not retransmitted";
    this.notify();
    return sawEos;
  }

  /** Settle a queued or unconfirmed intervention recovered via transcript. */
  private takeRecoveredIntervention(text: string): boolean {
    const qi = this.queued.findIndex((q) => q.text === text);
    if (qi >= 0) {
      this.queued.splice(qi, 1);
      return true;
    }
    const ui = this.unconfirmed.indexOf(text);
    if (ui >= 0) {
      this.unconfirmed.splice(ui, 1);
      return true;
    }
    return false;
  }

  private async verifyTranscript(id: string): Promise<void> {
    try {
      const raw = await this.client.transcript(id);
      const server = parseTranscript(raw);
      this.transcriptDiffs = diffTranscript(projectLog(this.log.entries), server);
    } catch (err) {
      this.transcriptDiffs = null;
      this.banner = `could not verify the transcript: ${(err as Error).message}`;
    }
    this.notify();
  }
}

/**
 * Create a session against `serverUrl` and poll it live. Returns the
 * controller (the live view) plus a promise that settles when the rollout
 * completes or connectivity gives out.
 */
export function connectAndPoll(
  serverUrl: string,
  prompt: string,
  condFrame?: string,
  options: ControllerOptions = {},
): { controller: SessionController; done: Promise<void> } {
  const controller = new SessionController(serverUrl, options);
  const done = controller.start(prompt, condFrame);
  return { controller, done };
}
