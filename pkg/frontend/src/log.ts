/**
 * Append-only event log mirroring the server's transcript structure.
 *
 * The server transcript is JSON lines of two shapes:
 *
 *   {"type": "text",  "timestamp_s": t, "text": s,               "source": "model"|"user"}
 *   {"type": "chunk", "timestamp_s": t, "frame_checksums": [..], "source": "model"|"user"}
 *
 * The log stores the client-side view of the same sequence, plus a terminal
 * done marker that the server transcript does not carry. `projectLog` strips
 * client-only fields so the result can be diffed entry-for-entry against the
 * parsed server transcript. Checksums are computed server-side over the raw
 * float frames before PNG quantization, so the client compares frame counts,
 * not checksum values.
 */

export type LogSource = "model" | "user";

export interface TextLogEntry {
  kind: "text";
  timestampS: number;
  text: string;
  source: LogSource;
  /** True when the entry was rebuilt from the server transcript after a
   * connection drop rather than observed as a live event. */
  recovered?: boolean;
}

export interface ChunkLogEntry {
  kind: "chunk";
  timestampS: number;
  source: LogSource;
  /** 0 for the conditioning chunk, 1.. for generated chunks, null when the
   * index is unknown (recovered entries). */
  chunkIndex: number | null;
  /** Base64 PNG per frame. Empty for recovered chunks whose step response
   * was lost; `nFrames` still records how many frames the server committed. */
  frames: string[];
  nFrames: number;
  recovered?: boolean;
}

export interface DoneLogEntry {
  kind: "done";
  timestampS: number;
  reason: string;
}

export type LogEntry = TextLogEntry | ChunkLogEntry | DoneLogEntry;

export class EventLog {
  private readonly items: LogEntry[] = [];

  get entries(): readonly LogEntry[] {
    return this.items;
  }

  get length(): number {
    return this.items.length;
  }

  /** Number of model-generated chunk entries (the conditioning chunk at
   * timestamp 0 is excluded). */
  get generatedChunkCount(): number {
    return this.items.filter(
      (e) => e.kind === "chunk" && e.source === "model",
    ).length;
  }

  /** Frames with pixels actually present in the client. */
  get frameCount(): number {
    let n = 0;
    for (const e of this.items) {
      if (e.kind === "chunk") n += e.frames.length;
    }
    return n;
  }

  append(entry: LogEntry): void {
    const last = this.items[this.items.length - 1];
    if (last && entry.timestampS < last.timestampS - 1e-9) {
      throw new Error(
        `log must stay ordered by timestamp: ${entry.timestampS} after ${last.timestampS}`,
      );
    }
    if (last && last.kind === "done") {
      throw new Error("cannot append past the done marker");
    }
    this.items.push(entry);
  }
}

export interface TranscriptTextEntry {
  type: "text";
  timestamp_s: number;
  text: string;
  source: string;
}

export interface TranscriptChunkEntry {
  type: "chunk";
  timestamp_s: number;
  frame_checksums: string[];
  source: string;
}

export type TranscriptEntry = TranscriptTextEntry | TranscriptChunkEntry;

export function parseTranscript(jsonl: string): TranscriptEntry[] {
  const out: TranscriptEntry[] = [];
  for (const line of jsonl.split("\n")) {
    if (line.trim() === "") continue;
    const obj = JSON.parse(line) as Record<string, unknown>;
    if (obj.type === "text") {
      out.push({
        type: "text",
        timestamp_s: Number(obj.timestamp_s),
        text: String(obj.text),
        source: String(obj.source),
      });
    } else if (obj.type === "chunk") {
      out.push({
        type: "chunk",
        timestamp_s: Number(obj.timestamp_s),
        frame_checksums: (obj.frame_checksums as string[]) ?? [],
        source: String(obj.source),
      });
    } else {
      throw new Error(`unknown transcript entry type: ${String(obj.type)}`);
    }
  }
  return out;
}

/** A log entry reduced to the fields the server transcript also carries. */
export interface ProjectedEntry {
  type: "text" | "chunk";
  timestamp_s: number;
  text?: string;
  n_frames?: number;
  source: LogSource;
}

/**
 * Project the client log onto the server transcript shape. The done marker
 * is client-only and dropped.
 */
export function projectLog(entries: readonly LogEntry[]): ProjectedEntry[] {
  const out: ProjectedEntry[] = [];
  for (const e of entries) {
    if (e.kind === "text") {
      out.push({
        type: "text",
        timestamp_s: e.timestampS,
        text: e.text,
        source: e.source,
      });
    } else if (e.kind === "chunk") {
      out.push({
        type: "chunk",
        timestamp_s: e.timestampS,
        n_frames: e.nFrames,
        source: e.source,
      });
    }
  }
  return out;
}

const TS_TOL = 1e-9;

/**
 * Entry-for-entry comparison of the projected client log against the parsed
 * server transcript. Returns human-readable mismatch descriptions; an empty
 * array means the two agree in order, timing, text, sources, and per-chunk
 * frame counts.
 */
export function diffTranscript(
  ui: ProjectedEntry[],
  server: TranscriptEntry[],
): string[] {
  const diffs: string[] = [];
  const n = Math.max(ui.length, server.length);
  for (let i = 0; i < n; i++) {
    const a = ui[i];
    const b = server[i];
    if (!a) {
      diffs.push(`entry ${i}: missing in client log (server has ${b!.type})`);
      continue;
    }
    if (!b) {
      diffs.push(`entry ${i}: extra in client log (${a.type})`);
      continue;
    }
    if (a.type !== b.type) {
      diffs.push(`entry ${i}: type ${a.type} != ${b.type}`);
      continue;
    }
    if (Math.abs(a.timestamp_s - b.timestamp_s) > TS_TOL) {
      diffs.push(
        `entry ${i}: timestamp ${a.timestamp_s} != ${b.timestamp_s}`,
      );
    }
    if (a.source !== b.source) {
      diffs.push(`entry ${i}: source ${a.source} != ${b.source}`);
    }
    if (a.type === "text" && b.type === "text" && a.text !== b.text) {
      diffs.push(
        `entry ${i}: text ${JSON.stringify(a.text)} != ${JSON.stringify(b.text)}`,
      );
    }
    if (
      a.type === "chunk" &&
      b.type === "chunk" &&
      a.n_frames !== b.frame_checksums.length
    ) {
      diffs.push(
        `entry ${i}: frame count ${a.n_frames} != ${b.frame_checksums.length}`,
      );
    }
  }
  return diffs;
}
