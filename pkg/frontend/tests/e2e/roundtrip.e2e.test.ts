// @vitest-environment jsdom

/**
 * Round trip against a real planvid server (gated behind PLANVID_E2E=1; see
 * run_e2e.sh). A steered session is driven through the actual DOM view with
 * the browser-equivalent fetch, a matched-seed control session is driven
 * headlessly, and the two transcripts plus PNG payloads are compared:
 * pre-intervention chunks must be identical, the post-intervention chunk
 * must differ. The server encodes each frame deterministically, so PNG byte
 * equality is pixel equality, and the transcript's per-frame checksums are
 * computed server-side from the raw float frames before quantization.
 */

import { readFileSync } from "node:fs";
import { describe, expect, it, vi } from "vitest";

import { ApiClient, type FetchLike, type GenerationConfig } from "../../src/api.js";
import { buildApp } from "../../src/dom.js";
import {
  parseTranscript,
  type TranscriptChunkEntry,
  type TranscriptEntry,
} from "../../src/log.js";

const SERVER = process.env.PLANVID_SERVER_URL ?? "http://127.0.0.1:8731";
const FIXTURE_PATH = process.env.PLANVID_E2E_FIXTURE ?? "";

interface Fixture {
  prompt: string;
  cond_frame_b64: string;
  seed: number;
  ode_steps: number;
  intervention: string;
}

const realFetch: FetchLike = (url, init) => globalThis.fetch(url, init);

function modelChunks(entries: TranscriptEntry[]): TranscriptChunkEntry[] {
  return entries.filter(
    (e): e is TranscriptChunkEntry => e.type === "chunk" && e.source === "model",
  );
}

describe.skipIf(!process.env.PLANVID_E2E)("steering round trip", () => {
  it("applies a mid-session intervention that changes the next chunk's pixels", async () => {
    const fixture = JSON.parse(readFileSync(FIXTURE_PATH, "utf-8")) as Fixture;
    const config: GenerationConfig = {
      seed: fixture.seed,
      ode_steps: fixture.ode_steps,
    };

    // Steered session, driven through the DOM exactly as a user would:
    // type the prompt, attach the conditioning frame, click connect, then
    // click a palette move once two chunks have arrived. The long poll
    // interval leaves a wide idle window at the chunk boundary, so the
    // intervention is posted while the server's text buffer is empty and is
    // applied before the next chunk.
    const root = document.createElement("div");
    document.body.append(root);
    const app = buildApp(root, {
      serverUrl: SERVER,
      fetchImpl: realFetch,
      controller: { pollIntervalMs: 800, eventsPerPoll: 1, config },
      startTicker: false,
    });
    root.querySelector<HTMLInputElement>('[data-testid="prompt"]')!.value =
      fixture.prompt;
    app.setCondFrame(fixture.cond_frame_b64);
    root.querySelector<HTMLButtonElement>('[data-testid="connect"]')!.click();

    await vi.waitUntil(() => (app.controller?.log.generatedChunkCount ?? 0) >= 2, {
      timeout: 300_000,
      interval: 5,
    });
    const moveName = fixture.intervention.replace(/^\(/, "").replace(/\)\.$/, "");
    root.querySelector<HTMLButtonElement>(`button[data-action="${moveName}"]`)!.click();

    await vi.waitUntil(
      () => app.controller?.state === "done" && app.controller.transcriptDiffs !== null,
      { timeout: 480_000, interval: 20 },
    );
    const c = app.controller!;
    expect(c.doneReason).toBe("eos");
    expect(c.log.generatedChunkCount).toBeGreaterThanOrEqual(3);
    // The client's log matched the server transcript entry-for-entry.
    expect(c.transcriptDiffs).toEqual([]);

    // Frame accounting: one conditioning frame plus four per generated
    // chunk, in both the player and the transcript's checksum lists.
    const steeredTranscript = parseTranscript(await c.client.transcript(c.sessionId!));
    expect(c.player.frameCount).toBe(1 + 4 * c.log.generatedChunkCount);
    const checksumTotal = steeredTranscript
      .filter((e): e is TranscriptChunkEntry => e.type === "chunk")
      .reduce((a, e) => a + e.frame_checksums.length, 0);
    expect(c.player.frameCount).toBe(checksumTotal);

    // The user text sits in the server transcript after the second chunk
    // and before the next one.
    const ui = steeredTranscript.findIndex(
      (e) => e.type === "text" && e.source === "user" && e.text === fixture.intervention,
    );
    expect(ui).toBeGreaterThan(-1);
    const before = modelChunks(steeredTranscript.slice(0, ui));
    expect(before.length).toBeGreaterThanOrEqual(2);
    const after = modelChunks(steeredTranscript.slice(ui + 1));
    expect(after.length).toBeGreaterThanOrEqual(1);

    // Matched-seed no-op control, driven headlessly over the same API.
    const client = new ApiClient(SERVER, realFetch);
    const control = await client.createSession({
      prompt: fixture.prompt,
      cond_frame: fixture.cond_frame_b64,
      config,
    });
    const controlFrames = new Map<number, string[]>();
    let status: string = control.status;
    while (status !== "done") {
      const resp = await client.step(control.id, 8);
      for (const ev of resp.events) {
        if (ev.type === "chunk") controlFrames.set(ev.chunk_index, ev.frames_png_base64);
      }
      status = resp.status;
    }
    const controlTranscript = parseTranscript(await client.transcript(control.id));
    const controlChunks = modelChunks(controlTranscript);
    const steeredChunks = modelChunks(steeredTranscript);

    // Pre-intervention chunks are byte-identical between the two sessions,
    // both as encoded PNGs and as raw-frame checksums.
    const steeredLogChunks = c.log.entries.filter(
      (e) => e.kind === "chunk" && e.source === "model",
    ) as Extract<(typeof c.log.entries)[number], { kind: "chunk" }>[];
    const postIdx = before.length; // 0-based index of the post-intervention chunk
    for (let i = 0; i < postIdx; i++) {
      expect(steeredChunks[i]!.frame_checksums).toEqual(controlChunks[i]!.frame_checksums);
      const chunkIndex = steeredLogChunks[i]!.chunkIndex!;
      expect(steeredLogChunks[i]!.frames).toEqual(controlFrames.get(chunkIndex));
    }

    // The post-intervention chunk differs pixelwise from its control twin.
    expect(controlChunks.length).toBeGreaterThan(postIdx);
    expect(steeredChunks[postIdx]!.frame_checksums).not.toEqual(
      controlChunks[postIdx]!.frame_checksums,
    );
    const postChunkIndex = steeredLogChunks[postIdx]!.chunkIndex!;
    const controlTwin = controlFrames.get(postChunkIndex);
    expect(controlTwin).toBeDefined();
    expect(steeredLogChunks[postIdx]!.frames).not.toEqual(controlTwin);

    await client.deleteSession(control.id);
    await client.deleteSession(c.sessionId!);
    app.dispose();
  });
});
