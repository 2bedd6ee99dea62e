import { describe, expect, it } from "vitest";

import { FramePlayer, type PlayerFrame } from "../src/player.js";

function frames(n: number, chunkIndex = 1): PlayerFrame[] {
  return Array.from({ length: n }, (_, i) => ({
    pngBase64: `png${chunkIndex}_${i}`,
    chunkIndex,
    frameIndex: i,
  }));
}

const INTERVAL = 62.5;

describe("FramePlayer", () => {
  it("advances one frame per interval at the nominal 16 frames per second", () => {
    const p = new FramePlayer();
    expect(p.frameIntervalMs).toBeCloseTo(INTERVAL, 9);
    p.append(frames(5));
    p.start(0);
    expect(p.tick(0)?.frameIndex).toBe(0);
    expect(p.tick(30)).toBeNull();
    expect(p.tick(INTERVAL)?.frameIndex).toBe(1);
    expect(p.tick(2 * INTERVAL)?.frameIndex).toBe(2);
    expect(p.tick(2 * INTERVAL + 1)).toBeNull();
    expect(p.playbackCursor).toBe(2);
  });

  it("holds at the live tail and resumes when frames arrive", () => {
    const p = new FramePlayer();
    p.append(frames(2));
    p.start(0);
    expect(p.tick(0)?.frameIndex).toBe(0);
    expect(p.tick(INTERVAL)?.frameIndex).toBe(1);
    expect(p.tick(2 * INTERVAL)).toBeNull();
    expect(p.tick(5000)).toBeNull();
    p.append(frames(1, 2));
    expect(p.tick(5000)?.chunkIndex).toBe(2);
    expect(p.playbackCursor).toBe(2);
    expect(p.frameCount).toBe(3);
  });

  it("re-anchors instead of bursting after falling behind schedule", () => {
    const p = new FramePlayer();
    p.append(frames(10));
    p.start(0);
    expect(p.tick(0)?.frameIndex).toBe(0);
    // The tick driver stalls for a second; only one frame may advance now.
    expect(p.tick(1000)?.frameIndex).toBe(1);
    expect(p.tick(1000)).toBeNull();
    expect(p.tick(1000 + INTERVAL - 1)).toBeNull();
    expect(p.tick(1000 + INTERVAL)?.frameIndex).toBe(2);
  });

  it("does nothing until started and stops advancing when stopped", () => {
    const p = new FramePlayer();
    p.append(frames(3));
    expect(p.tick(0)).toBeNull();
    p.start(0);
    expect(p.tick(0)?.frameIndex).toBe(0);
    p.stop();
    expect(p.tick(500)).toBeNull();
    expect(p.isRunning).toBe(false);
    expect(p.currentFrame?.frameIndex).toBe(0);
  });

  it("exposes cursor -1 and no current frame before playback", () => {
    const p = new FramePlayer();
    expect(p.playbackCursor).toBe(-1);
    expect(p.currentFrame).toBeNull();
    expect(p.frameCount).toBe(0);
  });

  it("rejects a nonpositive frame rate", () => {
    expect(() => new FramePlayer(0)).toThrow(/positive/);
  });
});
