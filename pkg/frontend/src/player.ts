/**
 * Frame playback at a nominal 16 frames per second.
 *
 * Frames arrive in bursts (four per generated chunk, usually slower than
 * real time), so the player advances its cursor one frame per due tick,
 * pauses when it reaches the live tail, and resumes as new frames land.
 * Time is injected through `tick(nowMs)` so the cadence is testable without
 * real timers; the DOM layer drives it from an interval timer.
 */

export interface PlayerFrame {
  pngBase64: string;
  /** 0 for the conditioning frame, 1.. for generated chunks. */
  chunkIndex: number;
  /** Position of this frame within its chunk. */
  frameIndex: number;
}

export const NOMINAL_FPS = 16;

export class FramePlayer {
  readonly frameIntervalMs: number;
  private readonly buffer: PlayerFrame[] = [];
  private cursorIndex = -1;
  private nextDueAtMs: number | null = null;
  private running = false;

  constructor(fps: number = NOMINAL_FPS) {
    if (fps <= 0) throw new Error("fps must be positive");
    this.frameIntervalMs = 1000 / fps;
  }

  get frameCount(): number {
    return this.buffer.length;
  }

  /** Index of the frame currently shown, or -1 before the first frame. */
  get playbackCursor(): number {
    return this.cursorIndex;
  }

  get isRunning(): boolean {
    return this.running;
  }

  get currentFrame(): PlayerFrame | null {
    return this.cursorIndex >= 0 ? this.buffer[this.cursorIndex]! : null;
  }

  append(frames: PlayerFrame[]): void {
    this.buffer.push(...frames);
  }

  start(nowMs: number): void {
    this.running = true;
    if (this.nextDueAtMs === null) this.nextDueAtMs = nowMs;
  }

  stop(): void {
    this.running = false;
  }

  /**
   * Advance at most one frame if its display time has come. Returns the
   * newly current frame when the cursor moved, otherwise null.
   *
   * While on schedule the due time advances by exactly one frame interval,
   * so the cadence does not drift with tick jitter. After falling behind
   * (starved at the live tail, or the tick driver stalled) the schedule
   * re-anchors to `nowMs` instead of bursting through the backlog, keeping
   * the on-screen rate at or below nominal.
   */
  tick(nowMs: number): PlayerFrame | null {
    if (!this.running || this.nextDueAtMs === null) return null;
    if (nowMs < this.nextDueAtMs) return null;
    if (this.cursorIndex >= this.buffer.length - 1) return null;
    this.cursorIndex += 1;
    const lagMs = nowMs - this.nextDueAtMs;
    this.nextDueAtMs =
      lagMs > this.frameIntervalMs
        ? nowMs + this.frameIntervalMs
        : this.nextDueAtMs + this.frameIntervalMs;
    return this.buffer[this.cursorIndex]!;
  }
}
