import { PoseClient, RenderResult } from "./api";
import { posesEqual } from "./state";
import { Pose } from "./types";

/**
 * Serializes preview rendering: at most one /render in flight, the newest
 * pose wins, stale responses are discarded by sequence number, and identical
 * consecutive poses do not trigger duplicate requests.
 */
export class PreviewLoop {
  private seq = 0;
  private latestShown = 0;
  private inflight = false;
  private pending: Pose | null = null;
  private lastRequested: Pose | null = null;
  requestLog: Pose[] = [];

  constructor(
    private client: PoseClient,
    private size: number,
    private onResult: (result: RenderResult) => void,
    private onError: (err: unknown) => void = () => {},
  ) {}

  request(pose: Pose): void {
    if (this.lastRequested && posesEqual(pose, this.lastRequested) && this.pending === null) {
      return;
    }
    if (this.inflight) {
      this.pending = { ...pose };
      return;
    }
    void this.dispatch({ ...pose });
  }

  private async dispatch(pose: Pose): Promise<void> {
    this.inflight = true;
    this.lastRequested = pose;
    this.requestLog.push(pose);
    const seq = ++this.seq;
    try {
      const result = await this.client.render(pose, this.size, seq);
      if (result.seq > this.latestShown) {
        this.latestShown = result.seq;
        this.onResult(result);
      }
    } catch (err) {
      this.onError(err);
    } finally {
      this.inflight = false;
      const next = this.pending;
      this.pending = null;
      if (next && (!this.lastRequested || !posesEqual(next, this.lastRequested))) {
        void this.dispatch(next);
      }
    }
  }

  get idle(): boolean {
    return !this.inflight && this.pending === null;
  }
}

/** Closing sweep for the blink button: 0 -> 1 -> 0 over `steps` poses,
 * monotone up then monotone down. */
export function blinkSweep(base: Pose, steps = 12): Pose[] {
  const half = steps / 2;
  const poses: Pose[] = [];
  for (let i = 0; i < steps; i++) {
    const closing = i < half ? (i + 1) / half : (steps - 1 - i) / half;
    poses.push({ ...base, closing: Math.min(1, Math.max(0, closing)) });
  }
  return poses;
}
