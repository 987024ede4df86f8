import { Bookmark, GazeRanges, Pose, ScheduleDocument, ZERO_POSE } from "./types";

const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));

/**
 * Viewer state: the current pose (always clamped to the advertised slider
 * bounds), bookmarks, and schedule export. The client-side clamp mirrors the
 * server clamp so out-of-bounds values are never sent.
 */
export class ViewerState {
  ranges: GazeRanges | null = null;
  pose: Pose = { ...ZERO_POSE };
  bookmarks: Bookmark[] = [];
  lastLatencyMs: number | null = null;

  get ready(): boolean {
    return this.ranges !== null;
  }

  setRanges(ranges: GazeRanges): void {
    this.ranges = ranges;
    this.pose = this.clampPose(this.pose);
  }

  clampPose(pose: Pose): Pose {
    if (!this.ranges) return { ...pose };
    const [pLo, pHi] = this.ranges.pitch;
    const [yLo, yHi] = this.ranges.yaw;
    return {
      pitch_left: clamp(pose.pitch_left, pLo, pHi),
      yaw_left: clamp(pose.yaw_left, yLo, yHi),
      pitch_right: clamp(pose.pitch_right, pLo, pHi),
      yaw_right: clamp(pose.yaw_right, yLo, yHi),
      closing: clamp(pose.closing, 0, 1),
    };
  }

  update(partial: Partial<Pose>): Pose {
    this.pose = this.clampPose({ ...this.pose, ...partial });
    return this.pose;
  }

  addBookmark(name: string): Bookmark {
    const bookmark = { name, pose: { ...this.pose } };
    this.bookmarks.push(bookmark);
    return bookmark;
  }

  removeBookmark(index: number): void {
    this.bookmarks.splice(index, 1);
  }

  /** Ordered bookmarks as the `animate` CLI schedule document. */
  exportSchedule(): ScheduleDocument {
    return { entries: this.bookmarks.map((b) => ({ ...b.pose })) };
  }
}

export const posesEqual = (a: Pose, b: Pose): boolean =>
  a.pitch_left === b.pitch_left &&
  a.yaw_left === b.yaw_left &&
  a.pitch_right === b.pitch_right &&
  a.yaw_right === b.yaw_right &&
  a.closing === b.closing;
