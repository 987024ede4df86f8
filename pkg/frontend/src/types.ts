export interface GazeRanges {
  pitch: [number, number];
  yaw: [number, number];
}

export interface ServerInfo {
  checkpoint_id: string;
  gaze_ranges: GazeRanges;
  camera_presets: string[];
  max_size: number;
  default_size: number;
}

export interface Pose {
  pitch_left: number;
  yaw_left: number;
  pitch_right: number;
  yaw_right: number;
  closing: number;
}

export interface Bookmark {
  name: string;
  pose: Pose;
}

/** Schedule document consumed unchanged by the `animate` CLI. */
export interface ScheduleDocument {
  entries: Pose[];
}

export const ZERO_POSE: Pose = {
  pitch_left: 0,
  yaw_left: 0,
  pitch_right: 0,
  yaw_right: 0,
  closing: 0,
};
