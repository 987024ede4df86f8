import { Pose, ServerInfo } from "./types";

export interface RenderResult {
  imageUrl: string;
  clamped: boolean;
  seq: number;
  latencyMs: number;
}

export class PoseClient {
  constructor(private baseUrl: string, private fetchFn: typeof fetch = fetch) {}

  async info(): Promise<ServerInfo> {
    const resp = await this.fetchFn(`${this.baseUrl}/info`);
    if (!resp.ok) throw new Error(`info failed: ${resp.status}`);
    return (await resp.json()) as ServerInfo;
  }

  async render(pose: Pose, size: number, seq: number): Promise<RenderResult> {
    const start = Date.now();
    const resp = await this.fetchFn(`${this.baseUrl}/render`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ ...pose, size }),
    });
    if (!resp.ok) throw new Error(`render failed: ${resp.status}`);
    const blob = await resp.blob();
    return {
      imageUrl: URL.createObjectURL(blob),
      clamped: resp.headers.get("X-Clamped") === "true",
      seq,
      latencyMs: Date.now() - start,
    };
  }

  meshUrl(path: string): string {
    return `${this.baseUrl}${path}`;
  }
}
