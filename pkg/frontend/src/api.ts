/** Typed client for the sg2vid HTTP API. */

import type { EditOp } from "./graph";

export interface JobStatus {
  job_id: string;
  graph_id: string;
  checkpoint_id: string;
  seed: number;
  steps: number | null;
  has_first_frame: boolean;
  status: "queued" | "running" | "done" | "failed";
  progress: number;
  frame_count: number;
  error: string | null;
}

export interface CheckpointInfo {
  checkpoint_id: string;
  manifest: {
    mode: "conditioned" | "ximg";
    n: number;
    resolution: number;
    class_names: string[];
    [key: string]: unknown;
  };
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(res.status, detail);
}

export class Api {
  constructor(private base: string = "") {}

  async uploadGraph(canonicalText: string): Promise<string> {
    const res = await fetch(`${this.base}/api/graphs`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: canonicalText,
    });
    await raiseForStatus(res);
    return (await res.json()).graph_id;
  }

  /** Raw canonical bytes, exactly as the server stores them. */
  async getGraphText(graphId: string): Promise<string> {
    const res = await fetch(`${this.base}/api/graphs/${graphId}`);
    await raiseForStatus(res);
    return res.text();
  }

  async postEdits(graphId: string, ops: EditOp[]): Promise<string> {
    const res = await fetch(`${this.base}/api/graphs/${graphId}/edits`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(ops),
    });
    await raiseForStatus(res);
    return (await res.json()).graph_id;
  }

  async generate(request: {
    graph_id: string;
    checkpoint_id: string;
    seed: number;
    steps?: number;
    first_frame_png?: string;
  }): Promise<string> {
    const res = await fetch(`${this.base}/api/generate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    await raiseForStatus(res);
    return (await res.json()).job_id;
  }

  async getJob(jobId: string): Promise<JobStatus> {
    const res = await fetch(`${this.base}/api/jobs/${jobId}`);
    await raiseForStatus(res);
    return res.json();
  }

  frameUrl(jobId: string, k: number): string {
    return `${this.base}/api/jobs/${jobId}/frames/${k}`;
  }

  async fetchFramePng(jobId: string, k: number): Promise<ArrayBuffer> {
    const res = await fetch(this.frameUrl(jobId, k));
    await raiseForStatus(res);
    return res.arrayBuffer();
  }

  async listCheckpoints(): Promise<CheckpointInfo[]> {
    const res = await fetch(`${this.base}/api/checkpoints`);
    await raiseForStatus(res);
    return res.json();
  }

  /** Yield job states until a terminal one; polls every intervalMs. */
  async *pollJob(jobId: string, intervalMs = 400): AsyncGenerator<JobStatus> {
    for (;;) {
      const job = await this.getJob(jobId);
      yield job;
      if (job.status === "done" || job.status === "failed") return;
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }
}
