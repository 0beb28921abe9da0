/**
 * Editor session: the loaded document, undo/redo, pending edits and jobs.
 *
 * Edits are expressed exclusively as EditOps. The session keeps the ops
 * accumulated since the last server version; submitting replays them
 * server-side, which is the single source of truth. Undo/redo snapshot the
 * full document + pending-op list, so undo-then-redo restores the exact
 * state. Chaining records the previous job's final frame as the next job's
 * first-frame source.
 */

import { canonicalGraphText } from "./canonical";
import {
  applyEdit,
  cloneDocument,
  validateDocument,
  type EditOp,
  type GraphDocument,
} from "./graph";
import type { Api, CheckpointInfo, JobStatus } from "./api";

export interface FirstFrameSource {
  kind: "upload" | "job_frame";
  pngBase64?: string; // upload
  jobId?: string; // job_frame
  frameIndex?: number;
}

interface Snapshot {
  document: GraphDocument;
  pendingOps: EditOp[];
}

export interface SessionJob {
  jobId: string;
  graphId: string;
  status: JobStatus | null;
  frameCount: number;
}

export class ModeConflict extends Error {}

export class EditorSession {
  document: GraphDocument;
  baseGraphId: string; // server version the pending ops apply to
  pendingOps: EditOp[] = [];
  selectedFrame = 0;
  selectedNode: number | null = null;
  firstFrame: FirstFrameSource | null = null;
  jobs: SessionJob[] = [];
  private undoStack: Snapshot[] = [];
  private redoStack: Snapshot[] = [];

  constructor(document: GraphDocument, baseGraphId: string, private api: Api) {
    validateDocument(document);
    this.document = document;
    this.baseGraphId = baseGraphId;
  }

  static async load(api: Api, graphId: string): Promise<EditorSession> {
    const text = await api.getGraphText(graphId);
    const doc = JSON.parse(text) as GraphDocument;
    return new EditorSession(doc, graphId, api);
  }

  get frameCount(): number {
    return this.document.graphs.length;
  }

  canonicalText(): string {
    return canonicalGraphText(this.document);
  }

  private snapshot(): Snapshot {
    return { document: cloneDocument(this.document), pendingOps: [...this.pendingOps] };
  }

  /** Apply one op locally; the op joins the pending list for replay. */
  edit(op: EditOp): void {
    const next = applyEdit(this.document, op); // throws before any state change
    validateDocument(next);
    this.undoStack.push(this.snapshot());
    this.redoStack = [];
    this.document = next;
    this.pendingOps.push(op);
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.redoStack.push(this.snapshot());
    this.document = prev.document;
    this.pendingOps = prev.pendingOps;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(this.snapshot());
    this.document = next.document;
    this.pendingOps = next.pendingOps;
    return true;
  }

  /** Replay pending ops server-side; the new version becomes the base. */
  async submitEdits(): Promise<string> {
    if (this.pendingOps.length === 0) return this.baseGraphId;
    const newId = await this.api.postEdits(this.baseGraphId, this.pendingOps);
    this.baseGraphId = newId;
    this.pendingOps = [];
    return newId;
  }

  /**
   * Mode gate mirroring the server's 409 contract: a conditioned checkpoint
   * requires a first frame, a ximg checkpoint refuses one.
   */
  checkModeCompatible(checkpoint: CheckpointInfo): void {
    const mode = checkpoint.manifest.mode;
    if (mode === "ximg" && this.firstFrame !== null) {
      throw new ModeConflict(
        "checkpoint is graph-only (ximg); clear the first frame before submitting",
      );
    }
    if (mode === "conditioned" && this.firstFrame === null) {
      throw new ModeConflict("conditioned checkpoint requires a first frame");
    }
  }

  async resolveFirstFramePng(): Promise<string | undefined> {
    if (!this.firstFrame) return undefined;
    if (this.firstFrame.kind === "upload") return this.firstFrame.pngBase64;
    const bytes = await this.api.fetchFramePng(
      this.firstFrame.jobId!,
      this.firstFrame.frameIndex!,
    );
    let binary = "";
    const view = new Uint8Array(bytes);
    for (let i = 0; i < view.length; i++) binary += String.fromCharCode(view[i]);
    return btoa(binary);
  }

  async submitJob(checkpoint: CheckpointInfo, seed: number,
                  steps?: number): Promise<SessionJob> {
    this.checkModeCompatible(checkpoint);
    const graphId = await this.submitEdits();
    const jobId = await this.api.generate({
      graph_id: graphId,
      checkpoint_id: checkpoint.checkpoint_id,
      seed,
      steps,
      first_frame_png: await this.resolveFirstFramePng(),
    });
    const job: SessionJob = { jobId, graphId, status: null, frameCount: 0 };
    this.jobs.push(job);
    return job;
  }

  async awaitJob(job: SessionJob): Promise<JobStatus> {
    for await (const status of this.api.pollJob(job.jobId)) {
      job.status = status;
      job.frameCount = status.frame_count;
    }
    return job.status!;
  }

  /** One-click chaining: the finished job's last frame seeds the next clip. */
  chainFromJob(job: SessionJob): void {
    if (!job.status || job.status.status !== "done") {
      throw new Error("can only chain from a finished job");
    }
    this.firstFrame = {
      kind: "job_frame",
      jobId: job.jobId,
      frameIndex: job.frameCount - 1,
    };
  }
}
