"""HTTP service: graph storage, versioned edits, generation jobs.

Graphs are immutable: uploads and edit batches both produce new documents,
stored by content hash of their canonical bytes, so GETs return exactly the
bytes the validator accepted. Generation runs on a single-worker queue (one
owner of model state); job status/progress and produced frames are polled
over the same API. Status transitions only move forward:
queued -> running -> done | failed.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import queue
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from PIL import Image

from .diffusion.sampling import sample
from .diffusion.training import (
    DiffusionError,
    ModeConflictError,
    load_generation_checkpoint,
)
from .sg_core import (
    EditError,
    SchemaError,
    apply_edit,
    deserialize,
    document_to_edit_op,
    serialize,
)


@dataclass
class ServiceConfig:
    data_dir: Path
    checkpoint_dir: Path
    queue_capacity: int = 8
    default_steps: int | None = None

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        self.checkpoint_dir = Path(self.checkpoint_dir)


@dataclass
class GenerationJob:
    job_id: str
    graph_id: str
    checkpoint_id: str
    seed: int
    steps: int | None
    has_first_frame: bool
    status: str = "queued"
    progress: float = 0.0
    frame_count: int = 0
    error: str | None = None
    created_at: float = field(default_factory=time.time)

    def to_document(self) -> dict:
        doc = asdict(self)
        doc.pop("created_at")
        return doc


class GraphStore:
    """Append-only store of canonical graph documents, keyed by content."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put_text(self, text: str) -> str:
        seq = deserialize(text)  # raises SchemaError with a path
        canonical = serialize(seq)
        graph_id = hashlib.sha256(canonical.encode()).hexdigest()[:16]
        path = self.root / f"{graph_id}.json"
        if not path.exists():
            path.write_text(canonical)
        return graph_id

    def get_bytes(self, graph_id: str) -> bytes:
        path = self.root / f"{graph_id}.json"
        if not path.exists():
            raise KeyError(graph_id)
        return path.read_bytes()

    def get_sequence(self, graph_id: str):
        return deserialize(self.get_bytes(graph_id).decode())


class CheckpointRegistry:
    """Lazy manifest cache over *.pt files in the checkpoint directory."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self._stacks: dict[str, object] = {}
        self._lock = threading.Lock()

    def list_manifests(self) -> list[dict]:
        import torch

        out = []
        for path in sorted(self.directory.glob("*.pt")):
            try:
                payload = torch.load(path, map_location="cpu", weights_only=False)
                manifest = json.loads(payload["manifest_json"])
            except Exception:
                continue
            if manifest.get("schema") != "sg2vid.diffusion/1":
                continue
            out.append({"checkpoint_id": path.stem, "manifest": manifest})
        return out

    def path_of(self, checkpoint_id: str) -> Path:
        return self.directory / f"{checkpoint_id}.pt"

    def stack(self, checkpoint_id: str):
        with self._lock:
            if checkpoint_id not in self._stacks:
                path = self.path_of(checkpoint_id)
                if not path.exists():
                    raise KeyError(checkpoint_id)
                self._stacks[checkpoint_id] = load_generation_checkpoint(path)
            return self._stacks[checkpoint_id]

    def manifest(self, checkpoint_id: str) -> dict:
        return self.stack(checkpoint_id).manifest


class JobQueue:
    """Bounded queue with one worker thread owning all model state."""

    def __init__(self, config: ServiceConfig, store: GraphStore,
                 registry: CheckpointRegistry):
        self.config = config
        self.store = store
        self.registry = registry
        self.jobs: dict[str, GenerationJob] = {}
        self.frames_root = config.data_dir / "jobs"
        self.frames_root.mkdir(parents=True, exist_ok=True)
        self._queue: queue.Queue = queue.Queue(maxsize=config.queue_capacity)
        self._lock = threading.Lock()
        self._counter = 0
        self._worker = threading.Thread(target=self._run, daemon=True)
        self._worker.start()

    def submit(self, graph_id: str, checkpoint_id: str, seed: int,
               steps: int | None, first_frame: np.ndarray | None) -> GenerationJob:
        with self._lock:
            self._counter += 1
            job = GenerationJob(
                job_id=f"job_{self._counter:06d}", graph_id=graph_id,
                checkpoint_id=checkpoint_id, seed=seed, steps=steps,
                has_first_frame=first_frame is not None,
            )
            self.jobs[job.job_id] = job
        try:
            self._queue.put_nowait((job, first_frame))
        except queue.Full:
            with self._lock:
                del self.jobs[job.job_id]
            raise
        return job

    def get(self, job_id: str) -> GenerationJob:
        with self._lock:
            if job_id not in self.jobs:
                raise KeyError(job_id)
            return self.jobs[job_id]

    def job_dir(self, job_id: str) -> Path:
        return self.frames_root / job_id

    def join(self):
        self._queue.join()

    def _run(self):
        while True:
            job, first_frame = self._queue.get()
            try:
                job.status = "running"
                stack = self.registry.stack(job.checkpoint_id)
                seq = self.store.get_sequence(job.graph_id)

                def on_progress(fraction: float):
                    job.progress = max(job.progress, fraction)

                frames, provenance = sample(
                    stack, seq, first_frame=first_frame, seed=job.seed,
                    steps=job.steps, progress=on_progress,
                )
                out = self.job_dir(job.job_id)
                out.mkdir(parents=True, exist_ok=True)
                for k in range(frames.shape[0]):
                    frame8 = np.clip(frames[k] * 255.0 + 0.5, 0, 255).astype(np.uint8)
                    Image.fromarray(frame8, mode="RGB").save(out / f"frame_{k:02d}.png")
                provenance["checkpoint_id"] = job.checkpoint_id
                (out / "provenance.json").write_text(json.dumps(provenance, sort_keys=True))
                job.frame_count = int(frames.shape[0])
                job.progress = 1.0
                job.status = "done"
            except Exception as exc:  # job isolation: failures stay in the job
                job.error = f"{type(exc).__name__}: {exc}"
                job.status = "failed"
            finally:
                self._queue.task_done()


def _decode_first_frame(b64_png: str, resolution: int) -> np.ndarray:
    try:
        raw = base64.b64decode(b64_png)
        img = Image.open(io.BytesIO(raw)).convert("RGB")
    except Exception as exc:
        raise HTTPException(422, detail=f"first_frame_png: not a decodable PNG ({exc})")
    if img.size != (resolution, resolution):
        raise HTTPException(
            422,
            detail=f"first_frame_png: size {img.size} does not match checkpoint "
                   f"resolution ({resolution}, {resolution})",
        )
    return np.asarray(img, dtype=np.float32) / 255.0


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="sg2vid", version="1")
    store = GraphStore(config.data_dir / "graphs")
    registry = CheckpointRegistry(config.checkpoint_dir)
    jobs = JobQueue(config, store, registry)
    app.state.jobs = jobs
    app.state.store = store

    @app.post("/api/graphs")
    async def upload_graph(request: Request):
        text = (await request.body()).decode("utf-8", errors="replace")
        try:
            graph_id = store.put_text(text)
        except SchemaError as exc:
            raise HTTPException(422, detail=str(exc))
        return {"graph_id": graph_id}

    @app.get("/api/graphs/{graph_id}")
    def get_graph(graph_id: str):
        try:
            body = store.get_bytes(graph_id)
        except KeyError:
            raise HTTPException(404, detail=f"unknown graph id {graph_id!r}")
        return Response(content=body, media_type="application/json")

    @app.post("/api/graphs/{graph_id}/edits")
    def edit_graph(graph_id: str, ops: list[dict]):
        try:
            seq = store.get_sequence(graph_id)
        except KeyError:
            raise HTTPException(404, detail=f"unknown graph id {graph_id!r}")
        try:
            for i, op_doc in enumerate(ops):
                op = document_to_edit_op(op_doc, path=f"$[{i}]")
                seq = apply_edit(seq, op)
        except (SchemaError, EditError) as exc:
            raise HTTPException(422, detail=str(exc))
        return {"graph_id": store.put_text(serialize(seq))}

    @app.post("/api/generate")
    def generate(body: dict):
        graph_id = body.get("graph_id")
        checkpoint_id = body.get("checkpoint_id")
        seed = int(body.get("seed", 0))
        steps = body.get("steps")
        if steps is None:
            steps = config.default_steps
        if not graph_id or not checkpoint_id:
            raise HTTPException(422, detail="graph_id and checkpoint_id are required")
        try:
            store.get_bytes(graph_id)
        except KeyError:
            raise HTTPException(404, detail=f"unknown graph id {graph_id!r}")
        try:
            manifest = registry.manifest(checkpoint_id)
        except KeyError:
            raise HTTPException(404, detail=f"unknown checkpoint id {checkpoint_id!r}")

        frame_b64 = body.get("first_frame_png")
        mode = manifest["mode"]
        if mode == "ximg" and frame_b64 is not None:
            raise HTTPException(409, detail="checkpoint is graph-only (ximg); "
                                            "it does not accept a first frame")
        if mode == "conditioned" and frame_b64 is None:
            raise HTTPException(409, detail="conditioned checkpoint requires "
                                            "first_frame_png")
        first_frame = None
        if frame_b64 is not None:
            first_frame = _decode_first_frame(frame_b64, manifest["resolution"])
        try:
            job = jobs.submit(graph_id, checkpoint_id, seed, steps, first_frame)
        except queue.Full:
            raise HTTPException(503, detail="generation queue is full")
        return {"job_id": job.job_id}

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        try:
            return jobs.get(job_id).to_document()
        except KeyError:
            raise HTTPException(404, detail=f"unknown job id {job_id!r}")

    @app.get("/api/jobs/{job_id}/frames/{k}")
    def job_frame(job_id: str, k: int):
        try:
            jobs.get(job_id)
        except KeyError:
            raise HTTPException(404, detail=f"unknown job id {job_id!r}")
        path = jobs.job_dir(job_id) / f"frame_{k:02d}.png"
        if not path.exists():
            raise HTTPException(404, detail=f"frame {k} not available")
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.get("/api/checkpoints")
    def checkpoints():
        return registry.list_manifests()

    return app
