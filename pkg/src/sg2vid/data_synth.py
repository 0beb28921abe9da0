"""Synthetic "scripted surgery" videos with ground-truth masks, flow and depth.

Scenes are simple colored entities (discs, rectangles) moving along scripted
paths over a low-frequency per-video background gradient. Because geometry,
motion, and depth are authored analytically, every derived field has an exact
reference: masks delineate shapes, flow is the entity displacement, depth is
the entity's level. Feature providers abstract where flow/depth come from so
estimated fields can be dropped in from files later.
"""

from __future__ import annotations

import colorsys
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .sg_core import (
    GraphSequence,
    GraphValidationError,
    build_scene_graph,
    match_node_ids,
    serialize,
)

DATASET_SCHEMA_VERSION = "sg2vid.dataset/1"


class RenderError(ValueError):
    """A scene script cannot be rendered (path leaves the frame, bad spans)."""


class DatasetError(ValueError):
    """Dataset construction or loading failed."""


# ---------------------------------------------------------------------------
# Palette
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassPalette:
    """Per-class hue bands; rendering and the oracle detector share these.

    Class 0 is background (no band). Foreground hue bands must not overlap,
    and backgrounds stay below ``min_saturation`` so hue thresholding alone
    separates entities.
    """

    hues: tuple[float, ...]
    hue_width: float = 0.05
    min_saturation: float = 0.45

    def __post_init__(self):
        fg = self.hues[1:]
        for i in range(len(fg)):
            for j in range(i + 1, len(fg)):
                dist = abs(fg[i] - fg[j])
                dist = min(dist, 1.0 - dist)
                if dist < 2 * self.hue_width:
                    raise DatasetError(
                        f"ambiguous palette: classes {i + 1} and {j + 1} hue bands overlap"
                    )

    @property
    def class_count(self) -> int:
        return len(self.hues)

    def color(self, class_id: int, value: float = 0.95, saturation: float = 0.92) -> np.ndarray:
        r, g, b = colorsys.hsv_to_rgb(self.hues[class_id] % 1.0, saturation, value)
        return np.array([r, g, b], dtype=np.float32)


def default_palette(class_count: int) -> ClassPalette:
    fg = class_count - 1
    hues = (0.0,) + tuple(i / fg for i in range(fg))
    return ClassPalette(hues=hues)


# ---------------------------------------------------------------------------
# Scripts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EntitySpec:
    """One scripted entity: shape, size ramp, waypoint path, active span."""

    class_id: int
    shape: str  # "disc" | "rect"
    size_start: tuple[float, float]  # (h, w) fractions at entry
    size_end: tuple[float, float]  # (h, w) fractions at exit
    waypoints: tuple[tuple[float, float], ...]  # (cy, cx) fractions
    depth: float
    entry: int = 0
    exit: int | None = None  # exclusive; None = full clip

    def __post_init__(self):
        if self.shape not in ("disc", "rect"):
            raise RenderError(f"unknown shape {self.shape!r}")
        if not self.waypoints:
            raise RenderError("entity needs at least one waypoint")
        if self.exit is not None and not (self.entry < self.exit):
            raise RenderError(f"entry {self.entry} must precede exit {self.exit}")
        for cy, cx in self.waypoints:
            if not (0.0 <= cy <= 1.0 and 0.0 <= cx <= 1.0):
                raise RenderError(f"waypoint ({cy}, {cx}) outside the unit square")

    def active(self, f: int, n: int) -> bool:
        end = n if self.exit is None else min(self.exit, n)
        return self.entry <= f < end

    def _tau(self, f: int, n: int) -> float:
        end = n if self.exit is None else min(self.exit, n)
        span = end - 1 - self.entry
        if span <= 0:
            return 0.0
        return (f - self.entry) / span

    def position(self, f: int, n: int) -> tuple[float, float]:
        """Piecewise-linear waypoint path, parameterized uniformly in time."""
        tau = self._tau(f, n)
        pts = self.waypoints
        if len(pts) == 1:
            return pts[0]
        x = tau * (len(pts) - 1)
        k = min(int(x), len(pts) - 2)
        t = x - k
        return (
            pts[k][0] + (pts[k + 1][0] - pts[k][0]) * t,
            pts[k][1] + (pts[k + 1][1] - pts[k][1]) * t,
        )

    def size(self, f: int, n: int) -> tuple[float, float]:
        tau = self._tau(f, n)
        return (
            self.size_start[0] + (self.size_end[0] - self.size_start[0]) * tau,
            self.size_start[1] + (self.size_end[1] - self.size_start[1]) * tau,
        )


@dataclass(frozen=True)
class SceneScript:
    """Entity list (draw order = occlusion order) plus background seed."""

    entities: tuple[EntitySpec, ...]
    palette: ClassPalette
    background_depth: float = 1.0


@dataclass
class Clip:
    """Aligned frame/mask/flow/depth arrays for one n-frame window."""

    frames: np.ndarray  # (n, H, W, 3) float32 in [0, 1]
    masks: np.ndarray  # (n, H, W) int64 labels
    flows: np.ndarray  # (n, H, W, 2) float32, (dy, dx) px/frame
    depths: np.ndarray  # (n, H, W) float32
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n, h, w = self.masks.shape
        if self.frames.shape != (n, h, w, 3):
            raise DatasetError(f"frames shape {self.frames.shape} != {(n, h, w, 3)}")
        if self.flows.shape != (n, h, w, 2):
            raise DatasetError(f"flows shape {self.flows.shape} != {(n, h, w, 2)}")
        if self.depths.shape != (n, h, w):
            raise DatasetError(f"depths shape {self.depths.shape} != {(n, h, w)}")

    @property
    def n(self) -> int:
        return self.masks.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return self.masks.shape[1], self.masks.shape[2]


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Pale bilinear gradient between four random corner colors."""
    corners = np.empty((2, 2, 3), dtype=np.float32)
    for i in range(2):
        for j in range(2):
            hue = rng.uniform(0, 1)
            sat = rng.uniform(0.05, 0.22)
            val = rng.uniform(0.55, 0.95)
            corners[i, j] = colorsys.hsv_to_rgb(hue, sat, val)
    ys = np.linspace(0, 1, h, dtype=np.float32)[:, None, None]
    xs = np.linspace(0, 1, w, dtype=np.float32)[None, :, None]
    top = corners[0, 0] * (1 - xs) + corners[0, 1] * xs
    bottom = corners[1, 0] * (1 - xs) + corners[1, 1] * xs
    return top * (1 - ys) + bottom * ys


def _entity_mask(spec: EntitySpec, cy: float, cx: float, sh: float, sw: float,
                 h: int, w: int) -> np.ndarray:
    ry, rx = sh * h / 2.0, sw * w / 2.0
    if cy * h - ry < -1e-9 or cy * h + ry > h + 1e-9 or cx * w - rx < -1e-9 or cx * w + rx > w + 1e-9:
        raise RenderError(
            f"entity of class {spec.class_id} leaves the frame "
            f"(center ({cy:.3f}, {cx:.3f}), size ({sh:.3f}, {sw:.3f}))"
        )
    yy = (np.arange(h, dtype=np.float64) + 0.5)[:, None] - cy * h
    xx = (np.arange(w, dtype=np.float64) + 0.5)[None, :] - cx * w
    if spec.shape == "disc":
        return (yy / max(ry, 1e-9)) ** 2 + (xx / max(rx, 1e-9)) ** 2 <= 1.0
    return (np.abs(yy) <= ry) & (np.abs(xx) <= rx)


def render_script(script: SceneScript, n: int, h: int, w: int, rng_seed: int) -> Clip:
    """Rasterize a scene script into aligned frames/masks/flow/depth arrays.

    Deterministic for a fixed seed: randomness only shapes the background
    gradient and per-video entity brightness. Later entities draw on top;
    masks store the visible label only.
    """
    if n < 1:
        raise RenderError(f"need n >= 1 frames, got {n}")
    for spec in script.entities:
        if spec.class_id < 1 or spec.class_id >= script.palette.class_count:
            raise RenderError(
                f"entity class {spec.class_id} outside palette of {script.palette.class_count} classes"
            )
    rng = np.random.default_rng(rng_seed)
    background = _background(rng, h, w)
    values = {spec.class_id: rng.uniform(0.82, 1.0) for spec in script.entities}

    frames = np.empty((n, h, w, 3), dtype=np.float32)
    masks = np.zeros((n, h, w), dtype=np.int64)
    flows = np.zeros((n, h, w, 2), dtype=np.float32)
    depths = np.full((n, h, w), script.background_depth, dtype=np.float32)

    for f in range(n):
        frames[f] = background
        for spec in script.entities:
            if not spec.active(f, n):
                continue
            cy, cx = spec.position(f, n)
            sh, sw = spec.size(f, n)
            region = _entity_mask(spec, cy, cx, sh, sw, h, w)
            masks[f][region] = spec.class_id
            frames[f][region] = script.palette.color(spec.class_id, value=values[spec.class_id])
            # Analytic per-frame displacement in pixels; last active frame
            # carries the previous step's velocity.
            if spec.active(f + 1, n):
                ny, nx = spec.position(f + 1, n)
                vel = ((ny - cy) * h, (nx - cx) * w)
            elif spec.active(f - 1, n):
                py, px = spec.position(f - 1, n)
                vel = ((cy - py) * h, (cx - px) * w)
            else:
                vel = (0.0, 0.0)
            flows[f][region] = vel
            depths[f][region] = spec.depth
    return Clip(frames=frames, masks=masks, flows=flows, depths=depths,
                meta={"seed": rng_seed})


# ---------------------------------------------------------------------------
# Feature providers
# ---------------------------------------------------------------------------


class GroundTruthProvider:
    """Serves the clip's own analytic flow/depth arrays."""

    kind = "ground_truth"

    def fields(self, clip: Clip) -> tuple[np.ndarray, np.ndarray]:
        return clip.flows, clip.depths


class FileBackedProvider:
    """Reads flow/depth from raw float32 files with JSON sidecar headers.

    This is the drop-in point for externally estimated fields; the layout is
    ``flow.raw``/``flow.json`` and ``depth.raw``/``depth.json`` per clip
    directory.
    """

    kind = "file_backed"

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def fields(self, clip: Clip) -> tuple[np.ndarray, np.ndarray]:
        flows = read_raw_array(self.directory / "flow.raw")
        depths = read_raw_array(self.directory / "depth.raw")
        n, h, w = clip.masks.shape
        if flows.shape != (n, h, w, 2):
            raise DatasetError(
                f"file-backed flow shape {flows.shape} does not match clip {(n, h, w, 2)}"
            )
        if depths.shape != (n, h, w):
            raise DatasetError(
                f"file-backed depth shape {depths.shape} does not match clip {(n, h, w)}"
            )
        return flows, depths


def write_raw_array(path: str | Path, arr: np.ndarray, axis_order: str):
    path = Path(path)
    arr32 = np.ascontiguousarray(arr, dtype="<f4")
    path.write_bytes(arr32.tobytes())
    header = {"dtype": "float32", "shape": list(arr.shape), "axis_order": axis_order}
    path.with_suffix(".json").write_text(json.dumps(header, sort_keys=True))


def read_raw_array(path: str | Path) -> np.ndarray:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    if header.get("dtype") != "float32":
        raise DatasetError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    return data.reshape(header["shape"]).copy()


# ---------------------------------------------------------------------------
# Clip extraction
# ---------------------------------------------------------------------------


@dataclass
class Video:
    """A full-length source video with aligned ground-truth fields."""

    frames: np.ndarray
    masks: np.ndarray
    flows: np.ndarray
    depths: np.ndarray
    source_id: str = "video"


def _resize_frames(arr: np.ndarray, size: int, mode: str) -> np.ndarray:
    """Center-crop to square then area-average (BOX) or nearest resize."""
    m, h, w = arr.shape[:3]
    side = min(h, w)
    r0, c0 = (h - side) // 2, (w - side) // 2
    arr = arr[:, r0 : r0 + side, c0 : c0 + side]
    if side == size:
        return arr.copy()
    resample = Image.Resampling.BOX if mode == "area" else Image.Resampling.NEAREST
    out_shape = (m, size, size) + arr.shape[3:]
    out = np.empty(out_shape, dtype=arr.dtype)
    channels = 1 if arr.ndim == 3 else arr.shape[3]
    for i in range(m):
        for ch in range(channels):
            plane = arr[i] if arr.ndim == 3 else arr[i, :, :, ch]
            img = Image.fromarray(plane.astype(np.float32), mode="F")
            resized = np.asarray(img.resize((size, size), resample), dtype=np.float64)
            if arr.ndim == 3:
                out[i] = resized.astype(arr.dtype)
            else:
                out[i, :, :, ch] = resized.astype(arr.dtype)
    return out


def downsample_indices(frame_count: int, fps_in: int, fps_target: int) -> list[int]:
    if fps_in < fps_target:
        raise DatasetError(f"fps_in {fps_in} < fps_target {fps_target}")
    if fps_in % fps_target != 0:
        raise DatasetError(
            f"fps_in {fps_in} must be an integer multiple of fps_target {fps_target}"
        )
    stride = fps_in // fps_target
    return list(range(0, frame_count, stride))


def window_starts(frame_count: int, clip_len: int, overlap: float) -> list[int]:
    stride_f = clip_len * (1.0 - overlap)
    stride = int(round(stride_f))
    if abs(stride_f - stride) > 1e-9 or stride < 1:
        raise DatasetError(
            f"clip_len * (1 - overlap) = {stride_f} is not a positive integer stride"
        )
    if frame_count < clip_len:
        raise DatasetError(f"video of {frame_count} frames is shorter than one clip ({clip_len})")
    return list(range(0, frame_count - clip_len + 1, stride))


def extract_clips(
    video: Video,
    fps_in: int,
    fps_target: int = 4,
    clip_len: int = 16,
    overlap: float = 0.75,
    resolution: int | None = None,
) -> list[Clip]:
    """Temporal downsample, window with overlap, optionally resize.

    Flow displacements are rescaled for both the temporal stride (velocity
    per kept-frame interval) and any spatial resize.
    """
    keep = downsample_indices(video.frames.shape[0], fps_in, fps_target)
    stride_t = fps_in // fps_target
    frames = video.frames[keep]
    masks = video.masks[keep]
    flows = video.flows[keep] * float(stride_t)
    depths = video.depths[keep]

    if resolution is not None:
        side = min(frames.shape[1], frames.shape[2])
        scale = resolution / side
        frames = _resize_frames(frames, resolution, "area")
        masks = _resize_frames(masks.astype(np.float64), resolution, "nearest").astype(np.int64)
        flows = _resize_frames(flows, resolution, "area") * scale
        depths = _resize_frames(depths, resolution, "area")

    clips = []
    for start in window_starts(frames.shape[0], clip_len, overlap):
        clips.append(
            Clip(
                frames=np.ascontiguousarray(frames[start : start + clip_len], dtype=np.float32),
                masks=np.ascontiguousarray(masks[start : start + clip_len]),
                flows=np.ascontiguousarray(flows[start : start + clip_len], dtype=np.float32),
                depths=np.ascontiguousarray(depths[start : start + clip_len], dtype=np.float32),
                meta={"source": video.source_id, "start": start},
            )
        )
    return clips


def clip_to_graph_sequence(
    clip: Clip,
    provider,
    class_names: Sequence[str],
    min_area: int = 4,
) -> GraphSequence:
    """Per-frame graph construction plus cross-frame identity matching."""
    flows, depths = provider.fields(clip)
    graphs = []
    for f in range(clip.n):
        graphs.append(
            build_scene_graph(
                clip.masks[f], flows[f], depths[f],
                class_count=len(class_names), min_area=min_area, frame_index=f,
            )
        )
    return GraphSequence(tuple(match_node_ids(graphs)), clip.size, tuple(class_names))


# ---------------------------------------------------------------------------
# Script sampling and the dataset builder
# ---------------------------------------------------------------------------

DEFAULT_CLASS_NAMES = ("background", "pupil", "probe", "hook", "forceps")


@dataclass
class SynthConfig:
    """Knobs for the synthetic dataset; defaults give the desk-scale corpus."""

    n_videos: int = 32
    frames_per_video: int = 76
    resolution: int = 64
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES
    min_entities: int = 1
    max_entities: int = 3
    clip_len: int = 16
    overlap: float = 0.75
    fps: int = 4
    min_area: int = 4
    splits: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    entry_exit_prob: float = 0.45

    @property
    def class_count(self) -> int:
        return len(self.class_names)


def sample_script(rng: np.random.Generator, config: SynthConfig,
                  palette: ClassPalette) -> SceneScript:
    """Random script: distinct entity classes, bounded paths, size ramps."""
    n_entities = int(rng.integers(config.min_entities, config.max_entities + 1))
    classes = rng.choice(
        np.arange(1, config.class_count), size=n_entities, replace=False
    )
    m = config.frames_per_video
    entities = []
    for class_id in sorted(classes.tolist()):
        base = float(rng.uniform(0.14, 0.46))
        aspect = float(rng.uniform(0.8, 1.25))
        ramp = float(rng.uniform(0.55, 1.35))
        size_start = (base, min(base * aspect, 0.5))
        size_end = (
            min(max(base * ramp, 0.1), 0.5),
            min(max(base * aspect * ramp, 0.1), 0.5),
        )
        margin = max(max(size_start), max(size_end)) / 2 + 0.02
        lo, hi = margin, 1.0 - margin
        n_pts = int(rng.integers(2, 4))
        pts = [tuple(rng.uniform(lo, hi, size=2).tolist())]
        for _ in range(n_pts - 1):
            prev = pts[-1]
            step = rng.uniform(-0.3, 0.3, size=2)
            pts.append((
                float(np.clip(prev[0] + step[0], lo, hi)),
                float(np.clip(prev[1] + step[1], lo, hi)),
            ))
        entry, exit_ = 0, None
        # Entry/exit events need room on both sides of the cut to be visible.
        if m >= 12 and rng.random() < config.entry_exit_prob:
            if rng.random() < 0.5:
                entry = int(rng.integers(3, m // 2))
            else:
                exit_ = int(rng.integers(m // 2, m - 2))
        entities.append(
            EntitySpec(
                class_id=int(class_id),
                shape="disc" if rng.random() < 0.55 else "rect",
                size_start=size_start,
                size_end=size_end,
                waypoints=tuple(pts),
                depth=float(rng.uniform(0.1, 0.85)),
                entry=entry,
                exit=exit_,
            )
        )
    return SceneScript(entities=tuple(entities), palette=palette)


def assign_splits(video_ids: list[str], fractions: Sequence[float],
                  rng: np.random.Generator) -> dict[str, str]:
    names = ("train", "val", "test")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DatasetError(f"split fractions {fractions} must sum to 1")
    order = list(video_ids)
    rng.shuffle(order)
    n = len(order)
    counts = [int(round(f * n)) for f in fractions]
    while sum(counts) > n:
        counts[counts.index(max(counts))] -= 1
    while sum(counts) < n:
        counts[counts.index(min(counts))] += 1
    for frac, count in zip(fractions, counts):
        if frac > 0 and count == 0:
            raise DatasetError(
                f"{n} videos cannot satisfy split fractions {tuple(fractions)}"
            )
    out = {}
    idx = 0
    for name, count in zip(names, counts):
        for vid in order[idx : idx + count]:
            out[vid] = name
        idx += count
    return out


def save_clip(clip_dir: Path, clip: Clip, seq: GraphSequence):
    clip_dir.mkdir(parents=True, exist_ok=True)
    for f in range(clip.n):
        frame8 = np.clip(clip.frames[f] * 255.0 + 0.5, 0, 255).astype(np.uint8)
        Image.fromarray(frame8, mode="RGB").save(clip_dir / f"frame_{f:02d}.png")
        Image.fromarray(clip.masks[f].astype(np.uint8), mode="L").save(
            clip_dir / f"mask_{f:02d}.png"
        )
    write_raw_array(clip_dir / "flow.raw", clip.flows, axis_order="thwc")
    write_raw_array(clip_dir / "depth.raw", clip.depths, axis_order="thw")
    (clip_dir / "graph.json").write_text(serialize(seq))


def load_clip(clip_dir: str | Path) -> tuple[Clip, GraphSequence]:
    from .sg_core import deserialize

    clip_dir = Path(clip_dir)
    seq = deserialize((clip_dir / "graph.json").read_text())
    flows = read_raw_array(clip_dir / "flow.raw")
    depths = read_raw_array(clip_dir / "depth.raw")
    n = flows.shape[0]
    frames, masks = [], []
    for f in range(n):
        frames.append(np.asarray(Image.open(clip_dir / f"frame_{f:02d}.png"), dtype=np.float32) / 255.0)
        masks.append(np.asarray(Image.open(clip_dir / f"mask_{f:02d}.png"), dtype=np.int64))
    clip = Clip(
        frames=np.stack(frames), masks=np.stack(masks), flows=flows, depths=depths,
        meta={"dir": str(clip_dir)},
    )
    return clip, seq


def make_dataset(config: SynthConfig, out_dir: str | Path) -> dict:
    """Render videos, window into clips, extract graphs, write the index.

    Deterministic per seed; the train/val/test split is assigned per source
    video so no video's clips cross splits.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    palette = default_palette(config.class_count)
    provider = GroundTruthProvider()
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_videos + 1)
    split_rng = np.random.default_rng(seeds[-1])

    video_ids = [f"video_{v:04d}" for v in range(config.n_videos)]
    splits = assign_splits(video_ids, config.splits, split_rng)

    clips_index = []
    for v, vid in enumerate(video_ids):
        rng = np.random.default_rng(seeds[v])
        script = sample_script(rng, config, palette)
        render_seed = int(rng.integers(0, 2**31 - 1))
        full = render_script(
            script, config.frames_per_video, config.resolution, config.resolution,
            rng_seed=render_seed,
        )
        video = Video(full.frames, full.masks, full.flows, full.depths, source_id=vid)
        clips = extract_clips(
            video, fps_in=config.fps, fps_target=config.fps,
            clip_len=config.clip_len, overlap=config.overlap,
        )
        for clip in clips:
            seq = clip_to_graph_sequence(clip, provider, config.class_names,
                                         min_area=config.min_area)
            clip_id = f"{vid}_clip_{clip.meta['start']:03d}"
            rel = Path("clips") / clip_id
            save_clip(out_dir / rel, clip, seq)
            clips_index.append(
                {"id": clip_id, "video": vid, "dir": str(rel),
                 "start": clip.meta["start"], "split": splits[vid]}
            )

    index = {
        "version": DATASET_SCHEMA_VERSION,
        "seed": config.seed,
        "resolution": config.resolution,
        "fps": config.fps,
        "clip_len": config.clip_len,
        "class_names": list(config.class_names),
        "palette": {"hues": list(palette.hues), "hue_width": palette.hue_width,
                    "min_saturation": palette.min_saturation},
        "videos": splits,
        "clips": clips_index,
        "meta": {
            "resize": "center-crop to square, area-average (masks nearest)",
            "flow_units": "pixels per frame at stored resolution",
            "depth": "relative level; min-max normalized per frame at graph build",
        },
    }
    (out_dir / "index.json").write_text(json.dumps(index, indent=1, sort_keys=True))
    return index


def load_index(dataset_dir: str | Path) -> dict:
    path = Path(dataset_dir) / "index.json"
    if not path.exists():
        raise DatasetError(f"no dataset index at {path}")
    index = json.loads(path.read_text())
    if index.get("version") != DATASET_SCHEMA_VERSION:
        raise DatasetError(f"unsupported dataset version {index.get('version')!r}")
    return index


def palette_from_index(index: dict) -> ClassPalette:
    p = index["palette"]
    return ClassPalette(hues=tuple(p["hues"]), hue_width=p["hue_width"],
                        min_saturation=p["min_saturation"])


def split_clips(index: dict, split: str) -> list[dict]:
    return [c for c in index["clips"] if c["split"] == split]


def dataset_hash(dataset_dir: str | Path) -> str:
    """Content hash over the dataset files (run metadata excluded)."""
    dataset_dir = Path(dataset_dir)
    digest = hashlib.sha256()
    for path in sorted(dataset_dir.rglob("*")):
        if path.is_file() and path.name != "run_provenance.json":
            digest.update(str(path.relative_to(dataset_dir)).encode())
            digest.update(hashlib.sha256(path.read_bytes()).digest())
    return digest.hexdigest()
