"""Desk-scale evaluation: distribution distances, diversity, and
graph-conditioning fidelity via an oracle color detector.

Feature extractors are fixed-seed random conv projections, so the Fréchet
numbers are comparable across runs of this package but not to any published
figures; every report header says so. The oracle detector thresholds hue
bands from the synthetic palette, standing in for a trained detector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage
from torch import nn

from .data_synth import ClassPalette

REPORT_SCHEMA_VERSION = "sg2vid.report/1"


class EvaluationError(ValueError):
    """Bad inputs to a metric (too few samples, width mismatch)."""


# ---------------------------------------------------------------------------
# Frechet distance
# ---------------------------------------------------------------------------


@dataclass
class FeatureSet:
    """Per-sample feature matrix plus provenance."""

    features: np.ndarray  # (N, D)
    extractor_id: str = "unknown"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise EvaluationError(f"features must be 2-D, got {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise EvaluationError("features contain non-finite entries")
        if self.features.shape[0] < 2:
            raise EvaluationError("need >= 2 samples to fit a covariance")


def _sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; eigenvalues clipped at 0 for stability."""
    vals, vecs = np.linalg.eigh((matrix + matrix.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: FeatureSet, b: FeatureSet) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))."""
    if a.features.shape[1] != b.features.shape[1]:
        raise EvaluationError(
            f"feature widths differ: {a.features.shape[1]} vs {b.features.shape[1]}"
        )
    mu_a, mu_b = a.features.mean(0), b.features.mean(0)
    cov_a = np.cov(a.features, rowvar=False)
    cov_b = np.cov(b.features, rowvar=False)
    cov_a = np.atleast_2d(cov_a)
    cov_b = np.atleast_2d(cov_b)
    root_a = _sqrt_psd(cov_a)
    cross = _sqrt_psd(root_a @ cov_b @ root_a)
    value = float(
        np.sum((mu_a - mu_b) ** 2)
        + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross)
    )
    return max(value, 0.0)


def diversity_score(samples: list[np.ndarray], extractor) -> float:
    """Mean pairwise feature distance over all unordered sample pairs."""
    if len(samples) < 2:
        raise EvaluationError("diversity needs >= 2 samples")
    feats = extractor(samples)
    total, count = 0.0, 0
    for i in range(len(samples)):
        for j in range(i + 1, len(samples)):
            total += float(np.linalg.norm(feats[i] - feats[j]))
            count += 1
    return total / count


# ---------------------------------------------------------------------------
# Fixed-seed random projection features
# ---------------------------------------------------------------------------


def _randomize(module: nn.Module, generator: torch.Generator):
    for p in module.parameters():
        with torch.no_grad():
            p.normal_(std=0.4, generator=generator)


class RandomConvVideoFeatures:
    """Random 3-D conv projection of whole clips; FVD-style per-video vector."""

    def __init__(self, seed: int = 1234, dim: int = 32):
        self.extractor_id = f"random-conv3d-{seed}-{dim}"
        generator = torch.Generator().manual_seed(seed)
        self.net = nn.Sequential(
            nn.Conv3d(3, 16, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv3d(16, 32, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv3d(32, dim, 3, stride=2, padding=1),
        )
        _randomize(self.net, generator)
        self.net.eval()

    def __call__(self, videos: list[np.ndarray]) -> np.ndarray:
        outs = []
        with torch.no_grad():
            for video in videos:
                x = torch.as_tensor(np.ascontiguousarray(video), dtype=torch.float32)
                x = x.permute(3, 0, 1, 2).unsqueeze(0)  # (1, 3, n, H, W)
                outs.append(self.net(x).mean(dim=(2, 3, 4)).squeeze(0).numpy())
        return np.stack(outs)


class RandomConvFrameFeatures:
    """Random 2-D conv projection of individual frames; FID-style."""

    def __init__(self, seed: int = 4321, dim: int = 32):
        self.extractor_id = f"random-conv2d-{seed}-{dim}"
        generator = torch.Generator().manual_seed(seed)
        self.net = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(32, dim, 3, stride=2, padding=1),
        )
        _randomize(self.net, generator)
        self.net.eval()

    def __call__(self, frames: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            x = torch.as_tensor(np.ascontiguousarray(frames), dtype=torch.float32)
            x = x.permute(0, 3, 1, 2)
            return self.net(x).mean(dim=(2, 3)).numpy()


# ---------------------------------------------------------------------------
# Oracle detector
# ---------------------------------------------------------------------------


@dataclass
class Detection:
    class_id: int
    box: tuple[float, float, float, float]  # (y0, x0, y1, x1) pixel edges
    centroid: tuple[float, float]  # (cy, cx) pixels
    area: int = 0  # pixel count of the detected component


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    value = maxc
    delta = maxc - minc
    sat = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.zeros_like(maxc)
    hue = np.where(maxc == r, ((g - b) / safe) % 6.0, hue)
    hue = np.where(maxc == g, (b - r) / safe + 2.0, hue)
    hue = np.where(maxc == b, (r - g) / safe + 4.0, hue)
    hue = np.where(delta > 0, hue / 6.0, 0.0)
    return np.stack([hue % 1.0, sat, value], axis=-1)


_EIGHT = np.ones((3, 3), dtype=bool)


def oracle_detect(frame: np.ndarray, palette: ClassPalette,
                  min_area: int = 8) -> list[Detection]:
    """Detect entities by their class hue band on a saturated foreground."""
    hsv = rgb_to_hsv(frame)
    hue, sat = hsv[..., 0], hsv[..., 1]
    detections = []
    for class_id in range(1, palette.class_count):
        target = palette.hues[class_id] % 1.0
        dist = np.abs(hue - target)
        dist = np.minimum(dist, 1.0 - dist)
        band = (dist <= palette.hue_width) & (sat >= palette.min_saturation)
        labeled, count = ndimage.label(band, structure=_EIGHT)
        for comp in range(1, count + 1):
            rows, cols = np.nonzero(labeled == comp)
            if rows.size < min_area:
                continue
            detections.append(Detection(
                class_id=class_id,
                box=(float(rows.min()), float(cols.min()),
                     float(rows.max() + 1), float(cols.max() + 1)),
                centroid=(float(rows.mean() + 0.5), float(cols.mean() + 0.5)),
                area=int(rows.size),
            ))
    return detections


def detect_clip(frames: np.ndarray, palette: ClassPalette,
                min_area: int = 8) -> list[list[Detection]]:
    return [oracle_detect(frames[f], palette, min_area) for f in range(frames.shape[0])]


# ---------------------------------------------------------------------------
# Conditioning fidelity
# ---------------------------------------------------------------------------


def _box_iou(a, b) -> float:
    y0 = max(a[0], b[0])
    x0 = max(a[1], b[1])
    y1 = min(a[2], b[2])
    x1 = min(a[3], b[3])
    inter = max(0.0, y1 - y0) * max(0.0, x1 - x0)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def node_box(node, h: int, w: int) -> tuple[float, float, float, float]:
    cy, cx = node.centroid[0] * h, node.centroid[1] * w
    hh, hw = node.spread[0] * h / 2.0, node.spread[1] * w / 2.0
    return (cy - hh, cx - hw, cy + hh, cx + hw)


def conditioning_fidelity(frames: np.ndarray, seq, palette: ClassPalette,
                          min_area: int = 8) -> dict:
    """Match detections to graph nodes (class-constrained, nearest centroid)
    and score localization and presence agreement.

    Returns micro/macro F1, mean matched-box IoU, and centroid MAE in pixels.
    Empty-frame agreement counts as perfect (vacuous) agreement.
    """
    n, h, w = frames.shape[:3]
    if len(seq) != n:
        raise EvaluationError(f"clip has {n} frames but sequence has {len(seq)}")
    tp_by_class = {c: 0 for c in range(1, len(seq.class_names))}
    fp_by_class = {c: 0 for c in range(1, len(seq.class_names))}
    fn_by_class = {c: 0 for c in range(1, len(seq.class_names))}
    ious, maes = [], []
    for f in range(n):
        dets = oracle_detect(frames[f], palette, min_area)
        nodes = [node for node in seq.graphs[f].nodes if node.class_id != 0]
        pairs = []
        for i, node in enumerate(nodes):
            ncy, ncx = node.centroid[0] * h, node.centroid[1] * w
            for j, det in enumerate(dets):
                if det.class_id != node.class_id:
                    continue
                dist = math.hypot(det.centroid[0] - ncy, det.centroid[1] - ncx)
                pairs.append((dist, i, j))
        pairs.sort()
        used_nodes: set[int] = set()
        used_dets: set[int] = set()
        for dist, i, j in pairs:
            if i in used_nodes or j in used_dets:
                continue
            used_nodes.add(i)
            used_dets.add(j)
            node = nodes[i]
            det = dets[j]
            ious.append(_box_iou(node_box(node, h, w), det.box))
            maes.append(dist)
            tp_by_class[node.class_id] += 1
        for i, node in enumerate(nodes):
            if i not in used_nodes:
                fn_by_class[node.class_id] += 1
        for j, det in enumerate(dets):
            if j not in used_dets:
                fp_by_class[det.class_id] += 1

    def f1(tp: int, fp: int, fn: int) -> float:
        if tp + fp + fn == 0:
            return 1.0  # vacuous agreement (empty vs empty)
        return 2 * tp / (2 * tp + fp + fn)

    tp_all = sum(tp_by_class.values())
    fp_all = sum(fp_by_class.values())
    fn_all = sum(fn_by_class.values())
    observed = [
        c for c in tp_by_class
        if tp_by_class[c] + fp_by_class[c] + fn_by_class[c] > 0
    ]
    macro = (
        float(np.mean([f1(tp_by_class[c], fp_by_class[c], fn_by_class[c])
                       for c in observed]))
        if observed else 1.0
    )
    return {
        "f1_micro": f1(tp_all, fp_all, fn_all),
        "f1_macro": macro,
        "bb_iou": float(np.mean(ious)) if ious else 0.0,
        "centroid_mae": float(np.mean(maes)) if maes else 0.0,
        "matched": tp_all,
        "false_positives": fp_all,
        "false_negatives": fn_all,
    }


def entry_frames_from_detections(detections: list[list[Detection]]) -> dict[int, int]:
    """First frame index at which each class is detected."""
    first: dict[int, int] = {}
    for f, dets in enumerate(detections):
        for det in dets:
            first.setdefault(det.class_id, f)
    return first


def entry_frames_from_sequence(seq) -> dict[int, int]:
    first: dict[int, int] = {}
    for g in seq.graphs:
        for node in g.nodes:
            if node.class_id != 0:
                first.setdefault(node.class_id, g.frame_index)
    return first


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

REPORT_HEADER_NOTE = (
    "Feature extractors are fixed-seed random conv projections; Frechet and "
    "diversity values are comparable only across runs of this harness, not "
    "to any published numbers."
)


def build_report(metrics: dict, per_sequence: list[dict], config: dict,
                 provenance: dict) -> dict:
    return {
        "version": REPORT_SCHEMA_VERSION,
        "header": {"note": REPORT_HEADER_NOTE},
        "metrics": metrics,
        "per_sequence": per_sequence,
        "config": config,
        "provenance": provenance,
    }


def validate_report(report: dict):
    import jsonschema

    schema = json.loads(
        (Path(__file__).parent / "schemas" / "report_v1.schema.json").read_text()
    )
    jsonschema.validate(report, schema)


_TABLE_COLUMNS = [
    ("fvd_style", "FVD-style"),
    ("fid_style", "FID-style"),
    ("diversity", "Diversity"),
    ("bb_iou", "BB IoU"),
    ("f1_micro", "F1 (micro)"),
    ("f1_macro", "F1 (macro)"),
    ("centroid_mae_px", "Centroid MAE px"),
]


def report_table(report: dict) -> str:
    metrics = report["metrics"]
    lines = [report["header"]["note"], ""]
    name_width = max(len(label) for _, label in _TABLE_COLUMNS)
    for key, label in _TABLE_COLUMNS:
        if key in metrics:
            lines.append(f"{label:<{name_width}}  {metrics[key]:.4f}")
    if "real_vs_real_fvd" in metrics:
        lines.append(
            f"{'Real-vs-real FVD':<{name_width}}  {metrics['real_vs_real_fvd']:.4f}"
        )
    return "\n".join(lines) + "\n"


def report_csv(report: dict) -> str:
    metrics = report["metrics"]
    keys = [k for k, _ in _TABLE_COLUMNS if k in metrics]
    header = ",".join(keys)
    row = ",".join(f"{metrics[k]:.6f}" for k in keys)
    return header + "\n" + row + "\n"


@dataclass
class EvalConfig:
    split: str = "test"
    max_sequences: int = 16
    seed: int = 0
    sample_steps: int | None = None
    rho: float = 0.25
    feature_dim: int = 32
    detector_min_area: int = 8


def eval_report(checkpoint: str | Path, dataset_dir: str | Path,
                config: EvalConfig, out_dir: str | Path | None = None) -> dict:
    """Sample held-out sequences, compute all metrics, emit the report.

    Writes report.json / report.txt / report.csv when ``out_dir`` is given;
    the JSON validates against the published sg2vid.report/1 schema.
    """
    from .data_synth import load_clip, load_index, palette_from_index, split_clips
    from .diffusion.training import load_generation_checkpoint
    from .diffusion.sampling import sample

    checkpoint = Path(checkpoint)
    if not checkpoint.exists():
        raise EvaluationError(f"missing checkpoint: {checkpoint}")
    dataset_dir = Path(dataset_dir)
    stack = load_generation_checkpoint(checkpoint)
    index = load_index(dataset_dir)
    palette = palette_from_index(index)
    entries = split_clips(index, config.split)
    if len(entries) < 2:
        raise EvaluationError(
            f"split {config.split!r} yields {len(entries)} sequence(s); "
            "distribution metrics need at least 2"
        )
    entries = entries[: config.max_sequences]

    video_features = RandomConvVideoFeatures(dim=config.feature_dim)
    frame_features = RandomConvFrameFeatures(dim=config.feature_dim)

    real_videos, generated, per_sequence = [], [], []
    fidelity_keys = ("f1_micro", "f1_macro", "bb_iou", "centroid_mae")
    for i, entry in enumerate(entries):
        clip, seq = load_clip(dataset_dir / entry["dir"])
        seed = config.seed * 100_003 + i
        first = clip.frames[0] if stack.mode == "conditioned" else None
        frames, _ = sample(stack, seq, first_frame=first, seed=seed,
                           steps=config.sample_steps, rho=config.rho)
        fidelity = conditioning_fidelity(frames, seq, palette,
                                         min_area=config.detector_min_area)
        per_sequence.append({
            "clip_id": entry["id"], "seed": seed,
            **{k: fidelity[k] for k in fidelity_keys},
        })
        real_videos.append(clip.frames)
        generated.append(frames)

    real_feats = FeatureSet(video_features(real_videos), video_features.extractor_id)
    gen_feats = FeatureSet(video_features(generated), video_features.extractor_id)
    fvd_style = frechet_distance(real_feats, gen_feats)

    real_frames = np.concatenate([v for v in real_videos], axis=0)
    gen_frames = np.concatenate([v for v in generated], axis=0)
    fid_style = frechet_distance(
        FeatureSet(frame_features(real_frames), frame_features.extractor_id),
        FeatureSet(frame_features(gen_frames), frame_features.extractor_id),
    )
    diversity = diversity_score(generated, video_features)

    real_vs_real = None
    if len(real_videos) >= 4:
        half = len(real_videos) // 2
        real_vs_real = frechet_distance(
            FeatureSet(video_features(real_videos[:half])),
            FeatureSet(video_features(real_videos[half : 2 * half])),
        )

    metrics = {
        "fvd_style": fvd_style,
        "fid_style": fid_style,
        "diversity": diversity,
        "bb_iou": float(np.mean([r["bb_iou"] for r in per_sequence])),
        "f1_micro": float(np.mean([r["f1_micro"] for r in per_sequence])),
        "f1_macro": float(np.mean([r["f1_macro"] for r in per_sequence])),
        "centroid_mae_px": float(np.mean([r["centroid_mae"] for r in per_sequence])),
    }
    if real_vs_real is not None:
        metrics["real_vs_real_fvd"] = real_vs_real

    report = build_report(
        metrics, per_sequence,
        config={"split": config.split, "max_sequences": config.max_sequences,
                "seed": config.seed, "sample_steps": config.sample_steps,
                "rho": config.rho, "feature_dim": config.feature_dim},
        provenance={"checkpoint": str(checkpoint), "dataset": str(dataset_dir),
                    "mode": stack.mode,
                    "video_extractor": video_features.extractor_id,
                    "frame_extractor": frame_features.extractor_id},
    )
    validate_report(report)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
        (out_dir / "report.txt").write_text(report_table(report))
        (out_dir / "report.csv").write_text(report_csv(report))
    return report
