"""Pretraining of the two graph encoders.

The local encoder learns texture/detail: a random scene component is masked
out of every frame of a clip and a transformer decoder must reconstruct the
clean per-frame latents from the masked latents plus the graph embeddings.
The global encoder learns layout: per-sequence graph embeddings are aligned
with segmentation-mask embeddings through an in-batch contrastive loss.
Both objectives are optimized in parallel by one loop that owns all
parameters; batches are drawn deterministically from the seed.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from scipy import ndimage

from .data_synth import Clip, load_clip, load_index, split_clips
from .graph_encoders import (
    EncoderSpec,
    GraphEncoder,
    encode_graph,
    save_encoder_checkpoint,
)
from .sg_core import GraphSequence


class PretrainError(RuntimeError):
    """Pretraining aborted (non-finite loss, bad inputs)."""


# ---------------------------------------------------------------------------
# Component masking
# ---------------------------------------------------------------------------

_EIGHT = np.ones((3, 3), dtype=bool)


def component_region(mask: np.ndarray, class_id: int, centroid: tuple[float, float]) -> np.ndarray:
    """Boolean region of the component of ``class_id`` nearest to ``centroid``.

    Components are recomputed with the same 8-connectivity used at graph
    build time, so the the node's stored centroid identifies its region.
    """
    h, w = mask.shape
    labeled, count = ndimage.label(mask == class_id, structure=_EIGHT)
    best, best_dist = None, None
    for comp in range(1, count + 1):
        rows, cols = np.nonzero(labeled == comp)
        cy = (rows.mean() + 0.5) / h
        cx = (cols.mean() + 0.5) / w
        dist = (cy - centroid[0]) ** 2 + (cx - centroid[1]) ** 2
        if best_dist is None or dist < best_dist:
            best, best_dist = labeled == comp, dist
    if best is None:
        return np.zeros((h, w), dtype=bool)
    return best


def mask_component(clip: Clip, seq: GraphSequence, node_id: int,
                   fill: np.ndarray) -> Clip:
    """Replace one component's pixels with ``fill`` in every frame it appears.

    Pixels outside the component are untouched; frames where the node is
    absent are returned unchanged.
    """
    present = [g.frame_index for g in seq.graphs if g.has_node(node_id)]
    if not present:
        raise PretrainError(f"unknown node id {node_id} in clip graph sequence")
    frames = clip.frames.copy()
    fill = np.asarray(fill, dtype=np.float32)
    for f in present:
        node = seq.graphs[f].node(node_id)
        if node.class_id == 0:
            raise PretrainError("background is not a maskable component")
        region = component_region(clip.masks[f], node.class_id, node.centroid)
        frames[f][region] = fill
    return Clip(frames=frames, masks=clip.masks, flows=clip.flows,
                depths=clip.depths, meta=dict(clip.meta))


# ---------------------------------------------------------------------------
# Auxiliary networks
# ---------------------------------------------------------------------------


class ConvEncoder(nn.Module):
    """Four stride-2 conv stages, global average pool, linear head."""

    def __init__(self, in_channels: int, out_dim: int, base: int = 16):
        super().__init__()
        widths = [base, base * 2, base * 3, base * 4]
        layers: list[nn.Module] = []
        prev = in_channels
        for width in widths:
            layers += [
                nn.Conv2d(prev, width, 3, stride=2, padding=1),
                nn.GroupNorm(4, width),
                nn.SiLU(),
            ]
            prev = width
        self.trunk = nn.Sequential(*layers)
        self.head = nn.Linear(prev, out_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.trunk(x)
        return self.head(h.mean(dim=(2, 3)))


class SequenceDecoder(nn.Module):
    """Transformer over frame tokens: masked latents + graph embeddings in,
    reconstructed clean latents out."""

    def __init__(self, latent_dim: int, graph_dim: int, width: int = 128,
                 n_frames: int = 16, layers: int = 2, heads: int = 4):
        super().__init__()
        self.inp = nn.Linear(latent_dim + graph_dim, width)
        self.pos = nn.Parameter(torch.zeros(n_frames, width))
        block = nn.TransformerEncoderLayer(
            d_model=width, nhead=heads, dim_feedforward=width * 2,
            batch_first=True, dropout=0.0,
        )
        self.blocks = nn.TransformerEncoder(block, num_layers=layers)
        self.out = nn.Linear(width, latent_dim)

    def forward(self, masked_latents: torch.Tensor,
                graph_embeds: torch.Tensor) -> torch.Tensor:
        # (B, n, latent) + (B, n, graph) -> (B, n, latent)
        tokens = self.inp(torch.cat([masked_latents, graph_embeds], dim=-1))
        tokens = tokens + self.pos[: tokens.shape[1]]
        return self.out(self.blocks(tokens))


class AuxiliaryNets(nn.Module):
    """Frame encoder, mask encoder, sequence decoder, contrastive heads."""

    def __init__(self, class_count: int, latent_dim: int = 64,
                 glob_embed_dim: int = 64, loc_embed_dim: int = 64,
                 contrast_dim: int = 64, decoder_width: int = 128,
                 n_frames: int = 16, conv_base: int = 16):
        super().__init__()
        self.frame_encoder = ConvEncoder(3, latent_dim, base=conv_base)
        self.mask_encoder = ConvEncoder(class_count, latent_dim, base=conv_base)
        self.decoder = SequenceDecoder(latent_dim, loc_embed_dim,
                                       width=decoder_width, n_frames=n_frames)
        self.proj_graph = nn.Linear(glob_embed_dim, contrast_dim)
        self.proj_mask = nn.Linear(latent_dim, contrast_dim)
        self.class_count = class_count

    def encode_frames(self, frames: np.ndarray | torch.Tensor) -> torch.Tensor:
        x = torch.as_tensor(np.ascontiguousarray(frames), dtype=torch.float32)
        return self.frame_encoder(x.permute(0, 3, 1, 2))

    def encode_masks(self, masks: np.ndarray) -> torch.Tensor:
        labels = torch.as_tensor(np.ascontiguousarray(masks), dtype=torch.long)
        onehot = torch.nn.functional.one_hot(labels, self.class_count)
        return self.mask_encoder(onehot.permute(0, 3, 1, 2).float())


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def reconstruction_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all frame/latent positions."""
    if pred.shape != target.shape:
        raise PretrainError(f"shape mismatch {pred.shape} vs {target.shape}")
    return ((pred - target) ** 2).mean()


def local_loss(clip: Clip, masked_clip: Clip, graph_seq: GraphSequence,
               nets: AuxiliaryNets, enc_loc: GraphEncoder) -> torch.Tensor:
    """Masked-component reconstruction objective in frame-latent space.

    The clean-latent target is detached: gradients reach the frame encoder
    through the masked branch only, which prevents the trivial collapse of
    the shared encoder while still training decoder, frame encoder and the
    local graph encoder.
    """
    target = nets.encode_frames(clip.frames).detach()
    masked = nets.encode_frames(masked_clip.frames)
    d = graph_seq.class_count
    graph_embeds = torch.stack([encode_graph(g, d, enc_loc) for g in graph_seq.graphs])
    pred = nets.decoder(masked.unsqueeze(0), graph_embeds.unsqueeze(0)).squeeze(0)
    return reconstruction_loss(pred, target)


def info_nce_from_scores(scores: torch.Tensor) -> torch.Tensor:
    """-mean_i log softmax(scores_i)[i]; positives on the diagonal."""
    b = scores.shape[0]
    if scores.shape != (b, b) or b < 2:
        raise PretrainError(f"need a square score matrix with B >= 2, got {tuple(scores.shape)}")
    log_probs = torch.log_softmax(scores, dim=1)
    return -log_probs.diagonal().mean()


def global_loss(graph_embeds: torch.Tensor, mask_embeds: torch.Tensor,
                temperature: float = 0.07) -> torch.Tensor:
    """In-batch contrastive alignment of graph and mask sequence embeddings.

    Inputs must be L2-normalized per row; row i of each batch is a matched
    pair and every other row is a negative.
    """
    if graph_embeds.shape != mask_embeds.shape:
        raise PretrainError(
            f"embedding shapes differ: {graph_embeds.shape} vs {mask_embeds.shape}"
        )
    if graph_embeds.shape[0] < 2:
        raise PretrainError("contrastive batch needs B >= 2 (no negatives)")
    scores = graph_embeds @ mask_embeds.T / temperature
    return info_nce_from_scores(scores)


def _normalize(x: torch.Tensor) -> torch.Tensor:
    return torch.nn.functional.normalize(x, dim=-1)


def sequence_contrast_embeddings(
    clips: list[Clip], seqs: list[GraphSequence], nets: AuxiliaryNets,
    enc_glob: GraphEncoder,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-sequence normalized embeddings: mean over frames, then projection."""
    g_rows, m_rows = [], []
    for clip, seq in zip(clips, seqs):
        d = seq.class_count
        g = torch.stack([encode_graph(gr, d, enc_glob) for gr in seq.graphs]).mean(0)
        m = nets.encode_masks(clip.masks).mean(0)
        g_rows.append(nets.proj_graph(g))
        m_rows.append(nets.proj_mask(m))
    return _normalize(torch.stack(g_rows)), _normalize(torch.stack(m_rows))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class PretrainConfig:
    steps: int = 900
    batch_size: int = 8
    lr: float = 2e-4
    temperature: float = 0.07
    seed: int = 0
    latent_dim: int = 64
    embed_dim: int = 64
    hidden: int = 48
    heads: int = 4
    gat_layers: int = 3
    contrast_dim: int = 64
    conv_base: int = 16
    checkpoint_every: int = 0  # 0 = only at the end
    log_every: int = 25


class _ClipStore:
    """Loads a split's clips once; hands out (clip, seq) by index."""

    def __init__(self, dataset_dir: str | Path, split: str):
        self.dataset_dir = Path(dataset_dir)
        index = load_index(dataset_dir)
        self.index = index
        self.entries = split_clips(index, split)
        if not self.entries:
            raise PretrainError(f"dataset has no clips in split {split!r}")
        self.class_names = tuple(index["class_names"])
        self._cache: dict[int, tuple[Clip, GraphSequence]] = {}

    def __len__(self):
        return len(self.entries)

    def get(self, i: int) -> tuple[Clip, GraphSequence]:
        if i not in self._cache:
            self._cache[i] = load_clip(self.dataset_dir / self.entries[i]["dir"])
        return self._cache[i]

    def mean_color(self, sample: int = 32) -> np.ndarray:
        idx = np.linspace(0, len(self.entries) - 1, min(sample, len(self.entries)))
        colors = [self.get(int(i))[0].frames.mean(axis=(0, 1, 2)) for i in idx]
        return np.mean(colors, axis=0)


def foreground_node_ids(seq: GraphSequence) -> list[int]:
    ids = set()
    for g in seq.graphs:
        ids.update(n.id for n in g.nodes if n.class_id != 0)
    return sorted(ids)


def pretrain(dataset_dir: str | Path, config: PretrainConfig,
             out_dir: str | Path) -> dict:
    """Train both encoders plus auxiliaries; write checkpoint and NDJSON log.

    Deterministic for a fixed seed. A zero-step run writes the initialized
    checkpoint unchanged. Non-finite losses abort with a diagnostic snapshot.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    store = _ClipStore(dataset_dir, "train")
    class_count = len(store.class_names)

    torch.manual_seed(config.seed)
    spec = EncoderSpec(class_count=class_count, hidden=config.hidden,
                       heads=config.heads, layers=config.gat_layers,
                       embed_dim=config.embed_dim)
    enc_glob = GraphEncoder(spec, role="global")
    enc_loc = GraphEncoder(spec, role="local")
    sample_clip, _ = store.get(0)
    nets = AuxiliaryNets(
        class_count, latent_dim=config.latent_dim, glob_embed_dim=config.embed_dim,
        loc_embed_dim=config.embed_dim, contrast_dim=config.contrast_dim,
        n_frames=sample_clip.n, conv_base=config.conv_base,
    )
    params = list(enc_glob.parameters()) + list(enc_loc.parameters()) + list(nets.parameters())
    optimizer = torch.optim.Adam(params, lr=config.lr)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=max(config.steps, 1)
    )
    rng = np.random.default_rng(config.seed)
    fill = store.mean_color()

    log_path = out_dir / "pretrain_log.ndjson"
    ckpt_path = out_dir / "encoders.pt"
    t0 = time.time()

    def save(step: int):
        save_encoder_checkpoint(
            ckpt_path, enc_glob, enc_loc,
            aux_state={"nets": nets.state_dict(), "config": asdict(config),
                       "class_names": list(store.class_names)},
            extra={"steps": step},
        )

    with log_path.open("w") as log:
        for step in range(config.steps):
            picks = rng.choice(len(store), size=min(config.batch_size, len(store)),
                               replace=len(store) < config.batch_size)
            clips, seqs = [], []
            for i in picks:
                clip, seq = store.get(int(i))
                clips.append(clip)
                seqs.append(seq)

            loss_loc = torch.zeros(())
            counted = 0
            for clip, seq in zip(clips, seqs):
                node_ids = foreground_node_ids(seq)
                if not node_ids:
                    continue
                node_id = int(rng.choice(node_ids))
                masked = mask_component(clip, seq, node_id, fill)
                loss_loc = loss_loc + local_loss(clip, masked, seq, nets, enc_loc)
                counted += 1
            if counted:
                loss_loc = loss_loc / counted

            g_emb, m_emb = sequence_contrast_embeddings(clips, seqs, nets, enc_glob)
            loss_glob = global_loss(g_emb, m_emb, config.temperature)

            loss = loss_loc + loss_glob
            if not torch.isfinite(loss):
                torch.save({"nets": nets.state_dict(), "step": step},
                           out_dir / "diagnostic.pt")
                raise PretrainError(
                    f"non-finite loss at step {step}; snapshot in {out_dir / 'diagnostic.pt'}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()

            if step % config.log_every == 0 or step == config.steps - 1:
                log.write(json.dumps({
                    "step": step,
                    "loss_loc": float(loss_loc.detach()),
                    "loss_glob": float(loss_glob.detach()),
                    "lr": scheduler.get_last_lr()[0],
                    "wall_time": time.time() - t0,
                }) + "\n")
                log.flush()
            if config.checkpoint_every and step and step % config.checkpoint_every == 0:
                save(step)
    save(config.steps)
    return {"checkpoint": str(ckpt_path), "log": str(log_path),
            "steps": config.steps}


def load_auxiliaries(aux_state: dict) -> AuxiliaryNets:
    cfg = aux_state["config"]
    nets = AuxiliaryNets(
        len(aux_state["class_names"]), latent_dim=cfg["latent_dim"],
        glob_embed_dim=cfg["embed_dim"], loc_embed_dim=cfg["embed_dim"],
        contrast_dim=cfg["contrast_dim"], conv_base=cfg["conv_base"],
    )
    nets.load_state_dict(aux_state["nets"])
    nets.eval()
    return nets


def retrieval_accuracy(dataset_dir: str | Path, split: str,
                       enc_glob: GraphEncoder, nets: AuxiliaryNets,
                       batch_size: int = 16, seed: int = 0,
                       rounds: int = 6) -> float:
    """Graph->mask retrieval: fraction of batch rows whose best-matching mask
    embedding is their own clip's.

    Batches draw one clip per source video: overlapping windows of one video
    are near-duplicates, which would make in-batch retrieval ill-posed rather
    than a measure of layout discrimination.
    """
    store = _ClipStore(dataset_dir, split)
    by_video: dict[str, list[int]] = {}
    for i, entry in enumerate(store.entries):
        by_video.setdefault(entry["video"], []).append(i)
    videos = sorted(by_video)
    if len(videos) < batch_size:
        raise PretrainError(
            f"split {split!r} has {len(videos)} videos; retrieval batches of "
            f"{batch_size} need at least that many distinct videos"
        )
    rng = np.random.default_rng(seed)
    correct, total = 0, 0
    with torch.no_grad():
        for _ in range(rounds):
            picked = rng.choice(len(videos), size=batch_size, replace=False)
            batch = [
                store.get(int(rng.choice(by_video[videos[v]]))) for v in picked
            ]
            clips = [c for c, _ in batch]
            seqs = [s for _, s in batch]
            g_emb, m_emb = sequence_contrast_embeddings(clips, seqs, nets, enc_glob)
            pred = (g_emb @ m_emb.T).argmax(dim=1)
            correct += int((pred == torch.arange(batch_size)).sum())
            total += batch_size
    return correct / total
