"""Diffusion training: objective, loop, and the self-contained checkpoint.

The checkpoint bundles denoiser (EMA weights), codec, and both graph
encoders plus a manifest, so sampling needs nothing else. Frame latents and
graph embeddings are precomputed once with the frozen codec/encoders; the
training loop then only runs the denoiser.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..data_synth import load_clip, load_index, split_clips
from ..graph_encoders import (
    GraphEncoder,
    encode_sequence,
    load_encoder_checkpoint,
)
from .codec import IdentityCodec, load_codec_checkpoint
from .denoiser import DenoiserConfig, VideoDenoiser
from .schedule import NoiseSchedule, forward_diffuse

DIFFUSION_SCHEMA_VERSION = "sg2vid.diffusion/1"
MODES = ("conditioned", "ximg")


class DiffusionError(RuntimeError):
    """Training/sampling failed (bad config, non-finite loss, mismatch)."""


class ModeConflictError(DiffusionError):
    """First-frame input conflicts with the checkpoint's conditioning mode."""


@dataclass
class DiffusionConfig:
    mode: str = "conditioned"
    timesteps: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.02
    steps: int = 4000
    batch_size: int = 8
    lr: float = 2e-4
    ema_decay: float = 0.999
    seed: int = 0
    base_width: int = 32
    width_mult: tuple = (1, 2)
    emb_dim: int = 128
    heads: int = 4
    window_radius: int = 1
    attn_levels: tuple = (1,)
    log_every: int = 50

    def __post_init__(self):
        if self.mode not in MODES:
            raise DiffusionError(f"unknown mode {self.mode!r}")


def training_step(denoiser: VideoDenoiser, latents: torch.Tensor,
                  cond: torch.Tensor, schedule: NoiseSchedule,
                  generator: torch.Generator | None = None,
                  mode: str = "conditioned",
                  t: torch.Tensor | None = None,
                  noise: torch.Tensor | None = None,
                  ) -> tuple[torch.Tensor, torch.Tensor]:
    """One objective evaluation: noise, denoise, MSE against the true noise.

    In conditioned mode the clean first-frame latent replaces position 0 of
    the model input and the loss covers only the remaining positions; in
    ximg mode all positions are noised and scored. ``t`` and ``noise`` are
    drawn from ``generator`` unless supplied.
    """
    if mode not in MODES:
        raise DiffusionError(f"unknown mode {mode!r}")
    b, _, n = latents.shape[:3]
    if cond.shape[0] != b or cond.shape[1] != n:
        raise DiffusionError(
            f"graph conditioning shape {tuple(cond.shape)} does not match latents "
            f"({b}, ..., {n}, ...)"
        )
    if t is None:
        t = torch.randint(1, schedule.timesteps + 1, (b,), generator=generator)
    if noise is None:
        noise = torch.empty_like(latents).normal_(generator=generator)
    z_t = forward_diffuse(latents, t, noise, schedule)
    if mode == "conditioned":
        z_t = z_t.clone()
        z_t[:, :, 0] = latents[:, :, 0]
    pred = denoiser(z_t, t, cond)
    if mode == "conditioned":
        loss = ((pred[:, :, 1:] - noise[:, :, 1:]) ** 2).mean()
    else:
        loss = ((pred - noise) ** 2).mean()
    return loss, pred


class _Ema:
    def __init__(self, module: nn.Module, decay: float):
        self.decay = decay
        self.shadow = {k: v.detach().clone() for k, v in module.state_dict().items()}

    @torch.no_grad()
    def update(self, module: nn.Module):
        for k, v in module.state_dict().items():
            if v.dtype.is_floating_point:
                self.shadow[k].mul_(self.decay).add_(v, alpha=1 - self.decay)
            else:
                self.shadow[k] = v.detach().clone()


def precompute_latents(codec: nn.Module, frames: np.ndarray,
                       batch: int = 64) -> torch.Tensor:
    """(n, H, W, 3) float frames -> (C, n, h, w) latents, no grad."""
    x = torch.as_tensor(frames).permute(0, 3, 1, 2)
    outs = []
    with torch.no_grad():
        for i in range(0, x.shape[0], batch):
            outs.append(codec.encode(x[i : i + batch]))
    return torch.cat(outs).permute(1, 0, 2, 3)


def train_diffusion(dataset_dir: str | Path, encoder_ckpt: str | Path,
                    codec_ckpt: str | Path, config: DiffusionConfig,
                    out_dir: str | Path) -> dict:
    """Train the conditioned (or ximg) video denoiser on a synthetic dataset."""
    dataset_dir = Path(dataset_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = load_index(dataset_dir)
    entries = split_clips(index, "train")
    if not entries:
        raise DiffusionError("dataset has no train clips")

    enc_glob, enc_loc, enc_manifest, _ = load_encoder_checkpoint(encoder_ckpt)
    codec, codec_manifest = load_codec_checkpoint(codec_ckpt)
    for p in list(enc_glob.parameters()) + list(enc_loc.parameters()) + list(codec.parameters()):
        p.requires_grad_(False)

    resolution = index["resolution"]
    n_frames = index["clip_len"]
    latent_res = resolution // codec.factor
    cond_dim = 2 * enc_manifest["embed_dim"]

    latents, conds = [], []
    for entry in entries:
        clip, seq = load_clip(dataset_dir / entry["dir"])
        latents.append(precompute_latents(codec, clip.frames))
        with torch.no_grad():
            conds.append(encode_sequence(seq, enc_glob, enc_loc))
    latents = torch.stack(latents)  # (N, C, n, h, w)
    conds = torch.stack(conds)  # (N, n, D)

    mean = latents.mean(dim=(0, 2, 3, 4))
    std = latents.std(dim=(0, 2, 3, 4)).clamp_min(1e-6)
    latents = (latents - mean[:, None, None, None]) / std[:, None, None, None]

    torch.manual_seed(config.seed)
    denoiser_config = DenoiserConfig(
        latent_channels=codec.channels, resolution=latent_res, n_frames=n_frames,
        base_width=config.base_width, width_mult=tuple(config.width_mult),
        emb_dim=config.emb_dim, heads=config.heads, cond_dim=cond_dim,
        window_radius=config.window_radius,
        use_first_frame_window=config.mode == "conditioned",
        attn_levels=tuple(config.attn_levels),
    )
    denoiser = VideoDenoiser(denoiser_config)
    schedule = NoiseSchedule.linear(config.timesteps, config.beta_start, config.beta_end)
    optimizer = torch.optim.Adam(denoiser.parameters(), lr=config.lr)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=max(config.steps, 1))
    ema = _Ema(denoiser, config.ema_decay)
    rng = np.random.default_rng(config.seed)
    generator = torch.Generator().manual_seed(config.seed)

    log_path = out_dir / "diffusion_log.ndjson"
    t0 = time.time()
    with log_path.open("w") as log:
        for step in range(config.steps):
            picks = torch.as_tensor(
                rng.choice(latents.shape[0], size=min(config.batch_size, latents.shape[0]),
                           replace=latents.shape[0] < config.batch_size)
            )
            loss, _ = training_step(
                denoiser, latents[picks], conds[picks], schedule, generator,
                mode=config.mode,
            )
            if not torch.isfinite(loss):
                torch.save({"denoiser": denoiser.state_dict(), "step": step},
                           out_dir / "diagnostic.pt")
                raise DiffusionError(
                    f"non-finite loss at step {step}; snapshot in {out_dir / 'diagnostic.pt'}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            ema.update(denoiser)
            if step % config.log_every == 0 or step == config.steps - 1:
                log.write(json.dumps({
                    "step": step, "loss": float(loss.detach()),
                    "lr": scheduler.get_last_lr()[0],
                    "wall_time": time.time() - t0,
                }) + "\n")
                log.flush()

    ema_denoiser = VideoDenoiser(denoiser_config)
    ema_denoiser.load_state_dict(ema.shadow)
    manifest = {
        "schema": DIFFUSION_SCHEMA_VERSION,
        "mode": config.mode,
        "n": n_frames,
        "resolution": resolution,
        "timesteps": config.timesteps,
        "beta_start": config.beta_start,
        "beta_end": config.beta_end,
        "latent_mean": mean.tolist(),
        "latent_std": std.tolist(),
        "cond_dim": cond_dim,
        "class_names": index["class_names"],
        "denoiser_config": asdict(denoiser_config),
        "train_config": asdict(config),
    }
    path = out_dir / "diffusion.pt"
    save_generation_checkpoint(path, ema_denoiser, codec, codec_manifest,
                               enc_glob, enc_loc, enc_manifest, manifest)
    return {"checkpoint": str(path), "log": str(log_path), "manifest": manifest}


def save_generation_checkpoint(path: str | Path, denoiser: VideoDenoiser,
                               codec: nn.Module, codec_manifest: dict,
                               enc_glob: GraphEncoder, enc_loc: GraphEncoder,
                               enc_manifest: dict, manifest: dict):
    torch.save({
        "manifest_json": json.dumps(manifest, sort_keys=True),
        "denoiser": denoiser.state_dict(),
        "codec": codec.state_dict(),
        "codec_manifest_json": json.dumps(codec_manifest, sort_keys=True),
        "enc_global": enc_glob.state_dict(),
        "enc_local": enc_loc.state_dict(),
        "enc_manifest_json": json.dumps(enc_manifest, sort_keys=True),
    }, path)


@dataclass
class GenerationStack:
    """Everything sampling needs, restored from one checkpoint file."""

    denoiser: VideoDenoiser
    codec: nn.Module
    enc_glob: GraphEncoder
    enc_loc: GraphEncoder
    schedule: NoiseSchedule
    manifest: dict

    @property
    def mode(self) -> str:
        return self.manifest["mode"]

    def latent_stats(self) -> tuple[torch.Tensor, torch.Tensor]:
        mean = torch.tensor(self.manifest["latent_mean"]).view(1, -1, 1, 1, 1)
        std = torch.tensor(self.manifest["latent_std"]).view(1, -1, 1, 1, 1)
        return mean, std


def load_generation_checkpoint(path: str | Path) -> GenerationStack:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    manifest = json.loads(payload["manifest_json"])
    if manifest.get("schema") != DIFFUSION_SCHEMA_VERSION:
        raise DiffusionError(
            f"unsupported diffusion checkpoint schema {manifest.get('schema')!r}"
        )
    codec_manifest = json.loads(payload["codec_manifest_json"])
    if codec_manifest["kind"] == "identity":
        codec = IdentityCodec()
    else:
        from .codec import ConvCodec

        codec = ConvCodec(channels=codec_manifest["channels"],
                          base=codec_manifest["base"],
                          stages=codec_manifest["stages"])
        codec.load_state_dict(payload["codec"])
    codec.eval()

    enc_manifest = json.loads(payload["enc_manifest_json"])
    from ..graph_encoders import EncoderSpec

    spec = EncoderSpec(
        class_count=enc_manifest["class_count"], hidden=enc_manifest["hidden"],
        heads=enc_manifest["heads"], layers=enc_manifest["layers"],
        embed_dim=enc_manifest["embed_dim"], leaky_slope=enc_manifest["leaky_slope"],
    )
    enc_glob = GraphEncoder(spec, role="global")
    enc_loc = GraphEncoder(spec, role="local")
    enc_glob.load_state_dict(payload["enc_global"])
    enc_loc.load_state_dict(payload["enc_local"])

    dc = manifest["denoiser_config"]
    denoiser = VideoDenoiser(DenoiserConfig(
        latent_channels=dc["latent_channels"], resolution=dc["resolution"],
        n_frames=dc["n_frames"], base_width=dc["base_width"],
        width_mult=tuple(dc["width_mult"]), emb_dim=dc["emb_dim"],
        heads=dc["heads"], cond_dim=dc["cond_dim"],
        window_radius=dc["window_radius"],
        use_first_frame_window=dc["use_first_frame_window"],
        attn_levels=tuple(dc["attn_levels"]),
        coord_channels=dc["coord_channels"],
    ))
    denoiser.load_state_dict(payload["denoiser"])
    for module in (denoiser, codec, enc_glob, enc_loc):
        module.eval()
        for p in module.parameters():
            p.requires_grad_(False)
    schedule = NoiseSchedule.linear(manifest["timesteps"], manifest["beta_start"],
                                    manifest["beta_end"])
    return GenerationStack(denoiser, codec, enc_glob, enc_loc, schedule, manifest)
