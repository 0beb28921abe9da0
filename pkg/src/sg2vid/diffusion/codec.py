"""Latent codecs: strict identity or a small learned conv autoencoder.

The learned codec compresses 64x64 RGB frames by an integer factor (default
4) into a low-channel latent grid; its held-out reconstruction error is
measured at training time and stored in the checkpoint manifest.
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

from ..data_synth import load_clip, load_index, split_clips

CODEC_SCHEMA_VERSION = "sg2vid.codec/1"


class CodecError(RuntimeError):
    """Codec training/loading failed."""


class IdentityCodec(nn.Module):
    """Exact pass-through; latents are the frames themselves."""

    kind = "identity"
    factor = 1
    channels = 3

    def encode(self, frames: torch.Tensor) -> torch.Tensor:
        return frames

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        return latents

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return frames


class ConvCodec(nn.Module):
    """Conv autoencoder with stride-2 downsampling stages (factor 2**stages)."""

    kind = "learned"

    def __init__(self, channels: int = 4, base: int = 32, stages: int = 2):
        super().__init__()
        self.channels = channels
        self.factor = 2**stages
        self.base = base
        self.stages = stages
        enc: list[nn.Module] = []
        prev = 3
        width = base
        for _ in range(stages):
            enc += [nn.Conv2d(prev, width, 3, stride=2, padding=1),
                    nn.GroupNorm(8, width), nn.SiLU()]
            prev = width
            width *= 2
        enc += [nn.Conv2d(prev, channels, 3, padding=1)]
        self.encoder = nn.Sequential(*enc)
        dec: list[nn.Module] = [nn.Conv2d(channels, prev, 3, padding=1),
                                nn.GroupNorm(8, prev), nn.SiLU()]
        for _ in range(stages):
            width = max(prev // 2, base)
            dec += [nn.Upsample(scale_factor=2, mode="nearest"),
                    nn.Conv2d(prev, width, 3, padding=1),
                    nn.GroupNorm(8, width), nn.SiLU()]
            prev = width
        dec += [nn.Conv2d(prev, 3, 3, padding=1)]
        self.decoder = nn.Sequential(*dec)

    def encode(self, frames: torch.Tensor) -> torch.Tensor:
        return self.encoder(frames)

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.decoder(latents))

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(frames))


@dataclass
class CodecConfig:
    channels: int = 4
    base: int = 32
    stages: int = 2
    steps: int = 1200
    batch_size: int = 32
    lr: float = 2e-3
    seed: int = 0
    log_every: int = 50


def _frames_array(dataset_dir: Path, entries: list[dict], limit: int | None = None) -> np.ndarray:
    frames = []
    for entry in entries[: limit or len(entries)]:
        clip, _ = load_clip(dataset_dir / entry["dir"])
        frames.append(clip.frames)
    return np.concatenate(frames, axis=0)


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    mse = float(((a - b) ** 2).mean())
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def train_codec(dataset_dir: str | Path, config: CodecConfig,
                out_dir: str | Path) -> dict:
    """Train the conv autoencoder on train-split frames; report held-out PSNR."""
    dataset_dir = Path(dataset_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = load_index(dataset_dir)
    train_frames = _frames_array(dataset_dir, split_clips(index, "train"))
    heldout_entries = split_clips(index, "val") or split_clips(index, "test")
    heldout = _frames_array(dataset_dir, heldout_entries, limit=8)

    torch.manual_seed(config.seed)
    codec = ConvCodec(channels=config.channels, base=config.base, stages=config.stages)
    optimizer = torch.optim.Adam(codec.parameters(), lr=config.lr)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=max(config.steps, 1))
    rng = np.random.default_rng(config.seed)

    log_path = out_dir / "codec_log.ndjson"
    t0 = time.time()
    with log_path.open("w") as log:
        for step in range(config.steps):
            picks = rng.choice(train_frames.shape[0], size=config.batch_size)
            batch = torch.as_tensor(train_frames[picks]).permute(0, 3, 1, 2)
            recon = codec(batch)
            loss = ((recon - batch) ** 2).mean()
            if not torch.isfinite(loss):
                raise CodecError(f"non-finite codec loss at step {step}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            if step % config.log_every == 0 or step == config.steps - 1:
                log.write(json.dumps({"step": step, "loss": float(loss.detach()),
                                      "wall_time": time.time() - t0}) + "\n")
                log.flush()

    codec.eval()
    with torch.no_grad():
        ho = torch.as_tensor(heldout).permute(0, 3, 1, 2)
        recon = codec(ho)
        heldout_psnr = psnr(recon, ho)
        recon_mse = float(((recon - ho) ** 2).mean())
        recon_mae = float((recon - ho).abs().mean())

    manifest = {
        "schema": CODEC_SCHEMA_VERSION,
        "kind": codec.kind,
        "factor": codec.factor,
        "channels": codec.channels,
        "base": config.base,
        "stages": config.stages,
        "heldout_psnr_db": heldout_psnr,
        "reconstruction_mse": recon_mse,
        "reconstruction_mae": recon_mae,
        "config": asdict(config),
    }
    path = out_dir / "codec.pt"
    torch.save({"manifest_json": json.dumps(manifest, sort_keys=True),
                "state_dict": codec.state_dict()}, path)
    return {"checkpoint": str(path), "log": str(log_path), **manifest}


def save_identity_codec(path: str | Path):
    manifest = {"schema": CODEC_SCHEMA_VERSION, "kind": "identity", "factor": 1,
                "channels": 3, "reconstruction_mse": 0.0, "reconstruction_mae": 0.0,
                "heldout_psnr_db": math.inf}
    torch.save({"manifest_json": json.dumps(manifest, sort_keys=True),
                "state_dict": {}}, path)


def load_codec_checkpoint(path: str | Path) -> tuple[nn.Module, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    manifest = json.loads(payload["manifest_json"])
    if manifest.get("schema") != CODEC_SCHEMA_VERSION:
        raise CodecError(f"unsupported codec schema {manifest.get('schema')!r}")
    if manifest["kind"] == "identity":
        return IdentityCodec(), manifest
    codec = ConvCodec(channels=manifest["channels"], base=manifest["base"],
                      stages=manifest["stages"])
    codec.load_state_dict(payload["state_dict"])
    codec.eval()
    return codec, manifest
