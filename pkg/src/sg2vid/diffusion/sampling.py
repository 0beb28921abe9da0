"""Ancestral sampling with first-frame anchoring and clip chaining.

Conditioned mode: the initial latent mixes the first frame's low-frequency
band into the noise, and the clean first-frame latent replaces position 0
after every denoising step, so generated frame 1 is the codec round-trip of
the conditioning frame. ximg mode starts from pure noise. A strided timestep
subsequence is supported for faster sampling; the full schedule is the
default. All randomness comes from one seeded generator, so outputs are
bit-reproducible.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
import torch

from ..sg_core import GraphSequence, serialize
from ..graph_encoders import encode_sequence
from .schedule import low_freq_init
from .training import DiffusionError, GenerationStack, ModeConflictError


def _timestep_path(total: int, steps: int | None) -> list[int]:
    if steps is None or steps >= total:
        return list(range(total, 0, -1))
    if steps < 1:
        raise DiffusionError(f"need at least 1 sampling step, got {steps}")
    taus = np.unique(np.linspace(1, total, steps).round().astype(int))
    return taus[::-1].tolist()


def _encode_first_frame(stack: GenerationStack, frame: np.ndarray) -> torch.Tensor:
    resolution = stack.manifest["resolution"]
    if frame.shape != (resolution, resolution, 3):
        raise DiffusionError(
            f"first frame shape {frame.shape} does not match checkpoint resolution "
            f"({resolution}, {resolution}, 3)"
        )
    x = torch.as_tensor(np.ascontiguousarray(frame), dtype=torch.float32)
    with torch.no_grad():
        z = stack.codec.encode(x.permute(2, 0, 1).unsqueeze(0))
    mean, std = stack.latent_stats()
    return (z - mean[:, :, 0]) / std[:, :, 0]


def sample(stack: GenerationStack, graph_seq: GraphSequence,
           first_frame: np.ndarray | None = None, seed: int = 0,
           steps: int | None = None, rho: float = 0.25,
           progress=None) -> tuple[np.ndarray, dict]:
    """Generate one clip conditioned on a graph sequence (and optionally a
    first frame). Returns (frames (n, H, W, 3) float32 in [0, 1], provenance).

    ``progress``, when given, is called with a fraction in [0, 1] after each
    denoising step.
    """
    manifest = stack.manifest
    n = manifest["n"]
    resolution = manifest["resolution"]
    if len(graph_seq) != n:
        raise DiffusionError(
            f"graph sequence has {len(graph_seq)} frames; checkpoint expects {n}"
        )
    if tuple(graph_seq.image_size) != (resolution, resolution):
        raise DiffusionError(
            f"graph image_size {graph_seq.image_size} does not match checkpoint "
            f"resolution {resolution}"
        )
    if list(graph_seq.class_names) != list(manifest["class_names"]):
        raise DiffusionError("graph class vocabulary does not match checkpoint")
    if stack.mode == "conditioned" and first_frame is None:
        raise ModeConflictError("conditioned checkpoint requires a first frame")
    if stack.mode == "ximg" and first_frame is not None:
        raise ModeConflictError("ximg checkpoint does not accept a first frame")

    with torch.no_grad():
        cond = encode_sequence(graph_seq, stack.enc_glob, stack.enc_loc).unsqueeze(0)
    if cond.shape[-1] != manifest["cond_dim"]:
        raise DiffusionError(
            f"conditioning width {cond.shape[-1]} != checkpoint {manifest['cond_dim']}"
        )

    channels = stack.codec.channels
    latent_res = resolution // stack.codec.factor
    generator = torch.Generator().manual_seed(seed)
    z = torch.empty((1, channels, n, latent_res, latent_res)).normal_(generator=generator)

    z1 = None
    if stack.mode == "conditioned":
        z1 = _encode_first_frame(stack, first_frame)  # (1, C, h, w)
        z = low_freq_init(z, z1.unsqueeze(2).expand_as(z), rho)
        z[:, :, 0] = z1

    bars = stack.schedule.alpha_bars
    path = _timestep_path(stack.schedule.timesteps, steps)
    with torch.no_grad():
        for i, t_cur in enumerate(path):
            t_prev = path[i + 1] if i + 1 < len(path) else 0
            eps = stack.denoiser(z, torch.full((1,), t_cur, dtype=torch.long), cond)
            a_cur = float(bars[t_cur])
            a_prev = float(bars[t_prev])
            alpha_step = a_cur / a_prev
            beta_step = 1.0 - alpha_step
            z0_hat = (z - math.sqrt(1.0 - a_cur) * eps) / math.sqrt(a_cur)
            mean = (
                math.sqrt(a_prev) * beta_step / (1.0 - a_cur) * z0_hat
                + math.sqrt(alpha_step) * (1.0 - a_prev) / (1.0 - a_cur) * z
            )
            if t_prev > 0:
                var = beta_step * (1.0 - a_prev) / (1.0 - a_cur)
                noise = torch.empty_like(z).normal_(generator=generator)
                z = mean + math.sqrt(var) * noise
            else:
                z = mean
            if z1 is not None:
                z[:, :, 0] = z1
            if progress is not None:
                progress((i + 1) / len(path))

    mean_s, std_s = stack.latent_stats()
    latents = z * std_s + mean_s
    with torch.no_grad():
        frames = stack.codec.decode(latents[0].permute(1, 0, 2, 3))
    frames = frames.permute(0, 2, 3, 1).clamp(0, 1).numpy().astype(np.float32)

    provenance = {
        "graph_hash": hashlib.sha256(serialize(graph_seq).encode()).hexdigest()[:16],
        "seed": seed,
        "steps": len(path),
        "rho": rho if stack.mode == "conditioned" else None,
        "mode": stack.mode,
    }
    return frames, provenance


def autoregress(stack: GenerationStack, graph_seqs: list[GraphSequence],
                first_frame: np.ndarray, seed: int = 0,
                steps: int | None = None, rho: float = 0.25,
                ) -> tuple[np.ndarray, list[dict]]:
    """Chain clips: each clip's last generated frame conditions the next.

    The shared boundary frame is emitted once, so k chained n-frame clips
    yield k*(n-1)+1 frames. Rejected for ximg checkpoints (nothing to chain).
    """
    if stack.mode != "conditioned":
        raise ModeConflictError("autoregression requires a conditioned checkpoint")
    if not graph_seqs:
        raise DiffusionError("need at least one graph sequence")
    frames_out: list[np.ndarray] = []
    provenances = []
    current = first_frame
    for i, seq in enumerate(graph_seqs):
        frames, prov = sample(stack, seq, first_frame=current, seed=seed + i,
                              steps=steps, rho=rho)
        provenances.append(prov)
        frames_out.append(frames if i == 0 else frames[1:])
        current = frames[-1]
    return np.concatenate(frames_out, axis=0), provenances
