"""Shared test oracles and random-input generators.

Oracles here are deliberately independent of the library implementation:
plain-Python flood fill, pixel loops and all-pairs scans, kept slow and
obvious so they can arbitrate the fast vectorized paths.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from sg2vid.sg_core import GraphSequence, SceneGraph, SceneNode, make_edges


def flood_fill_components(mask: np.ndarray, min_area: int) -> list[dict]:
    """BFS connected components (8-connectivity) of every non-zero label.

    Returns one record per kept component with the raw pixel list, ordered
    by the first pixel in row-major scan order.
    """
    h, w = mask.shape
    visited = np.zeros((h, w), dtype=bool)
    comps = []
    for r in range(h):
        for c in range(w):
            label = int(mask[r, c])
            if label == 0 or visited[r, c]:
                continue
            pixels = []
            queue = deque([(r, c)])
            visited[r, c] = True
            while queue:
                pr, pc = queue.popleft()
                pixels.append((pr, pc))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        nr, nc = pr + dr, pc + dc
                        if 0 <= nr < h and 0 <= nc < w and not visited[nr, nc] \
                                and int(mask[nr, nc]) == label:
                            visited[nr, nc] = True
                            queue.append((nr, nc))
            if len(pixels) >= min_area:
                comps.append({"label": label, "pixels": pixels})
    # BFS discovery order already follows the first row-major pixel.
    return comps


def pixel_loop_node_attrs(comp: dict, flow: np.ndarray, depth: np.ndarray,
                          h: int, w: int) -> dict:
    """Per-region means and bounds via explicit loops over pixels."""
    dmin = depth.min()
    dmax = depth.max()
    rs = [p[0] for p in comp["pixels"]]
    cs = [p[1] for p in comp["pixels"]]
    n = len(rs)
    fy = sum(float(flow[r, c, 0]) for r, c in comp["pixels"]) / n
    fx = sum(float(flow[r, c, 1]) for r, c in comp["pixels"]) / n
    if dmax > dmin:
        dm = sum((float(depth[r, c]) - dmin) / (dmax - dmin) for r, c in comp["pixels"]) / n
    else:
        dm = 0.5
    return {
        "centroid": ((sum(rs) / n + 0.5) / h, (sum(cs) / n + 0.5) / w),
        "spread": ((max(rs) - min(rs) + 1) / h, (max(cs) - min(cs) + 1) / w),
        "flow": (fy / h, fx / w),
        "depth": dm,
    }


def all_pairs_adjacency(comps: list[dict]) -> set[tuple[int, int]]:
    """Edges by scanning every pixel pair across components (8-neighborhood)."""
    edges = set()
    for i in range(len(comps)):
        for j in range(i + 1, len(comps)):
            pix_j = set(comps[j]["pixels"])
            touching = any(
                (r + dr, c + dc) in pix_j
                for r, c in comps[i]["pixels"]
                for dr in (-1, 0, 1)
                for dc in (-1, 0, 1)
            )
            if touching:
                edges.add((i, j))
    return edges


def random_mask(rng: np.random.Generator, h: int, w: int, class_count: int,
                blobs: int) -> np.ndarray:
    """Random rectangles and discs stamped in order (later wins overlaps)."""
    mask = np.zeros((h, w), dtype=np.int64)
    for _ in range(blobs):
        label = int(rng.integers(1, class_count))
        if rng.random() < 0.5:
            r0 = int(rng.integers(0, h - 2))
            c0 = int(rng.integers(0, w - 2))
            r1 = int(rng.integers(r0 + 1, min(h, r0 + h // 2) + 1))
            c1 = int(rng.integers(c0 + 1, min(w, c0 + w // 2) + 1))
            mask[r0:r1, c0:c1] = label
        else:
            cy = rng.uniform(2, h - 2)
            cx = rng.uniform(2, w - 2)
            rad = rng.uniform(1.5, min(h, w) / 4)
            ys, xs = np.mgrid[0:h, 0:w]
            mask[(ys - cy) ** 2 + (xs - cx) ** 2 <= rad**2] = label
    return mask


def random_node(rng: np.random.Generator, node_id: int, class_count: int) -> SceneNode:
    def frac() -> float:
        return round(float(rng.uniform(0, 1)), 6)

    return SceneNode(
        id=node_id,
        class_id=int(rng.integers(1, class_count)),
        centroid=(frac(), frac()),
        spread=(frac(), frac()),
        flow=(round(float(rng.uniform(-1, 1)), 6), round(float(rng.uniform(-1, 1)), 6)),
        depth=frac(),
    )


def save_tiny_checkpoint(path, class_names, resolution=16, n=4,
                         mode="conditioned", timesteps=5, torch_seed=0):
    """Write a valid (untrained) generation checkpoint for API/CLI tests."""
    import torch

    from sg2vid.diffusion.codec import IdentityCodec
    from sg2vid.diffusion.denoiser import DenoiserConfig, VideoDenoiser
    from sg2vid.diffusion.training import save_generation_checkpoint
    from sg2vid.graph_encoders import EncoderSpec, GraphEncoder

    torch.manual_seed(torch_seed)
    spec = EncoderSpec(class_count=len(class_names), hidden=8, heads=2,
                       layers=1, embed_dim=4)
    enc_g, enc_l = GraphEncoder(spec), GraphEncoder(spec, role="local")
    dconf = DenoiserConfig(latent_channels=3, resolution=resolution, n_frames=n,
                           base_width=8, width_mult=(1, 2), emb_dim=16,
                           heads=2, cond_dim=8, attn_levels=(1,))
    manifest = {
        "schema": "sg2vid.diffusion/1", "mode": mode, "n": n,
        "resolution": resolution, "timesteps": timesteps, "beta_start": 1e-4,
        "beta_end": 0.02, "latent_mean": [0.5] * 3, "latent_std": [0.3] * 3,
        "cond_dim": 8, "class_names": list(class_names),
        "denoiser_config": {
            "latent_channels": 3, "resolution": resolution, "n_frames": n,
            "base_width": 8, "width_mult": [1, 2], "emb_dim": 16,
            "heads": 2, "cond_dim": 8, "window_radius": 1,
            "use_first_frame_window": mode == "conditioned",
            "attn_levels": [1], "coord_channels": True,
        },
        "train_config": {},
    }
    save_generation_checkpoint(
        path, VideoDenoiser(dconf), IdentityCodec(),
        {"schema": "sg2vid.codec/1", "kind": "identity", "factor": 1,
         "channels": 3, "reconstruction_mse": 0.0, "reconstruction_mae": 0.0,
         "heldout_psnr_db": 1e9},
        enc_g, enc_l,
        {"schema": "sg2vid.encoders/1", "class_count": len(class_names),
         "hidden": 8, "heads": 2, "layers": 1, "embed_dim": 4,
         "leaky_slope": 0.2},
        manifest)
    return manifest


def random_sequence(rng: np.random.Generator, n_frames: int = 4,
                    class_count: int = 5, max_nodes: int = 5) -> GraphSequence:
    """Random valid sequence with 6-decimal attributes (serialization-exact)."""
    class_names = tuple(f"class_{i}" for i in range(class_count))
    node_classes = {i: int(rng.integers(1, class_count)) for i in range(max_nodes)}
    graphs = []
    for f in range(n_frames):
        k = int(rng.integers(0, max_nodes + 1))
        ids = sorted(rng.choice(max_nodes, size=k, replace=False).tolist())
        nodes = []
        for i in ids:
            node = random_node(rng, i, class_count)
            nodes.append(SceneNode(
                id=i, class_id=node_classes[i], centroid=node.centroid,
                spread=node.spread, flow=node.flow, depth=node.depth,
            ))
        pairs = [(a, b) for ai, a in enumerate(ids) for b in ids[ai + 1:]]
        edges = make_edges(
            p for p in pairs if rng.random() < 0.4
        )
        graphs.append(SceneGraph(f, tuple(nodes), edges))
    return GraphSequence(tuple(graphs), (64, 64), class_names)
