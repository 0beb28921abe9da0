"""Dual graph encoders built from graph attention layers.

Two encoders with identical architecture (roles "global" and "local") map a
per-frame scene graph to a fixed-width embedding: a stack of multi-head
attention layers over nodes, mean pooling, and a final projection. Attention
uses the dynamic scoring form (shared nonlinearity applied before the scoring
vector) with each node's own representation as the query; self-loops are
always present so isolated nodes and singleton graphs are well-defined. Empty
graphs fall back to a learned null token.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .sg_core import GraphSequence, SceneGraph, graph_feature_matrix


@dataclass(frozen=True)
class EncoderSpec:
    """Architecture hyperparameters shared by both encoder roles."""

    class_count: int
    hidden: int = 64
    heads: int = 4
    layers: int = 3
    embed_dim: int = 64
    leaky_slope: float = 0.2

    @property
    def input_dim(self) -> int:
        return self.class_count + 7


class GATv2Layer(nn.Module):
    """One multi-head graph attention layer on a dense (small-k) graph.

    score(i <- j) = a_h . leaky_relu(W_dst x_i + W_src x_j); attention is a
    softmax over j in N(i) plus the self-loop; the message aggregated is
    W_src x_j. Non-neighbors are masked to -inf before the softmax so their
    contribution is exactly zero.
    """

    def __init__(self, in_dim: int, out_dim: int, heads: int = 4,
                 leaky_slope: float = 0.2):
        super().__init__()
        if out_dim % heads != 0:
            raise ValueError(f"out_dim {out_dim} not divisible by heads {heads}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.heads = heads
        self.head_dim = out_dim // heads
        self.leaky_slope = leaky_slope
        self.w_src = nn.Linear(in_dim, out_dim, bias=False)
        self.w_dst = nn.Linear(in_dim, out_dim, bias=False)
        self.attn = nn.Parameter(torch.empty(heads, self.head_dim))
        nn.init.xavier_uniform_(self.attn)

    def forward(self, x: torch.Tensor, edges: torch.Tensor,
                return_attention: bool = False):
        k = x.shape[0]
        if x.shape[1] != self.in_dim:
            raise ValueError(f"expected width {self.in_dim}, got {x.shape[1]}")
        src = self.w_src(x).view(k, self.heads, self.head_dim)
        dst = self.w_dst(x).view(k, self.heads, self.head_dim)
        # (i, j, h, d): query node i attends over source nodes j.
        pair = dst.unsqueeze(1) + src.unsqueeze(0)
        scores = (
            torch.nn.functional.leaky_relu(pair, self.leaky_slope) * self.attn
        ).sum(-1)
        adj = torch.eye(k, dtype=torch.bool, device=x.device)
        if edges.numel():
            adj[edges[0], edges[1]] = True
            adj[edges[1], edges[0]] = True
        scores = scores.masked_fill(~adj.unsqueeze(-1), float("-inf"))
        alpha = torch.softmax(scores, dim=1)
        out = torch.einsum("ijh,jhd->ihd", alpha, src).reshape(k, self.out_dim)
        if return_attention:
            return out, alpha
        return out


class GraphEncoder(nn.Module):
    """Attention-layer stack, mean pooling, projection to the embedding."""

    def __init__(self, spec: EncoderSpec, role: str = "global"):
        super().__init__()
        if role not in ("global", "local"):
            raise ValueError(f"unknown encoder role {role!r}")
        self.spec = spec
        self.role = role
        dims = [spec.input_dim] + [spec.hidden] * spec.layers
        self.layers = nn.ModuleList(
            GATv2Layer(dims[i], dims[i + 1], spec.heads, spec.leaky_slope)
            for i in range(spec.layers)
        )
        self.null_token = nn.Parameter(torch.zeros(spec.hidden))
        self.proj = nn.Linear(spec.hidden, spec.embed_dim)

    def node_outputs(self, x: torch.Tensor, edges: torch.Tensor) -> torch.Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x, edges)
            if i < len(self.layers) - 1:
                x = torch.nn.functional.elu(x)
        return x

    def forward(self, x: torch.Tensor, edges: torch.Tensor) -> torch.Tensor:
        if x.shape[0] == 0:
            pooled = self.null_token
        else:
            pooled = self.node_outputs(x, edges).mean(dim=0)
        return self.proj(pooled)


def graph_tensors(graph: SceneGraph, d: int, dtype=torch.float32,
                  device="cpu") -> tuple[torch.Tensor, torch.Tensor]:
    feats, edges = graph_feature_matrix(graph, d)
    return (
        torch.as_tensor(feats, dtype=dtype, device=device),
        torch.as_tensor(edges, dtype=torch.long, device=device),
    )


def encode_graph(graph: SceneGraph, d: int, encoder: GraphEncoder) -> torch.Tensor:
    p = next(encoder.parameters())
    x, edges = graph_tensors(graph, d, dtype=p.dtype, device=p.device)
    return encoder(x, edges)


def encode_sequence(seq: GraphSequence, enc_glob: GraphEncoder,
                    enc_loc: GraphEncoder) -> torch.Tensor:
    """Per-frame concat(global, local) embeddings, shape (n, glob + loc)."""
    d = seq.class_count
    rows = [
        torch.cat([encode_graph(g, d, enc_glob), encode_graph(g, d, enc_loc)])
        for g in seq.graphs
    ]
    if not rows:
        width = enc_glob.spec.embed_dim + enc_loc.spec.embed_dim
        return torch.zeros((0, width))
    return torch.stack(rows)


ENCODER_SCHEMA_VERSION = "sg2vid.encoders/1"


def save_encoder_checkpoint(path: str | Path, enc_glob: GraphEncoder,
                            enc_loc: GraphEncoder, aux_state: dict | None = None,
                            extra: dict | None = None):
    spec = enc_glob.spec
    manifest = {
        "schema": ENCODER_SCHEMA_VERSION,
        "class_count": spec.class_count,
        "hidden": spec.hidden,
        "heads": spec.heads,
        "layers": spec.layers,
        "embed_dim": spec.embed_dim,
        "leaky_slope": spec.leaky_slope,
        "roles": ["global", "local"],
    }
    if extra:
        manifest.update(extra)
    payload = {
        "manifest_json": json.dumps(manifest, sort_keys=True),
        "global": enc_glob.state_dict(),
        "local": enc_loc.state_dict(),
    }
    if aux_state is not None:
        payload["aux"] = aux_state
    torch.save(payload, path)


def load_encoder_checkpoint(path: str | Path):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    manifest = json.loads(payload["manifest_json"])
    if manifest.get("schema") != ENCODER_SCHEMA_VERSION:
        raise ValueError(f"unsupported encoder checkpoint schema {manifest.get('schema')!r}")
    spec = EncoderSpec(
        class_count=manifest["class_count"], hidden=manifest["hidden"],
        heads=manifest["heads"], layers=manifest["layers"],
        embed_dim=manifest["embed_dim"], leaky_slope=manifest["leaky_slope"],
    )
    enc_glob = GraphEncoder(spec, role="global")
    enc_loc = GraphEncoder(spec, role="local")
    enc_glob.load_state_dict(payload["global"])
    enc_loc.load_state_dict(payload["local"])
    enc_glob.eval()
    enc_loc.eval()
    return enc_glob, enc_loc, manifest, payload.get("aux")


def permute_graph(graph: SceneGraph, perm: np.ndarray) -> SceneGraph:
    """Reorder node storage (ids and edges unchanged); invariance probe."""
    nodes = tuple(graph.nodes[int(p)] for p in perm)
    return SceneGraph(graph.frame_index, nodes, graph.edges)
