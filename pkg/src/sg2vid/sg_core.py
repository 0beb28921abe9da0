"""Scene-graph data model and operations.

A scene graph describes one video frame as a set of nodes (one per connected
component of a segmentation mask) joined by undirected adjacency edges. Node
attributes are resolution-independent fractions: centroid, bounding-box
spread, mean optical flow and mean depth. Sequences of per-frame graphs are
serialized to a canonical, byte-deterministic JSON document
(schema ``sg2vid.graph/1``) and can be manipulated through typed edit ops.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

GRAPH_SCHEMA_VERSION = "sg2vid.graph/1"

# Attribute layout shared by feature vectors, edits and serialization.
# Compound attributes map to (component names, lower bound, upper bound).
_ATTRS = {
    "centroid": (("cy", "cx"), 0.0, 1.0),
    "spread": (("h", "w"), 0.0, 1.0),
    "flow": (("fy", "fx"), -1.0, 1.0),
    "depth": ((), 0.0, 1.0),
}

EDIT_KINDS = ("set_attr", "add_node", "remove_node", "interpolate_attr")


class GraphValidationError(ValueError):
    """A scene graph or sequence violates a structural invariant."""


class EditError(ValueError):
    """A graph edit op cannot be applied to the given sequence."""


class SchemaError(ValueError):
    """A serialized document does not conform to sg2vid.graph/1."""


@dataclass(frozen=True)
class SceneNode:
    """One connected component: class plus geometric/motion summary.

    All attributes are unitless fractions of the image size; ``flow`` is a
    per-frame displacement fraction and may be negative.
    """

    id: int
    class_id: int
    centroid: tuple[float, float]  # (cy, cx)
    spread: tuple[float, float]  # (h, w)
    flow: tuple[float, float]  # (fy, fx)
    depth: float

    def __post_init__(self):
        if self.id < 0:
            raise GraphValidationError(f"node id must be >= 0, got {self.id}")
        if self.class_id < 0:
            raise GraphValidationError(
                f"node {self.id}: class_id must be >= 0, got {self.class_id}"
            )
        for attr in ("centroid", "spread", "depth"):
            for name, value in _attr_items(self, attr):
                if not (0.0 <= value <= 1.0) or math.isnan(value):
                    raise GraphValidationError(
                        f"node {self.id}: {name}={value!r} outside [0, 1]"
                    )
        for name, value in _attr_items(self, "flow"):
            if not (-1.0 <= value <= 1.0) or math.isnan(value):
                raise GraphValidationError(
                    f"node {self.id}: {name}={value!r} outside [-1, 1]"
                )

    def get_attr(self, attr: str) -> float | tuple[float, float]:
        base, comp = _split_attr(attr)
        value = getattr(self, base)
        if comp is None:
            return value
        names = _ATTRS[base][0]
        return value[names.index(comp)]

    def with_attr(self, attr: str, value) -> "SceneNode":
        base, comp = _split_attr(attr)
        names, lo, hi = _ATTRS[base]
        if comp is None and names:
            vals = tuple(float(v) for v in value)
            if len(vals) != len(names):
                raise EditError(f"{attr} expects {len(names)} components")
        elif comp is None:
            vals = float(value)
        else:
            current = list(getattr(self, base))
            current[names.index(comp)] = float(value)
            vals = tuple(current)
        for v in vals if isinstance(vals, tuple) else (vals,):
            if not (lo <= v <= hi):
                raise EditError(f"{attr}={v!r} outside [{lo}, {hi}]")
        return replace(self, **{base: vals})


def _attr_items(node: SceneNode, attr: str):
    names = _ATTRS[attr][0]
    value = getattr(node, attr)
    if not names:
        yield attr, value
    else:
        for name, v in zip(names, value):
            yield f"{attr}.{name}", v


def _split_attr(attr: str) -> tuple[str, str | None]:
    base, _, comp = attr.partition(".")
    if base not in _ATTRS:
        raise EditError(f"unknown attribute {attr!r}")
    names = _ATTRS[base][0]
    if comp and comp not in names:
        raise EditError(f"unknown attribute component {attr!r}")
    return base, comp or None


@dataclass(frozen=True)
class SceneGraph:
    """Nodes and undirected adjacency edges for one frame."""

    frame_index: int
    nodes: tuple[SceneNode, ...]
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.frame_index < 0:
            raise GraphValidationError(
                f"frame_index must be >= 0, got {self.frame_index}"
            )
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise GraphValidationError(
                f"frame {self.frame_index}: duplicate node ids {sorted(ids)}"
            )
        id_set = set(ids)
        for a, b in self.edges:
            if a == b:
                raise GraphValidationError(
                    f"frame {self.frame_index}: self-edge on node {a}"
                )
            if a > b:
                raise GraphValidationError(
                    f"frame {self.frame_index}: edge ({a}, {b}) not stored as sorted pair"
                )
            for end in (a, b):
                if end not in id_set:
                    raise GraphValidationError(
                        f"frame {self.frame_index}: edge ({a}, {b}) references missing node {end}"
                    )

    def node(self, node_id: int) -> SceneNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise EditError(f"unknown node id {node_id} at frame {self.frame_index}")

    def has_node(self, node_id: int) -> bool:
        return any(n.id == node_id for n in self.nodes)


def make_edges(pairs: Iterable[Sequence[int]]) -> frozenset[tuple[int, int]]:
    """Normalize id pairs to the sorted-tuple form SceneGraph stores."""
    return frozenset((min(a, b), max(a, b)) for a, b in pairs)


@dataclass(frozen=True)
class GraphSequence:
    """Per-frame scene graphs for one clip, with shared class vocabulary."""

    graphs: tuple[SceneGraph, ...]
    image_size: tuple[int, int]  # (H, W) pixels
    class_names: tuple[str, ...]

    def __post_init__(self):
        h, w = self.image_size
        if h <= 0 or w <= 0:
            raise GraphValidationError(f"image_size must be positive, got {self.image_size}")
        for i, g in enumerate(self.graphs):
            if g.frame_index != i:
                raise GraphValidationError(
                    f"graphs[{i}] has frame_index {g.frame_index}; frames must be contiguous from 0"
                )
        d = len(self.class_names)
        id_class: dict[int, int] = {}
        for g in self.graphs:
            for n in g.nodes:
                if n.class_id >= d:
                    raise GraphValidationError(
                        f"frame {g.frame_index}: node {n.id} class_id {n.class_id} >= class count {d}"
                    )
                seen = id_class.setdefault(n.id, n.class_id)
                if seen != n.class_id:
                    raise GraphValidationError(
                        f"node id {n.id} carries class {seen} and {n.class_id} in different frames"
                    )

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    def with_graphs(self, graphs: Sequence[SceneGraph]) -> "GraphSequence":
        return GraphSequence(tuple(graphs), self.image_size, self.class_names)


@dataclass(frozen=True)
class GraphEditOp:
    """One typed edit: set/add/remove/interpolate on a frame range.

    ``frames`` is an inclusive (start, end) range. ``attr`` is an attribute
    path such as ``"spread"`` or ``"spread.h"``. ``node`` carries the full
    node definition for add_node.
    """

    op_kind: str
    node_id: int | None = None
    frames: tuple[int, int] | None = None
    attr: str | None = None
    value: object = None
    node: SceneNode | None = None

    def __post_init__(self):
        if self.op_kind not in EDIT_KINDS:
            raise EditError(f"unknown op_kind {self.op_kind!r}")


# ---------------------------------------------------------------------------
# Construction from masks
# ---------------------------------------------------------------------------

_EIGHT_CONN = np.ones((3, 3), dtype=bool)
# One representative per symmetric pair of 8-neighborhood offsets.
_ADJ_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))


def build_scene_graph(
    mask: np.ndarray,
    flow_field: np.ndarray,
    depth_map: np.ndarray,
    class_count: int,
    min_area: int = 4,
    frame_index: int = 0,
) -> SceneGraph:
    """Extract one scene graph from a labeled mask plus flow/depth fields.

    Every non-background (label > 0) connected component with at least
    ``min_area`` pixels becomes a node; components touching within an
    8-neighborhood are joined by an edge. Node ids are assigned by the
    region's first pixel in row-major scan order, so identical inputs give
    identical graphs.
    """
    mask = np.asarray(mask)
    flow_field = np.asarray(flow_field, dtype=np.float64)
    depth_map = np.asarray(depth_map, dtype=np.float64)
    if mask.ndim != 2:
        raise GraphValidationError(f"mask must be 2-D, got shape {mask.shape}")
    h, w = mask.shape
    if flow_field.shape != (h, w, 2):
        raise GraphValidationError(
            f"flow_field shape {flow_field.shape} does not match mask {(h, w)} + 2 channels"
        )
    if depth_map.shape != (h, w):
        raise GraphValidationError(
            f"depth_map shape {depth_map.shape} does not match mask {(h, w)}"
        )
    if mask.min() < 0:
        raise GraphValidationError("mask labels must be >= 0")
    max_label = int(mask.max())
    if max_label >= class_count:
        raise GraphValidationError(
            f"mask label {max_label} >= class_count {class_count}"
        )

    dmin, dmax = depth_map.min(), depth_map.max()
    if dmax > dmin:
        depth_norm = (depth_map - dmin) / (dmax - dmin)
    else:
        # No depth contrast in this frame; midpoint keeps values in range.
        depth_norm = np.full_like(depth_map, 0.5)

    # -1 marks background in the per-pixel region index map.
    region_map = np.full((h, w), -1, dtype=np.int64)
    regions = []  # (scan_index, pixel index arrays)
    for label in range(1, max_label + 1):
        labeled, count = ndimage.label(mask == label, structure=_EIGHT_CONN)
        for comp in range(1, count + 1):
            rows, cols = np.nonzero(labeled == comp)
            if rows.size < min_area:
                continue
            scan = int((rows.astype(np.int64) * w + cols).min())
            regions.append((scan, label, rows, cols))
    regions.sort(key=lambda r: r[0])

    nodes = []
    for node_id, (_, label, rows, cols) in enumerate(regions):
        region_map[rows, cols] = node_id
        cy = (rows.mean() + 0.5) / h
        cx = (cols.mean() + 0.5) / w
        spread_h = (rows.max() - rows.min() + 1) / h
        spread_w = (cols.max() - cols.min() + 1) / w
        fy = flow_field[rows, cols, 0].mean() / h
        fx = flow_field[rows, cols, 1].mean() / w
        depth = depth_norm[rows, cols].mean()
        nodes.append(
            SceneNode(
                id=node_id,
                class_id=label,
                centroid=(float(cy), float(cx)),
                spread=(float(spread_h), float(spread_w)),
                flow=(float(fy), float(fx)),
                depth=float(depth),
            )
        )

    edges = set()
    for dy, dx in _ADJ_OFFSETS:
        a = region_map[max(0, -dy) : h - max(0, dy), max(0, -dx) : w - max(0, dx)]
        b = region_map[max(0, dy) : h - max(0, -dy), max(0, dx) : w - max(0, -dx)]
        touching = (a >= 0) & (b >= 0) & (a != b)
        for pa, pb in zip(a[touching].tolist(), b[touching].tolist()):
            edges.add((min(pa, pb), max(pa, pb)))

    return SceneGraph(frame_index=frame_index, nodes=tuple(nodes), edges=frozenset(edges))


def match_node_ids(graphs: Sequence[SceneGraph]) -> list[SceneGraph]:
    """Relabel per-frame node ids so components keep one id across frames.

    Greedy class-constrained matching against the previous frame by nearest
    centroid; unmatched components receive fresh ids. Deterministic: ties
    break on (distance, previous id, current id).
    """
    if not graphs:
        return []
    out = [graphs[0]]
    next_id = max((n.id for n in graphs[0].nodes), default=-1) + 1
    for g in graphs[1:]:
        prev = out[-1]
        candidates = []
        for p in prev.nodes:
            for c in g.nodes:
                if p.class_id != c.class_id:
                    continue
                dist = math.hypot(
                    p.centroid[0] - c.centroid[0], p.centroid[1] - c.centroid[1]
                )
                candidates.append((dist, p.id, c.id))
        candidates.sort()
        id_map: dict[int, int] = {}
        used_prev: set[int] = set()
        for _, pid, cid in candidates:
            if pid in used_prev or cid in id_map:
                continue
            id_map[cid] = pid
            used_prev.add(pid)
        for c in g.nodes:
            if c.id not in id_map:
                id_map[c.id] = next_id
                next_id += 1
        nodes = tuple(replace(n, id=id_map[n.id]) for n in g.nodes)
        edges = make_edges((id_map[a], id_map[b]) for a, b in g.edges)
        out.append(SceneGraph(g.frame_index, nodes, edges))
    return out


# ---------------------------------------------------------------------------
# Feature vectors
# ---------------------------------------------------------------------------


def node_feature_vector(node: SceneNode, d: int) -> np.ndarray:
    """Dense node vector: [one-hot class (d) | cy, cx | h, w | fy, fx | depth]."""
    if node.class_id >= d:
        raise GraphValidationError(
            f"node {node.id}: class_id {node.class_id} out of range for d={d}"
        )
    vec = np.zeros(d + 7, dtype=np.float64)
    vec[node.class_id] = 1.0
    vec[d : d + 2] = node.centroid
    vec[d + 2 : d + 4] = node.spread
    vec[d + 4 : d + 6] = node.flow
    vec[d + 6] = node.depth
    return vec


def vector_to_node(vec: np.ndarray, d: int, node_id: int = 0) -> SceneNode:
    """Inverse of node_feature_vector for a fixed class count."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (d + 7,):
        raise GraphValidationError(f"expected vector of length {d + 7}, got {vec.shape}")
    return SceneNode(
        id=node_id,
        class_id=int(np.argmax(vec[:d])),
        centroid=(float(vec[d]), float(vec[d + 1])),
        spread=(float(vec[d + 2]), float(vec[d + 3])),
        flow=(float(vec[d + 4]), float(vec[d + 5])),
        depth=float(vec[d + 6]),
    )


def graph_feature_matrix(graph: SceneGraph, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack node vectors (k, d+7) plus an edge index array (2, E) of node positions."""
    feats = np.stack([node_feature_vector(n, d) for n in graph.nodes]) if graph.nodes else np.zeros((0, d + 7))
    pos = {n.id: i for i, n in enumerate(graph.nodes)}
    if graph.edges:
        edges = np.array(sorted((pos[a], pos[b]) for a, b in graph.edges)).T
    else:
        edges = np.zeros((2, 0), dtype=np.int64)
    return feats, edges


# ---------------------------------------------------------------------------
# Edits
# ---------------------------------------------------------------------------


def _frame_range(seq: GraphSequence, frames: tuple[int, int] | None) -> range:
    if frames is None:
        return range(len(seq))
    start, end = frames
    if start > end:
        raise EditError(f"frame range ({start}, {end}) is empty")
    if start < 0 or end >= len(seq):
        raise EditError(
            f"frame range ({start}, {end}) outside sequence of length {len(seq)}"
        )
    return range(start, end + 1)


def apply_edit(seq: GraphSequence, op: GraphEditOp) -> GraphSequence:
    """Apply one edit op, returning a new sequence; the input is untouched."""
    if op.op_kind == "set_attr":
        if op.attr is None:
            raise EditError("set_attr requires an attribute path")
        frames = _frame_range(seq, op.frames)
        graphs = list(seq.graphs)
        for f in frames:
            g = graphs[f]
            node = g.node(op.node_id)
            nodes = tuple(
                node.with_attr(op.attr, op.value) if n.id == op.node_id else n
                for n in g.nodes
            )
            graphs[f] = SceneGraph(g.frame_index, nodes, g.edges)
        return seq.with_graphs(graphs)

    if op.op_kind == "add_node":
        if op.node is None:
            raise EditError("add_node requires a node definition")
        frames = _frame_range(seq, op.frames)
        graphs = list(seq.graphs)
        for f in frames:
            g = graphs[f]
            if g.has_node(op.node.id):
                raise EditError(f"node id {op.node.id} already present at frame {f}")
            graphs[f] = SceneGraph(g.frame_index, g.nodes + (op.node,), g.edges)
        return seq.with_graphs(graphs)

    if op.op_kind == "remove_node":
        frames = _frame_range(seq, op.frames)
        graphs = list(seq.graphs)
        for f in frames:
            g = graphs[f]
            g.node(op.node_id)  # raises if absent
            nodes = tuple(n for n in g.nodes if n.id != op.node_id)
            edges = frozenset(e for e in g.edges if op.node_id not in e)
            graphs[f] = SceneGraph(g.frame_index, nodes, edges)
        return seq.with_graphs(graphs)

    if op.op_kind == "interpolate_attr":
        if op.frames is None or op.attr is None:
            raise EditError("interpolate_attr requires frames and an attribute path")
        return interpolate_attr(seq, op.node_id, op.attr, op.frames[0], op.frames[1])

    raise EditError(f"unknown op_kind {op.op_kind!r}")


def _lerp(a: float, b: float, t: float) -> float:
    # Exact formula is part of the wire contract; editor clients mirror it.
    return a + (b - a) * t


def interpolate_attr(
    seq: GraphSequence, node_id: int, attr: str, start_frame: int, end_frame: int
) -> GraphSequence:
    """Linearly ramp an attribute between its values at two keyframes.

    Endpoint frames keep their values; every interior frame gets the affine
    blend. The node must exist at every frame in the range.
    """
    if start_frame >= end_frame:
        raise EditError(
            f"start_frame {start_frame} must precede end_frame {end_frame}"
        )
    _frame_range(seq, (start_frame, end_frame))
    base, _ = _split_attr(attr)
    v0 = seq.graphs[start_frame].node(node_id).get_attr(attr)
    v1 = seq.graphs[end_frame].node(node_id).get_attr(attr)
    graphs = list(seq.graphs)
    for f in range(start_frame + 1, end_frame):
        g = graphs[f]
        if not g.has_node(node_id):
            raise EditError(f"node {node_id} missing at intermediate frame {f}")
        t = (f - start_frame) / (end_frame - start_frame)
        if isinstance(v0, tuple):
            value = tuple(_lerp(a, b, t) for a, b in zip(v0, v1))
        else:
            value = _lerp(v0, v1, t)
        nodes = tuple(
            n.with_attr(attr, value) if n.id == node_id else n for n in g.nodes
        )
        graphs[f] = SceneGraph(g.frame_index, nodes, g.edges)
    return seq.with_graphs(graphs)


# ---------------------------------------------------------------------------
# Canonical serialization (sg2vid.graph/1)
# ---------------------------------------------------------------------------


def format_float(x: float) -> str:
    """Fixed 6-decimal formatting; the canonical byte form of every float."""
    if math.isnan(x) or math.isinf(x):
        raise SchemaError(f"non-finite float {x!r} cannot be serialized")
    return f"{x + 0.0:.6f}"  # +0.0 folds -0.0 into 0.0


def _emit(value) -> str:
    if isinstance(value, dict):
        inner = ",".join(
            f"{json.dumps(k)}:{_emit(value[k])}" for k in sorted(value)
        )
        return "{" + inner + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_emit(v) for v in value) + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, str):
        return json.dumps(value)
    if value is None:
        return "null"
    raise SchemaError(f"cannot serialize value of type {type(value).__name__}")


def sequence_to_document(seq: GraphSequence) -> dict:
    """Plain-dict form of a sequence, with nodes/edges in canonical order."""
    return {
        "version": GRAPH_SCHEMA_VERSION,
        "image_size": [int(seq.image_size[0]), int(seq.image_size[1])],
        "class_names": list(seq.class_names),
        "graphs": [
            {
                "frame_index": g.frame_index,
                "nodes": [
                    {
                        "id": n.id,
                        "class_id": n.class_id,
                        "centroid": [n.centroid[0], n.centroid[1]],
                        "spread": [n.spread[0], n.spread[1]],
                        "flow": [n.flow[0], n.flow[1]],
                        "depth": n.depth,
                    }
                    for n in sorted(g.nodes, key=lambda n: n.id)
                ],
                "edges": [[a, b] for a, b in sorted(g.edges)],
            }
            for g in seq.graphs
        ],
    }


def serialize(seq: GraphSequence) -> str:
    """Canonical JSON text: sorted keys, fixed 6-decimal floats, no spaces."""
    return _emit(sequence_to_document(seq))


def _expect(cond: bool, path: str, message: str):
    if not cond:
        raise SchemaError(f"{path}: {message}")


def _get(obj: dict, key: str, path: str):
    _expect(isinstance(obj, dict), path, f"expected object, got {type(obj).__name__}")
    _expect(key in obj, path, f"missing key {key!r}")
    return obj[key]


def _as_int(value, path: str) -> int:
    _expect(isinstance(value, int) and not isinstance(value, bool), path, "expected integer")
    return value


def _as_float(value, path: str) -> float:
    _expect(
        isinstance(value, (int, float)) and not isinstance(value, bool),
        path,
        "expected number",
    )
    return float(value)


def _as_pair(value, path: str) -> tuple[float, float]:
    _expect(isinstance(value, list) and len(value) == 2, path, "expected [a, b] pair")
    return (_as_float(value[0], f"{path}[0]"), _as_float(value[1], f"{path}[1]"))


def document_to_sequence(doc: dict) -> GraphSequence:
    """Validate a parsed document and build the in-memory sequence.

    Raises SchemaError with a path-qualified message on any violation.
    """
    version = _get(doc, "version", "$")
    _expect(version == GRAPH_SCHEMA_VERSION, "$.version", f"unsupported version {version!r}")
    image_size = _get(doc, "image_size", "$")
    _expect(
        isinstance(image_size, list) and len(image_size) == 2,
        "$.image_size",
        "expected [H, W]",
    )
    h = _as_int(image_size[0], "$.image_size[0]")
    w = _as_int(image_size[1], "$.image_size[1]")
    class_names = _get(doc, "class_names", "$")
    _expect(
        isinstance(class_names, list) and all(isinstance(c, str) for c in class_names),
        "$.class_names",
        "expected list of strings",
    )
    graphs_doc = _get(doc, "graphs", "$")
    _expect(isinstance(graphs_doc, list), "$.graphs", "expected list")

    graphs = []
    for i, gdoc in enumerate(graphs_doc):
        gpath = f"$.graphs[{i}]"
        frame_index = _as_int(_get(gdoc, "frame_index", gpath), f"{gpath}.frame_index")
        nodes_doc = _get(gdoc, "nodes", gpath)
        _expect(isinstance(nodes_doc, list), f"{gpath}.nodes", "expected list")
        nodes = []
        for j, ndoc in enumerate(nodes_doc):
            npath = f"{gpath}.nodes[{j}]"
            try:
                nodes.append(
                    SceneNode(
                        id=_as_int(_get(ndoc, "id", npath), f"{npath}.id"),
                        class_id=_as_int(_get(ndoc, "class_id", npath), f"{npath}.class_id"),
                        centroid=_as_pair(_get(ndoc, "centroid", npath), f"{npath}.centroid"),
                        spread=_as_pair(_get(ndoc, "spread", npath), f"{npath}.spread"),
                        flow=_as_pair(_get(ndoc, "flow", npath), f"{npath}.flow"),
                        depth=_as_float(_get(ndoc, "depth", npath), f"{npath}.depth"),
                    )
                )
            except GraphValidationError as exc:
                raise SchemaError(f"{npath}: {exc}") from exc
        node_ids = {n.id for n in nodes}
        edges_doc = _get(gdoc, "edges", gpath)
        _expect(isinstance(edges_doc, list), f"{gpath}.edges", "expected list")
        edges = set()
        for j, edoc in enumerate(edges_doc):
            epath = f"{gpath}.edges[{j}]"
            _expect(isinstance(edoc, list) and len(edoc) == 2, epath, "expected [a, b] pair")
            a = _as_int(edoc[0], f"{epath}[0]")
            b = _as_int(edoc[1], f"{epath}[1]")
            _expect(a != b, epath, f"self-edge on node {a}")
            for end in (a, b):
                _expect(end in node_ids, epath, f"edge [{a}, {b}] references missing node id {end}")
            pair = (min(a, b), max(a, b))
            _expect(pair not in edges, epath, f"duplicate edge [{a}, {b}]")
            edges.add(pair)
        try:
            graphs.append(SceneGraph(frame_index, tuple(nodes), frozenset(edges)))
        except GraphValidationError as exc:
            raise SchemaError(f"{gpath}: {exc}") from exc

    try:
        return GraphSequence(tuple(graphs), (h, w), tuple(class_names))
    except GraphValidationError as exc:
        raise SchemaError(f"$.graphs: {exc}") from exc


def deserialize(text: str) -> GraphSequence:
    """Parse and validate canonical (or hand-written) graph JSON."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"$: invalid JSON ({exc})") from exc
    return document_to_sequence(doc)


# ---------------------------------------------------------------------------
# Edit-op wire form (shared with the HTTP API and the editor)
# ---------------------------------------------------------------------------


def edit_op_to_document(op: GraphEditOp) -> dict:
    doc: dict = {"op_kind": op.op_kind}
    if op.node_id is not None:
        doc["node_id"] = op.node_id
    if op.frames is not None:
        doc["frames"] = [op.frames[0], op.frames[1]]
    if op.attr is not None:
        doc["attr"] = op.attr
    if op.value is not None:
        doc["value"] = (
            list(op.value) if isinstance(op.value, (tuple, list)) else op.value
        )
    if op.node is not None:
        doc["node"] = {
            "id": op.node.id,
            "class_id": op.node.class_id,
            "centroid": list(op.node.centroid),
            "spread": list(op.node.spread),
            "flow": list(op.node.flow),
            "depth": op.node.depth,
        }
    return doc


def document_to_edit_op(doc: dict, path: str = "$") -> GraphEditOp:
    kind = _get(doc, "op_kind", path)
    _expect(kind in EDIT_KINDS, f"{path}.op_kind", f"unknown op kind {kind!r}")
    node_id = doc.get("node_id")
    if node_id is not None:
        node_id = _as_int(node_id, f"{path}.node_id")
    frames = doc.get("frames")
    if frames is not None:
        a = _as_int(frames[0], f"{path}.frames[0]") if isinstance(frames, list) and len(frames) == 2 else None
        _expect(a is not None, f"{path}.frames", "expected [start, end]")
        frames = (a, _as_int(frames[1], f"{path}.frames[1]"))
    value = doc.get("value")
    if isinstance(value, list):
        value = tuple(_as_float(v, f"{path}.value") for v in value)
    elif value is not None:
        value = _as_float(value, f"{path}.value")
    node = None
    if "node" in doc:
        ndoc = doc["node"]
        npath = f"{path}.node"
        try:
            node = SceneNode(
                id=_as_int(_get(ndoc, "id", npath), f"{npath}.id"),
                class_id=_as_int(_get(ndoc, "class_id", npath), f"{npath}.class_id"),
                centroid=_as_pair(_get(ndoc, "centroid", npath), f"{npath}.centroid"),
                spread=_as_pair(_get(ndoc, "spread", npath), f"{npath}.spread"),
                flow=_as_pair(_get(ndoc, "flow", npath), f"{npath}.flow"),
                depth=_as_float(_get(ndoc, "depth", npath), f"{npath}.depth"),
            )
        except GraphValidationError as exc:
            raise SchemaError(f"{npath}: {exc}") from exc
    return GraphEditOp(
        op_kind=kind, node_id=node_id, frames=frames, attr=doc.get("attr"),
        value=value, node=node,
    )
