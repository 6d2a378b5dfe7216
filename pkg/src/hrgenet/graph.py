"""Hierarchical relational graph embedding over cyclic view graphs.

Views of a shape form a ring graph.  Each level runs a pairwise relation
module (all ordered node pairs through a small MLP, summed per node and
fused with the original feature), records a pooled level descriptor, runs
a neighboring relation module on ring triplets, and coarsens the ring by a
fixed stride.  The concatenated per-level descriptors form the global
shape descriptor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor, as_tensor
from .errors import (
    CoarseningError,
    ConfigError,
    RingTooSmallError,
    ShapeMismatchError,
)
from .layers import LinearLayer, Mlp, linear_forward, mlp_forward

NEIGHBOR_KINDS = ("learned", "max", "avg", "identity")

_VARIANT_ALIASES = {
    "baseline": "baseline",
    "pr": "pr",
    "nr": "nr",
    "hrge-1l": "1l",
    "1l": "1l",
    "hrge-full": "full",
    "full": "full",
    "hrge-won": "won",
    "won": "won",
    "w/o-n": "won",
    "hrge-mp": "mp",
    "mp": "mp",
    "hrge-ap": "ap",
    "ap": "ap",
    "hrge-id": "id",
    "id": "id",
}

VARIANT_NAMES = ("baseline", "pr", "nr", "1l", "full", "won", "mp", "ap", "id")


@dataclass(frozen=True)
class VariantSpec:
    """Which pieces of the architecture a model variant wires in."""

    name: str
    use_pairwise: bool
    use_neighboring: bool
    hierarchical: bool
    normalize_blocks: bool
    neighbor_kind: str
    depth_override: int | None = None

    @classmethod
    def from_name(cls, name: str) -> "VariantSpec":
        key = _VARIANT_ALIASES.get(name.strip().lower())
        if key is None:
            raise ConfigError(
                f"unknown variant {name!r}; expected one of {VARIANT_NAMES}"
            )
        if key == "baseline":
            return cls(key, False, False, False, True, "learned")
        if key == "pr":
            return cls(key, True, False, False, True, "learned")
        if key == "nr":
            return cls(key, False, True, False, True, "learned")
        if key == "1l":
            return cls(key, True, True, True, True, "learned", depth_override=1)
        if key == "won":
            return cls(key, True, True, True, False, "learned")
        if key in ("mp", "ap"):
            kind = "max" if key == "mp" else "avg"
            return cls(key, True, True, True, True, kind)
        if key == "id":
            return cls(key, True, True, True, True, "identity")
        return cls("full", True, True, True, True, "learned")


@dataclass
class ViewGraph:
    """Ring-ordered node features at one hierarchy level."""

    level: int
    features: Tensor

    def __post_init__(self):
        self.features = as_tensor(self.features)
        if self.features.data.ndim != 2 or self.features.data.shape[0] < 1:
            raise ShapeMismatchError(
                f"view graph needs a non-empty 2-D feature matrix, "
                f"got shape {self.features.shape}"
            )

    @property
    def num_nodes(self) -> int:
        return self.features.data.shape[0]

    @property
    def width(self) -> int:
        return self.features.data.shape[1]


class LevelParams:
    """Learnable maps of one hierarchy level.

    pairwise_mlp consumes concatenated node pairs (2w -> w, three layers),
    fusion consumes [node, summed relations] (2w -> w), and neighboring
    consumes ring triplets (3w -> w).  The neighboring layer is absent
    when the variant replaces it with a fixed pooling rule.
    """

    def __init__(self, width: int, rng, neighbor_kind: str = "learned",
                 use_pairwise: bool = True):
        self.width = width
        self.neighbor_kind = neighbor_kind
        self.pairwise_mlp = None
        self.fusion = None
        self.neighboring = None
        if use_pairwise:
            self.pairwise_mlp = Mlp([2 * width, width, width, width], rng)
            self.fusion = LinearLayer(2 * width, width, rng)
        if neighbor_kind == "learned":
            self.neighboring = LinearLayer(3 * width, width, rng)

    def parameters(self):
        params = []
        if self.pairwise_mlp is not None:
            params += self.pairwise_mlp.parameters()
        if self.fusion is not None:
            params += self.fusion.parameters()
        if self.neighboring is not None:
            params += self.neighboring.parameters()
        return params


def pairwise_relation(graph: ViewGraph, params: LevelParams) -> ViewGraph:
    """Update node features from all ordered pairwise relations.

    For each node i the relations r_ij over all other nodes j are computed
    by the pairwise MLP on concatenated features, summed, and fused with
    the node's own feature through the fusion layer plus a rectifier.
    """
    x = graph.features
    n, width = graph.num_nodes, graph.width
    if params.pairwise_mlp is None:
        raise ConfigError("level has no pairwise module")
    if width != params.width:
        raise ShapeMismatchError(
            f"graph width {width} does not match level width {params.width}"
        )
    if n == 1:
        summed = Tensor(np.zeros((1, width)))
    else:
        idx_i, idx_j = np.nonzero(~np.eye(n, dtype=bool))
        pairs = ag.concat_cols([ag.take_rows(x, idx_i), ag.take_rows(x, idx_j)])
        relations = mlp_forward(params.pairwise_mlp, pairs)
        summed = ag.segment_sum_rows(relations, idx_i, n)
    fused = linear_forward(params.fusion, ag.concat_cols([x, summed]))
    return ViewGraph(graph.level, ag.relu(fused))


def neighboring_relation(graph: ViewGraph, params: LevelParams) -> ViewGraph:
    """Fuse each node with its ring neighbors (cyclic wrap at both ends)."""
    n = graph.num_nodes
    if n < 3:
        raise RingTooSmallError(
            f"neighboring relation needs a ring of >= 3 nodes, got {n}"
        )
    x = graph.features
    prev_idx = (np.arange(n) - 1) % n
    next_idx = (np.arange(n) + 1) % n
    kind = params.neighbor_kind
    if kind == "identity":
        return ViewGraph(graph.level, x)
    prev = ag.take_rows(x, prev_idx)
    nxt = ag.take_rows(x, next_idx)
    if kind == "learned":
        if params.neighboring is None:
            raise ConfigError("level has no learned neighboring layer")
        out = ag.relu(linear_forward(params.neighboring,
                                     ag.concat_cols([prev, x, nxt])))
    elif kind == "max":
        out = ag.maximum(ag.maximum(prev, x), nxt)
    elif kind == "avg":
        out = ag.scale(ag.add(ag.add(prev, x), nxt), 1.0 / 3.0)
    else:
        raise ConfigError(f"unknown neighbor kind {kind!r}")
    return ViewGraph(graph.level, out)


def coarsen(graph: ViewGraph, stride: int, offset: int = 0) -> ViewGraph:
    """Down-sample the ring, keeping every stride-th node.

    With 1-based ring indices the new node i takes the feature of old
    node stride*i, so stride 2 keeps old nodes 2, 4, ..., N.  The optional
    offset rotates that selection; ring order is preserved.
    """
    n = graph.num_nodes
    if stride < 1:
        raise CoarseningError(f"stride must be >= 1, got {stride}")
    if stride == 1 and offset == 0:
        return ViewGraph(graph.level + 1, graph.features)
    if n % stride != 0:
        raise CoarseningError(
            f"cannot coarsen {n} nodes with stride {stride}"
        )
    kept = (np.arange(1, n // stride + 1) * stride - 1 + offset) % n
    return ViewGraph(graph.level + 1, ag.take_rows(graph.features, kept))


def level_descriptor(features):
    """Unit-normalized column-wise max over node features.

    Returns ``(tensor, degenerate)``; the degenerate flag mirrors the
    normalization guard on all-zero pooled features.
    """
    pooled, _ = ag.maxpool_rows(features)
    return ag.l2_normalize(pooled)


@dataclass
class GlobalDescriptor:
    """Per-level pooled descriptors and their concatenation."""

    blocks: list
    concat: Tensor
    degenerate: list = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return self.concat.data


def max_depth_for(num_views: int, stride: int) -> int:
    """Deepest hierarchy whose non-final levels keep a ring of >= 3 nodes."""
    depth, n = 0, num_views
    while n >= 3 and n % stride == 0:
        depth += 1
        n //= stride
    return depth


class HrgeModel:
    """The full hierarchical relational embedding network."""

    def __init__(self, num_views: int, width: int, variant="full",
                 stride: int = 2, depth: int | None = None, seed: int = 0):
        if isinstance(variant, str):
            variant = VariantSpec.from_name(variant)
        self.variant = variant
        self.num_views = num_views
        self.width = width
        self.stride = stride
        self.seed = seed
        if variant.hierarchical:
            if depth is None:
                depth = variant.depth_override or max_depth_for(num_views, stride)
            elif variant.depth_override is not None:
                depth = variant.depth_override
            if depth < 1:
                raise ConfigError(f"hierarchy depth must be >= 1, got {depth}")
            n = num_views
            for level in range(depth):
                if n % stride != 0:
                    raise ConfigError(
                        f"{num_views} views cannot support depth {depth} "
                        f"with stride {stride} (level {level} has {n} nodes)"
                    )
                if n < 3:
                    raise ConfigError(
                        f"level {level} would have only {n} nodes; "
                        "rings below 3 nodes cannot run the neighboring module"
                    )
                n //= stride
            self.depth = depth
        else:
            self.depth = 0
        rng = np.random.default_rng(seed)
        self.levels = []
        if variant.name in ("pr", "nr"):
            self.levels.append(LevelParams(
                width, rng,
                neighbor_kind=variant.neighbor_kind,
                use_pairwise=variant.use_pairwise,
            ))
        else:
            for _ in range(self.depth):
                self.levels.append(LevelParams(
                    width, rng,
                    neighbor_kind=variant.neighbor_kind,
                    use_pairwise=True,
                ))

    @property
    def descriptor_length(self) -> int:
        return self.num_blocks * self.width

    @property
    def num_blocks(self) -> int:
        if self.variant.hierarchical:
            return self.depth + 1
        return 1

    def parameters(self):
        return [p for level in self.levels for p in level.parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def forward(self, views) -> GlobalDescriptor:
        return hrge_forward(self, views)


def hrge_forward(model: HrgeModel, views) -> GlobalDescriptor:
    """Run the hierarchical forward pass and build the global descriptor.

    Per level: pairwise relations update the features, the level block is
    pooled from those updated features, then the neighboring module and
    coarsening produce the next level's ring.  The final level is pooled
    from its raw node features.
    """
    views = as_tensor(views)
    if views.data.ndim != 2 or views.data.shape[0] != model.num_views:
        raise ShapeMismatchError(
            f"expected a {model.num_views} x {model.width} view matrix, "
            f"got shape {views.shape}"
        )
    if views.data.shape[1] != model.width:
        raise ShapeMismatchError(
            f"view feature width {views.data.shape[1]} does not match "
            f"model width {model.width}"
        )
    variant = model.variant
    blocks, flags = [], []

    def emit(features):
        if variant.normalize_blocks:
            block, degenerate = level_descriptor(features)
        else:
            block, _ = ag.maxpool_rows(features)
            degenerate = False
        blocks.append(block)
        flags.append(degenerate)

    graph = ViewGraph(0, views)
    if variant.name == "baseline":
        emit(graph.features)
    elif variant.name == "pr":
        emit(pairwise_relation(graph, model.levels[0]).features)
    elif variant.name == "nr":
        emit(neighboring_relation(graph, model.levels[0]).features)
    else:
        for level_params in model.levels:
            updated = pairwise_relation(graph, level_params)
            emit(updated.features)
            shifted = neighboring_relation(updated, level_params)
            graph = coarsen(shifted, model.stride)
        emit(graph.features)
    concat = ag.concat_vecs(blocks) if len(blocks) > 1 else blocks[0]
    return GlobalDescriptor(blocks=blocks, concat=concat, degenerate=flags)


def apply_variant(name: str) -> VariantSpec:
    """Resolve a variant name into its architecture wiring."""
    return VariantSpec.from_name(name)
