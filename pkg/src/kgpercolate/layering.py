"""Query-relative distance layering and percolation subgraph construction.

For a query entity q, every entity within the hop horizon L gets a relative
distance (BFS hops over the augmented triples).  Layer l of the percolation
process sees only the triples whose head sits at distance l-1 and whose tail
sits at distance l-1 or l, i.e. messages flow outward (downhill in
potential) or sideways, never back toward the query.  A combined decoder
pass later uses the full L-hop neighborhood.

The batch builder merges several queries into one node table so the model
can process them in a single set of tensor ops; each query keeps its own
distance structure and anti-leakage edge mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kg import AdjacencyIndex


@dataclass
class DistanceMap:
    """Relative distances from one query entity, capped at the horizon."""

    query: int
    horizon: int
    dist: np.ndarray  # (|E|,) int16, -1 for unreachable within horizon

    def layer(self, l: int) -> np.ndarray:
        """Entity ids at exactly distance l (ascending)."""
        if l < 0 or l > self.horizon:
            raise ValueError(f"layer {l} outside [0, {self.horizon}]")
        return np.flatnonzero(self.dist == l).astype(np.int64)

    def within(self) -> np.ndarray:
        """All entity ids reachable within the horizon (ascending)."""
        return np.flatnonzero(self.dist >= 0).astype(np.int64)


def _gather_ranges(indptr: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Concatenate CSR ranges indptr[n]:indptr[n+1] for all given nodes."""
    if len(nodes) == 0:
        return np.empty(0, dtype=np.int64)
    starts = indptr[nodes]
    counts = indptr[nodes + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    cum = np.cumsum(counts)
    within = np.arange(total, dtype=np.int64) - np.repeat(cum - counts, counts)
    return np.repeat(starts, counts) + within


def relative_distances(
    index: AdjacencyIndex,
    q: int,
    horizon: int,
    removed: np.ndarray | None = None,
) -> DistanceMap:
    """BFS distances from q over the augmented triples, capped at horizon.

    ``removed`` is an optional array of triple positions (into the index's
    sorted order) excluded from traversal, used for anti-leakage masking.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if q < 0 or q >= index.num_entities:
        raise ValueError(f"query entity {q} out of range")
    dist = np.full(index.num_entities, -1, dtype=np.int16)
    dist[q] = 0
    removed_set = None
    if removed is not None and len(removed):
        removed_set = np.zeros(index.num_triples, dtype=bool)
        removed_set[removed] = True
    frontier = np.array([q], dtype=np.int64)
    for l in range(1, horizon + 1):
        pos = _gather_ranges(index.indptr, frontier)
        if removed_set is not None:
            pos = pos[~removed_set[pos]]
        tails = index.tail[pos]
        fresh = tails[dist[tails] == -1]
        if len(fresh) == 0:
            break
        dist[fresh] = l
        frontier = np.unique(fresh).astype(np.int64)
    return DistanceMap(query=q, horizon=horizon, dist=dist)


def percolation_subgraph(
    index: AdjacencyIndex,
    dm: DistanceMap,
    l: int,
    include_same_potential: bool = True,
    removed: np.ndarray | None = None,
) -> np.ndarray:
    """Triple positions of layer l: head at distance l-1, tail at l-1 or l.

    With include_same_potential=False only strictly outward triples (tail at
    distance l) are kept, which also drops the identity self-loops.
    """
    if l < 1 or l > dm.horizon:
        raise ValueError(f"percolation layer {l} outside [1, {dm.horizon}]")
    heads = dm.layer(l - 1)
    pos = _gather_ranges(index.indptr, heads)
    if removed is not None and len(removed):
        pos = pos[~np.isin(pos, removed)]
    td = dm.dist[index.tail[pos]]
    if include_same_potential:
        keep = (td == l) | (td == l - 1)
    else:
        keep = td == l
    return pos[keep]


def full_neighborhood(
    index: AdjacencyIndex,
    dm: DistanceMap,
    removed: np.ndarray | None = None,
) -> np.ndarray:
    """Positions of all triples with both endpoints within the horizon."""
    pos = _gather_ranges(index.indptr, dm.within())
    if removed is not None and len(removed):
        pos = pos[~np.isin(pos, removed)]
    return pos[dm.dist[index.tail[pos]] >= 0]


@dataclass
class QuerySpec:
    """One (entity, relation) query with optional answer and edge mask."""

    query: int
    rel: int  # augmented relation id (use the reverse id for head queries)
    answer: int = -1
    removed: np.ndarray | None = None  # triple positions masked for this query


@dataclass
class LayerTriples:
    """One layer's message triples, grouped by receiving node.

    Rows are sorted so that all triples sharing a target node are
    contiguous; seg_ptr[i]:seg_ptr[i+1] delimits the messages of
    targets[i].  ``denom`` carries each target's global degree for
    mean/std normalization.  ``triple_query`` maps each triple to its
    query slot for query-conditioned relation embeddings.
    """

    head_node: np.ndarray    # (m,) batch node rows
    rel: np.ndarray          # (m,) augmented relation ids
    seg_ptr: np.ndarray      # (n_targets + 1,)
    targets: np.ndarray      # (n_targets,) batch node rows
    denom: np.ndarray        # (n_targets,) float32 global degrees
    triple_query: np.ndarray # (m,) query slot per triple

    @property
    def num_triples(self) -> int:
        return len(self.head_node)


@dataclass
class BatchGraph:
    """Several query subgraphs merged into one disjoint node table."""

    n_nodes: int
    node_entity: np.ndarray   # (n_nodes,) entity id of each node row
    node_query: np.ndarray    # (n_nodes,) query slot of each node row
    spans: np.ndarray         # (B, 2) node row range per query
    query_nodes: np.ndarray   # (B,) node row holding each query entity
    query_rels: np.ndarray    # (B,) augmented relation id per query
    answer_nodes: np.ndarray  # (B,) node row of the answer, -1 if absent
    layers: list[LayerTriples]  # percolation layers 1..horizon
    decoder: LayerTriples       # full-neighborhood pass
    horizon: int

    @property
    def num_queries(self) -> int:
        return len(self.query_rels)


class SubgraphBuilder:
    """Builds per-query layered subgraphs and merges them into batches.

    Reuses scratch arrays across queries, so one builder instance should be
    kept per worker.  Construction is pure numpy and deterministic.
    """

    def __init__(self, index: AdjacencyIndex):
        self.index = index
        self._dist = np.full(index.num_entities, -1, dtype=np.int16)
        self._nodemap = np.full(index.num_entities, -1, dtype=np.int64)
        self._removed = np.zeros(index.num_triples, dtype=bool)

    def build_batch(
        self,
        queries: list[QuerySpec],
        horizon: int,
        include_same_potential: bool = True,
    ) -> BatchGraph:
        if horizon <= 0:
            raise ValueError(f"horizon must be positive, got {horizon}")
        index = self.index
        node_entity_parts: list[np.ndarray] = []
        node_query_parts: list[np.ndarray] = []
        spans = np.zeros((len(queries), 2), dtype=np.int64)
        query_nodes = np.zeros(len(queries), dtype=np.int64)
        query_rels = np.zeros(len(queries), dtype=np.int64)
        answer_nodes = np.full(len(queries), -1, dtype=np.int64)
        layer_parts: list[list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]] = [
            [] for _ in range(horizon)
        ]
        decoder_parts: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []

        offset = 0
        for slot, qs in enumerate(queries):
            if qs.query < 0 or qs.query >= index.num_entities:
                raise ValueError(f"query entity {qs.query} out of range")
            dist = self._dist
            masked = qs.removed is not None and len(qs.removed) > 0
            if masked:
                self._removed[qs.removed] = True
            dist[qs.query] = 0
            frontier = np.array([qs.query], dtype=np.int64)
            per_layer_pos: list[np.ndarray] = []
            for l in range(1, horizon + 1):
                pos = _gather_ranges(index.indptr, frontier)
                if masked:
                    pos = pos[~self._removed[pos]]
                tails = index.tail[pos]
                fresh = tails[dist[tails] == -1]
                if len(fresh):
                    dist[fresh] = l
                    frontier = np.unique(fresh).astype(np.int64)
                else:
                    frontier = np.empty(0, dtype=np.int64)
                td = dist[tails]
                if include_same_potential:
                    keep = (td == l) | (td == l - 1)
                else:
                    keep = td == l
                per_layer_pos.append(pos[keep])

            nodes = np.flatnonzero(dist >= 0).astype(np.int64)
            self._nodemap[nodes] = offset + np.arange(len(nodes), dtype=np.int64)
            node_entity_parts.append(nodes)
            node_query_parts.append(np.full(len(nodes), slot, dtype=np.int64))
            spans[slot] = (offset, offset + len(nodes))
            query_nodes[slot] = self._nodemap[qs.query]
            query_rels[slot] = qs.rel
            if qs.answer >= 0 and dist[qs.answer] >= 0:
                answer_nodes[slot] = self._nodemap[qs.answer]

            for l, pos in enumerate(per_layer_pos):
                if len(pos):
                    layer_parts[l].append(self._translate(pos, slot))
            dec_pos = _gather_ranges(index.indptr, nodes)
            if masked:
                dec_pos = dec_pos[~self._removed[dec_pos]]
            dec_pos = dec_pos[dist[index.tail[dec_pos]] >= 0]
            if len(dec_pos):
                decoder_parts.append(self._translate(dec_pos, slot))

            # reset scratch
            dist[nodes] = -1
            self._nodemap[nodes] = -1
            if masked:
                self._removed[qs.removed] = False
            offset += len(nodes)

        node_entity = _concat(node_entity_parts, np.int64)
        node_query = _concat(node_query_parts, np.int64)
        layers = [
            self._merge(parts, node_entity) for parts in layer_parts
        ]
        decoder = self._merge(decoder_parts, node_entity)
        return BatchGraph(
            n_nodes=offset,
            node_entity=node_entity,
            node_query=node_query,
            spans=spans,
            query_nodes=query_nodes,
            query_rels=query_rels,
            answer_nodes=answer_nodes,
            layers=layers,
            decoder=decoder,
            horizon=horizon,
        )

    def _translate(self, pos: np.ndarray, slot: int):
        index = self.index
        return (
            self._nodemap[index.head[pos]],
            index.rel[pos].astype(np.int64),
            self._nodemap[index.tail[pos]],
            np.full(len(pos), slot, dtype=np.int64),
        )

    def _merge(self, parts, node_entity: np.ndarray) -> LayerTriples:
        if not parts:
            z = np.empty(0, dtype=np.int64)
            return LayerTriples(
                head_node=z, rel=z.copy(),
                seg_ptr=np.zeros(1, dtype=np.int64),
                targets=z.copy(),
                denom=np.empty(0, dtype=np.float32),
                triple_query=z.copy(),
            )
        head = _concat([p[0] for p in parts], np.int64)
        rel = _concat([p[1] for p in parts], np.int64)
        tail = _concat([p[2] for p in parts], np.int64)
        tq = _concat([p[3] for p in parts], np.int64)
        order = np.argsort(tail, kind="stable")
        head, rel, tail, tq = head[order], rel[order], tail[order], tq[order]
        targets, start = np.unique(tail, return_index=True)
        seg_ptr = np.append(start, len(tail)).astype(np.int64)
        denom = self.index.out_degree[node_entity[targets]].astype(np.float32)
        return LayerTriples(
            head_node=head, rel=rel, seg_ptr=seg_ptr,
            targets=targets, denom=denom, triple_query=tq,
        )


def _concat(parts: list[np.ndarray], dtype) -> np.ndarray:
    if not parts:
        return np.empty(0, dtype=dtype)
    return np.concatenate(parts).astype(dtype, copy=False)
