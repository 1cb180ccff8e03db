"""Relational path enumeration, classification and structural checks.

A relational path is a head-to-tail chain of augmented triples; walks may
revisit entities and triples.  Classification is relative to one query
entity: a path is *shortest* when its length equals the target's relative
distance, *percolation-valid* when every potential difference along it is
positive, and *redundant* when it is longer than the relative distance yet
still shares at least that many distinct triples with a single shortest
path.  Identity self-loops are excluded from enumeration by default; a
shortest path extended by an identity step would otherwise count as both
valid and redundant and the structural checks below would be vacuous.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kg import AdjacencyIndex, Triple, reverse_rel
from .layering import DistanceMap, percolation_subgraph, relative_distances


@dataclass(frozen=True)
class RelationalPath:
    """Chained triples from source to target; may be empty (source==target)."""

    source: int
    target: int
    triples: tuple[Triple, ...]

    def __post_init__(self):
        prev = self.source
        for h, _, t in self.triples:
            if h != prev:
                raise ValueError(f"path breaks at triple ({h}, _, {t}): expected head {prev}")
            prev = t
        if prev != self.target:
            raise ValueError(f"path ends at {prev}, expected target {self.target}")

    @property
    def length(self) -> int:
        return len(self.triples)


@dataclass
class PathClassification:
    deltas: list[int]
    is_shortest: bool
    is_percolation_valid: bool
    is_redundant: bool


def enumerate_paths(
    index: AdjacencyIndex,
    source: int,
    target: int,
    max_len: int,
    include_identity: bool = False,
    max_expansions: int = 2_000_000,
) -> list[RelationalPath]:
    """All walks from source to target with at most max_len triples.

    Raises ValueError when the DFS frontier exceeds max_expansions prefixes;
    the message advises a smaller max_len.
    """
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    out: list[RelationalPath] = []
    prefix: list[Triple] = []
    budget = [max_expansions]

    def walk(node: int, depth: int):
        budget[0] -= 1
        if budget[0] < 0:
            raise ValueError(
                f"path enumeration exceeded {max_expansions} expansions; "
                "reduce max_len or restrict the graph"
            )
        if node == target:
            out.append(RelationalPath(source, target, tuple(prefix)))
        if depth == max_len:
            return
        lo, hi = index.indptr[node], index.indptr[node + 1]
        for p in range(lo, hi):
            r = int(index.rel[p])
            if not include_identity and r == index.identity_rel:
                continue
            t = int(index.tail[p])
            prefix.append((node, r, t))
            walk(t, depth + 1)
            prefix.pop()

    walk(source, 0)
    return out


def shortest_paths(
    index: AdjacencyIndex,
    dm: DistanceMap,
    target: int,
    max_expansions: int = 2_000_000,
) -> list[RelationalPath]:
    """The complete set of shortest paths from dm.query to target.

    Enumerated by climbing DFS: only triples raising the relative distance
    by exactly one can sit on a shortest path.  Unreachable target -> error.
    """
    gamma = int(dm.dist[target])
    if gamma < 0:
        raise ValueError(f"target {target} unreachable within horizon {dm.horizon}")
    out: list[RelationalPath] = []
    prefix: list[Triple] = []
    budget = [max_expansions]

    def climb(node: int, depth: int):
        budget[0] -= 1
        if budget[0] < 0:
            raise ValueError(
                f"shortest-path enumeration exceeded {max_expansions} expansions"
            )
        if depth == gamma:
            if node == target:
                out.append(RelationalPath(dm.query, target, tuple(prefix)))
            return
        lo, hi = index.indptr[node], index.indptr[node + 1]
        for p in range(lo, hi):
            t = int(index.tail[p])
            if dm.dist[t] != depth + 1:
                continue
            prefix.append((node, int(index.rel[p]), t))
            climb(t, depth + 1)
            prefix.pop()

    climb(dm.query, 0)
    return out


def potential_deltas(path: RelationalPath, dm: DistanceMap) -> list[int]:
    """Per-triple potential differences along the path.

    Non-final triples use max(gamma_tail - gamma_head, 0); the final triple
    uses min(gamma_tail - gamma_head + 1, 1) so that a last sideways step
    still counts as progress.  Every entity on the path must be within the
    horizon.
    """
    out: list[int] = []
    n = path.length
    for i, (h, _, t) in enumerate(path.triples):
        gh, gt = int(dm.dist[h]), int(dm.dist[t])
        if gh < 0 or gt < 0:
            raise ValueError(
                f"path entity outside horizon {dm.horizon}: triple {i} has "
                f"distances ({gh}, {gt})"
            )
        if i < n - 1:
            out.append(max(gt - gh, 0))
        else:
            out.append(min(gt - gh + 1, 1))
    return out


def is_percolation_valid(path: RelationalPath, dm: DistanceMap) -> bool:
    """True when every potential difference is positive (empty path: True)."""
    return all(d > 0 for d in potential_deltas(path, dm))


def classify_redundant(
    path: RelationalPath,
    dm: DistanceMap,
    shortest: list[RelationalPath],
) -> bool:
    """Definition check: longer than gamma and sharing >= gamma distinct
    triples with at least one single shortest path.

    ``shortest`` must be the complete shortest-path set for (query, target).
    The intersection is triple-set based (multiplicity agnostic) and taken
    per shortest path, not against the union across all of them.
    """
    gamma = int(dm.dist[path.target])
    if gamma < 0:
        raise ValueError(f"target {path.target} unreachable within horizon")
    if path.length <= gamma:
        return False
    tset = set(path.triples)
    if gamma == 0:
        return True
    return any(len(tset & set(s.triples)) >= gamma for s in shortest)


def classify_path(
    path: RelationalPath,
    dm: DistanceMap,
    shortest: list[RelationalPath],
) -> PathClassification:
    deltas = potential_deltas(path, dm)
    gamma = int(dm.dist[path.target])
    return PathClassification(
        deltas=deltas,
        is_shortest=path.length == gamma,
        is_percolation_valid=all(d > 0 for d in deltas),
        is_redundant=classify_redundant(path, dm, shortest),
    )


@dataclass
class PrincipleReport:
    """Outcome of the three structural checks for one query."""

    query: int
    horizon: int
    shortest_all_valid: bool
    no_valid_redundant: bool
    coverage_complete: bool
    n_shortest: int = 0
    n_walks: int = 0
    n_valid: int = 0
    n_redundant: int = 0
    counterexamples: list[str] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return self.shortest_all_valid and self.no_valid_redundant and self.coverage_complete


def verify_percolation_principles(
    index: AdjacencyIndex,
    q: int,
    horizon: int,
    max_expansions: int = 2_000_000,
) -> PrincipleReport:
    """Check the three layering guarantees for one query by enumeration.

    (1) every shortest path to an in-horizon entity is percolation-valid;
    (2) no percolation-valid walk of length <= horizon is redundant;
    (3) every triple with head distance <= horizon-1 and head no deeper
        than tail appears in exactly one percolation layer.  Heads at
        exactly the horizon have no layer to appear in; the combined
        full-neighborhood pass covers them instead.
    """
    dm = relative_distances(index, q, horizon)
    rep = PrincipleReport(
        query=q, horizon=horizon,
        shortest_all_valid=True, no_valid_redundant=True, coverage_complete=True,
    )
    cache: dict[int, list[RelationalPath]] = {}

    def short(t: int) -> list[RelationalPath]:
        if t not in cache:
            cache[t] = shortest_paths(index, dm, t, max_expansions)
        return cache[t]

    for t in dm.within():
        paths = short(int(t))
        rep.n_shortest += len(paths)
        for p in paths:
            if not is_percolation_valid(p, dm):
                rep.shortest_all_valid = False
                rep.counterexamples.append(f"shortest-not-valid: {p.triples}")

    # (2): enumerate every walk from q up to the horizon (identity excluded)
    prefix: list[Triple] = []
    budget = [max_expansions]

    def walk(node: int, depth: int):
        budget[0] -= 1
        if budget[0] < 0:
            raise ValueError(
                f"principle check exceeded {max_expansions} expansions; "
                "reduce the horizon or the graph size"
            )
        if depth > 0 and dm.dist[node] >= 0:
            p = RelationalPath(q, node, tuple(prefix))
            rep.n_walks += 1
            if is_percolation_valid(p, dm):
                rep.n_valid += 1
                if classify_redundant(p, dm, short(node)):
                    rep.n_redundant += 1
                    rep.no_valid_redundant = False
                    rep.counterexamples.append(f"valid-and-redundant: {p.triples}")
        if depth == horizon:
            return
        lo, hi = index.indptr[node], index.indptr[node + 1]
        for pos in range(lo, hi):
            r = int(index.rel[pos])
            if r == index.identity_rel:
                continue
            t = int(index.tail[pos])
            prefix.append((node, r, t))
            walk(t, depth + 1)
            prefix.pop()

    walk(q, 0)

    covered: set[int] = set()
    for l in range(1, horizon + 1):
        for pos in percolation_subgraph(index, dm, l):
            if pos in covered:
                rep.coverage_complete = False
                rep.counterexamples.append(f"triple in two layers: pos {pos}")
            covered.add(int(pos))
    hd = dm.dist[index.head]
    td = dm.dist[index.tail]
    want = np.flatnonzero((hd >= 0) & (hd <= horizon - 1) & (td >= hd))
    for pos in want:
        if int(pos) not in covered:
            rep.coverage_complete = False
            rep.counterexamples.append(
                f"non-uphill triple missing from all layers: pos {pos}"
            )
    return rep


@dataclass
class InsertionReport:
    """Result of the uphill-insertion redundancy search."""

    new_triple: Triple
    found: bool
    witnesses: list[RelationalPath]
    degenerate_witness: RelationalPath | None


def shortest_subgraph_positions(index: AdjacencyIndex, dm: DistanceMap) -> np.ndarray:
    """Positions of every triple lying on some shortest path from the query.

    Exactly the triples that climb the relative distance by one: any such
    triple extends a shortest path to its head into one for its tail.
    """
    hd = dm.dist[index.head]
    td = dm.dist[index.tail]
    return np.flatnonzero((hd >= 0) & (td == hd + 1)).astype(np.int64)


def check_uphill_insertion(
    index: AdjacencyIndex,
    dm: DistanceMap,
    new_triple: Triple,
    max_expansions: int = 200_000,
    max_witnesses: int = 5,
) -> InsertionReport:
    """Verify that inserting one uphill triple creates a new redundant path.

    ``new_triple`` = (e1, r, e2) must satisfy gamma(e1) >= gamma(e2) and must
    not already exist in the graph; distances are provably unchanged by such
    an insertion, so all classification runs against the original dm.  The
    search space is the shortest-path subgraph plus the inserted triple and
    the reverses of both (reverses of augmented triples are themselves
    augmented triples).  Two kinds of witness are produced:

    * enumerated: climb to e1 along shortest paths, cross the new triple,
      climb onward inside the shortest-path subgraph, and test each endpoint
      against the redundancy definition;
    * degenerate: shortest path to e1 + new triple + reversed shortest path
      from e2 back to the query.  The result targets the query itself, whose
      relative distance is zero, and any nonempty path to the query is
      redundant by definition.  This witness always exists.
    """
    e1, r_new, e2 = new_triple
    g1, g2 = int(dm.dist[e1]), int(dm.dist[e2])
    if g1 < 0 or g2 < 0:
        raise ValueError("inserted triple endpoints must be within the horizon")
    if g1 < g2:
        raise ValueError(
            f"triple is not uphill: gamma(head)={g1} < gamma(tail)={g2}"
        )
    lo, hi = index.indptr[e1], index.indptr[e1 + 1]
    dup = (index.tail[lo:hi] == e2) & (index.rel[lo:hi] == r_new)
    if dup.any():
        raise ValueError("inserted triple already exists in the graph")

    to_e1 = shortest_paths(index, dm, e1, max_expansions)
    to_e2 = shortest_paths(index, dm, e2, max_expansions)

    witnesses: list[RelationalPath] = []
    # enumerated witnesses: extend past e2 along climbing triples
    budget = [max_expansions]
    suffix: list[Triple] = []
    short_cache: dict[int, list[RelationalPath]] = {}

    def short(t: int) -> list[RelationalPath]:
        if t not in short_cache:
            short_cache[t] = shortest_paths(index, dm, t, max_expansions)
        return short_cache[t]

    def extend(node: int):
        if len(witnesses) >= max_witnesses:
            return
        budget[0] -= 1
        if budget[0] < 0:
            return
        for prefix_path in to_e1[:2]:
            cand = RelationalPath(
                dm.query, node,
                prefix_path.triples + (new_triple,) + tuple(suffix),
            )
            if classify_redundant(cand, dm, short(node)):
                witnesses.append(cand)
                break
        if len(witnesses) >= max_witnesses:
            return
        lo, hi = index.indptr[node], index.indptr[node + 1]
        for pos in range(lo, hi):
            t = int(index.tail[pos])
            if dm.dist[t] != dm.dist[node] + 1:
                continue
            suffix.append((node, int(index.rel[pos]), t))
            extend(t)
            suffix.pop()

    extend(e2)

    degenerate = None
    if to_e1 and to_e2:
        back = tuple(
            (t, int(reverse_rel(r, index.n_base_relations)), h)
            for h, r, t in reversed(to_e2[0].triples)
        )
        degenerate = RelationalPath(
            dm.query, dm.query, to_e1[0].triples + (new_triple,) + back
        )
        assert classify_redundant(
            degenerate, dm, [RelationalPath(dm.query, dm.query, ())]
        )
    found = bool(witnesses) or degenerate is not None
    return InsertionReport(
        new_triple=new_triple,
        found=found,
        witnesses=witnesses,
        degenerate_witness=degenerate,
    )
