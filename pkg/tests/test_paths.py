from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgpercolate.kg import Vocab, augment, build_index, make_graph
from kgpercolate.layering import relative_distances
from kgpercolate.paths import (
    RelationalPath,
    check_uphill_insertion,
    classify_path,
    classify_redundant,
    enumerate_paths,
    is_percolation_valid,
    potential_deltas,
    shortest_paths,
    shortest_subgraph_positions,
    verify_percolation_principles,
)

from conftest import random_kg, toy_triple


@pytest.fixture
def toy_dm(toy_index, toy_aug):
    return relative_distances(toy_index, toy_aug.entities.id("A"), 3)


def path_from_names(kg, names):
    """names: list of (h, rel, t) string triples."""
    trips = tuple(toy_triple(kg, *n) for n in names)
    return RelationalPath(trips[0][0], trips[-1][2], trips)


def test_path_chaining_validated(toy_aug):
    with pytest.raises(ValueError, match="breaks"):
        RelationalPath(0, 2, ((0, 0, 1), (3, 0, 2)))
    with pytest.raises(ValueError, match="ends at"):
        RelationalPath(0, 2, ((0, 0, 1),))


def test_enumerate_a_to_c_len2(toy_index, toy_aug):
    ids = toy_aug.entities
    paths = enumerate_paths(toy_index, ids.id("A"), ids.id("C"), 2)
    assert len(paths) == 2
    assert all(p.length == 2 for p in paths)
    got = {p.triples for p in paths}
    assert got == {
        (toy_triple(toy_aug, "A", "r1", "B"), toy_triple(toy_aug, "B", "r1", "C")),
        (toy_triple(toy_aug, "A", "r2", "D"), toy_triple(toy_aug, "D", "r2", "C")),
    }


def test_enumerate_len3_includes_detour(toy_index, toy_aug):
    ids = toy_aug.entities
    paths = enumerate_paths(toy_index, ids.id("A"), ids.id("C"), 3)
    detour = (
        toy_triple(toy_aug, "A", "r1", "B"),
        toy_triple(toy_aug, "B", "r2", "D"),
        toy_triple(toy_aug, "D", "r2", "C"),
    )
    assert detour in {p.triples for p in paths}
    assert len(paths) > 2


def test_enumerate_empty_path(toy_index, toy_aug):
    ids = toy_aug.entities
    paths = enumerate_paths(toy_index, ids.id("A"), ids.id("A"), 0)
    assert len(paths) == 1 and paths[0].length == 0


def test_enumerate_identity_toggle(toy_index, toy_aug):
    ids = toy_aug.entities
    base = enumerate_paths(toy_index, ids.id("A"), ids.id("B"), 2)
    with_id = enumerate_paths(
        toy_index, ids.id("A"), ids.id("B"), 2, include_identity=True
    )
    assert len(with_id) > len(base)


def test_enumeration_bound_guard(toy_index, toy_aug):
    ids = toy_aug.entities
    with pytest.raises(ValueError, match="expansions"):
        enumerate_paths(toy_index, ids.id("A"), ids.id("C"), 3, max_expansions=5)


def test_deltas_invalid_detour(toy_aug, toy_index, toy_dm):
    p = path_from_names(toy_aug, [("A", "r1", "B"), ("B", "r2", "D"), ("D", "r2", "C")])
    assert potential_deltas(p, toy_dm) == [1, 0, 1]
    assert not is_percolation_valid(p, toy_dm)


def test_deltas_shortest_valid(toy_aug, toy_dm):
    p = path_from_names(toy_aug, [("A", "r1", "B"), ("B", "r1", "C")])
    assert potential_deltas(p, toy_dm) == [1, 1]
    assert is_percolation_valid(p, toy_dm)


def test_deltas_final_sideways_step(toy_aug, toy_dm):
    # B and D share depth 1; a final sideways step still counts as progress
    p = path_from_names(toy_aug, [("A", "r1", "B"), ("B", "r2", "D")])
    assert potential_deltas(p, toy_dm) == [1, 1]
    assert is_percolation_valid(p, toy_dm)


def test_deltas_outside_horizon_error(toy_aug, toy_index):
    dm1 = relative_distances(toy_index, toy_aug.entities.id("A"), 1)
    p = path_from_names(toy_aug, [("A", "r1", "B"), ("B", "r1", "C")])
    with pytest.raises(ValueError, match="outside horizon"):
        potential_deltas(p, dm1)


def test_shortest_paths_a_to_c(toy_index, toy_aug, toy_dm):
    ids = toy_aug.entities
    paths = shortest_paths(toy_index, toy_dm, ids.id("C"))
    assert len(paths) == 2
    assert all(p.length == 2 for p in paths)


def test_classify_redundant_backtrack(toy_aug, toy_index, toy_dm):
    ids = toy_aug.entities
    shortest = shortest_paths(toy_index, toy_dm, ids.id("C"))
    p = path_from_names(
        toy_aug,
        [("A", "r1", "B"), ("B", "r1_inv", "A"), ("A", "r1", "B"), ("B", "r1", "C")],
    )
    assert classify_redundant(p, toy_dm, shortest)
    c = classify_path(p, toy_dm, shortest)
    assert c.is_redundant and not c.is_shortest and not c.is_percolation_valid


def test_classify_detour_not_redundant(toy_aug, toy_index, toy_dm):
    # shares one triple with each shortest path but never two with the same one
    ids = toy_aug.entities
    shortest = shortest_paths(toy_index, toy_dm, ids.id("C"))
    p = path_from_names(toy_aug, [("A", "r1", "B"), ("B", "r2", "D"), ("D", "r2", "C")])
    assert not classify_redundant(p, toy_dm, shortest)


def test_classify_shortest_never_redundant(toy_aug, toy_index, toy_dm):
    ids = toy_aug.entities
    for p in shortest_paths(toy_index, toy_dm, ids.id("C")):
        c = classify_path(p, toy_dm, shortest_paths(toy_index, toy_dm, ids.id("C")))
        assert c.is_shortest and c.is_percolation_valid and not c.is_redundant


def test_any_return_to_query_is_redundant(toy_aug, toy_index, toy_dm):
    ids = toy_aug.entities
    p = path_from_names(toy_aug, [("A", "r1", "B"), ("B", "r1_inv", "A")])
    assert classify_redundant(
        p, toy_dm, [RelationalPath(ids.id("A"), ids.id("A"), ())]
    )


def test_principles_toy(toy_index, toy_aug):
    rep = verify_percolation_principles(toy_index, toy_aug.entities.id("A"), 3)
    assert rep.all_ok, rep.counterexamples
    assert rep.n_shortest >= 5
    assert rep.n_valid > 0 and rep.n_redundant == 0


def test_principles_single_triple_graph():
    ents = Vocab(["a", "b"])
    rels = Vocab(["r"])
    kg = augment(make_graph(np.array([[0, 0, 1]], dtype=np.int32), ents, rels))
    idx = build_index(kg)
    rep = verify_percolation_principles(idx, 0, 2)
    assert rep.all_ok


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_principles_random_graphs(seed, L):
    kg = augment(random_kg(np.random.default_rng(seed), n_entities=12, density=1.5))
    idx = build_index(kg)
    q = int(np.random.default_rng(seed + 11).integers(0, len(kg.entities)))
    rep = verify_percolation_principles(idx, q, L)
    assert rep.all_ok, rep.counterexamples


def test_shortest_subgraph_positions(toy_index, toy_dm):
    pos = shortest_subgraph_positions(toy_index, toy_dm)
    hd = toy_dm.dist[toy_index.head[pos]]
    td = toy_dm.dist[toy_index.tail[pos]]
    assert (td == hd + 1).all()
    # identity loops never climb
    assert (toy_index.rel[pos] != toy_index.identity_rel).all()


def test_uphill_insertion_toy(toy_index, toy_aug, toy_dm):
    ids, rels = toy_aug.entities, toy_aug.relations
    new = (ids.id("C"), rels.id("r1"), ids.id("B"))
    rep = check_uphill_insertion(toy_index, toy_dm, new)
    assert rep.found
    assert rep.degenerate_witness is not None
    # at least one non-degenerate witness exists in this graph
    assert len(rep.witnesses) >= 1
    for w in rep.witnesses:
        assert new in w.triples
        assert classify_redundant(
            w, toy_dm, shortest_paths(toy_index, toy_dm, w.target)
        )


def test_uphill_insertion_validations(toy_index, toy_aug, toy_dm):
    ids, rels = toy_aug.entities, toy_aug.relations
    with pytest.raises(ValueError, match="not uphill"):
        check_uphill_insertion(
            toy_index, toy_dm, (ids.id("B"), rels.id("r1"), ids.id("C"))
        )
    with pytest.raises(ValueError, match="already exists"):
        check_uphill_insertion(
            toy_index, toy_dm, (ids.id("D"), rels.id("r2_inv"), ids.id("B"))
        )


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_uphill_insertion_random(seed):
    rng = np.random.default_rng(seed)
    kg = augment(random_kg(rng, n_entities=14, density=1.6))
    idx = build_index(kg)
    q = int(rng.integers(0, len(kg.entities)))
    dm = relative_distances(idx, q, 4)
    within = dm.within()
    if len(within) < 2:
        return
    pairs = [
        (int(a), int(b))
        for a in within
        for b in within
        if dm.dist[a] >= dm.dist[b] and a != b
    ]
    if not pairs:
        return
    e1, e2 = pairs[int(rng.integers(0, len(pairs)))]
    r = int(rng.integers(0, kg.num_augmented_relations - 1))
    lo, hi = idx.indptr[e1], idx.indptr[e1 + 1]
    if ((idx.tail[lo:hi] == e2) & (idx.rel[lo:hi] == r)).any():
        return
    rep = check_uphill_insertion(idx, dm, (e1, r, e2))
    assert rep.found
