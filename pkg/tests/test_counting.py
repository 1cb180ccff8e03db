from __future__ import annotations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from kgpercolate.kg import augment, build_index
from kgpercolate.counting import count_query, count_queries, hop_triple_counts
from kgpercolate.layering import relative_distances

from conftest import random_kg


def naive_hop_counts(aug, dist, L):
    out = []
    for l in range(1, L + 1):
        group = {i for i, d in enumerate(dist) if d in (l - 1, l)}
        out.append(
            sum(1 for h, _, t in aug.tolist() if h in group and t in group)
        )
    return out


def test_toy_counts(toy_index, toy_aug):
    ids = toy_aug.entities
    c = count_query(toy_index, ids.id("A"), 3)
    assert c.percolation_layer_triples == [3, 6, 2]
    assert c.hop_triple_counts == [9, 9, 4]
    assert c.decoder_triples == 17
    assert c.encoder_triples == 9
    assert c.percolation_total == 26
    # N = 22; rebuild = N + (n1) + (n1+n2) = 22 + 9 + 18
    assert c.layer_rebuild_total == 49
    assert c.full_propagation_total == 3 * min(17, 22) == 51
    assert c.pairwise_lower_bound == 3 * 22


def test_toy_counts_no_decoder(toy_index, toy_aug):
    c = count_query(toy_index, toy_aug.entities.id("A"), 3, include_decoder=False)
    assert c.encoder_triples == 3 + 6 + 2
    assert c.percolation_total == 11


def test_hop_counts_match_naive_oracle(toy_index, toy_aug):
    dm = relative_distances(toy_index, toy_aug.entities.id("A"), 3)
    got = hop_triple_counts(toy_index, dm)
    assert got == naive_hop_counts(toy_aug.augmented, dm.dist.tolist(), 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_hop_counts_random(seed, L):
    kg = augment(random_kg(np.random.default_rng(seed)))
    idx = build_index(kg)
    q = int(np.random.default_rng(seed + 5).integers(0, len(kg.entities)))
    dm = relative_distances(idx, q, L)
    assert hop_triple_counts(idx, dm) == naive_hop_counts(
        kg.augmented, dm.dist.tolist(), L
    )


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 4))
def test_method_ordering_sparse_regime(seed, L):
    kg = augment(random_kg(np.random.default_rng(seed), density=1.4))
    idx = build_index(kg)
    q = int(np.random.default_rng(seed + 9).integers(0, len(kg.entities)))
    c = count_query(idx, q, L)
    n_total = sum(c.hop_triple_counts)
    if n_total <= idx.num_triples:
        assert (
            c.percolation_total
            <= c.layer_rebuild_total
            <= c.full_propagation_total
        )
    # the per-pair bound always dominates the full-propagation figure
    assert c.full_propagation_total <= c.pairwise_lower_bound


def test_report_aggregation(toy_index, toy_aug):
    ids = toy_aug.entities
    rep = count_queries(toy_index, [ids.id("A"), ids.id("B")], 3)
    assert rep.as_dict()["n_queries"] == 2
    assert rep.mean("percolation_total") > 0
    d = rep.as_dict()
    assert d["mean_percolation"] <= d["mean_layer_rebuild"]
