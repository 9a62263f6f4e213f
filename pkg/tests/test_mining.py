import itertools
import math
import random
from collections import Counter
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nftwash.hidden import HiddenFinding
from nftwash.mining import (
    MiningTransaction, TraderPair, build_itemsets, fp_growth, merge_groups, min_support_count, mine,
)
from nftwash.roundtrip import RoundTripFinding
from nftwash.unprofitable import UnprofitableFinding

from helpers import addr, ev, seq
from oracles import brute_force_itemsets

A, B, C, D = (addr(n) for n in (0xB7639A, 0x996665, 0xCC8990, 0xBF1ED4))


def random_rows(rng, n_rows, n_addr):
    names = [f"a{i:02d}" for i in range(n_addr)]
    hot = rng.sample(names, min(3, n_addr))
    rows = []
    for _ in range(n_rows):
        pool = hot if rng.random() < 0.3 else names
        k = rng.choice([2, 2, 2, 3, 4, 5])
        rows.append(frozenset(rng.sample(pool, min(k, len(pool)))))
    return rows


def rt(records, cycle):
    records = seq(*records, tok=records[0].token_id).records
    return RoundTripFinding(("C", records[0].token_id), 0, cycle, 1, True, records, Decimal(0))


def test_threshold_arithmetic():
    assert min_support_count(24311, 0.0005) == 13
    assert min_support_count(1000, 0.05) == 50
    assert min_support_count(3, 1.0) == 3
    assert min_support_count(10, 0.0005, min_count=4) == 4
    with pytest.raises(ValueError):
        min_support_count(10, 0)
    with pytest.raises(ValueError):
        min_support_count(10, 0.1, min_count=0)


def test_support_one_is_strict():
    assert fp_growth([{"a", "b"}, {"a", "b"}, {"a", "c"}], support=1.0) == {}


def test_empty_is_error():
    with pytest.raises(ValueError, match="no transactions"):
        fp_growth([])


def test_frequent_pair_in_large_corpus():
    rows = [frozenset({"a", "b"})] * 24 + [frozenset({f"x{i}", f"y{i}"}) for i in range(24311 - 24)]
    got = fp_growth(rows)
    assert got == {frozenset({"a", "b"}): 24}


def test_hidden_row_is_participant_set():
    recs = (ev(1, A, B, private=True), ev(2, B, C, private=True), ev(3, C, A, private=True))
    h = HiddenFinding(("C", "1"), recs, "other", Decimal(0))
    (row,) = build_itemsets(hidden=[h])
    assert row.kind == "H" and row.items == {A, B, C}


def test_row_counts_match_findings():
    r1 = rt([ev(1, A, B, txn="0x1"), ev(2, B, A, txn="0x2")], (A, B))
    u = [UnprofitableFinding(ev(i, C, D, tok=str(i)), (), None) for i in range(5)]
    h = [HiddenFinding(("C", str(i)), (ev(1, A, C), ev(2, C, D), ev(3, D, B)), "other", Decimal(0))
         for i in range(3)]
    rows = build_itemsets([r1], u, h)
    assert len(rows) == 10
    assert Counter(r.kind for r in rows) == {"R": 2, "U": 5, "H": 3}
    assert [r.kind for r in rows] == ["R"] * 2 + ["U"] * 5 + ["H"] * 3


def test_loot_group_via_shared_txn():
    # two ping-pong pairs on different tokens tied together by one bundle sale
    p1 = rt([ev(1, A, B, txn="0xaa", tok="2157"), ev(2, B, A, txn="0xbund", tok="2157")], (A, B))
    p2 = rt([ev(1, C, D, txn="0xbund", tok="9"), ev(2, D, C, txn="0xcc", tok="9")], (C, D))
    rows = build_itemsets([p1, p2])
    assert [r.kind for r in rows] == ["R"] * 4
    res = mine([p1, p2], min_count=2)
    assert {p.addresses for p in res.pairs} == {frozenset({A, B}), frozenset({C, D})}
    (g,) = res.groups
    assert g.addresses == {A, B, C, D} and not g.is_pair


def test_groups_by_shared_address_and_disjoint():
    ab, bc, xy = (TraderPair(frozenset(p), 5) for p in [(A, B), (B, C), ("x", "y")])
    groups = merge_groups([ab, bc, xy])
    assert [g.addresses for g in groups] == [frozenset({A, B, C}), frozenset({"x", "y"})]
    assert groups[1].is_pair
    lone = merge_groups([ab, TraderPair(frozenset({C, D}), 5)])
    assert len(lone) == 2 and all(g.is_pair for g in lone)


def test_random_corpora_match_brute_force():
    rng = random.Random(3)
    for _ in range(40):
        rows = random_rows(rng, rng.randint(1, 300), rng.randint(2, 12))
        sup = rng.choice([0.005, 0.05, 0.5])
        minc = max(1, math.ceil(Decimal(str(sup)) * len(rows)))
        assert fp_growth(rows, sup) == brute_force_itemsets(rows, minc)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.frozensets(st.sampled_from("abcdefgh"), min_size=1, max_size=5), min_size=1, max_size=60),
       st.integers(1, 6))
def test_downward_closure_and_exact_counts(rows, minc):
    got = fp_growth(rows, min_count=minc)
    for items, count in got.items():
        assert count == sum(1 for r in rows if items <= r) >= minc
        for k in range(2, len(items)):
            for sub in itertools.combinations(items, k):
                assert got[frozenset(sub)] >= count


@settings(max_examples=100, deadline=None)
@given(st.lists(st.frozensets(st.sampled_from("abcdefg"), min_size=2, max_size=2), max_size=12, unique=True),
       st.randoms())
def test_groups_partition_and_order_invariant(pair_sets, rnd):
    pairs = [TraderPair(p, 1) for p in pair_sets]
    groups = merge_groups(pairs)
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    assert merge_groups(shuffled) == groups
    addrs = [a for g in groups for a in g.addresses]
    assert len(addrs) == len(set(addrs))
    assert set(addrs) == {a for p in pairs for a in p.addresses}
    assert sum(len(g.member_pairs) for g in groups) == len(pairs)


def test_mining_result_serializes():
    p1 = rt([ev(1, A, B, txn="0xaa"), ev(2, B, A, txn="0xab")], (A, B))
    d = mine([p1], min_count=1).to_dict()
    assert d["rows"] == 2 and d["threshold"] == 1 and d["rowsByKind"]["R"] == 2
    assert d["pairs"][0]["addresses"] == sorted([A, B]) and d["groups"] == []
    assert mine().to_dict()["rows"] == 0


def test_mining_transaction_rows_accepted():
    rows = [MiningTransaction("R", frozenset({"a", "b"}), "R:x")] * 3
    assert fp_growth(rows, min_count=3) == {frozenset({"a", "b"}): 3}
