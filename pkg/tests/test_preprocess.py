from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nftwash.data import EventType, parse_timestamp
from nftwash.preprocess import (
    clean_corpus, clean_sequence, consistency_rate, dedupe_repeated_events,
    filter_bad_timestamps, is_consistent, merge_intermediaries,
)

from helpers import addr, ev, mint, seq

GEMSWAP = addr(0x6e2)


def test_double_mint_collapses():
    # 0n1-force #305: two mints to 0x01c9e1 73 s apart, the first without a hash
    s = seq(
        mint(parse_timestamp("2021-08-15T16:03:52"), "0x01c9e1", tok="305"),
        mint(parse_timestamp("2021-08-15T16:05:05"), "0x01c9e1", txn="0xabc1", tok="305"),
        tok="305",
    )
    out = dedupe_repeated_events(s)
    assert len(out) == 1
    assert out.records[0].txn_hash == "0xabc1" and out.records[0].event_type is EventType.MINTED


def test_distinct_records_unchanged():
    s = seq(mint(0, 1), ev(100, 1, 2, txn="0x01"), ev(200, 2, 3, txn="0x02"))
    assert dedupe_repeated_events(s) == s


def test_three_identical_sales_keep_hashed():
    s = seq(ev(100, 1, 2), ev(130, 1, 2, txn="0xaa"), ev(160, 1, 2))
    out = dedupe_repeated_events(s)
    assert [r.txn_hash for r in out.records] == ["0xaa"]
    assert out.records[0].index == 0


def test_same_hash_far_apart_still_duplicates():
    s = seq(ev(100, 1, 2, txn="0xaa"), ev(10_000, 1, 2, txn="0xaa"))
    assert len(dedupe_repeated_events(s)) == 1


def test_hashless_records_far_apart_both_kept():
    s = seq(ev(100, 1, 2), ev(1000, 1, 2))
    assert len(dedupe_repeated_events(s)) == 2


def test_canonical_timestamp_mismatch_dropped():
    s = seq(ev(1648160557, 1, 2, txn="0x2c8097"), ev(1648160600, 2, 3, txn="0x01"))
    out = filter_bad_timestamps(s, {"0x2c8097": 1648160556})
    assert [r.txn_hash for r in out.records] == ["0x01"]


def test_monotone_unchanged_without_canon():
    s = seq(ev(1, 1, 2), ev(2, 2, 3), ev(3, 3, 4))
    assert filter_bad_timestamps(s) == s


def test_monotonicity_fallback():
    # group_events would sort; build the unsorted sequence directly
    s = seq(ev(10, 1, 2), ev(5, 2, 3), ev(20, 3, 4))
    out = filter_bad_timestamps(s)
    assert [r.timestamp for r in out.records] == [10, 20]


def test_gemswap_intermediary():
    s = seq(ev(100, 1, GEMSWAP, price="0.5"), ev(100, GEMSWAP, 2, kind="transfer"))
    out = merge_intermediaries(s, [GEMSWAP])
    (r,) = out.records
    assert (r.from_addr, r.to_addr) == (addr(1), addr(2))
    assert r.is_sale and r.num_token == Decimal("0.5")


def test_sale_leg_wins_when_second():
    s = seq(ev(100, 1, GEMSWAP, kind="transfer"), ev(101, GEMSWAP, 2, price="3"))
    (r,) = merge_intermediaries(s, [GEMSWAP]).records
    assert r.is_sale and r.timestamp == 100


def test_no_contracts_unchanged():
    s = seq(ev(100, 1, GEMSWAP), ev(100, GEMSWAP, 2, kind="transfer"))
    assert merge_intermediaries(s, []) == s


def test_multi_hop_fixpoint():
    m1, m2 = addr(0xa1), addr(0xa2)
    s = seq(ev(100, 1, m1, price="1"), ev(100, m1, m2, kind="transfer"), ev(100, m2, 2, kind="transfer"))
    (r,) = merge_intermediaries(s, [m1, m2]).records
    assert (r.from_addr, r.to_addr) == (addr(1), addr(2)) and r.is_sale


def test_dangling_hop_counted():
    stats = {}
    s = seq(ev(100, 1, 2), ev(200, 2, GEMSWAP))
    assert merge_intermediaries(s, [GEMSWAP], stats) == s
    assert stats["dangling"] == 1


def test_consistency_rate():
    broken = seq(mint(0, 1), ev(10, 2, 3), tok="b")
    ok = seq(mint(0, 1), ev(10, 1, 3), tok="a")
    assert consistency_rate([ok, ok, broken]) == pytest.approx(2 / 3)
    assert consistency_rate([seq(mint(0, 1), tok=str(i)) for i in range(4)]) == 1.0
    with pytest.raises(ValueError, match="no tokens"):
        consistency_rate([])


def test_ratio_nine_in_ten():
    good = seq(mint(0, 1))
    bad = seq(mint(0, 1), ev(1, 5, 6))
    assert consistency_rate([good] * 9000 + [bad] * 1000) == 0.9


def test_clean_corpus_report():
    repaired = seq(mint(0, 1), mint(60, 1, txn="0x01"), ev(500, 1, 2, txn="0x02"), tok="x")
    ok_a = seq(mint(0, 1, txn="0x03"), ev(500, 1, 2, txn="0x04"), tok="y")
    ok_b = seq(mint(0, 3, txn="0x05"), tok="z")
    cleaned, rep = clean_corpus([repaired, ok_a, ok_b])
    assert rep.duplicatesRemoved == 1 and rep.tokens == 3
    assert rep.consisRateBefore == pytest.approx(2 / 3) and rep.consisRateAfter == 1.0
    assert all(is_consistent(s) for s in cleaned)


# --------------------------------------------------------------------------
# properties

ADDRS = st.integers(1, 4)
CONTRACT = addr(99)


@st.composite
def messy_sequences(draw):
    n = draw(st.integers(0, 14))
    recs, t = [], 0
    for _ in range(n):
        t += draw(st.integers(0, 400))
        a = draw(st.one_of(ADDRS, st.just(99)))
        b = draw(st.one_of(ADDRS, st.just(99)))
        kind = draw(st.sampled_from(["sale", "transfer"]))
        h = draw(st.one_of(st.none(), st.sampled_from(["0x01", "0x02", "0x03", "0x04"])))
        recs.append(ev(t, a, b, kind=kind, txn=h))
        if draw(st.booleans()):  # plant an adjacent repeat
            recs.append(ev(t + draw(st.integers(0, 400)), a, b, kind=kind,
                           txn=draw(st.one_of(st.none(), st.just(h)))))
            t = recs[-1].timestamp
    return seq(*recs)


@settings(max_examples=200, deadline=None)
@given(messy_sequences())
def test_repairs_idempotent_and_shrinking(s):
    once = dedupe_repeated_events(s)
    assert dedupe_repeated_events(once) == once
    assert len(once) <= len(s)
    f = filter_bad_timestamps(s)
    assert filter_bad_timestamps(f) == f
    m = merge_intermediaries(s, [CONTRACT])
    assert merge_intermediaries(m, [CONTRACT]) == m
    assert len(m) <= len(s)
    c = clean_sequence(s, [CONTRACT])
    assert clean_sequence(c, [CONTRACT]) == c


@settings(max_examples=200, deadline=None)
@given(messy_sequences())
def test_dedupe_keeps_unique_hashed_records(s):
    """Every hashed record whose (type, from, to, txnHash) is unique survives."""
    out = dedupe_repeated_events(s)
    keys = [(r.event_type, r.from_addr, r.to_addr, r.txn_hash) for r in s.records]
    kept = {(r.event_type, r.from_addr, r.to_addr, r.txn_hash, r.timestamp) for r in out.records}
    for r, k in zip(s.records, keys):
        if r.txn_hash is not None and keys.count(k) == 1:
            assert (*k, r.timestamp) in kept


@settings(max_examples=200, deadline=None)
@given(st.lists(messy_sequences(), min_size=1, max_size=5))
def test_dedupe_never_lowers_consistency(seqs):
    seqs = [seq(*s.records, tok=str(i)) for i, s in enumerate(seqs)]
    after = [dedupe_repeated_events(s) for s in seqs]
    assert consistency_rate(after) >= consistency_rate(seqs)
