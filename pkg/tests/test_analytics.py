import math
import random
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nftwash.analytics import (
    build_report, eth_transfer_histogram, exclusion_impact, gain_histogram, liquidity_transition,
    pearson, price_sag, profit_cases, profitability_analysis, trend_series, volume_summary, write_csvs,
)
from nftwash.hidden import HiddenFinding
from nftwash.mining import TraderGroup
from nftwash.pipeline import Findings, detect_all
from nftwash.roundtrip import RoundTripFinding
from nftwash.synthgen import replica
from nftwash.unprofitable import FUNDING, RESTITUTION, Evidence, UnprofitableFinding
from nftwash.windowing import segment_windows

from helpers import T0, addr, ev, seq
from oracles import direct_pearson

DAY = 86400
A, B, X = addr(1), addr(2), addr(3)


def rt_finding(window, records):
    return RoundTripFinding(window.token_key, window.index, (A, B), 1, True, tuple(records), Decimal(0))


def eth_evidence(offset, amount="1", direction=None):
    direction = direction or (FUNDING if offset < 0 else RESTITUTION)
    return Evidence(f"0x{offset + 5000:x}", "eth", direction, offset, "ETH", Decimal(amount), None, A, B)


def unprofitable(sale, *evidence):
    return UnprofitableFinding(sale, tuple(evidence), None)


def two_windows(gap_days=10, exit_price="1", wash_price="0.5"):
    """A ping-pong window, then one sale ``gap_days`` later to a stranger."""
    s = seq(ev(T0, A, B, price=wash_price), ev(T0 + 60, B, A, price=wash_price),
            ev(T0 + 60 + gap_days * DAY, A, X, price=exit_price))
    ws = segment_windows(s)
    assert len(ws) == 2
    f = Findings(roundtrip=[rt_finding(ws[0], ws[0].records)])
    return {s.key: ws}, f


# ---- volume and trend


def test_volume_empty():
    v = volume_summary(Findings())
    assert all(x == {"usd": 0, "events": 0, "sales": 0, "transfers": 0} for x in v.values())


def test_volume_table_row():
    s = seq(ev(T0, A, B, price="2.9", usd="1215.68"))
    v = volume_summary(Findings(unprofitable=[unprofitable(s.records[0])]))
    assert v["unprofitable"]["usd"] == Decimal("3525.472") and v["all"]["events"] == 1


def test_volume_hidden_counts_every_record():
    s = seq(*[ev(T0 + i, i + 1, i + 2, price="1", usd="10", private=True) for i in range(3)])
    h = HiddenFinding(s.key, s.records, "other", Decimal(30))
    assert volume_summary(Findings(hidden=[h]))["hidden"]["usd"] == 30


def test_trend_buckets_and_exclusion():
    recs_c = seq(ev(T0, A, B), ev(T0 + DAY, B, A), ev(T0 + DAY + 5, A, B), ev(T0 + 2 * DAY, B, A)).records
    recs_og = seq(ev(T0, A, B, coll="OG"), coll="OG").records
    f = Findings(unprofitable=[unprofitable(r) for r in (*recs_c, *recs_og)])
    assert [n for _, n in trend_series(f)] == [2, 2, 1]
    assert [n for _, n in trend_series(f, ["OG"])] == [1, 2, 1]
    assert trend_series(Findings()) == []


# ---- liquidity


def test_liquidity_single_window():
    s = seq(ev(T0, A, B))
    out = liquidity_transition({s.key: segment_windows(s)}, Findings())
    assert out["washToNext"]["count"] == 0 and out["nonWashToNext"]["count"] == 0


def test_liquidity_ten_days():
    windows, f = two_windows(10)
    out = liquidity_transition(windows, f)
    assert out["washToNext"] == {"count": 1, "mean": 10.0, "median": 10.0}


def test_liquidity_difference():
    # constructed: wash windows take 4 days to the next window, benign ones 10
    windows, washed = {}, []
    for i in range(5):
        s = seq(ev(T0, A, B), ev(T0 + 60, B, A), ev(T0 + 60 + 4 * DAY, A, X),
                ev(T0 + 60 + 14 * DAY, X, addr(9)), tok=str(i))
        ws = segment_windows(s)
        windows[s.key] = ws
        washed.append(rt_finding(ws[0], ws[0].records))
    out = liquidity_transition(windows, Findings(roundtrip=washed))
    assert out["meanDifferenceDays"] == pytest.approx(6.0)


# ---- profitability


def test_og_crystal_profit():
    corpus = replica("og-crystal")
    findings, windows = detect_all(corpus.sequences(), corpus.block_txns, corpus.erc20_txns, corpus.prices)
    (case,) = profit_cases(windows, findings)
    assert case.fees_native == Decimal("0.01000")
    assert case.gain_native == Decimal("0.99") and case.profitable


def test_exit_below_fees_not_qualifying():
    windows, f = two_windows(exit_price="0.02")  # fees are 0.025 * 1.0 = 0.025
    assert profit_cases(windows, f) == []
    windows, f = two_windows(exit_price="0.025")
    (c,) = profit_cases(windows, f)
    assert c.gain_native == 0 and not c.profitable


def test_profitability_report_fields():
    windows, f = two_windows(exit_price="1", wash_price="0.5")
    p = profitability_analysis(windows, f)
    assert p["qualifyingWindows"] == 1 and p["profitableFraction"] == 1.0
    assert p["resaleLower"]["washCount"] == 1 and p["resaleLower"]["wash"] == 0.0
    assert p["perStepPriceDeltasUsd"][0]["count"] == 1
    assert p["perStepPriceDeltasUsd"][1]["count"] == 0
    assert 0 <= p["profitableFraction"] <= 1


def test_following_sales_deltas():
    # after the wash window: three sales in separate windows, USD 900, 1200, 1500
    recs = [ev(T0, A, B, usd="1000"), ev(T0 + 60, B, A, usd="1000")]
    t = T0 + 60
    for k, usd in enumerate(["900", "1200", "1500"]):
        t += 10 * DAY
        recs.append(ev(t, 10 + k, 11 + k, usd=usd))
    s = seq(*recs)
    ws = segment_windows(s)
    f = Findings(roundtrip=[rt_finding(ws[0], ws[0].records)])
    (c,) = profit_cases({s.key: ws}, f)
    # the exit sale is the first following sale
    assert c.deltas() == [Decimal(-100), Decimal(200), Decimal(500)]
    p = profitability_analysis({s.key: ws}, f)
    assert p["totalUserLossUsd"] == "700"


def test_gain_histogram_bins():
    h = gain_histogram([Decimal("0.99"), Decimal("0.01"), Decimal("0.02")])
    assert sum(b["count"] for b in h) == 3 and h[0]["lo"] == "0.00"
    assert len(gain_histogram([Decimal(0), Decimal(1000)])) <= 201
    assert gain_histogram([]) == []


# ---- pearson


def test_pearson_exact_lines():
    xs = [1.0, 2.0, 3.5, 7.0]
    assert pearson(xs, [3 * x + 2 for x in xs]) == 1.0
    assert pearson(xs, [-x for x in xs]) == -1.0
    for bad in ([1.0], [1.0, 1.0]):
        with pytest.raises(ValueError):
            pearson(bad, bad)


def test_pearson_matches_direct_formula():
    rng = random.Random(9)
    for _ in range(100):
        xs = [rng.uniform(0, 10) for _ in range(50)]
        ys = [rng.uniform(0, 10) for _ in range(50)]
        assert pearson(xs, ys) == pytest.approx(direct_pearson(xs, ys), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(-1000, 1000), st.integers(-1000, 1000)), min_size=3, max_size=30),
       st.integers(-50, 50).filter(bool), st.integers(-100, 100))
def test_pearson_symmetric_and_affine(pts, a, b):
    xs = [float(x) for x, _ in pts]
    ys = [float(y) for _, y in pts]
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        return
    r = pearson(xs, ys)
    assert -1 <= r <= 1
    assert pearson(ys, xs) == pytest.approx(r, abs=1e-12)
    assert pearson([a * x + b for x in xs], ys) == pytest.approx(math.copysign(1, a) * r, abs=1e-9)


# ---- price sag and histogram


def test_price_sag_cases():
    # 3 ETH, then below 0.0001 WETH, then 0.2 ETH (USD 2000 / unit)
    sag = seq(ev(T0, 1, 2, price="3", usd="2000"), ev(T0 + 1, 2, 3, price="0.00009", token="WETH", usd="2000"),
              ev(T0 + 2, 3, 4, price="0.2", usd="2000"))
    (case,) = price_sag(sag)
    assert case["sale"] == sag.records[1].ref
    assert price_sag(seq(*[ev(T0 + i, i, i + 1, price=str(i + 1)) for i in range(5)])) == []
    edge = seq(ev(T0, 1, 2, price="1"), ev(T0 + 1, 2, 3, price="0.001"), ev(T0 + 2, 3, 4, price="1"))
    assert price_sag(edge) == []


def test_histogram_bins():
    s = seq(ev(T0, A, B))
    f = Findings(unprofitable=[unprofitable(s.records[0], eth_evidence(-4), eth_evidence(1200))])
    h = eth_transfer_histogram(f)
    assert len(h) == 40
    assert [b for b in h if b["count"]] == [{"lo": -60, "hi": 0, "count": 1}, {"lo": 1140, "hi": 1200, "count": 1}]
    assert all(b["count"] == 0 for b in eth_transfer_histogram(Findings()))


def test_histogram_matches_planted_offsets():
    corpus = replica("omnimorph")
    findings, _ = detect_all(corpus.sequences(), corpus.block_txns, corpus.erc20_txns, corpus.prices)
    planted = sorted(o for lab in corpus.labels for o in lab.get("offsets", []))
    h = eth_transfer_histogram(findings)
    got = sorted(b["lo"] for b in h for _ in range(b["count"]))
    assert got == [(o // 60) * 60 for o in planted]


# ---- exclusion


def mixed_findings():
    s = seq(ev(T0, A, B, usd="100"), ev(T0 + 60, B, A, usd="100"), ev(T0 + 120, X, addr(9), usd="50"))
    ws = segment_windows(s)
    rt = rt_finding(ws[0], s.records[:2])
    u = unprofitable(s.records[2])
    h = HiddenFinding(s.key, s.records, "other", Decimal(250))
    return Findings(roundtrip=[rt], unprofitable=[u], hidden=[h])


def test_exclusion_no_groups():
    out = exclusion_impact(mixed_findings(), [])
    assert all(v["decreaseFraction"] == 0 for v in out.values())


def test_exclusion_all_groups():
    g = [TraderGroup(frozenset({A, B})), TraderGroup(frozenset({X, addr(9)}))]
    out = exclusion_impact(mixed_findings(), g)
    assert all(v["decreaseFraction"] == 1.0 for v in out.values())


def test_exclusion_hidden_wholesale_and_exact():
    out = exclusion_impact(mixed_findings(), [TraderGroup(frozenset({A, B}))])
    assert out["roundtrip"]["decreaseFraction"] == 1.0
    assert out["unprofitable"]["decreaseFraction"] == 0.0
    assert out["hidden"]["usdAfter"] == "0"
    for v in out.values():
        assert Decimal(v["usdAfter"]) + Decimal(v["usdRemoved"]) == Decimal(v["usdBefore"])
        assert Decimal(v["usdAfter"]) <= Decimal(v["usdBefore"])


# ---- report


def test_report_self_consistent(tmp_path):
    windows, f = two_windows()
    rep = build_report(f, windows)
    total = sum(r.usd_token * r.num_token for fi in f.roundtrip for r in fi.records)
    assert Decimal(rep["volumeByType"]["roundtrip"]["usd"]) == total
    assert rep["schema"] == "nftwash.report/1"
    write_csvs(rep, tmp_path)
    for name in ("trend.csv", "histogram.csv", "gain_loss.csv", "price_deltas.csv"):
        assert (tmp_path / name).read_text().count("\n") >= 1
