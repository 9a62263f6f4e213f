"""Measurements over detection output: volumes, trend, liquidity, profitability,
price correlation, price sags and the effect of excluding mined traders.

USD figures are Decimals and are serialized as strings. Fractions and
correlation coefficients are floats.
"""

from __future__ import annotations

import csv
import math
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .data import EventRecord, EventSequence, PriceTable, record_usd, sum_usd, utc_day
from .unprofitable import FUNDING, RESTITUTION

NATIVE = frozenset({"ETH", "WETH"})  # priced 1:1 for native-unit comparisons
DAY = 86400
MAX_FOLLOWING_SALES = 7


# --------------------------------------------------------------------------
# volumes and trend


def _distinct(records: Iterable[EventRecord]) -> list[EventRecord]:
    return sorted({r.ref: r for r in records}.values(), key=lambda r: r.ref)


def _volume(records: Iterable[EventRecord], prices) -> dict:
    recs = _distinct(records)
    return {
        "usd": sum_usd(recs, prices),
        "events": len(recs),
        "sales": sum(1 for r in recs if r.is_sale),
        "transfers": sum(1 for r in recs if not r.is_sale),
    }


def type_records(findings) -> dict[str, list[EventRecord]]:
    return {
        "roundtrip": [r for f in findings.roundtrip for r in f.records],
        "unprofitable": [f.sale for f in findings.unprofitable],
        "hidden": [r for f in findings.hidden for r in f.records],
    }


def volume_summary(findings, prices: Optional[PriceTable] = None) -> dict:
    """USD and event counts per detection type, over distinct flagged records.

    A record flagged by several findings of one type (e.g. an edge shared by
    two cycles) counts once. ``all`` is the union over types.
    """
    by_type = type_records(findings)
    out = {k: _volume(v, prices) for k, v in by_type.items()}
    out["all"] = _volume([r for v in by_type.values() for r in v], prices)
    return out


def trend_series(findings, exclude_collections: Iterable[str] = ()) -> list[tuple[str, int]]:
    """Flagged sale and transfer events per UTC day."""
    skip = set(exclude_collections)
    recs = _distinct(r for v in type_records(findings).values() for r in v)
    days = Counter(utc_day(r.timestamp).isoformat() for r in recs
                   if r.collection not in skip and r.event_type.value != "minted")
    return sorted(days.items())


# --------------------------------------------------------------------------
# window transitions


def wash_windows(findings) -> set[tuple[tuple[str, str], int]]:
    """Windows holding at least one round-trip finding."""
    return {(tuple(f.token_key), f.window_index) for f in findings.roundtrip}


def _transitions(windows: dict, findings, following: bool = False):
    """(current, next, current_is_wash) for every window followed by a non-wash window.

    With ``following``, a fourth item lists the windows after ``current`` up
    to (not including) the next wash window.
    """
    washed = wash_windows(findings)
    for key in sorted(windows):
        ws = windows[key]
        for j, (cur, nxt) in enumerate(zip(ws, ws[1:])):
            if (key, nxt.index) in washed:
                continue
            item = (cur, nxt, (key, cur.index) in washed)
            if following:
                rest = []
                for w in ws[j + 1:]:
                    if (key, w.index) in washed:
                        break
                    rest.append(w)
                item += (rest,)
            yield item


def _stats(values: Sequence) -> dict:
    if not values:
        return {"count": 0, "mean": None, "median": None}
    return {"count": len(values), "mean": statistics.fmean(values),
            "median": statistics.median(values)}


def liquidity_transition(windows: dict, findings) -> dict:
    """Days from the last event of a window to the first of the following non-wash window."""
    gaps = {True: [], False: []}
    for cur, nxt, is_wash in _transitions(windows, findings):
        gaps[is_wash].append((nxt.first_ts - cur.last_ts) / DAY)
    wash, benign = _stats(gaps[True]), _stats(gaps[False])
    diff = None
    if wash["mean"] is not None and benign["mean"] is not None:
        diff = benign["mean"] - wash["mean"]
    return {"washToNext": wash, "nonWashToNext": benign, "meanDifferenceDays": diff}


# --------------------------------------------------------------------------
# profitability


def _native(r: EventRecord) -> Optional[Decimal]:
    if r.pay_token is not None and r.pay_token.upper() in NATIVE:
        return r.num_token
    return None


@dataclass(frozen=True)
class ProfitCase:
    token_key: tuple[str, str]
    window_index: int
    fees_native: Optional[Decimal]
    fees_usd: Optional[Decimal]
    exit_sale: EventRecord
    exit_native: Optional[Decimal]
    exit_usd: Optional[Decimal]
    last_wash_usd: Optional[Decimal]
    following_usd: tuple[Optional[Decimal], ...]

    @property
    def gain_native(self) -> Optional[Decimal]:
        if self.fees_native is None or self.exit_native is None:
            return None
        return self.exit_native - self.fees_native

    @property
    def gain_usd(self) -> Optional[Decimal]:
        if self.fees_usd is None or self.exit_usd is None:
            return None
        return self.exit_usd - self.fees_usd

    @property
    def profitable(self) -> bool:
        g = self.gain_native if self.gain_native is not None else self.gain_usd
        return g is not None and g > 0

    def deltas(self) -> list[Optional[Decimal]]:
        """Each following sale's USD price minus the last wash-window sale price."""
        if self.last_wash_usd is None:
            return [None] * len(self.following_usd)
        return [None if p is None else p - self.last_wash_usd for p in self.following_usd]

    def to_dict(self) -> dict:
        s = lambda v: None if v is None else str(v)  # noqa: E731
        return {
            "tokenKey": list(self.token_key),
            "windowIndex": self.window_index,
            "exitSale": self.exit_sale.ref,
            "feesNative": s(self.fees_native),
            "feesUsd": s(self.fees_usd),
            "exitNative": s(self.exit_native),
            "exitUsd": s(self.exit_usd),
            "gainNative": s(self.gain_native),
            "gainUsd": s(self.gain_usd),
            "profitable": self.profitable,
            "priceDeltasUsd": [s(d) for d in self.deltas()],
        }


def _all_known(values):
    return None if any(v is None for v in values) else values


def profit_cases(windows: dict, findings, fee_rate: float = 0.025,
                 prices: Optional[PriceTable] = None) -> list[ProfitCase]:
    """Wash windows followed by a non-wash window whose first sale covers the fees.

    Fees are ``fee_rate`` times each flagged round-trip sale in the wash
    window. Fees and the exit sale are compared in ETH (ETH and WETH at par)
    when every price involved is in those units, else in USD.
    """
    rate = Decimal(str(fee_rate))
    flagged = defaultdict(set)
    for f in findings.roundtrip:
        for r in f.records:
            flagged[(tuple(f.token_key), f.window_index)].add(r.ref)
    cases = []
    for cur, nxt, is_wash, rest in _transitions(windows, findings, following=True):
        if not is_wash:
            continue
        nxt_sales = nxt.sales()
        later = [r for w in rest for r in w.sales()][:MAX_FOLLOWING_SALES]
        if not nxt_sales:
            continue
        wash_sales = [r for r in cur.sales() if r.ref in flagged[(cur.token_key, cur.index)]]
        native = _all_known([_native(r) for r in wash_sales])
        usd = _all_known([record_usd(r, prices) for r in wash_sales])
        exit_sale = nxt_sales[0]
        case = ProfitCase(
            token_key=cur.token_key,
            window_index=cur.index,
            fees_native=None if native is None else rate * sum(native, Decimal(0)),
            fees_usd=None if usd is None else rate * sum(usd, Decimal(0)),
            exit_sale=exit_sale,
            exit_native=_native(exit_sale),
            exit_usd=record_usd(exit_sale, prices),
            last_wash_usd=record_usd(cur.sales()[-1], prices) if cur.sales() else None,
            following_usd=tuple(record_usd(r, prices) for r in later),
        )
        if case.gain_native is not None:
            ok = case.gain_native >= 0
        elif case.gain_usd is not None:
            ok = case.gain_usd >= 0
        else:
            ok = False
        if ok:
            cases.append(case)
    return cases


def _resale_lower(windows: dict, findings, prices) -> dict:
    """Share of transitions whose first next sale is cheaper than the last current sale."""
    hits = {True: [], False: []}
    for cur, nxt, is_wash in _transitions(windows, findings):
        a, b = cur.sales(), nxt.sales()
        if not a or not b:
            continue
        pa, pb = record_usd(a[-1], prices), record_usd(b[0], prices)
        if pa is None or pb is None:
            continue
        hits[is_wash].append(pb < pa)
    frac = lambda xs: sum(xs) / len(xs) if xs else 0.0  # noqa: E731
    return {"wash": frac(hits[True]), "benign": frac(hits[False]),
            "washCount": len(hits[True]), "benignCount": len(hits[False])}


def gain_histogram(gains: Sequence[Decimal], width: Decimal = Decimal("0.05")) -> list[dict]:
    """Fixed-width bins ``[lo, lo + width)`` covering all gains (at most ~200;
    the width grows tenfold until they fit)."""
    if not gains:
        return []
    while (max(gains) - min(gains)) / width > 200:
        width *= 10
    counts = Counter(math.floor(g / width) for g in gains)
    lo, hi = min(counts), max(counts)
    return [{"lo": str(k * width), "hi": str((k + 1) * width), "count": counts.get(k, 0)}
            for k in range(lo, hi + 1)]


def profitability_analysis(windows: dict, findings, fee_rate: float = 0.025,
                           prices: Optional[PriceTable] = None) -> dict:
    cases = profit_cases(windows, findings, fee_rate, prices)
    steps = []
    for k in range(MAX_FOLLOWING_SALES):
        vals = [c.deltas()[k] for c in cases if len(c.following_usd) > k]
        vals = [float(v) for v in vals if v is not None]
        steps.append({"step": k + 1, **_stats(vals)})
    loss = sum((d for c in cases for d in c.deltas() if d is not None and d > 0), Decimal(0))
    gains = [c.gain_native if c.gain_native is not None else c.gain_usd for c in cases]
    return {
        "basis": "gain = first next-window sale price - fee_rate * flagged wash-window sales",
        "feeRate": fee_rate,
        "qualifyingWindows": len(cases),
        "profitableFraction": sum(c.profitable for c in cases) / len(cases) if cases else 0.0,
        "gainLossHistogram": gain_histogram([g for g in gains if g is not None]),
        "resaleLower": _resale_lower(windows, findings, prices),
        "perStepPriceDeltasUsd": steps,
        "totalUserLossUsd": str(loss),
        "cases": [c.to_dict() for c in cases],
    }


# --------------------------------------------------------------------------
# correlation


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation; raises on fewer than 2 points or zero variance."""
    if len(xs) != len(ys):
        raise ValueError("series differ in length")
    n = len(xs)
    if n < 2:
        raise ValueError("need at least two points")
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    mx, my = math.fsum(xs) / n, math.fsum(ys) / n
    dx = [x - mx for x in xs]
    dy = [y - my for y in ys]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise ValueError("zero variance")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def transfer_price_series(findings) -> dict[str, tuple[list[float], list[float]]]:
    """Per direction, (ETH moved, sale price) pairs over ETH-denominated sales."""
    out = {FUNDING: ([], []), RESTITUTION: ([], [])}
    for f in findings.unprofitable:
        price = _native(f.sale)
        if price is None:
            continue
        for direction, (xs, ys) in out.items():
            moved = [e.amount for e in f.evidence if e.kind == "eth" and e.direction == direction]
            if moved:
                xs.append(float(sum(moved, Decimal(0))))
                ys.append(float(price))
    return out


def transfer_correlations(findings) -> dict:
    res = {}
    names = {FUNDING: "fundingVsPrice", RESTITUTION: "restitutionVsPrice"}
    for direction, (xs, ys) in transfer_price_series(findings).items():
        try:
            r = pearson(xs, ys)
        except ValueError:
            r = None
        res[names[direction]] = {"r": r, "n": len(xs)}
    return res


# --------------------------------------------------------------------------
# price sags


def price_sag(seq: EventSequence, prices: Optional[PriceTable] = None,
              threshold: float = 1000) -> list[dict]:
    """Sales whose USD price drops more than ``threshold``-fold and then recovers as much.

    With P the USD prices of the token's sales, a sag at ``i + 1`` needs
    ``P[i] > thr * P[i+1]`` and ``P[i+2] > thr * P[i+1]`` (strict), which is
    the ratio test without dividing by a zero price. Unpriceable sales split
    the series.
    """
    thr = Decimal(str(threshold))
    sales = seq.sales()
    usd = [record_usd(r, prices) for r in sales]
    out = []
    for i in range(len(sales) - 2):
        a, b, c = usd[i], usd[i + 1], usd[i + 2]
        if a is None or b is None or c is None:
            continue
        if a > thr * b and c > thr * b:
            out.append({
                "tokenKey": list(seq.key),
                "sale": sales[i + 1].ref,
                "before": sales[i].ref,
                "after": sales[i + 2].ref,
                "usd": [str(a), str(b), str(c)],
            })
    return out


# --------------------------------------------------------------------------
# evidence timing


def eth_transfer_histogram(findings, bin_seconds: int = 60, span_seconds: int = 1200) -> list[dict]:
    """ETH evidence counts by signed offset from the sale, bins ``[lo, lo + bin)``.

    An offset of exactly ``+span`` is counted in the last bin.
    """
    n = 2 * span_seconds // bin_seconds
    counts = [0] * n
    for f in findings.unprofitable:
        for e in f.evidence:
            if e.kind != "eth" or abs(e.offset_seconds) > span_seconds:
                continue
            k = min((e.offset_seconds + span_seconds) // bin_seconds, n - 1)
            counts[k] += 1
    return [{"lo": -span_seconds + k * bin_seconds, "hi": -span_seconds + (k + 1) * bin_seconds,
             "count": c} for k, c in enumerate(counts)]


# --------------------------------------------------------------------------
# exclusion of mined traders


def _by_group(r: EventRecord, member_of: dict[str, int]) -> bool:
    g = member_of.get(r.from_addr)
    return g is not None and g == member_of.get(r.to_addr)


def exclusion_impact(findings, groups: Iterable, prices: Optional[PriceTable] = None) -> dict:
    """Flagged volume before and after dropping transactions between mined traders.

    A record is "by" a group when both of its parties belong to that group
    (a pair is a one-pair group). Round-trip volume drops those records,
    an unprofitable sale drops with them, and a hidden run drops entirely
    when any of its records is such a transaction.
    """
    member_of = {}
    for gi, g in enumerate(groups):
        for a in g.addresses:
            member_of[a] = gi
    before = type_records(findings)
    after = {
        "roundtrip": [r for r in before["roundtrip"] if not _by_group(r, member_of)],
        "unprofitable": [r for r in before["unprofitable"] if not _by_group(r, member_of)],
        "hidden": [r for f in findings.hidden
                   if not any(_by_group(x, member_of) for x in f.records) for r in f.records],
    }
    out = {}
    for k in before:
        b = _volume(before[k], prices)["usd"]
        a = _volume(after[k], prices)["usd"]
        out[k] = {
            "usdBefore": str(b),
            "usdAfter": str(a),
            "usdRemoved": str(b - a),
            "decreaseFraction": float((b - a) / b) if b else 0.0,
        }
    return out


# --------------------------------------------------------------------------
# report


def _json_volume(v: dict) -> dict:
    return {**v, "usd": str(v["usd"])}


def build_report(findings, windows: dict, groups: Iterable = (),
                 prices: Optional[PriceTable] = None, fee_rate: float = 0.025,
                 pf_threshold: float = 1000, exclude_collections: Iterable[str] = ()) -> dict:
    """All measurements as one JSON-ready document."""
    groups = list(groups)
    sags = []
    for key in sorted(windows):
        ws = windows[key]
        records = [r for w in ws for r in w.records]
        if records:
            sags.extend(price_sag(EventSequence(key[0], key[1], tuple(records)), prices, pf_threshold))
    return {
        "schema": "nftwash.report/1",
        "volumeByType": {k: _json_volume(v) for k, v in volume_summary(findings, prices).items()},
        "trend": [{"date": d, "events": n} for d, n in trend_series(findings, exclude_collections)],
        "trendExcluded": sorted(exclude_collections),
        "liquidity": liquidity_transition(windows, findings),
        "profitability": profitability_analysis(windows, findings, fee_rate, prices),
        "pearson": transfer_correlations(findings),
        "priceSag": {"threshold": pf_threshold, "cases": sags,
                     "usd": str(sum((Decimal(c["usd"][1]) for c in sags), Decimal(0)))},
        "ethTransferHistogram": eth_transfer_histogram(findings),
        "exclusionImpact": exclusion_impact(findings, groups, prices),
    }


def write_csvs(report: dict, out_dir):
    """Plot-ready tables next to ``report.json``."""
    out = Path(out_dir)
    with open(out / "trend.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "events"])
        for row in report["trend"]:
            w.writerow([row["date"], row["events"]])
    with open(out / "histogram.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lo", "hi", "count"])
        for b in report["ethTransferHistogram"]:
            w.writerow([b["lo"], b["hi"], b["count"]])
    with open(out / "gain_loss.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["collection", "tokenId", "window", "gainNative", "gainUsd", "profitable"])
        for c in report["profitability"]["cases"]:
            w.writerow([*c["tokenKey"], c["windowIndex"], c["gainNative"] or "",
                        c["gainUsd"] or "", c["profitable"]])
    with open(out / "price_deltas.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "count", "meanUsd", "medianUsd"])
        for s in report["profitability"]["perStepPriceDeltasUsd"]:
            w.writerow([s["step"], s["count"], "" if s["mean"] is None else s["mean"],
                        "" if s["median"] is None else s["median"]])
