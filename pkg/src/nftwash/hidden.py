"""Hidden trading: runs of consecutive private sales."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Optional

from .data import EventRecord, EventSequence, PriceTable, record_from_dict, record_to_dict, sum_usd

log = logging.getLogger(__name__)

DEFAULT_MIN_LEN = 3

ALL_RISING = "all-rising"
NET_RISING = "net-rising"
OTHER = "other"


@dataclass(frozen=True)
class HiddenFinding:
    token_key: tuple[str, str]
    records: tuple[EventRecord, ...]
    price_trend: str
    usd_value: Decimal

    @property
    def id(self) -> str:
        return f"H:{self.records[0].ref}+{len(self.records)}"

    @property
    def participants(self) -> frozenset[str]:
        return frozenset(a for r in self.records for a in (r.from_addr, r.to_addr))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "tokenKey": list(self.token_key),
            "priceTrend": self.price_trend,
            "usdValue": str(self.usd_value),
            "participants": sorted(self.participants),
            "records": [record_to_dict(r) for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HiddenFinding":
        return cls(tuple(d["tokenKey"]), tuple(record_from_dict(r) for r in d["records"]),
                   d["priceTrend"], Decimal(d["usdValue"]))


def is_private_sale(r: EventRecord) -> bool:
    # Absent isPrivate counts as public.
    return r.is_sale and r.is_private is True


def price_trend(run: Iterable[EventRecord]) -> str:
    run = list(run)
    if len({r.pay_token for r in run}) > 1:
        log.warning("mixed payTokens in private run at %s; trend not compared", run[0].ref)
        return OTHER
    prices = [r.num_token for r in run]
    if all(a < b for a, b in zip(prices, prices[1:])):
        return ALL_RISING
    if prices[-1] > prices[0]:
        return NET_RISING
    return OTHER


def private_runs(seq: EventSequence) -> list[list[EventRecord]]:
    """All maximal runs of adjacent private sales, any length."""
    runs: list[list[EventRecord]] = []
    cur: list[EventRecord] = []
    for r in seq.records:
        if is_private_sale(r):
            cur.append(r)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs


def find_private_runs(seq: EventSequence, min_len: int = DEFAULT_MIN_LEN,
                      prices: Optional[PriceTable] = None) -> list[HiddenFinding]:
    return [
        HiddenFinding(seq.key, tuple(run), price_trend(run), sum_usd(run, prices))
        for run in private_runs(seq)
        if len(run) >= min_len
    ]


def rising_fraction(findings: list[HiddenFinding]) -> dict:
    """Share of runs whose price ends higher, and of those, the share rising at every step."""
    n = len(findings)
    rising = [f for f in findings if f.price_trend in (ALL_RISING, NET_RISING)]
    monotone = [f for f in rising if f.price_trend == ALL_RISING]
    return {
        "runs": n,
        "risingFraction": len(rising) / n if n else 0.0,
        "allRisingShareOfRising": len(monotone) / len(rising) if rising else 0.0,
    }
