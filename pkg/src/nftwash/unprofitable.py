"""Unprofitable trading: sales accompanied by a direct seller -> buyer value transfer.

A block transaction counts as evidence when it carries no call data (a pure
ETH move), goes from the sale's seller to its buyer, and lies within 20
minutes of the sale. ERC-20 transfers use the same address rule with an 80
minute bound. Bounds are inclusive on both sides of the sale.
"""

from __future__ import annotations

import bisect
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Optional, Sequence

from .data import (
    BlockTxn, Erc20Transfer, EventRecord, PriceTable, record_from_dict, record_to_dict,
    record_usd, usd_value,
)

DEFAULT_ETH_WINDOW_MIN = 20
DEFAULT_ERC20_WINDOW_MIN = 80

FUNDING = "funding-before"
RESTITUTION = "restitution-after"


@dataclass(frozen=True)
class Evidence:
    txn_hash: str
    kind: str  # "eth" | "erc20"
    direction: str
    offset_seconds: int  # evidence time minus sale time
    token: str
    amount: Decimal
    usd: Optional[Decimal]
    from_addr: str
    to_addr: str

    def to_dict(self) -> dict:
        return {
            "txnHash": self.txn_hash, "kind": self.kind, "direction": self.direction,
            "offsetSeconds": self.offset_seconds, "token": self.token,
            "amount": str(self.amount), "usd": None if self.usd is None else str(self.usd),
            "from": self.from_addr, "to": self.to_addr,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Evidence":
        return cls(d["txnHash"], d["kind"], d["direction"], d["offsetSeconds"], d["token"],
                   Decimal(d["amount"]), None if d["usd"] is None else Decimal(d["usd"]),
                   d["from"], d["to"])


@dataclass(frozen=True)
class UnprofitableFinding:
    sale: EventRecord
    evidence: tuple[Evidence, ...]
    sale_usd: Optional[Decimal]

    @property
    def id(self) -> str:
        return f"U:{self.sale.ref}"

    @property
    def total_evidence_usd(self) -> Decimal:
        return sum((e.usd for e in self.evidence if e.usd is not None), Decimal(0))

    @property
    def participants(self) -> frozenset[str]:
        return frozenset((self.sale.from_addr, self.sale.to_addr))

    @property
    def records(self) -> tuple[EventRecord, ...]:
        return (self.sale,)

    @property
    def kinds(self) -> frozenset[str]:
        return frozenset(e.kind for e in self.evidence)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "sale": record_to_dict(self.sale),
            "saleUsd": None if self.sale_usd is None else str(self.sale_usd),
            "totalEvidenceUsd": str(self.total_evidence_usd),
            "evidence": [e.to_dict() for e in self.evidence],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UnprofitableFinding":
        return cls(record_from_dict(d["sale"]), tuple(Evidence.from_dict(e) for e in d["evidence"]),
                   None if d["saleUsd"] is None else Decimal(d["saleUsd"]))


class TxnIndex:
    """Transactions bucketed by (from, to) and sorted by time within a bucket."""

    def __init__(self, txns: Iterable):
        buckets = defaultdict(list)
        for t in txns:
            buckets[(t.from_addr, t.to_addr)].append(t)
        self._times = {}
        self._txns = {}
        for k, items in buckets.items():
            items.sort(key=lambda t: (t.timestamp, t.hash))
            self._txns[k] = items
            self._times[k] = [t.timestamp for t in items]

    def between(self, src: str, dst: str, lo: int, hi: int) -> list:
        k = (src, dst)
        times = self._times.get(k)
        if not times:
            return []
        i = bisect.bisect_left(times, lo)
        j = bisect.bisect_right(times, hi)
        return self._txns[k][i:j]


def _pairs(sale: EventRecord, bidirectional: bool):
    yield sale.from_addr, sale.to_addr
    if bidirectional:
        yield sale.to_addr, sale.from_addr


def _direction(offset: int) -> str:
    return FUNDING if offset < 0 else RESTITUTION


def _as_index(txns) -> TxnIndex:
    return txns if isinstance(txns, TxnIndex) else TxnIndex(txns)


def match_eth(sale: EventRecord, txns, window_min: float = DEFAULT_ETH_WINDOW_MIN,
              prices: Optional[PriceTable] = None, bidirectional: bool = False) -> list[Evidence]:
    """Plain ETH transfers seller -> buyer within ``window_min`` of the sale."""
    if not sale.is_sale:
        raise ValueError("match_eth needs a sale record")
    idx = _as_index(txns)
    span = int(window_min * 60)
    out = []
    for src, dst in _pairs(sale, bidirectional):
        for t in idx.between(src, dst, sale.timestamp - span, sale.timestamp + span):
            if not t.is_plain_transfer:
                continue
            off = t.timestamp - sale.timestamp
            amount = t.value_eth
            event_usd = sale.usd_token if (sale.pay_token or "").upper() == "ETH" else None
            out.append(Evidence(
                t.hash, "eth", _direction(off), off, "ETH", amount,
                usd_value("ETH", amount, t.timestamp, prices, event_usd), t.from_addr, t.to_addr,
            ))
    return out


def match_erc20(sale: EventRecord, txns, window_min: float = DEFAULT_ERC20_WINDOW_MIN,
                prices: Optional[PriceTable] = None, bidirectional: bool = False) -> list[Evidence]:
    """ERC-20 transfers seller -> buyer within ``window_min`` of the sale.

    USD comes from the sale's own unit price when the token matches the
    sale's payToken, else from the price table; unpriceable evidence keeps
    ``usd=None``.
    """
    if not sale.is_sale:
        raise ValueError("match_erc20 needs a sale record")
    idx = _as_index(txns)
    span = int(window_min * 60)
    out = []
    for src, dst in _pairs(sale, bidirectional):
        for t in idx.between(src, dst, sale.timestamp - span, sale.timestamp + span):
            off = t.timestamp - sale.timestamp
            same_token = (sale.pay_token or "").upper() == t.token_symbol.upper()
            usd = usd_value(t.token_contract, t.amount, t.timestamp, prices,
                            sale.usd_token if same_token else None)
            out.append(Evidence(t.hash, "erc20", _direction(off), off, t.token_symbol, t.amount,
                                usd, t.from_addr, t.to_addr))
    return out


def detect_unprofitable(sales: Iterable[EventRecord], block_txns: Sequence[BlockTxn] = (),
                        erc20_txns: Sequence[Erc20Transfer] = (),
                        eth_window_min: float = DEFAULT_ETH_WINDOW_MIN,
                        erc20_window_min: float = DEFAULT_ERC20_WINDOW_MIN,
                        prices: Optional[PriceTable] = None,
                        bidirectional: bool = False) -> list[UnprofitableFinding]:
    """One finding per sale that has at least one piece of evidence."""
    eth_idx = _as_index(block_txns)
    erc_idx = _as_index(erc20_txns)
    out = []
    for s in sales:
        if not s.is_sale:
            continue
        ev = match_eth(s, eth_idx, eth_window_min, prices, bidirectional)
        ev += match_erc20(s, erc_idx, erc20_window_min, prices, bidirectional)
        if ev:
            ev.sort(key=lambda e: (e.offset_seconds, e.kind, e.txn_hash))
            out.append(UnprofitableFinding(s, tuple(ev), record_usd(s, prices)))
    return out


def summarize(findings: Sequence[UnprofitableFinding]) -> dict:
    """Counts and funding/restitution shares, split by evidence kind."""
    out = {}
    for kind in ("eth", "erc20"):
        hit = [f for f in findings if kind in f.kinds]
        funded = sum(1 for f in hit if any(e.kind == kind and e.direction == FUNDING for e in f.evidence))
        returned = sum(1 for f in hit if any(e.kind == kind and e.direction == RESTITUTION for e in f.evidence))
        out[kind] = {
            "sales": len(hit),
            "fundingBeforeFraction": funded / len(hit) if hit else 0.0,
            "restitutionAfterFraction": returned / len(hit) if hit else 0.0,
        }
    tokens: dict[str, int] = defaultdict(int)
    for f in findings:
        for sym in {e.token for e in f.evidence if e.kind == "erc20"}:
            tokens[sym] += 1
    out["erc20TokenSales"] = dict(sorted(tokens.items()))
    return out
