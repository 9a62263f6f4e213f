"""Wash-trader pair and group mining.

Every detection finding contributes rows of addresses: one ``{from, to}`` row
per flagged round-trip record, one ``{seller, buyer}`` row per unprofitable
sale, and one row with all participants per hidden run. FP-Growth finds the
address sets of size >= 2 that occur in at least ``ceil(support * rows)``
rows. Frequent pairs sharing an address, or a transaction hash through the
findings they appear in, are merged into groups.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Optional, Sequence

DEFAULT_SUPPORT = 0.0005


@dataclass(frozen=True)
class MiningTransaction:
    kind: str  # "R" | "U" | "H"
    items: frozenset[str]
    source: str  # finding id


def build_itemsets(roundtrip=(), unprofitable=(), hidden=()) -> list[MiningTransaction]:
    """Rows for FP-Growth: R block, then U, then H, each in input order.

    Round-trip records shared by several cycles of one window count once.
    Self-transfers yield a one-address row and are skipped.
    """
    rows = []
    seen_refs = set()
    for f in roundtrip:
        for r in f.records:
            if r.ref in seen_refs or r.from_addr == r.to_addr:
                continue
            seen_refs.add(r.ref)
            rows.append(MiningTransaction("R", frozenset((r.from_addr, r.to_addr)), f.id))
    for f in unprofitable:
        items = frozenset((f.sale.from_addr, f.sale.to_addr))
        if len(items) == 2:
            rows.append(MiningTransaction("U", items, f.id))
    for f in hidden:
        items = f.participants
        if len(items) >= 2:
            rows.append(MiningTransaction("H", frozenset(items), f.id))
    return rows


def min_support_count(n_rows: int, support: float = DEFAULT_SUPPORT,
                      min_count: Optional[int] = None) -> int:
    """Occurrence threshold: ``ceil(support * n_rows)`` unless an absolute count is given."""
    if min_count is not None:
        if min_count < 1:
            raise ValueError("min_count must be >= 1")
        return min_count
    if not 0 < support <= 1:
        raise ValueError("support must be in (0, 1]")
    # Decimal(str(.)) keeps e.g. 0.05 * 1000 from landing a hair above 50.
    return max(1, math.ceil(Decimal(str(support)) * n_rows))


# --------------------------------------------------------------------------
# FP-Growth


class _Node:
    __slots__ = ("item", "count", "parent", "children")

    def __init__(self, item, parent):
        self.item = item
        self.count = 0
        self.parent = parent
        self.children: dict = {}


def _build_tree(weighted_rows, minc: int):
    """Build an FP-tree from ``(items, weight)`` rows.

    Returns ``(header, rank, freq)``: ``header[item]`` lists the item's nodes
    (the node-link chain), ``rank`` orders kept items by descending frequency,
    ``freq`` holds their counts.
    """
    freq: dict = defaultdict(int)
    for items, w in weighted_rows:
        for it in items:
            freq[it] += w
    keep = {it: c for it, c in freq.items() if c >= minc}
    rank = {it: i for i, it in enumerate(sorted(keep, key=lambda it: (-keep[it], it)))}
    root = _Node(None, None)
    header: dict = defaultdict(list)
    for items, w in weighted_rows:
        path = sorted((it for it in items if it in rank), key=rank.__getitem__)
        node = root
        for it in path:
            child = node.children.get(it)
            if child is None:
                child = _Node(it, node)
                node.children[it] = child
                header[it].append(child)
            child.count += w
            node = child
    return header, rank, keep


def _mine(weighted_rows, minc: int, suffix: tuple, out: dict):
    header, rank, freq = _build_tree(weighted_rows, minc)
    # least frequent first, as in the classic formulation
    for item in sorted(rank, key=rank.__getitem__, reverse=True):
        pattern = suffix + (item,)
        out[frozenset(pattern)] = freq[item]
        base = []
        for node in header[item]:
            prefix = []
            p = node.parent
            while p is not None and p.item is not None:
                prefix.append(p.item)
                p = p.parent
            if prefix:
                base.append((prefix, node.count))
        if base:
            _mine(base, minc, pattern, out)


def fp_growth(transactions: Sequence, support: float = DEFAULT_SUPPORT,
              min_count: Optional[int] = None, min_size: int = 2) -> dict[frozenset, int]:
    """Frequent itemsets of at least ``min_size`` items, with exact occurrence counts.

    ``transactions`` may be :class:`MiningTransaction` rows or plain iterables
    of items. An itemset occurs in a row when it is a subset of the row.
    """
    rows = [t.items if isinstance(t, MiningTransaction) else frozenset(t) for t in transactions]
    if not rows:
        raise ValueError("no transactions to mine")
    minc = min_support_count(len(rows), support, min_count)
    out: dict[frozenset, int] = {}
    _mine([(r, 1) for r in rows], minc, (), out)
    return {k: v for k, v in out.items() if len(k) >= min_size}


# --------------------------------------------------------------------------
# pairs and groups


@dataclass(frozen=True)
class TraderPair:
    addresses: frozenset[str]
    support_count: int
    kinds: frozenset[str] = frozenset()
    sources: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "addresses": sorted(self.addresses),
            "supportCount": self.support_count,
            "kinds": sorted(self.kinds),
            "sources": list(self.sources),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraderPair":
        return cls(frozenset(d["addresses"]), d["supportCount"], frozenset(d["kinds"]),
                   tuple(d["sources"]))


@dataclass(frozen=True)
class TraderGroup:
    addresses: frozenset[str]
    member_pairs: tuple[TraderPair, ...] = field(default=())

    @property
    def is_pair(self) -> bool:
        return len(self.member_pairs) == 1

    def to_dict(self) -> dict:
        return {
            "addresses": sorted(self.addresses),
            "pairs": [sorted(p.addresses) for p in self.member_pairs],
        }


def make_pairs(itemsets: dict[frozenset, int], rows: Sequence[MiningTransaction]) -> list[TraderPair]:
    pairs = []
    for items, count in itemsets.items():
        if len(items) != 2:
            continue
        hits = [t for t in rows if items <= t.items]
        sources = tuple(dict.fromkeys(t.source for t in hits))
        pairs.append(TraderPair(items, count, frozenset(t.kind for t in hits), sources))
    pairs.sort(key=lambda p: (-p.support_count, sorted(p.addresses)))
    return pairs


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller key wins so the result does not depend on union order
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _finding_hashes(f) -> set[str]:
    hashes = {r.txn_hash for r in f.records if r.txn_hash}
    hashes.update(e.txn_hash for e in getattr(f, "evidence", ()))
    return hashes


def merge_groups(pairs: Iterable[TraderPair], findings: Iterable = ()) -> list[TraderGroup]:
    """Connected components of pairs linked by a shared address or transaction.

    A pair "appears in" a finding when both of its addresses are participants
    of that finding; two pairs appearing in findings that reference the same
    txnHash are linked. Every pair ends up in exactly one group; a group with
    one member pair is just that pair.
    """
    pairs = list(pairs)
    uf = _UnionFind()
    for p in pairs:
        a, b = sorted(p.addresses)
        uf.union(a, b)
    by_hash: dict[str, list] = defaultdict(list)
    for f in findings:
        members = f.participants
        inside = [p for p in pairs if p.addresses <= members]
        if not inside:
            continue
        for h in _finding_hashes(f):
            by_hash[h].extend(inside)
    for linked in by_hash.values():
        anchor = min(linked[0].addresses)
        for p in linked[1:]:
            uf.union(anchor, min(p.addresses))
    comps: dict = defaultdict(list)
    for p in pairs:
        comps[uf.find(min(p.addresses))].append(p)
    groups = []
    for members in comps.values():
        members.sort(key=lambda p: sorted(p.addresses))
        addrs = frozenset(a for p in members for a in p.addresses)
        groups.append(TraderGroup(addrs, tuple(members)))
    groups.sort(key=lambda g: sorted(g.addresses))
    return groups


@dataclass
class MiningResult:
    n_rows: int
    threshold: int
    support: float
    itemsets: dict[frozenset, int]
    pairs: list[TraderPair]
    groups: list[TraderGroup]
    rows_by_kind: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "rows": self.n_rows,
            "rowsByKind": self.rows_by_kind,
            "support": self.support,
            "threshold": self.threshold,
            "itemsets": [
                {"addresses": sorted(k), "count": v}
                for k, v in sorted(self.itemsets.items(), key=lambda kv: (-kv[1], sorted(kv[0])))
            ],
            "pairs": [p.to_dict() for p in self.pairs],
            "groups": [g.to_dict() for g in self.groups if not g.is_pair],
            "components": [g.to_dict() for g in self.groups],
        }


def mine(roundtrip=(), unprofitable=(), hidden=(), support: float = DEFAULT_SUPPORT,
         min_count: Optional[int] = None) -> MiningResult:
    rows = build_itemsets(roundtrip, unprofitable, hidden)
    by_kind = {k: sum(1 for r in rows if r.kind == k) for k in ("R", "U", "H")}
    if not rows:
        return MiningResult(0, 0, support, {}, [], [], by_kind)
    itemsets = fp_growth(rows, support, min_count)
    pairs = make_pairs(itemsets, rows)
    groups = merge_groups(pairs, [*roundtrip, *unprofitable, *hidden])
    return MiningResult(len(rows), min_support_count(len(rows), support, min_count), support,
                        itemsets, pairs, groups, by_kind)
