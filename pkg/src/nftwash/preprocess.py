"""Repairs for marketplace event sequences.

Three independent fixes, applied in this order by :func:`clean_corpus`:

1. drop repeated events that point at the same transaction,
2. drop events whose timestamp disagrees with the chain,
3. collapse hops through marketplace routing contracts.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Mapping, Optional

from .data import EventRecord, EventSequence, reindexed

log = logging.getLogger(__name__)

DUPLICATE_WINDOW_SECONDS = 300


@dataclass(frozen=True)
class CleanReport:
    duplicatesRemoved: int = 0
    badTimestampsDropped: int = 0
    intermediariesCollapsed: int = 0
    danglingIntermediaries: int = 0
    consisRateBefore: float = 1.0
    consisRateAfter: float = 1.0
    tokens: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _same_shape(a: EventRecord, b: EventRecord) -> bool:
    return (a.event_type, a.from_addr, a.to_addr) == (b.event_type, b.from_addr, b.to_addr)


def _dedupe_run(run: list[EventRecord]) -> list[EventRecord]:
    """Resolve one maximal run of records sharing (type, from, to)."""
    if len(run) == 1:
        return run
    keep: dict[int, EventRecord] = {}  # position of kept record -> record
    by_hash: dict[str, int] = {}
    for pos, r in enumerate(run):
        if r.txn_hash is not None and r.txn_hash not in by_hash:
            by_hash[r.txn_hash] = pos
            keep[pos] = r
    anchors = sorted(by_hash.values())
    loose_anchor: Optional[int] = None  # earliest kept hash-less record of the current cluster
    for pos, r in enumerate(run):
        if r.txn_hash is not None:
            continue
        near = [a for a in anchors if abs(run[a].timestamp - r.timestamp) <= DUPLICATE_WINDOW_SECONDS]
        if near:
            continue
        if (loose_anchor is not None
                and r.timestamp - run[loose_anchor].timestamp <= DUPLICATE_WINDOW_SECONDS):
            continue
        loose_anchor = pos
        keep[pos] = r
    return [keep[p] for p in sorted(keep)]


def dedupe_repeated_events(seq: EventSequence) -> EventSequence:
    """Remove repeated records that refer to the same transaction.

    Inside a run of adjacent records with identical (type, from, to), records
    sharing a txnHash collapse to the first, and a hash-less record within
    300 s of a hashed one is treated as its shadow. Hash-less records with no
    hashed partner keep only the earliest of each 300 s cluster.
    """
    out: list[EventRecord] = []
    run: list[EventRecord] = []
    for r in seq.records:
        if run and not _same_shape(run[-1], r):
            out.extend(_dedupe_run(run))
            run = []
        run.append(r)
    if run:
        out.extend(_dedupe_run(run))
    if len(out) == len(seq.records):
        return seq
    return reindexed(seq.collection, seq.token_id, out)


def filter_bad_timestamps(seq: EventSequence,
                          canon: Optional[Mapping[str, int]] = None) -> EventSequence:
    """Drop records with wrong timestamps.

    With ``canon`` (txnHash -> chain timestamp), a record is wrong when its
    hash is known and the times differ. Without it, a record earlier than the
    previously kept one is wrong.
    """
    kept: list[EventRecord] = []
    for r in seq.records:
        if canon is not None:
            if r.txn_hash is not None and r.txn_hash in canon and canon[r.txn_hash] != r.timestamp:
                continue
        elif kept and r.timestamp < kept[-1].timestamp:
            continue
        kept.append(r)
    if len(kept) == len(seq.records):
        return seq
    return reindexed(seq.collection, seq.token_id, kept)


def _merge_pass(records: list[EventRecord], contracts: frozenset[str]):
    out: list[EventRecord] = []
    merged = 0
    i = 0
    while i < len(records):
        r = records[i]
        if (r.to_addr in contracts and i + 1 < len(records)
                and records[i + 1].from_addr == r.to_addr):
            nxt = records[i + 1]
            priced = r if r.is_sale or not nxt.is_sale else nxt
            out.append(replace(
                priced,
                from_addr=r.from_addr,
                to_addr=nxt.to_addr,
                timestamp=min(r.timestamp, nxt.timestamp),
            ))
            merged += 1
            i += 2
        else:
            out.append(r)
            i += 1
    return out, merged


def merge_intermediaries(seq: EventSequence, contracts: Iterable[str],
                         stats: Optional[dict] = None) -> EventSequence:
    """Collapse ``A -> M, M -> B`` into ``A -> B`` for marketplace contracts ``M``.

    The sale leg's price fields win over a transfer leg; the earlier timestamp
    is kept. Runs to a fixpoint so multi-hop routes collapse fully. A hop into
    ``M`` with no outgoing partner is left alone and counted in
    ``stats["dangling"]``.
    """
    contracts = frozenset(c.lower() for c in contracts)
    if not contracts:
        return seq
    records = list(seq.records)
    total = 0
    while True:
        records, merged = _merge_pass(records, contracts)
        total += merged
        if not merged:
            break
    dangling = sum(
        1 for i, r in enumerate(records)
        if r.to_addr in contracts and (i + 1 == len(records) or records[i + 1].from_addr != r.to_addr)
    )
    if dangling:
        log.warning("%s #%s: %d unpaired hop(s) into marketplace contracts",
                    seq.collection, seq.token_id, dangling)
    if stats is not None:
        stats["merged"] = stats.get("merged", 0) + total
        stats["dangling"] = stats.get("dangling", 0) + dangling
    if not total:
        return seq
    return reindexed(seq.collection, seq.token_id, records)


def is_consistent(seq: EventSequence) -> bool:
    recs = seq.records
    return all(recs[i].from_addr == recs[i - 1].to_addr for i in range(1, len(recs)))


def consistency_rate(sequences: Iterable[EventSequence]) -> float:
    """Share of tokens whose sequence chains cleanly (each ``from`` is the prior ``to``)."""
    seqs = list(sequences)
    if not seqs:
        raise ValueError("no tokens")
    return sum(1 for s in seqs if is_consistent(s)) / len(seqs)


def clean_sequence(seq: EventSequence, contracts: Iterable[str] = (),
                   canon: Optional[Mapping[str, int]] = None,
                   stats: Optional[dict] = None) -> EventSequence:
    """Dedupe, timestamp filter, intermediary merge, repeated until nothing changes.

    A merge can bring two identical records next to each other, so one pass
    is not always a fixpoint. Every step only removes records, so this ends.
    """
    while True:
        step1 = dedupe_repeated_events(seq)
        step2 = filter_bad_timestamps(step1, canon)
        hop: dict = {}
        step3 = merge_intermediaries(step2, contracts, hop)
        if stats is not None:
            stats["dupes"] = stats.get("dupes", 0) + len(seq) - len(step1)
            stats["bad_ts"] = stats.get("bad_ts", 0) + len(step1) - len(step2)
            stats["merged"] = stats.get("merged", 0) + hop.get("merged", 0)
        if len(step3) == len(seq):
            if stats is not None:
                # dangling hops are a property of the final sequence only
                stats["dangling"] = stats.get("dangling", 0) + hop.get("dangling", 0)
            return step3
        seq = step3


def clean_corpus(sequences: Iterable[EventSequence], contracts: Iterable[str] = (),
                 canon: Optional[Mapping[str, int]] = None):
    """Apply all repairs to every sequence. Returns ``(cleaned, CleanReport)``."""
    seqs = list(sequences)
    contracts = tuple(contracts)
    stats: dict = {}
    cleaned = [clean_sequence(s, contracts, canon, stats) for s in seqs]
    before = consistency_rate(seqs) if seqs else 1.0
    after = consistency_rate(cleaned) if cleaned else 1.0
    report = CleanReport(
        duplicatesRemoved=stats.get("dupes", 0),
        badTimestampsDropped=stats.get("bad_ts", 0),
        intermediariesCollapsed=stats.get("merged", 0),
        danglingIntermediaries=stats.get("dangling", 0),
        consisRateBefore=before,
        consisRateAfter=after,
        tokens=len(seqs),
    )
    return cleaned, report
