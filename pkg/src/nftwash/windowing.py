"""Adaptive time-window segmentation of an event sequence.

A window grows greedily. The next record joins when its gap to the window's
last record is at most the window's average time interval (ATI), or when its
``to`` address already appears in the window. ATI is the window span divided
by the number of adjacent intervals; a one-record window uses the initial ATI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .data import EventRecord, EventSequence

# Printed default; one day would be 86,400 s. Kept as-is and configurable.
DEFAULT_INITIAL_ATI = 84400

Seconds = Union[int, float, Fraction]


@dataclass(frozen=True)
class TimeWindow:
    token_key: tuple[str, str]
    index: int
    start: int  # offset of the first record in the parent sequence
    records: tuple[EventRecord, ...]
    ati: Union[Fraction, float]  # float only for an unbounded single-record window
    addresses_seen: frozenset[str]

    @property
    def stop(self) -> int:
        return self.start + len(self.records)

    @property
    def first_ts(self) -> int:
        return self.records[0].timestamp

    @property
    def last_ts(self) -> int:
        return self.records[-1].timestamp

    def sales(self) -> list[EventRecord]:
        return [r for r in self.records if r.is_sale]


def window_ati(records, initial_ati: Seconds = DEFAULT_INITIAL_ATI):
    """Running ATI: window span over adjacent-interval count, or the initial value."""
    if len(records) < 2:
        return initial_ati if initial_ati == math.inf else Fraction(initial_ati)
    return Fraction(records[-1].timestamp - records[0].timestamp, len(records) - 1)


def segment_windows(seq: EventSequence, initial_ati: Seconds = DEFAULT_INITIAL_ATI) -> list[TimeWindow]:
    """Split ``seq`` into consecutive non-overlapping windows.

    ATI is kept exact as a :class:`~fractions.Fraction`, so ``gap <= ATI`` has
    no rounding. ``initial_ati`` may be ``math.inf``.
    """
    records = seq.records
    if not records:
        return []
    windows: list[TimeWindow] = []
    start = 0
    members = [records[0]]
    seen = {records[0].from_addr, records[0].to_addr}
    for pos in range(1, len(records)):
        r = records[pos]
        gap = r.timestamp - members[-1].timestamp
        if gap <= window_ati(members, initial_ati) or r.to_addr in seen:
            members.append(r)
            seen.update((r.from_addr, r.to_addr))
            continue
        windows.append(TimeWindow(seq.key, len(windows), start, tuple(members),
                                  window_ati(members, initial_ati), frozenset(seen)))
        start = pos
        members = [r]
        seen = {r.from_addr, r.to_addr}
    windows.append(TimeWindow(seq.key, len(windows), start, tuple(members),
                              window_ati(members, initial_ati), frozenset(seen)))
    return windows


def windows_to_json(windows: list[TimeWindow]) -> list[dict]:
    return [
        {"index": w.index, "start": w.start, "stop": w.stop, "ati": str(w.ati)}
        for w in windows
    ]


def windows_from_json(seq: EventSequence, entries: list[dict]) -> list[TimeWindow]:
    out = []
    for e in entries:
        recs = seq.records[e["start"]:e["stop"]]
        seen = {a for r in recs for a in (r.from_addr, r.to_addr)}
        ati = math.inf if e["ati"] == "inf" else Fraction(e["ati"])
        out.append(TimeWindow(seq.key, e["index"], e["start"], recs, ati, frozenset(seen)))
    return out
