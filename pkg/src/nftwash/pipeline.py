"""Detection over a cleaned corpus, and the findings artifact."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .config import PipelineConfig
from .data import BlockTxn, Erc20Transfer, EventSequence, PriceTable
from .hidden import HiddenFinding, find_private_runs, rising_fraction
from .roundtrip import RoundTripFinding, detect_roundtrip
from .unprofitable import UnprofitableFinding, detect_unprofitable, summarize
from .windowing import TimeWindow, segment_windows, windows_from_json, windows_to_json

log = logging.getLogger(__name__)

FINDINGS_SCHEMA = "nftwash.findings/1"
WINDOWS_SCHEMA = "nftwash.windows/1"


@dataclass
class Findings:
    roundtrip: list[RoundTripFinding] = field(default_factory=list)
    unprofitable: list[UnprofitableFinding] = field(default_factory=list)
    hidden: list[HiddenFinding] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    private_flag_absent: int = 0

    def all(self) -> list:
        return [*self.roundtrip, *self.unprofitable, *self.hidden]

    def flagged_refs(self) -> dict[str, set[str]]:
        return {
            "roundtrip": {r.ref for f in self.roundtrip for r in f.records},
            "unprofitable": {f.sale.ref for f in self.unprofitable},
            "hidden": {r.ref for f in self.hidden for r in f.records},
        }

    def flagged_hashes(self) -> dict[str, set[str]]:
        return {
            "roundtrip": {r.txn_hash for f in self.roundtrip for r in f.records},
            "unprofitable": {f.sale.txn_hash for f in self.unprofitable},
            "hidden": {r.txn_hash for f in self.hidden for r in f.records},
        }

    def summary(self) -> dict:
        rt_windows = {(f.token_key, f.window_index) for f in self.roundtrip}
        return {
            "roundtrip": {
                "findings": len(self.roundtrip),
                "windows": len(rt_windows),
                "events": len({r.ref for f in self.roundtrip for r in f.records}),
            },
            "unprofitable": {"findings": len(self.unprofitable), **summarize(self.unprofitable)},
            "hidden": {
                **rising_fraction(self.hidden),
                "events": sum(len(f.records) for f in self.hidden),
                "salesWithAbsentIsPrivate": self.private_flag_absent,
            },
            "warnings": len(self.warnings),
        }

    def to_dict(self) -> dict:
        return {
            "schema": FINDINGS_SCHEMA,
            "summary": self.summary(),
            "roundtrip": [f.to_dict() for f in self.roundtrip],
            "unprofitable": [f.to_dict() for f in self.unprofitable],
            "hidden": [f.to_dict() for f in self.hidden],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Findings":
        if d.get("schema") != FINDINGS_SCHEMA:
            raise ValueError(f"not a findings artifact (schema {d.get('schema')!r})")
        return cls(
            roundtrip=[RoundTripFinding.from_dict(x) for x in d["roundtrip"]],
            unprofitable=[UnprofitableFinding.from_dict(x) for x in d["unprofitable"]],
            hidden=[HiddenFinding.from_dict(x) for x in d["hidden"]],
            warnings=list(d.get("warnings", [])),
            private_flag_absent=d["summary"]["hidden"].get("salesWithAbsentIsPrivate", 0),
        )


def _per_sequence(args):
    seq, cfg, prices = args
    warnings: list[str] = []
    windows = segment_windows(seq, cfg.initial_ati_seconds)
    rt = detect_roundtrip(windows, cfg.walk_threshold, cfg.max_cycles, prices, warnings)
    hid = find_private_runs(seq, cfg.hidden_min_len, prices)
    return windows, rt, hid, warnings


def detect_all(sequences: Sequence[EventSequence], block_txns: Sequence[BlockTxn] = (),
               erc20_txns: Sequence[Erc20Transfer] = (), prices: Optional[PriceTable] = None,
               cfg: Optional[PipelineConfig] = None):
    """Window every sequence and run all three detectors.

    Returns ``(Findings, windows)`` where ``windows`` maps token key to its
    list of :class:`TimeWindow`. Output order follows input order regardless
    of ``cfg.jobs``.
    """
    cfg = cfg or PipelineConfig()
    work = [(s, cfg, prices) for s in sequences]
    if cfg.jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_per_sequence, work, chunksize=max(1, len(work) // (4 * cfg.jobs))))
    else:
        results = [_per_sequence(w) for w in work]
    found = Findings()
    windows: dict[tuple[str, str], list[TimeWindow]] = {}
    for seq, (wins, rt, hid, warns) in zip(sequences, results):
        windows[seq.key] = wins
        found.roundtrip.extend(rt)
        found.hidden.extend(hid)
        found.warnings.extend(warns)
    sales = [r for s in sequences for r in s.records if r.is_sale]
    found.private_flag_absent = sum(1 for r in sales if r.is_private is None)
    if found.private_flag_absent:
        log.info("%d sale(s) without isPrivate treated as public", found.private_flag_absent)
    found.unprofitable = detect_unprofitable(
        sales, block_txns, erc20_txns, cfg.eth_window_min, cfg.erc20_window_min,
        prices, cfg.bidirectional,
    )
    return found, windows


def windows_artifact(windows: dict[tuple[str, str], list[TimeWindow]]) -> dict:
    return {
        "schema": WINDOWS_SCHEMA,
        "tokens": [
            {"collection": c, "tokenId": t, "windows": windows_to_json(ws)}
            for (c, t), ws in windows.items()
        ],
    }


def windows_from_artifact(d: dict, sequences: Sequence[EventSequence]):
    if d.get("schema") != WINDOWS_SCHEMA:
        raise ValueError(f"not a windows artifact (schema {d.get('schema')!r})")
    by_key = {s.key: s for s in sequences}
    out = {}
    for entry in d["tokens"]:
        key = (entry["collection"], entry["tokenId"])
        if key not in by_key:
            raise ValueError(f"windows artifact mentions unknown token {key}")
        out[key] = windows_from_json(by_key[key], entry["windows"])
    return out
