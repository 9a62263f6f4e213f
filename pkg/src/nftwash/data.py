"""Record types and CSV ingestion for marketplace events, chain transactions and prices.

All four inputs are comma-separated files with a single header row. The
literal ``NaN`` and an empty cell both mean "absent". Amounts are kept as
:class:`decimal.Decimal` throughout; wei values stay integers.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timezone
from decimal import Decimal, InvalidOperation
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional

log = logging.getLogger(__name__)

ZERO_ADDRESS = "0x" + "0" * 40
# Conventional pseudo-contract for native ETH in price tables.
ETH_PSEUDO_CONTRACT = "0x" + "e" * 40
WETH_CONTRACT = "0xc02aaa39b223fe8d0a0e5c4f27ead9083c756cc2"

EVENT_COLUMNS = (
    "timestamp", "collection", "tokenId", "from", "to", "type",
    "isPrivate", "payToken", "numToken", "usdToken", "txnHash",
)
BLOCK_COLUMNS = ("hash", "timestamp", "from", "to", "valueWei", "input")
ERC20_COLUMNS = ("hash", "timestamp", "tokenContract", "tokenSymbol", "from", "to", "amount")
PRICE_COLUMNS = ("tokenContract", "date", "usdPrice")

_ADDRESS_RE = re.compile(r"^0x[0-9a-f]+$")
_HEX_RE = re.compile(r"^0x[0-9a-f]*$")


class DataError(ValueError):
    """Fatal validation failure: the file as a whole cannot be used."""


class RowError(ValueError):
    """A single malformed row. Carries the 1-based physical line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class EventType(str, Enum):
    MINTED = "minted"
    TRANSFER = "transfer"
    SALE = "sale"


@dataclass(frozen=True)
class EventRecord:
    """One row of an NFT's event sequence.

    ``timestamp`` is Unix seconds (UTC). ``index`` is the record's position in
    its (cleaned) sequence and is what finding references point at.
    """

    timestamp: int
    collection: str
    token_id: str
    from_addr: str
    to_addr: str
    event_type: EventType
    is_private: Optional[bool] = None
    pay_token: Optional[str] = None
    num_token: Optional[Decimal] = None
    usd_token: Optional[Decimal] = None
    txn_hash: Optional[str] = None
    index: int = -1

    def __post_init__(self):
        if self.event_type is EventType.SALE:
            if self.pay_token is None or self.num_token is None:
                raise ValueError("sale record needs payToken and numToken")
        elif any(v is not None for v in (self.pay_token, self.num_token, self.usd_token)):
            raise ValueError(f"{self.event_type.value} record must not carry price fields")
        if self.event_type is EventType.MINTED and not is_zero_address(self.from_addr):
            raise ValueError("minted record must come from the zero address")
        if self.num_token is not None and self.num_token < 0:
            raise ValueError("numToken must be >= 0")
        if self.usd_token is not None and self.usd_token < 0:
            raise ValueError("usdToken must be >= 0")

    @property
    def key(self) -> tuple[str, str]:
        return (self.collection, self.token_id)

    @property
    def ref(self) -> str:
        return f"{self.collection}/{self.token_id}/{self.index}"

    @property
    def is_sale(self) -> bool:
        return self.event_type is EventType.SALE


@dataclass(frozen=True)
class EventSequence:
    collection: str
    token_id: str
    records: tuple[EventRecord, ...]

    @property
    def key(self) -> tuple[str, str]:
        return (self.collection, self.token_id)

    @property
    def starts_with_mint(self) -> bool:
        return bool(self.records) and self.records[0].event_type is EventType.MINTED

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[EventRecord]:
        return iter(self.records)

    def sales(self) -> list[EventRecord]:
        return [r for r in self.records if r.is_sale]


def reindexed(collection: str, token_id: str, records: Iterable[EventRecord]) -> EventSequence:
    """Build a sequence whose records carry their own positions as ``index``."""
    recs = tuple(
        r if r.index == i else replace(r, index=i) for i, r in enumerate(records)
    )
    return EventSequence(collection, token_id, recs)


@dataclass(frozen=True)
class BlockTxn:
    hash: str
    timestamp: int
    from_addr: str
    to_addr: str
    value_wei: int
    input: str = ""

    @property
    def is_plain_transfer(self) -> bool:
        return self.input == ""

    @property
    def value_eth(self) -> Decimal:
        return Decimal(self.value_wei).scaleb(-18)


@dataclass(frozen=True)
class Erc20Transfer:
    hash: str
    timestamp: int
    token_contract: str
    token_symbol: str
    from_addr: str
    to_addr: str
    amount: Decimal


@dataclass
class PriceTable:
    """Daily USD prices keyed by (token contract, UTC date).

    Symbols resolve through ``aliases`` so that ``ETH``/``WETH`` payTokens from
    the event data can be priced with contract-keyed rows.
    """

    points: dict[tuple[str, date], Decimal] = field(default_factory=dict)
    aliases: dict[str, str] = field(
        default_factory=lambda: {"eth": ETH_PSEUDO_CONTRACT, "weth": WETH_CONTRACT}
    )

    def add(self, token: str, day: date, usd: Decimal):
        k = (token.lower(), day)
        if k in self.points:
            raise DataError(f"duplicate price for {token} on {day.isoformat()}")
        if usd < 0:
            raise DataError(f"negative price for {token} on {day.isoformat()}")
        self.points[k] = usd

    def lookup(self, token: str, day: date) -> Optional[Decimal]:
        t = token.lower()
        hit = self.points.get((t, day))
        if hit is None and t in self.aliases:
            hit = self.points.get((self.aliases[t], day))
        return hit

    def learn_symbols(self, transfers: Iterable[Erc20Transfer]):
        for t in transfers:
            self.aliases.setdefault(t.token_symbol.lower(), t.token_contract)

    def __len__(self):
        return len(self.points)


# --------------------------------------------------------------------------
# field parsing


def is_absent(cell: Optional[str]) -> bool:
    return cell is None or cell.strip() == "" or cell.strip().lower() == "nan"


def is_zero_address(addr: str) -> bool:
    return addr.startswith("0x") and set(addr[2:]) <= {"0"}


def parse_address(cell: str) -> str:
    a = cell.strip().lower()
    if not _ADDRESS_RE.match(a):
        raise ValueError(f"bad address {cell!r}")
    return a


def parse_timestamp(cell: str) -> int:
    s = cell.strip()
    if s.endswith("Z"):
        s = s[:-1]
    dt = datetime.strptime(s, "%Y-%m-%dT%H:%M:%S")
    return int(dt.replace(tzinfo=timezone.utc).timestamp())


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%S")


def utc_day(ts: int) -> date:
    return datetime.fromtimestamp(ts, tz=timezone.utc).date()


def parse_decimal(cell: str) -> Decimal:
    try:
        d = Decimal(cell.strip())
    except InvalidOperation:
        raise ValueError(f"bad decimal {cell!r}") from None
    if not d.is_finite():
        raise ValueError(f"non-finite decimal {cell!r}")
    return d


def parse_bool(cell: str) -> bool:
    s = cell.strip().lower()
    if s in ("true", "1", "yes"):
        return True
    if s in ("false", "0", "no"):
        return False
    raise ValueError(f"bad boolean {cell!r}")


def _opt(cell, fn):
    return None if is_absent(cell) else fn(cell)


def _hex(cell: str) -> str:
    s = cell.strip().lower()
    if not _HEX_RE.match(s):
        raise ValueError(f"bad hex {cell!r}")
    return s


def _rows(path: Path, required: tuple[str, ...]) -> Iterator[tuple[int, dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing header column(s): {', '.join(missing)}")
        for row in reader:
            yield reader.line_num, row


def _collect(path, required, build, errors: Optional[list]):
    out = []
    for line, row in _rows(Path(path), required):
        try:
            out.append(build(row))
        except (ValueError, TypeError, KeyError) as exc:
            err = RowError(line, str(exc))
            log.warning("%s: skipped %s", path, err)
            if errors is not None:
                errors.append(err)
    return out


# --------------------------------------------------------------------------
# readers


def _event_from_row(row: dict) -> EventRecord:
    kind = row["type"].strip().lower()
    if kind == "mint":
        kind = "minted"
    event_type = EventType(kind)
    src = parse_address(row["from"])
    # The marketplace export labels mints as transfers out of the zero address.
    if event_type is EventType.TRANSFER and is_zero_address(src):
        event_type = EventType.MINTED
    is_sale = event_type is EventType.SALE
    return EventRecord(
        timestamp=parse_timestamp(row["timestamp"]),
        collection=row["collection"].strip(),
        token_id=row["tokenId"].strip(),
        from_addr=src,
        to_addr=parse_address(row["to"]),
        event_type=event_type,
        is_private=_opt(row.get("isPrivate"), parse_bool) if is_sale else None,
        pay_token=_opt(row.get("payToken"), str.strip),
        num_token=_opt(row.get("numToken"), parse_decimal),
        usd_token=_opt(row.get("usdToken"), parse_decimal),
        txn_hash=_opt(row.get("txnHash"), _hex),
    )


def group_events(records: Iterable[EventRecord]) -> list[EventSequence]:
    """Group records by token, stable-sort each group by timestamp, assign indices.

    Sequences come out in order of first appearance in the input.
    """
    groups: dict[tuple[str, str], list[EventRecord]] = {}
    for r in records:
        groups.setdefault(r.key, []).append(r)
    return [
        reindexed(c, t, sorted(recs, key=lambda r: r.timestamp))
        for (c, t), recs in groups.items()
    ]


def parse_events(path, errors: Optional[list] = None) -> list[EventSequence]:
    """Read an events CSV into per-token sequences.

    Malformed rows are skipped; each skip is logged and, if ``errors`` is given,
    appended to it as a :class:`RowError`.
    """
    return group_events(_collect(path, EVENT_COLUMNS, _event_from_row, errors))


def _block_from_row(row: dict) -> BlockTxn:
    value = int(row["valueWei"].strip())
    if value < 0:
        raise ValueError("valueWei must be >= 0")
    data = "" if is_absent(row["input"]) else _hex(row["input"])
    return BlockTxn(
        hash=_hex(row["hash"]),
        timestamp=parse_timestamp(row["timestamp"]),
        from_addr=parse_address(row["from"]),
        to_addr=parse_address(row["to"]),
        value_wei=value,
        input="" if data == "0x" else data,
    )


def parse_block_txns(path, errors: Optional[list] = None) -> list[BlockTxn]:
    return _collect(path, BLOCK_COLUMNS, _block_from_row, errors)


def _erc20_from_row(row: dict) -> Erc20Transfer:
    amount = parse_decimal(row["amount"])
    if amount < 0:
        raise ValueError("amount must be >= 0")
    return Erc20Transfer(
        hash=_hex(row["hash"]),
        timestamp=parse_timestamp(row["timestamp"]),
        token_contract=parse_address(row["tokenContract"]),
        token_symbol=row["tokenSymbol"].strip(),
        from_addr=parse_address(row["from"]),
        to_addr=parse_address(row["to"]),
        amount=amount,
    )


def parse_erc20_txns(path, errors: Optional[list] = None) -> list[Erc20Transfer]:
    return _collect(path, ERC20_COLUMNS, _erc20_from_row, errors)


def parse_prices(path, errors: Optional[list] = None) -> PriceTable:
    """Read a prices CSV. Duplicate (token, date) keys are fatal."""
    table = PriceTable()
    rows = _collect(
        path,
        PRICE_COLUMNS,
        lambda row: (
            parse_address(row["tokenContract"]),
            date.fromisoformat(row["date"].strip()),
            parse_decimal(row["usdPrice"]),
        ),
        errors,
    )
    for token, day, usd in rows:
        table.add(token, day, usd)
    return table


def parse_canon_timestamps(path) -> dict[str, int]:
    """Read a ``txnHash,timestamp`` table of on-chain timestamps."""
    out = {}
    for _, row in _rows(Path(path), ("txnHash", "timestamp")):
        ts = row["timestamp"].strip()
        out[_hex(row["txnHash"])] = int(ts) if ts.isdigit() else parse_timestamp(ts)
    return out


# --------------------------------------------------------------------------
# writers


def _cell(v) -> str:
    if v is None:
        return "NaN"
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    return str(v)


def event_row(r: EventRecord) -> list[str]:
    return [
        format_timestamp(r.timestamp), r.collection, r.token_id, r.from_addr, r.to_addr,
        r.event_type.value, _cell(r.is_private), _cell(r.pay_token), _cell(r.num_token),
        _cell(r.usd_token), _cell(r.txn_hash),
    ]


def write_events(path, sequences: Iterable[EventSequence]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for seq in sequences:
            for r in seq.records:
                w.writerow(event_row(r))


def write_block_txns(path, txns: Iterable[BlockTxn]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BLOCK_COLUMNS)
        for t in txns:
            w.writerow([t.hash, format_timestamp(t.timestamp), t.from_addr, t.to_addr,
                        t.value_wei, t.input or "0x"])


def write_erc20_txns(path, transfers: Iterable[Erc20Transfer]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ERC20_COLUMNS)
        for t in transfers:
            w.writerow([t.hash, format_timestamp(t.timestamp), t.token_contract,
                        t.token_symbol, t.from_addr, t.to_addr, t.amount])


def write_prices(path, table: PriceTable):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRICE_COLUMNS)
        for (token, day), usd in sorted(table.points.items()):
            w.writerow([token, day.isoformat(), usd])


# --------------------------------------------------------------------------
# valuation


def usd_value(token: Optional[str], amount: Decimal, at: int, prices: Optional[PriceTable],
              event_usd: Optional[Decimal] = None) -> Optional[Decimal]:
    """USD worth of ``amount`` units of ``token`` at Unix time ``at``.

    The event's own per-unit price wins; otherwise the same-UTC-day price
    point is used. Returns None when neither is available.
    """
    if amount < 0:
        raise ValueError("amount must be >= 0")
    if amount == 0:
        return Decimal(0)
    if event_usd is not None:
        return event_usd * amount
    if prices is None or token is None:
        return None
    unit = prices.lookup(token, utc_day(at))
    return None if unit is None else unit * amount


def record_usd(r: EventRecord, prices: Optional[PriceTable] = None) -> Optional[Decimal]:
    """USD value of a sale record; None for transfers/mints or unpriceable sales."""
    if not r.is_sale:
        return None
    return usd_value(r.pay_token, r.num_token, r.timestamp, prices, r.usd_token)


# --------------------------------------------------------------------------
# JSON forms (decimals as strings so values survive exactly)


def record_to_dict(r: EventRecord) -> dict:
    return {
        "ref": r.ref,
        "timestamp": format_timestamp(r.timestamp),
        "collection": r.collection,
        "tokenId": r.token_id,
        "from": r.from_addr,
        "to": r.to_addr,
        "type": r.event_type.value,
        "isPrivate": r.is_private,
        "payToken": r.pay_token,
        "numToken": None if r.num_token is None else str(r.num_token),
        "usdToken": None if r.usd_token is None else str(r.usd_token),
        "txnHash": r.txn_hash,
    }


def record_from_dict(d: dict) -> EventRecord:
    return EventRecord(
        timestamp=parse_timestamp(d["timestamp"]),
        collection=d["collection"],
        token_id=d["tokenId"],
        from_addr=d["from"],
        to_addr=d["to"],
        event_type=EventType(d["type"]),
        is_private=d.get("isPrivate"),
        pay_token=d.get("payToken"),
        num_token=None if d.get("numToken") is None else Decimal(d["numToken"]),
        usd_token=None if d.get("usdToken") is None else Decimal(d["usdToken"]),
        txn_hash=d.get("txnHash"),
        index=int(d["ref"].rsplit("/", 1)[1]) if "ref" in d else -1,
    )


def sum_usd(records: Iterable[EventRecord], prices: Optional[PriceTable] = None) -> Decimal:
    """Total USD of the priceable sales among ``records``."""
    total = Decimal(0)
    for r in records:
        v = record_usd(r, prices)
        if v is not None:
            total += v
    return total
