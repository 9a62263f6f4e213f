"""Labeled synthetic corpora.

Benign tokens are minted and then sold to a fresh buyer every few days, so no
detector rule can fire on them. Injections plant the example shapes of each
wash-trading kind on chosen tokens; what was planted is written to a separate
``labels.json`` and never into the data files.

labels.json::

    {"schema": "nftwash.labels/1",
     "seed": 7,
     "injections": [
        {"id": "roundtrip-0", "type": "roundtrip", "collection": "...", "tokenId": "...",
         "events": [txnHash, ...],         # the flagged records
         "evidence": [txnHash, ...],       # value transfers (unprofitable only)
         "offsets": [seconds, ...],        # evidence time minus its sale time
         "usd": "123.45",                  # USD volume of the labeled sales
         "profit": {...}                   # round-trip only: planted exit economics
        }, ...]}
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal
from pathlib import Path
from typing import Optional

from .data import (
    ETH_PSEUDO_CONTRACT, WETH_CONTRACT, ZERO_ADDRESS, BlockTxn, Erc20Transfer, EventRecord,
    EventType, PriceTable, group_events, utc_day, write_block_txns, write_erc20_txns,
    write_events, write_prices,
)

LABELS_SCHEMA = "nftwash.labels/1"
KINDS = ("roundtrip", "unprofitable-eth", "unprofitable-weth", "hidden")
WEI = 10 ** 18
START = int(datetime(2022, 1, 1, tzinfo=timezone.utc).timestamp())


class SpecError(ValueError):
    pass


@dataclass
class Injection:
    type: str
    count: int = 1
    params: dict = field(default_factory=dict)


@dataclass
class ScenarioSpec:
    seed: int = 0
    n_tokens: int = 10
    collections: list[str] = field(default_factory=lambda: ["Synth"])
    benign_sales: tuple[int, int] = (2, 5)  # per token, before and after any injection
    ati: int = 84400  # benign gaps are uniform in [2*ati, 10*ati]
    price_band: tuple[str, str] = ("0.05", "2")  # ETH
    decoys: bool = False
    noise_txns: int = 0
    injections: list[Injection] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        inj = [Injection(**i) for i in d.pop("injections", [])]
        for k in ("benign_sales", "price_band"):
            if k in d:
                d[k] = tuple(d[k])
        try:
            return cls(injections=inj, **d)
        except TypeError as exc:
            raise SpecError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def validate(self):
        total = sum(i.count for i in self.injections)
        if total > self.n_tokens:
            raise SpecError(f"{total} injections but only {self.n_tokens} tokens")
        for i in self.injections:
            if i.type not in KINDS:
                raise SpecError(f"unknown injection type {i.type!r}")
            if i.count < 0:
                raise SpecError("injection count must be >= 0")
        lo, hi = self.benign_sales
        if not 0 <= lo <= hi:
            raise SpecError("benign_sales must be a range 0 <= lo <= hi")
        if not self.collections:
            raise SpecError("need at least one collection")
        return self


@dataclass
class Corpus:
    events: list[EventRecord] = field(default_factory=list)
    block_txns: list[BlockTxn] = field(default_factory=list)
    erc20_txns: list[Erc20Transfer] = field(default_factory=list)
    prices: PriceTable = field(default_factory=PriceTable)
    labels: list[dict] = field(default_factory=list)
    seed: int = 0

    def sequences(self):
        return group_events(self.events)

    def labels_doc(self) -> dict:
        return {"schema": LABELS_SCHEMA, "seed": self.seed, "injections": self.labels}


class _Builder:
    """Counter-based addresses and hashes plus the output lists."""

    def __init__(self, rng: random.Random, corpus: Corpus):
        self.rng = rng
        self.c = corpus
        self._addr = {}
        self._hash = 0

    def address(self, role: str = "a") -> str:
        prefix = {"a": "aaaa", "b": "bbbb", "d": "dddd"}[role]
        n = self._addr.get(role, 0) + 1
        self._addr[role] = n
        return "0x" + prefix + f"{n:0{40 - len(prefix)}x}"

    def txhash(self) -> str:
        self._hash += 1
        return "0x" + f"{self._hash:064x}"

    def eth_usd(self, ts: int, token: str = "ETH") -> Decimal:
        """Daily USD price of ETH; WETH trades at par."""
        day = utc_day(ts)
        price = self.c.prices.lookup(ETH_PSEUDO_CONTRACT, day)
        if price is None:
            price = Decimal(self.rng.randrange(150_000, 250_000)) / 100
            self.c.prices.add(ETH_PSEUDO_CONTRACT, day, price)
            self.c.prices.add(WETH_CONTRACT, day, price)
        return price

    def price(self, band: tuple[str, str]) -> Decimal:
        lo, hi = Decimal(band[0]), Decimal(band[1])
        steps = int((hi - lo) / Decimal("0.0001"))
        return lo + Decimal(self.rng.randint(0, steps)) * Decimal("0.0001")

    def event(self, ts, coll, tok, frm, to, kind, private=False, token=None, amount=None) -> EventRecord:
        if kind is EventType.SALE:
            r = EventRecord(ts, coll, tok, frm, to, kind, private, token, amount,
                            self.eth_usd(ts, token), self.txhash())
        else:
            r = EventRecord(ts, coll, tok, frm, to, kind, None, None, None, None, self.txhash())
        self.c.events.append(r)
        return r

    def eth(self, ts, frm, to, amount: Decimal, data: str = "") -> BlockTxn:
        t = BlockTxn(self.txhash(), ts, frm, to, int(amount * WEI), data)
        self.c.block_txns.append(t)
        return t

    def weth(self, ts, frm, to, amount: Decimal) -> Erc20Transfer:
        self.eth_usd(ts)
        t = Erc20Transfer(self.txhash(), ts, WETH_CONTRACT, "WETH", frm, to, amount)
        self.c.erc20_txns.append(t)
        return t


class _Token:
    """Cursor over one token's timeline."""

    def __init__(self, b: _Builder, spec: ScenarioSpec, coll: str, tok: str, t0: int):
        self.b, self.spec, self.coll, self.tok = b, spec, coll, tok
        self.ts = t0
        self.holder = b.address()
        b.event(t0, coll, tok, ZERO_ADDRESS, self.holder, EventType.MINTED)

    def gap(self) -> int:
        return self.b.rng.randint(2 * self.spec.ati, 10 * self.spec.ati)

    def sale(self, to, price, token="ETH", private=False, dt=None) -> EventRecord:
        self.ts += self.gap() if dt is None else dt
        r = self.b.event(self.ts, self.coll, self.tok, self.holder, to, EventType.SALE,
                         private, token, price)
        self.holder = to
        return r

    def benign(self, n: int, dt_first: Optional[int] = None) -> list[EventRecord]:
        out = []
        for k in range(n):
            dt = dt_first if (k == 0 and dt_first is not None) else None
            out.append(self.sale(self.b.address(), self.b.price(self.spec.price_band), dt=dt))
        return out


def _usd(records) -> Decimal:
    return sum((r.num_token * r.usd_token for r in records), Decimal(0))


def _label(kind, tok: _Token, events, evidence=(), offsets=(), **extra) -> dict:
    return {
        "type": kind,
        "collection": tok.coll,
        "tokenId": tok.tok,
        "events": [r.txn_hash for r in events],
        "evidence": [t.hash for t in evidence],
        "offsets": list(offsets),
        "usd": str(_usd(events)),
        **extra,
    }


def inject_roundtrip(tok: _Token, params: dict) -> dict:
    """Ping-pong among ``length`` colluders, ``repetitions`` laps, short gaps."""
    b, rng = tok.b, tok.b.rng
    length = int(params.get("length", 2))
    reps = int(params.get("repetitions", 10))
    lo, hi = params.get("gap_seconds", (600, 3600))
    price = Decimal(str(params["price"])) if "price" in params else b.price(("0.05", "0.1"))
    ring = [tok.holder] + [b.address("b") for _ in range(length - 1)]
    sales = []
    dt = tok.gap()
    for lap in range(reps):
        for k in range(length):
            sales.append(tok.sale(ring[(k + 1) % length], price, dt=dt))
            dt = rng.randint(lo, hi)
    # exit: the next window's first sale
    exit_gap = params.get("exit_gap_seconds")
    exit_price = Decimal(str(params["exit_price"])) if "exit_price" in params else b.price(tok.spec.price_band)
    after = [tok.sale(b.address(), exit_price, dt=exit_gap)]
    fees = Decimal("0.025") * sum((r.num_token for r in sales), Decimal(0))
    profit = {"feesNative": str(fees), "exitNative": str(exit_price),
              "gainNative": str(exit_price - fees), "qualifies": exit_price >= fees,
              "exitGapSeconds": after[0].timestamp - sales[-1].timestamp}
    return _label("roundtrip", tok, sales, profit=profit)


def inject_unprofitable_eth(tok: _Token, params: dict) -> dict:
    """Seller funds the buyer 3 min before a sale; 20 min later the buyer
    resells and refunds its own buyer 4 min after."""
    b = tok.b
    before = int(params.get("before_seconds", 180))
    after = int(params.get("after_seconds", 240))
    gap = int(params.get("resale_seconds", 1200))
    p1 = b.price(tok.spec.price_band)
    p2 = b.price(tok.spec.price_band)
    seller, buyer = tok.holder, b.address("b")
    t_sale = tok.ts + tok.gap()
    fund = b.eth(t_sale - before, seller, buyer, (p1 * Decimal("0.01045")).quantize(Decimal("0.0001")))
    s1 = tok.sale(buyer, p1, dt=t_sale - tok.ts)
    buyer2 = b.address("b")
    s2 = tok.sale(buyer2, p2, dt=gap)
    back = b.eth(s2.timestamp + after, buyer, buyer2, (p2 * Decimal("0.0095")).quantize(Decimal("0.0001")))
    return _label("unprofitable", tok, [s1, s2], [fund, back], [-before, after], funding="eth")


WETH_BID_OFFSETS_MIN = (-12, -9, -8, -6)
WETH_BID_AMOUNTS = ("0.1", "0.07", "0.3", "0.47")


def inject_unprofitable_weth(tok: _Token, params: dict) -> dict:
    """Four WETH transfers seller -> bidder 12 to 6 minutes before a 0.1 WETH sale."""
    b = tok.b
    seller, buyer = tok.holder, b.address("b")
    t_sale = tok.ts + tok.gap()
    ev = [b.weth(t_sale + 60 * m, seller, buyer, Decimal(a))
          for m, a in zip(WETH_BID_OFFSETS_MIN, WETH_BID_AMOUNTS)]
    s = tok.sale(buyer, Decimal(str(params.get("price", "0.1"))), token="WETH", dt=t_sale - tok.ts)
    return _label("unprofitable", tok, [s], ev, [60 * m for m in WETH_BID_OFFSETS_MIN], funding="weth")


def inject_hidden(tok: _Token, params: dict) -> dict:
    """A run of private sales at rising prices through fresh addresses."""
    b, rng = tok.b, tok.b.rng
    n = int(params.get("length", 4))
    if "prices" in params:
        prices = [Decimal(str(p)) for p in params["prices"]]
        n = len(prices)
    else:
        p = b.price(tok.spec.price_band)
        prices = []
        for _ in range(n):
            prices.append(p)
            p = (p * Decimal(rng.randint(101, 150)) / 100).quantize(Decimal("0.0001"))
    sales = [tok.sale(b.address("b"), prices[0], private=True)]
    for p in prices[1:]:
        sales.append(tok.sale(b.address("b"), p, private=True, dt=rng.randint(3600, 6 * 3600)))
    return _label("hidden", tok, sales, trend="all-rising" if all(
        x < y for x, y in zip(prices, prices[1:])) else "other")


_INJECTORS = {
    "roundtrip": inject_roundtrip,
    "unprofitable-eth": inject_unprofitable_eth,
    "unprofitable-weth": inject_unprofitable_weth,
    "hidden": inject_hidden,
}


def _decoys(tok: _Token):
    """Near misses that no rule may flag: wrong direction, a contract call,
    transfers just outside the windows, a lone private sale."""
    b = tok.b
    buyer = b.address()
    seller = tok.holder
    p = b.price(tok.spec.price_band)
    t = tok.ts + tok.gap()
    b.eth(t - 120, buyer, seller, p)  # buyer -> seller
    b.eth(t - 60, seller, buyer, p, data="0xa9059cbb")  # not a plain transfer
    b.eth(t - 21 * 60, seller, buyer, p)
    b.weth(t + 81 * 60, seller, buyer, p)
    tok.sale(buyer, p, dt=t - tok.ts)
    tok.benign(1)
    tok.sale(b.address(), b.price(tok.spec.price_band), private=True)
    tok.benign(1)


def generate_corpus(spec: ScenarioSpec) -> Corpus:
    spec.validate()
    rng = random.Random(spec.seed)
    corpus = Corpus(seed=spec.seed)
    b = _Builder(rng, corpus)
    plan = [(inj.type, inj.params) for inj in spec.injections for _ in range(inj.count)]
    slots = rng.sample(range(spec.n_tokens), len(plan))
    by_token = dict(zip(slots, plan))
    counters = {k: 0 for k in KINDS}
    for i in range(spec.n_tokens):
        coll = spec.collections[i % len(spec.collections)]
        tok = _Token(b, spec, coll, str(i), START + rng.randint(0, 30 * 86400))
        lo, hi = spec.benign_sales
        tok.benign(rng.randint(lo, hi))
        if i in by_token:
            kind, params = by_token[i]
            label = _INJECTORS[kind](tok, params)
            label["id"] = f"{kind}-{counters[kind]}"
            counters[kind] += 1
            corpus.labels.append(label)
            tok.benign(rng.randint(max(lo, 1), max(hi, 1)))
        elif spec.decoys and i % 3 == 0:
            _decoys(tok)
        else:
            tok.benign(rng.randint(lo, hi))
    for _ in range(spec.noise_txns):
        t = START + rng.randint(0, 120 * 86400)
        b.eth(t, b.address("d"), b.address("d"), b.price(spec.price_band))
    corpus.block_txns.sort(key=lambda t: (t.timestamp, t.hash))
    corpus.erc20_txns.sort(key=lambda t: (t.timestamp, t.hash))
    return corpus


def write_corpus(corpus: Corpus, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "events": out / "events.csv",
        "block_txns": out / "block_txns.csv",
        "erc20_txns": out / "erc20_txns.csv",
        "prices": out / "prices.csv",
        "labels": out / "labels.json",
    }
    write_events(paths["events"], corpus.sequences())
    write_block_txns(paths["block_txns"], corpus.block_txns)
    write_erc20_txns(paths["erc20_txns"], corpus.erc20_txns)
    write_prices(paths["prices"], corpus.prices)
    paths["labels"].write_text(json.dumps(corpus.labels_doc(), indent=2, sort_keys=True) + "\n")
    return paths


def generate(spec: ScenarioSpec, out_dir) -> dict[str, Path]:
    return write_corpus(generate_corpus(spec), out_dir)


# --------------------------------------------------------------------------
# replicas of individual worked examples


def replica(name: str, seed: int = 0) -> Corpus:
    """One-token corpora shaped like the well-known cases.

    ``omnimorph``: ETH funding 3 min before a sale, refund 4 min after the
    next. ``veefriends``: four private sales at 3.75, 3.78, 4, 7.4 ETH.
    ``chibi-dino``: the four-transfer WETH bid. ``og-crystal``: six trades
    between two colluders summing to 0.40 ETH, then a 1 ETH exit.
    ``bean``: 14 trades between two addresses in one window.
    """
    rng = random.Random(seed)
    corpus = Corpus(seed=seed)
    b = _Builder(rng, corpus)
    spec = ScenarioSpec(seed=seed)
    tok = _Token(b, spec, name, "1", START)
    tok.benign(1)
    if name == "omnimorph":
        label = inject_unprofitable_eth(tok, {})
    elif name == "veefriends":
        label = inject_hidden(tok, {"prices": ["3.750", "3.780", "4", "7.4"]})
    elif name == "chibi-dino":
        label = inject_unprofitable_weth(tok, {})
    elif name == "og-crystal":
        prices = ["0.06", "0.07", "0.06", "0.06", "0.06", "0.09"]  # sums to 0.40
        ring = [tok.holder, b.address("b")]
        dt = tok.gap()
        sales = []
        for k, p in enumerate(prices):
            sales.append(tok.sale(ring[(k + 1) % 2], Decimal(p), dt=dt))
            dt = rng.randint(600, 3600)
        tok.sale(b.address(), Decimal("1"))
        label = _label("roundtrip", tok, sales, profit={"gainNative": "0.99"})
    elif name == "bean":
        label = inject_roundtrip(tok, {"repetitions": 7, "price": "0.5"})
    else:
        raise ValueError(f"unknown replica {name!r}")
    label["id"] = f"{name}-0"
    corpus.labels.append(label)
    corpus.block_txns.sort(key=lambda t: (t.timestamp, t.hash))
    corpus.erc20_txns.sort(key=lambda t: (t.timestamp, t.hash))
    return corpus
