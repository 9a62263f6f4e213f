"""Record builders shared by the tests."""

from decimal import Decimal

from nftwash.data import ZERO_ADDRESS, EventRecord, EventType, reindexed

T0 = 1_650_000_000  # 2022-04-15T05:20:00Z


def addr(n: int) -> str:
    return "0x" + f"{n:040x}"


def ev(ts, frm, to, kind="sale", price=None, token="ETH", usd="1000", private=False,
       txn=None, coll="C", tok="1"):
    """Compact record constructor; ``frm``/``to`` may be ints (see ``addr``)."""
    frm = addr(frm) if isinstance(frm, int) else frm
    to = addr(to) if isinstance(to, int) else to
    kind = EventType(kind)
    if kind is EventType.SALE:
        return EventRecord(ts, coll, tok, frm, to, kind, private, token,
                           Decimal(str(price if price is not None else "1")),
                           None if usd is None else Decimal(usd), txn)
    return EventRecord(ts, coll, tok, frm, to, kind, None, None, None, None, txn)


def mint(ts, to, **kw):
    return ev(ts, ZERO_ADDRESS, to, kind="minted", **kw)


def seq(*records, coll="C", tok="1"):
    return reindexed(coll, tok, records)
