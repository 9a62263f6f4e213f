"""Round-trip trading: cycles in the per-window transfer multigraph.

Each record in a time window becomes a directed edge ``from -> to``. Parallel
edges are grouped by direction in ``edge_index`` (a dict keyed by the node
pair). Elementary cycles of the simple digraph formed by those keys are
enumerated; a cycle's walk count is the product of parallel-edge
multiplicities along its hops.

A cycle is confirmed when its walk count reaches the threshold (default
10 x 10 = 100, i.e. ten back-and-forth trades between two addresses) or when
some walk consists of sale events only.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Iterator, Optional, Sequence

from .data import EventRecord, PriceTable, record_from_dict, record_to_dict, sum_usd
from .windowing import TimeWindow

log = logging.getLogger(__name__)

DEFAULT_WALK_THRESHOLD = 100
DEFAULT_MAX_CYCLES = 10_000

Cycle = tuple[str, ...]


@dataclass
class TradeGraph:
    token_key: tuple[str, str]
    window_index: int
    nodes: list[str] = field(default_factory=list)
    edges: list[EventRecord] = field(default_factory=list)
    edge_index: dict[tuple[str, str], list[EventRecord]] = field(default_factory=dict)

    _node_set: set[str] = field(default_factory=set, init=False, repr=False, compare=False)

    def __post_init__(self):
        self._node_set.update(self.nodes)

    def add_node(self, a: str):
        if a not in self._node_set:
            self._node_set.add(a)
            self.nodes.append(a)

    def add(self, r: EventRecord):
        self.add_node(r.from_addr)
        self.add_node(r.to_addr)
        self.edges.append(r)
        self.edge_index.setdefault((r.from_addr, r.to_addr), []).append(r)

    def successors(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {n: [] for n in self.nodes}
        for u, v in self.edge_index:
            adj[u].append(v)
        return adj

    def to_dict(self) -> dict:
        return {
            "tokenKey": list(self.token_key),
            "windowIndex": self.window_index,
            "nodes": list(self.nodes),
            "edges": [record_to_dict(r) for r in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TradeGraph":
        g = cls(tuple(d["tokenKey"]), d["windowIndex"])
        for n in d["nodes"]:
            g.add_node(n)
        for e in d["edges"]:
            g.add(record_from_dict(e))
        return g


def build_graph(window: TimeWindow) -> TradeGraph:
    """One edge per record, transfers and mints included."""
    g = TradeGraph(window.token_key, window.index)
    for r in window.records:
        g.add(r)
    return g


# --------------------------------------------------------------------------
# elementary cycles (Johnson 1975, iterative)


def _reach(adj: dict[str, list[str]], start: str, allowed: set[str]) -> set[str]:
    seen = {start}
    todo = [start]
    while todo:
        u = todo.pop()
        for v in adj.get(u, ()):
            if v in allowed and v not in seen:
                seen.add(v)
                todo.append(v)
    return seen


def _circuits(start: str, adj: dict[str, list[str]]) -> Iterator[Cycle]:
    path = [start]
    blocked = {start}
    closed: set[str] = set()
    waiting: dict[str, set[str]] = defaultdict(set)
    stack = [(start, list(reversed(adj[start])))]
    while stack:
        node, nbrs = stack[-1]
        if nbrs:
            nxt = nbrs.pop()
            if nxt == start:
                yield tuple(path)
                closed.update(path)
            elif nxt not in blocked:
                path.append(nxt)
                stack.append((nxt, list(reversed(adj[nxt]))))
                closed.discard(nxt)
                blocked.add(nxt)
                continue
        if not nbrs:
            if node in closed:
                todo = {node}
                while todo:
                    u = todo.pop()
                    if u in blocked:
                        blocked.remove(u)
                        todo.update(waiting[u])
                        waiting[u].clear()
            else:
                for v in adj[node]:
                    waiting[v].add(node)
            stack.pop()
            path.pop()


def simple_cycles(adj: dict[str, Iterable[str]]) -> Iterator[Cycle]:
    """Yield every elementary cycle once, rotated to start at its smallest node.

    Self-loops come out as 1-tuples. Output order is deterministic: by start
    node, then depth-first in sorted neighbour order.
    """
    succ = {u: sorted(set(vs)) for u, vs in adj.items()}
    for vs in list(succ.values()):
        for v in vs:
            succ.setdefault(v, [])
    order = sorted(succ)
    for u in order:
        if u in succ[u]:
            yield (u,)
    for i, s in enumerate(order):
        allowed = set(order[i:])
        sub = {u: [v for v in succ[u] if v in allowed and v != u] for u in allowed}
        fwd = _reach(sub, s, allowed)
        rev = {u: [] for u in allowed}
        for u, vs in sub.items():
            for v in vs:
                rev[v].append(u)
        scc = fwd & _reach(rev, s, allowed)
        if len(scc) < 2:
            continue
        comp = {u: [v for v in sub[u] if v in scc] for u in scc}
        yield from _circuits(s, comp)


def find_cycles(g: TradeGraph, max_cycles: int = DEFAULT_MAX_CYCLES,
                warnings: Optional[list] = None) -> list[Cycle]:
    """Elementary cycles over the keys of ``g.edge_index``, capped at ``max_cycles``."""
    out = []
    for c in simple_cycles(g.successors()):
        if len(out) >= max_cycles:
            msg = (f"{g.token_key[0]} #{g.token_key[1]} window {g.window_index}: "
                   f"cycle enumeration stopped at {max_cycles}")
            log.warning(msg)
            if warnings is not None:
                warnings.append(msg)
            break
        out.append(c)
    return out


def hops(cycle: Sequence[str]) -> list[tuple[str, str]]:
    n = len(cycle)
    return [(cycle[i], cycle[(i + 1) % n]) for i in range(n)]


def count_walks(cycle: Sequence[str], g: TradeGraph) -> int:
    return math.prod(len(g.edge_index.get(h, ())) for h in hops(cycle))


def has_all_sale_walk(cycle: Sequence[str], g: TradeGraph) -> bool:
    # A walk picks one edge per hop independently, so an all-sale walk exists
    # exactly when every hop has at least one sale edge.
    return all(any(e.is_sale for e in g.edge_index.get(h, ())) for h in hops(cycle))


@dataclass(frozen=True)
class RoundTripFinding:
    token_key: tuple[str, str]
    window_index: int
    cycle: Cycle
    walk_count: int
    all_sale_walk: bool
    records: tuple[EventRecord, ...]
    usd_value: Decimal

    @property
    def id(self) -> str:
        return f"R:{self.token_key[0]}/{self.token_key[1]}/w{self.window_index}/" + ">".join(self.cycle)

    @property
    def participants(self) -> frozenset[str]:
        return frozenset(self.cycle)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "tokenKey": list(self.token_key),
            "windowIndex": self.window_index,
            "cycle": list(self.cycle),
            "walkCount": self.walk_count,
            "allSaleWalk": self.all_sale_walk,
            "usdValue": str(self.usd_value),
            "records": [record_to_dict(r) for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundTripFinding":
        return cls(
            token_key=tuple(d["tokenKey"]),
            window_index=d["windowIndex"],
            cycle=tuple(d["cycle"]),
            walk_count=d["walkCount"],
            all_sale_walk=d["allSaleWalk"],
            records=tuple(record_from_dict(r) for r in d["records"]),
            usd_value=Decimal(d["usdValue"]),
        )


def confirm_roundtrip(cycle: Sequence[str], g: TradeGraph,
                      walk_threshold: int = DEFAULT_WALK_THRESHOLD,
                      prices: Optional[PriceTable] = None) -> Optional[RoundTripFinding]:
    walks = count_walks(cycle, g)
    all_sale = has_all_sale_walk(cycle, g)
    if walks < walk_threshold and not all_sale:
        return None
    flagged = sorted({e.index: e for h in hops(cycle) for e in g.edge_index[h]}.values(),
                     key=lambda r: r.index)
    return RoundTripFinding(
        token_key=g.token_key,
        window_index=g.window_index,
        cycle=tuple(cycle),
        walk_count=walks,
        all_sale_walk=all_sale,
        records=tuple(flagged),
        usd_value=sum_usd(flagged, prices),
    )


def detect_window(window: TimeWindow, walk_threshold: int = DEFAULT_WALK_THRESHOLD,
                  max_cycles: int = DEFAULT_MAX_CYCLES, prices: Optional[PriceTable] = None,
                  warnings: Optional[list] = None) -> list[RoundTripFinding]:
    g = build_graph(window)
    out = []
    for c in find_cycles(g, max_cycles, warnings):
        f = confirm_roundtrip(c, g, walk_threshold, prices)
        if f is not None:
            out.append(f)
    return out


def detect_roundtrip(windows: Iterable[TimeWindow], walk_threshold: int = DEFAULT_WALK_THRESHOLD,
                     max_cycles: int = DEFAULT_MAX_CYCLES, prices: Optional[PriceTable] = None,
                     warnings: Optional[list] = None) -> list[RoundTripFinding]:
    out = []
    for w in windows:
        out.extend(detect_window(w, walk_threshold, max_cycles, prices, warnings))
    return out


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(g: TradeGraph, flagged: Iterable[EventRecord] = ()) -> str:
    """Graphviz source for one window; flagged edges drawn red."""
    hot = {r.index for r in flagged}
    name = f"{g.token_key[0]} #{g.token_key[1]} window {g.window_index}"
    lines = [f"digraph {_dot_quote(name)} {{", "  rankdir=LR;"]
    for n in g.nodes:
        lines.append(f"  {_dot_quote(n)} [label={_dot_quote(n)}];")
    for r in g.edges:
        label = r.event_type.value
        if r.is_sale:
            label += f" {r.num_token} {r.pay_token}"
        attrs = f"label={_dot_quote(label)}"
        if r.index in hot:
            attrs += ", color=red"
        lines.append(f"  {_dot_quote(r.from_addr)} -> {_dot_quote(r.to_addr)} [{attrs}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
