"""Comparative quantities derived from simulation event logs.

Everything here is a pure function of the log: recomputing from a
serialized log gives exactly the live result. The eventually-best chain
is the highest block in the log (ties broken by earliest find time)
walked back to genesis; stale blocks are finds off that chain, and
wasted mining time is time spent on a tip that the eventually-best
chain had already superseded at that moment.

Orphaned blocks are excluded from a block's latency samples rather than
assigned infinite latency, keeping the means finite; the summary
records how many samples each block produced so the exclusion is
visible.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

from .simnet import EventLog

BLOCK_CSV_COLUMNS = [
    "block",
    "height",
    "finder",
    "find_time",
    "stale",
    "adoptions",
    "mean_latency",
    "max_latency",
    "critical_path_bytes",
]


@dataclass(frozen=True, slots=True)
class BlockInfo:
    oid: str
    parent: str
    height: int
    finder: int
    found_at: float
    size: int
    tx_count: int


def _blocks(log: EventLog) -> dict[str, BlockInfo]:
    out: dict[str, BlockInfo] = {}
    for r in log.records:
        if r.kind == "block_found":
            out[r.oid] = BlockInfo(r.oid, r.ref, int(r.val), r.src, r.t, r.size, r.mid)
    return out


def best_chain(log: EventLog) -> list[str]:
    """Block ids of the eventually-best chain, genesis excluded, by height.

    The tip is the highest block found anywhere; among equal heights the
    earliest find wins. This is the hindsight chain all metrics compare
    against.
    """
    blocks = _blocks(log)
    if not blocks:
        return []
    tip = max(blocks.values(), key=lambda b: (b.height, -b.found_at))
    genesis = log.meta["genesis"]
    chain = []
    cur = tip.oid
    while cur != genesis:
        chain.append(cur)
        cur = blocks[cur].parent
    chain.reverse()
    return chain


def _ancestry(blocks: dict[str, BlockInfo], oid: str, genesis: str) -> list[str]:
    out = []
    cur = oid
    while cur != genesis:
        out.append(cur)
        cur = blocks[cur].parent
    return out


def _adoption_times(log: EventLog) -> dict[tuple[int, str], float]:
    """First time each node's adopted chain contains each block."""
    blocks = _blocks(log)
    genesis = log.meta["genesis"]
    first: dict[tuple[int, str], float] = {}
    on_chain: dict[int, set[str]] = {}
    for r in log.records:
        if r.kind != "tip_adopt":
            continue
        have = on_chain.setdefault(r.src, set())
        for oid in _ancestry(blocks, r.oid, genesis):
            if oid not in have:
                have.add(oid)
                first[(r.src, oid)] = r.t
    return first


@dataclass
class PropagationStats:
    """Per-block tip-adoption latency samples and their summary."""

    per_block: dict[str, list[tuple[int, float]]] = field(default_factory=dict)
    empty: bool = True

    @property
    def samples(self) -> list[float]:
        return [lat for entries in self.per_block.values() for _, lat in entries]

    @property
    def mean(self) -> float | None:
        s = self.samples
        return sum(s) / len(s) if s else None

    @property
    def median(self) -> float | None:
        s = sorted(self.samples)
        if not s:
            return None
        n = len(s)
        mid = n // 2
        return s[mid] if n % 2 else (s[mid - 1] + s[mid]) / 2

    @property
    def p90(self) -> float | None:
        s = sorted(self.samples)
        if not s:
            return None
        idx = max(0, -(-9 * len(s) // 10) - 1)  # ceil(0.9 n) - 1
        return s[idx]

    @property
    def max(self) -> float | None:
        s = self.samples
        return max(s) if s else None


def propagation_latency(log: EventLog) -> PropagationStats:
    """Seconds from each block's find to each node's adoption of it.

    Nodes that never adopt a block contribute no sample for it.
    """
    blocks = _blocks(log)
    stats = PropagationStats(empty=not blocks)
    if not blocks:
        return stats
    for (node, oid), t in _adoption_times(log).items():
        stats.per_block.setdefault(oid, []).append((node, t - blocks[oid].found_at))
    return stats


def stale_rate(log: EventLog) -> float | None:
    """Fraction of found blocks that missed the eventually-best chain.

    None when the log contains no blocks at all.
    """
    blocks = _blocks(log)
    if not blocks:
        return None
    best = set(best_chain(log))
    stale = sum(1 for oid in blocks if oid not in best)
    return stale / len(blocks)


@dataclass
class WasteStats:
    """Mining time spent on an already-superseded tip, per node and overall."""

    per_node_wasted: dict[int, float] = field(default_factory=dict)
    mining_seconds_per_node: float = 0.0

    @property
    def per_node_fraction(self) -> dict[int, float]:
        if self.mining_seconds_per_node <= 0:
            return {n: 0.0 for n in self.per_node_wasted}
        return {
            n: w / self.mining_seconds_per_node for n, w in self.per_node_wasted.items()
        }

    @property
    def fraction(self) -> float:
        total = self.mining_seconds_per_node * len(self.per_node_wasted)
        if total <= 0:
            return 0.0
        return sum(self.per_node_wasted.values()) / total


def wasted_hashpower(log: EventLog) -> WasteStats:
    """Integrate, per node, the time its mining tip was already superseded.

    At any instant the reference is the highest eventually-best block
    already found; a node mining on anything else is wasting its hash
    power, whether it is behind or on a losing fork.
    """
    meta = log.meta
    horizon = float(meta["scenario"]["horizon_seconds"])
    node_count = int(meta["scenario"]["node_count"])
    genesis = meta["genesis"]
    blocks = _blocks(log)
    best = best_chain(log)
    # step function: after steps[i].found_at the best tip is steps[i]
    steps = [(0.0, genesis)] + [(blocks[oid].found_at, oid) for oid in best]

    adoptions: dict[int, list[tuple[float, str]]] = {n: [(0.0, genesis)] for n in range(node_count)}
    for r in log.records:
        if r.kind == "tip_adopt":
            adoptions[r.src].append((r.t, r.oid))

    stats = WasteStats(mining_seconds_per_node=horizon)
    for nid in range(node_count):
        events = adoptions[nid]
        wasted = 0.0
        for i, (start, tip) in enumerate(events):
            end = events[i + 1][0] if i + 1 < len(events) else horizon
            if end <= start:
                continue
            wasted += _mismatch_time(steps, start, min(end, horizon), tip)
        stats.per_node_wasted[nid] = wasted
    return stats


def _mismatch_time(steps: list[tuple[float, str]], start: float, end: float, tip: str) -> float:
    """Length of [start, end) during which the best tip differs from ``tip``."""
    total = 0.0
    for i, (t_i, oid) in enumerate(steps):
        t_next = steps[i + 1][0] if i + 1 < len(steps) else float("inf")
        lo = max(start, t_i)
        hi = min(end, t_next)
        if hi > lo and oid != tip:
            total += hi - lo
    return total


@dataclass
class SizeStats:
    """Bytes on the wire by message family, plus per-block critical paths."""

    bytes_by_family: dict[str, int] = field(default_factory=dict)
    critical_path_bytes: dict[str, float] = field(default_factory=dict)

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes_by_family.values())

    @property
    def mean_critical_path(self) -> float | None:
        if not self.critical_path_bytes:
            return None
        return sum(self.critical_path_bytes.values()) / len(self.critical_path_bytes)


def size_report(log: EventLog) -> SizeStats:
    """Family byte totals over all sends, and the widest post-find relay path
    (in bytes) any node needed before accepting each block."""
    stats = SizeStats()
    fam = stats.bytes_by_family
    crit = stats.critical_path_bytes
    for r in log.records:
        if r.kind == "send":
            fam[r.msg] = fam.get(r.msg, 0) + r.size
        elif r.kind == "block_accept":
            if r.val > crit.get(r.oid, -1.0):
                crit[r.oid] = r.val
    return stats


def summarize(log: EventLog) -> dict:
    """The versioned JSON summary document for one run."""
    blocks = _blocks(log)
    prop = propagation_latency(log)
    waste = wasted_hashpower(log)
    sizes = size_report(log)
    best = best_chain(log)
    return {
        "schema": 1,
        "scenario": log.meta["scenario"],
        "blocks_found": len(blocks),
        "best_chain_length": len(best),
        "stale_rate": stale_rate(log),
        "propagation": {
            "samples": len(prop.samples),
            "mean": prop.mean,
            "median": prop.median,
            "p90": prop.p90,
            "max": prop.max,
            "orphaned_blocks_excluded": True,
        },
        "waste": {
            "fraction": waste.fraction,
            "per_node_fraction": {str(k): v for k, v in waste.per_node_fraction.items()},
        },
        "bytes": {
            "by_family": dict(sorted(sizes.bytes_by_family.items())),
            "total": sizes.total_bytes,
            "mean_critical_path": sizes.mean_critical_path,
        },
    }


def write_block_csv(log: EventLog, path) -> None:
    """One row per found block; column schema in BLOCK_CSV_COLUMNS."""
    blocks = _blocks(log)
    prop = propagation_latency(log)
    sizes = size_report(log)
    best = set(best_chain(log))
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(BLOCK_CSV_COLUMNS)
        for oid, info in blocks.items():
            entries = prop.per_block.get(oid, [])
            lats = [lat for _, lat in entries]
            w.writerow(
                [
                    oid,
                    info.height,
                    info.finder,
                    repr(info.found_at),
                    int(oid not in best),
                    len(entries),
                    repr(sum(lats) / len(lats)) if lats else "",
                    repr(max(lats)) if lats else "",
                    repr(sizes.critical_path_bytes.get(oid, 0.0)),
                ]
            )


def write_summary_json(log: EventLog, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summarize(log), f, indent=2, sort_keys=True)
        f.write("\n")
