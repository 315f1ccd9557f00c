"""Deterministic discrete-event network simulator for block relay strategies.

A scenario describes a connected topology of mining nodes, link latency
and bandwidth, a Poisson transaction workload, and one of three relay
strategies:

* ``BASELINE_FULL_BLOCK`` — mined blocks travel whole.
* ``ADVERT_PROTOCOL``    — the next block's transaction list is announced
  when mining starts, peers pull missing transactions during the search,
  and the mined block travels as a compact seed.
* ``LATE_ADVERT``        — the advert is sent only once the block is
  found, back to back with its seed.

Gossip is flooding with content-hash deduplication. Every send, delivery,
arrival, block find, acceptance, and tip switch is appended to an event
log; given equal scenarios (seed included) two runs produce byte-identical
logs. Mining time is drawn from the exponential law of independent hash
trials and restarts whenever a node's tip changes; blocks are then
assembled by the real search at a low proof target so that every relayed
block passes full validation.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple

from .core import (
    Address,
    Block,
    CoinbaseTransaction,
    CompactTarget,
    Hash,
    Transaction,
    TxRequest,
    TxResponse,
    block_hash,
    hash_bytes,
    header_hash,
    serialize,
    serialized_size,
    txid,
)
from .mining import BlockTemplate, HashRate, MiningBudget, mine, sample_mining_time
from .protocol import (
    Advert,
    AdvertRegistry,
    BlockSeed,
    ChainState,
    Mempool,
    NodeProtocolState,
    Reason,
    SelectionPolicy,
    make_advert,
    make_block_seed,
    on_block_accepted,
    reconstruct_block,
    validate_block,
    validate_block_baseline,
)

LOG_SCHEMA_VERSION = 1
GENESIS_HASH = hash_bytes(b"advertsim-genesis")
FAUCET_ADDRESS = Address(hash_bytes(b"advertsim-faucet")[:20])
FAUCET_VALUE = 1_000
_SIM_POW_BUDGET = MiningBudget(1 << 26)

NodeId = int


class RelayStrategy(str, Enum):
    BASELINE_FULL_BLOCK = "BASELINE_FULL_BLOCK"
    ADVERT_PROTOCOL = "ADVERT_PROTOCOL"
    LATE_ADVERT = "LATE_ADVERT"


@dataclass(frozen=True, slots=True)
class Link:
    """Symmetric point-to-point link between two nodes."""

    a: NodeId
    b: NodeId
    latency: float
    bandwidth: float

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise ValueError("self-links are not allowed")
        if self.latency < 0:
            raise ValueError("latency must be >= 0")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be > 0")


def transmission_delay(message, link: Link) -> float:
    """Seconds for ``message`` to cross ``link``: latency + size/bandwidth."""
    return link.latency + serialized_size(message) / link.bandwidth


_KEY_TAGS = {
    Transaction: b"\x01",
    Advert: b"\x04",
    BlockSeed: b"\x05",
    Block: b"\x03",
    TxRequest: b"\x06",
    TxResponse: b"\x07",
}


def gossip_dedup_key(message) -> Hash:
    """Stable content hash identifying a message across the network."""
    return hash_bytes(_KEY_TAGS[type(message)] + serialize(message))


class ScenarioError(ValueError):
    """A scenario failed validation; ``field`` names the offender."""

    def __init__(self, field_name: str, message: str) -> None:
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


_DEF_TOPOLOGY = {"kind": "random_regular", "degree": 4}
_DEF_LATENCY = {"kind": "constant", "value": 0.05}
_DEF_BANDWIDTH = {"kind": "constant", "value": 1_000_000.0}


@dataclass
class Scenario:
    """Declarative experiment description. Unset fields take the defaults below."""

    node_count: int = 16
    topology: dict = field(default_factory=lambda: dict(_DEF_TOPOLOGY))
    hash_rate: float | list[float] = 10.0
    difficulty_bits: int = 12
    pow_proof_bits: int = 0
    tx_rate: float = 10.0
    tx_size_bytes: int = 500
    coinbase_size_bytes: int = 200
    initial_mempool_txs: int = 0
    horizon_seconds: float = 300.0
    seed: int = 1
    relay_strategy: RelayStrategy = RelayStrategy.ADVERT_PROTOCOL
    block_size_cap_bytes: int = 1_000_000
    link_latency: dict = field(default_factory=lambda: dict(_DEF_LATENCY))
    link_bandwidth: dict = field(default_factory=lambda: dict(_DEF_BANDWIDTH))
    processing_delay_seconds: float = 0.0
    pending_seed_buffer: int = 32
    block_reward: int = 50
    name: str = "scenario"

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        """Strict construction: unknown fields are rejected to catch typos."""
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known - {"schema_version"})
        if unknown:
            raise ScenarioError(unknown[0], "unknown scenario field")
        kwargs = {k: v for k, v in data.items() if k in known}
        if "relay_strategy" in kwargs:
            try:
                kwargs["relay_strategy"] = RelayStrategy(kwargs["relay_strategy"])
            except ValueError:
                raise ScenarioError(
                    "relay_strategy",
                    f"must be one of {[s.value for s in RelayStrategy]}",
                ) from None
        sc = cls(**kwargs)
        sc.validate()
        return sc

    def to_dict(self) -> dict:
        d = {"schema_version": 1}
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            d[k] = v.value if isinstance(v, RelayStrategy) else v
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash_rates(self) -> list[float]:
        if isinstance(self.hash_rate, (int, float)):
            return [float(self.hash_rate)] * self.node_count
        return [float(r) for r in self.hash_rate]

    def validate(self) -> None:
        if not isinstance(self.node_count, int) or self.node_count < 1:
            raise ScenarioError("node_count", "must be an integer >= 1")
        rates = self.hash_rates()
        if len(rates) != self.node_count:
            raise ScenarioError("hash_rate", "per-node list length must equal node_count")
        for r in rates:
            if not r > 0:
                raise ScenarioError("hash_rate", "all hash rates must be positive")
        if not 0 <= self.difficulty_bits <= 64:
            raise ScenarioError("difficulty_bits", "must be in [0, 64]")
        if not 0 <= self.pow_proof_bits <= 12:
            raise ScenarioError("pow_proof_bits", "must be in [0, 12]")
        if self.tx_rate < 0:
            raise ScenarioError("tx_rate", "must be >= 0")
        if self.tx_size_bytes <= 0:
            raise ScenarioError("tx_size_bytes", "must be positive")
        if self.coinbase_size_bytes <= 0:
            raise ScenarioError("coinbase_size_bytes", "must be positive")
        if self.initial_mempool_txs < 0:
            raise ScenarioError("initial_mempool_txs", "must be >= 0")
        if not self.horizon_seconds > 0:
            raise ScenarioError("horizon_seconds", "must be positive")
        if self.block_size_cap_bytes <= 0:
            raise ScenarioError("block_size_cap_bytes", "must be positive")
        if self.processing_delay_seconds < 0:
            raise ScenarioError("processing_delay_seconds", "must be >= 0")
        if self.pending_seed_buffer < 1:
            raise ScenarioError("pending_seed_buffer", "must be >= 1")
        if self.block_reward < 0:
            raise ScenarioError("block_reward", "must be >= 0")
        _validate_dist("link_latency", self.link_latency, allow_zero=True)
        _validate_dist("link_bandwidth", self.link_bandwidth, allow_zero=False)
        # raises ScenarioError on malformed or disconnected topologies
        build_topology(self.topology, self.node_count, random.Random(f"{self.seed}/topology"))


def _validate_dist(field_name: str, spec, allow_zero: bool) -> None:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ScenarioError(field_name, "must be a dict with a 'kind'")
    kind = spec["kind"]
    low_bound = 0.0 if allow_zero else 0.0
    if kind == "constant":
        v = spec.get("value")
        if not isinstance(v, (int, float)):
            raise ScenarioError(field_name, "constant distribution needs a numeric 'value'")
        if v < 0 or (not allow_zero and v <= 0):
            raise ScenarioError(field_name, "value must be positive" if not allow_zero else "value must be >= 0")
    elif kind == "uniform":
        low, high = spec.get("low"), spec.get("high")
        if not isinstance(low, (int, float)) or not isinstance(high, (int, float)):
            raise ScenarioError(field_name, "uniform distribution needs numeric 'low' and 'high'")
        if low > high:
            raise ScenarioError(field_name, "low must be <= high")
        if low < low_bound or (not allow_zero and low <= 0):
            raise ScenarioError(field_name, "bounds must be positive" if not allow_zero else "bounds must be >= 0")
    else:
        raise ScenarioError(field_name, f"unknown distribution kind {kind!r}")


def _dist_sample(spec: dict, rng: random.Random) -> float:
    if spec["kind"] == "constant":
        return float(spec["value"])
    return rng.uniform(float(spec["low"]), float(spec["high"]))


def build_topology(spec: dict, n: int, rng: random.Random) -> list[tuple[int, int]]:
    """Return the undirected edge list for a topology spec; must be connected."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ScenarioError("topology", "must be a dict with a 'kind'")
    kind = spec["kind"]
    if kind == "ring":
        if n < 2:
            edges = []
        elif n == 2:
            edges = [(0, 1)]
        else:
            edges = [(min(i, (i + 1) % n), max(i, (i + 1) % n)) for i in range(n)]
    elif kind == "complete":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "random_regular":
        degree = spec.get("degree")
        if not isinstance(degree, int) or degree < 1:
            raise ScenarioError("topology", "random_regular needs an integer 'degree' >= 1")
        if degree >= n - 1:
            # a d-regular graph on n <= d+1 nodes is the complete graph
            edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
        else:
            if (n * degree) % 2 != 0:
                raise ScenarioError("topology", "node_count * degree must be even")
            edges = _random_regular(n, degree, rng)
    elif kind == "edges":
        raw = spec.get("edges")
        if not isinstance(raw, list):
            raise ScenarioError("topology", "explicit topology needs an 'edges' list")
        seen = set()
        edges = []
        for e in raw:
            a, b = int(e[0]), int(e[1])
            if a == b:
                raise ScenarioError("topology", "self-links are not allowed")
            if not (0 <= a < n and 0 <= b < n):
                raise ScenarioError("topology", f"edge {e} out of range")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ScenarioError("topology", f"duplicate edge {e}")
            seen.add(key)
            edges.append(key)
    else:
        raise ScenarioError("topology", f"unknown topology kind {kind!r}")
    if n > 1 and not _connected(n, edges):
        raise ScenarioError("topology", "topology is not connected")
    return edges


def _random_regular(n: int, d: int, rng: random.Random) -> list[tuple[int, int]]:
    # pairing model with rejection; retried until simple and connected
    for _ in range(5000):
        stubs = [i for i in range(n) for _ in range(d)]
        rng.shuffle(stubs)
        pairs = set()
        ok = True
        for i in range(0, len(stubs), 2):
            a, b = stubs[i], stubs[i + 1]
            if a == b or (min(a, b), max(a, b)) in pairs:
                ok = False
                break
            pairs.add((min(a, b), max(a, b)))
        if ok and _connected(n, pairs):
            return sorted(pairs)
    raise ScenarioError("topology", "failed to sample a connected regular graph")


def _connected(n: int, edges) -> bool:
    adj: dict[int, list[int]] = {i: [] for i in range(n)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    frontier = [0]
    while frontier:
        nxt = []
        for v in frontier:
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return len(seen) == n


# --- event log ------------------------------------------------------------


class LogRecord(NamedTuple):
    """One simulator event. Unused columns hold '' / -1 / 0."""

    t: float
    kind: str  # meta|send|deliver|tx_arrival|block_found|block_accept|tip_adopt
    src: int
    dst: int
    msg: str  # message family for send/deliver
    size: int
    mid: int  # message instance id, send/deliver pairs share it
    oid: str  # content id (16 hex chars)
    ref: str  # related id (block_found: parent)
    val: float  # height / cumulative post-find path bytes


class EventLog:
    """Append-only record stream, serializable to newline-delimited JSON."""

    def __init__(self, meta: dict) -> None:
        self.meta = meta
        self.records: list[LogRecord] = []

    def lines(self) -> Iterator[str]:
        yield json.dumps({"meta": self.meta}, sort_keys=True, separators=(",", ":"))
        for r in self.records:
            yield json.dumps(list(r), separators=(",", ":"))

    def sha256(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for line in self.lines():
                f.write(line)
                f.write("\n")

    @classmethod
    def read(cls, path) -> "EventLog":
        with open(path, encoding="utf-8") as f:
            first = json.loads(f.readline())
            log = cls(first["meta"])
            for line in f:
                vals = json.loads(line)
                log.records.append(LogRecord(float(vals[0]), *vals[1:]))
        return log


class _Delivery(NamedTuple):
    src: int
    dst: int
    msg: object
    family: str
    oid: str
    mid: int
    cpb: float  # cumulative relay bytes along the path, delivery included


class _PendingSeed:
    """A seed or full block that cannot be validated yet; retried as prerequisites arrive."""

    __slots__ = ("seed", "src", "cpb", "block_h", "full_block")

    def __init__(
        self,
        seed: BlockSeed,
        src: int,
        cpb: float,
        block_h: Hash,
        full_block: Block | None = None,
    ) -> None:
        self.seed = seed
        self.src = src
        self.cpb = cpb
        self.block_h = block_h
        self.full_block = full_block


class _Node:
    __slots__ = (
        "nid",
        "proto",
        "rate",
        "neighbors",
        "tx_store",
        "seen",
        "pending",
        "mining_rng",
        "session",
        "template",
        "accepted",
        "accept_pb",
        "advert_in",
        "pull_log",
        "req_map",
    )

    def __init__(self, nid: int, proto: NodeProtocolState, rate: float, rng: random.Random):
        self.nid = nid
        self.proto = proto
        self.rate = rate
        self.neighbors: list[int] = []
        self.tx_store = Mempool()  # every transaction ever seen; answers pulls
        self.seen: set[str] = set()
        self.pending: dict[Hash, _PendingSeed] = {}
        self.mining_rng = rng
        self.session = 0
        self.template: BlockTemplate | None = None
        self.accepted: set[Hash] = set()
        self.accept_pb: dict[Hash, float] = {}
        self.advert_in: dict[tuple[Address, Hash], tuple[float, float]] = {}
        self.pull_log: dict[tuple[Address, Hash], list[tuple[float, float]]] = {}
        self.req_map: dict[Hash, tuple[Address, Hash]] = {}


def node_address(nid: int) -> Address:
    return Address(hash_bytes(b"advertsim-node:%d" % nid)[:20])


def run_scenario(scenario: Scenario) -> EventLog:
    """Drive every node under the scenario's strategy until the horizon.

    Bitwise deterministic for a given scenario, rng seed included.
    """
    scenario.validate()
    return _Sim(scenario).run()


class _Sim:
    def __init__(self, sc: Scenario) -> None:
        self.sc = sc
        self.strategy = sc.relay_strategy
        self.now = 0.0
        self.seq = 0
        self.mid = 0
        self.heap: list = []
        self.find_time: dict[Hash, float] = {}
        self.proc = sc.processing_delay_seconds
        self.policy = SelectionPolicy(
            max_block_size_bytes=sc.block_size_cap_bytes,
            coinbase_size_bytes=sc.coinbase_size_bytes,
        )

        # faucet outputs fund every generated transaction; sized with margin
        n_faucet = sc.initial_mempool_txs + int(sc.tx_rate * sc.horizon_seconds * 3) + 64
        self.faucet_ids = [hash_bytes(b"advertsim-faucet-tx:%d" % i) for i in range(n_faucet)]
        genesis_utxo = {(fid, 0): (FAUCET_ADDRESS, FAUCET_VALUE) for fid in self.faucet_ids}
        self.faucet_next = 0

        warm_rng = random.Random(f"{sc.seed}/warm")
        self.warm_txs = [
            self._generated_tx(self._next_faucet(), warm_rng)
            for _ in range(sc.initial_mempool_txs)
        ]
        self.arrivals_rng = random.Random(f"{sc.seed}/arrivals")

        rates = sc.hash_rates()
        self.nodes: list[_Node] = []
        for nid in range(sc.node_count):
            chain = ChainState(GENESIS_HASH, genesis_utxo)
            proto = NodeProtocolState(
                address=node_address(nid),
                chain=chain,
                mempool=Mempool(),
                registry=AdvertRegistry(),
                policy=self.policy,
                mines=self.strategy is RelayStrategy.ADVERT_PROTOCOL,
            )
            node = _Node(nid, proto, rates[nid], random.Random(f"{sc.seed}/mining/{nid}"))
            for tx in self.warm_txs:
                node.tx_store.insert_unchecked(tx)
                node.proto.mempool.insert_unchecked(tx)
            self.nodes.append(node)

        topo_rng = random.Random(f"{sc.seed}/topology")
        link_rng = random.Random(f"{sc.seed}/links")
        self.links: dict[tuple[int, int], Link] = {}
        for a, b in build_topology(sc.topology, sc.node_count, topo_rng):
            lat = _dist_sample(sc.link_latency, link_rng)
            bw = _dist_sample(sc.link_bandwidth, link_rng)
            self.links[(a, b)] = Link(a, b, lat, bw)
            self.nodes[a].neighbors.append(b)
            self.nodes[b].neighbors.append(a)
        for node in self.nodes:
            node.neighbors.sort()

        meta = {
            "schema": LOG_SCHEMA_VERSION,
            "scenario": sc.to_dict(),
            "scenario_sha": hashlib.sha256(sc.canonical_json().encode()).hexdigest()[:16],
            "genesis": GENESIS_HASH.short(),
            "warm_txs": sc.initial_mempool_txs,
            "faucet_outputs": n_faucet,
        }
        self.log = EventLog(meta)

    # -- helpers ---------------------------------------------------------

    def _next_faucet(self) -> Hash | None:
        if self.faucet_next >= len(self.faucet_ids):
            return None
        fid = self.faucet_ids[self.faucet_next]
        self.faucet_next += 1
        return fid

    def _generated_tx(self, fid: Hash, rng: random.Random) -> Transaction:
        recipient = Address(rng.randbytes(20))
        return Transaction(
            inputs=((fid, 0),),
            outputs=((recipient, FAUCET_VALUE),),
            nominal_size_bytes=self.sc.tx_size_bytes,
        )

    def _schedule(self, t: float, kind: str, payload) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (t, self.seq, kind, payload))

    def _send(self, src: int, dst: int, msg, family: str, oid: str, cpb: float) -> None:
        self.mid += 1
        size = serialized_size(msg)
        t_send = self.now + self.proc
        self.log.records.append(
            LogRecord(t_send, "send", src, dst, family, size, self.mid, oid, "", cpb)
        )
        key = (src, dst) if src < dst else (dst, src)
        arrival = t_send + transmission_delay(msg, self.links[key])
        self._schedule(arrival, "deliver", _Delivery(src, dst, msg, family, oid, self.mid, cpb))

    def _flood(self, node: _Node, msg, family: str, oid: str, exclude: int | None, cpb: float) -> None:
        for nb in node.neighbors:
            if nb != exclude:
                self._send(node.nid, nb, msg, family, oid, cpb)

    # -- lifecycle -------------------------------------------------------

    def run(self) -> EventLog:
        sc = self.sc
        for node in self.nodes:
            self._bootstrap(node)
        if sc.tx_rate > 0:
            self._schedule(self.arrivals_rng.expovariate(sc.tx_rate), "tx_arrival", None)
        horizon = sc.horizon_seconds
        heap = self.heap
        while heap and heap[0][0] <= horizon:
            t, _, kind, payload = heapq.heappop(heap)
            self.now = t
            if kind == "deliver":
                self._on_deliver(payload)
            elif kind == "found":
                self._on_found(*payload)
            else:
                self._on_tx_arrival()
        return self.log

    def _bootstrap(self, node: _Node) -> None:
        advert = None
        if self.strategy is RelayStrategy.ADVERT_PROTOCOL:
            advert = make_advert(node.proto.address, GENESIS_HASH, node.proto.mempool, self.policy)
            node.proto.registry.register(advert)
            oid = gossip_dedup_key(advert).short()
            node.seen.add(oid)
            self._flood(node, advert, "advert", oid, None, float(serialized_size(advert)))
        self._restart_mining(node, advert)

    def _restart_mining(self, node: _Node, advert: Advert | None) -> None:
        node.session += 1
        proto = node.proto
        if self.strategy is RelayStrategy.LATE_ADVERT:
            node.template = None  # transaction list chosen at find time
        else:
            if self.strategy is RelayStrategy.BASELINE_FULL_BLOCK:
                # same greedy selection, just never announced
                advert = make_advert(proto.address, proto.chain.tip_hash, proto.mempool, self.policy)
            assert advert is not None
            node.template = self._template_from(node, advert)
        dt = sample_mining_time(
            HashRate(node.rate), CompactTarget(self.sc.difficulty_bits), node.mining_rng
        )
        self._schedule(self.now + dt, "found", (node.nid, node.session))

    def _template_from(self, node: _Node, advert: Advert) -> BlockTemplate:
        mempool = node.proto.mempool
        txs = tuple(mempool.txs[h] for h in advert.tx_hashes)
        # seed the extra nonce from the parent so coinbase ids never repeat
        # across blocks by the same miner (duplicate ids would corrupt the
        # UTXO set when forks unwind)
        coinbase = CoinbaseTransaction(
            coinbase_address=node.proto.address,
            reward=self.sc.block_reward,
            extra_nonce=int.from_bytes(advert.prev_block_hash[:8], "big"),
            nominal_size_bytes=self.sc.coinbase_size_bytes,
        )
        return BlockTemplate(
            prev_block_hash=advert.prev_block_hash,
            coinbase=coinbase,
            transactions=txs,
            difficulty_target=CompactTarget(self.sc.pow_proof_bits),
            base_timestamp=int(self.now),
            max_size_bytes=self.sc.block_size_cap_bytes,
        )

    # -- handlers --------------------------------------------------------

    def _on_found(self, nid: int, session: int) -> None:
        node = self.nodes[nid]
        if session != node.session:
            return  # tip changed while this sample was pending
        advert = None
        if self.strategy is RelayStrategy.LATE_ADVERT:
            advert = make_advert(
                node.proto.address, node.proto.chain.tip_hash, node.proto.mempool, self.policy
            )
            node.proto.registry.register(advert)
            node.template = self._template_from(node, advert)
        template = node.template
        assert template is not None
        block = mine(template, _SIM_POW_BUDGET)
        assert block is not None, "simulation proof target missed its budget"
        bh = block_hash(block)
        parent = block.header.prev_block_hash
        height = node.proto.chain.heights[parent] + 1
        self.find_time[bh] = self.now
        self.log.records.append(
            LogRecord(
                self.now,
                "block_found",
                nid,
                -1,
                "",
                serialized_size(block),
                len(block.transactions),
                bh.short(),
                parent.short(),
                float(height),
            )
        )
        if self.strategy is RelayStrategy.LATE_ADVERT:
            assert advert is not None
            a_oid = gossip_dedup_key(advert).short()
            node.seen.add(a_oid)
            self._flood(node, advert, "advert", a_oid, None, float(serialized_size(advert)))
        if self.strategy is RelayStrategy.BASELINE_FULL_BLOCK:
            node.seen.add(bh.short())
            self._flood(node, block, "block", bh.short(), None, float(serialized_size(block)))
        else:
            seed = make_block_seed(block)
            node.seen.add(bh.short())
            self._flood(node, seed, "seed", bh.short(), None, float(serialized_size(seed)))
        self._accept(node, block, 0.0)

    def _on_tx_arrival(self) -> None:
        sc = self.sc
        rng = self.arrivals_rng
        fid = self._next_faucet()
        if fid is None:
            return  # faucet exhausted; no further arrivals
        tx = self._generated_tx(fid, rng)
        origin = self.nodes[rng.randrange(sc.node_count)]
        h = txid(tx)
        self.log.records.append(
            LogRecord(self.now, "tx_arrival", origin.nid, -1, "", tx.nominal_size_bytes, -1, h.short(), "", 0.0)
        )
        oid = gossip_dedup_key(tx).short()
        origin.seen.add(oid)
        origin.tx_store.insert_unchecked(tx)
        origin.proto.mempool.add(tx, origin.proto.chain.utxo)
        self._flood(origin, tx, "tx", oid, None, 0.0)
        self._retry_pending_for_tx(origin, h)
        self._schedule(self.now + rng.expovariate(sc.tx_rate), "tx_arrival", None)

    def _on_deliver(self, d: _Delivery) -> None:
        self.log.records.append(
            LogRecord(self.now, "deliver", d.src, d.dst, d.family, serialized_size(d.msg), d.mid, d.oid, "", d.cpb)
        )
        node = self.nodes[d.dst]
        family = d.family
        if family == "tx":
            if d.oid in node.seen:
                return
            node.seen.add(d.oid)
            self._ingest_tx(node, d.msg)
            self._flood(node, d.msg, "tx", d.oid, d.src, 0.0)
        elif family == "advert":
            if d.oid in node.seen:
                return
            node.seen.add(d.oid)
            self._handle_advert(node, d)
            self._flood(node, d.msg, "advert", d.oid, d.src, d.cpb + serialized_size(d.msg))
        elif family == "seed":
            if d.oid in node.seen:
                return
            node.seen.add(d.oid)
            self._handle_seed(node, d.msg, d.src, d.cpb)
        elif family == "block":
            if d.oid in node.seen:
                return
            node.seen.add(d.oid)
            self._handle_full_block(node, d.msg, d.src, d.cpb)
        elif family == "txreq":
            self._handle_tx_request(node, d)
        elif family == "txresp":
            self._handle_tx_response(node, d.msg)

    def _ingest_tx(self, node: _Node, tx: Transaction) -> bool:
        h = txid(tx)
        fresh = h not in node.tx_store
        if fresh:
            node.tx_store.insert_unchecked(tx)
            node.proto.mempool.add(tx, node.proto.chain.utxo)
            self._retry_pending_for_tx(node, h)
        return fresh

    def _handle_advert(self, node: _Node, d: _Delivery) -> None:
        advert: Advert = d.msg
        key = advert.key()
        node.proto.registry.register(advert)  # first arrival wins
        if key not in node.advert_in:
            node.advert_in[key] = (self.now, d.cpb)
        registered = node.proto.registry.lookup(*key)
        if registered is advert:
            missing = [h for h in advert.tx_hashes if h not in node.tx_store]
            if missing:
                self._request_txs(node, missing, d.src, key)
        for pend in list(node.pending.values()):
            if (pend.seed.coinbase_address, pend.seed.header.prev_block_hash) == key:
                # the seed sender already validated the block; pull stragglers from it
                self._try_seed(node, pend, request_from=pend.src)

    def _handle_seed(self, node: _Node, seed: BlockSeed, src: int, cpb: float) -> None:
        bh = header_hash(seed.header)
        if bh in node.accepted:
            return
        pend = _PendingSeed(seed, src, cpb, bh)
        self._add_pending(node, pend)
        self._try_seed(node, pend, request_from=src)

    def _add_pending(self, node: _Node, pend: _PendingSeed) -> None:
        if len(node.pending) >= self.sc.pending_seed_buffer:
            node.pending.pop(next(iter(node.pending)))  # FIFO eviction
        node.pending[pend.block_h] = pend

    def _try_seed(self, node: _Node, pend: _PendingSeed, request_from: int | None = None) -> None:
        """Advance a pending seed (or parked full block) as far as knowledge allows."""
        proto = node.proto
        if pend.full_block is not None:
            verdict = validate_block_baseline(pend.full_block, proto.chain)
            if verdict.reason is Reason.WRONG_PREV_HASH:
                return
            node.pending.pop(pend.block_h, None)
            if not verdict.accepted:
                return
            self._accept(node, pend.full_block, pend.cpb)
            self._flood(
                node,
                pend.full_block,
                "block",
                pend.block_h.short(),
                pend.src,
                pend.cpb + serialized_size(pend.full_block),
            )
            return
        seed = pend.seed
        advert = proto.registry.lookup(seed.coinbase_address, seed.header.prev_block_hash)
        if advert is None:
            return  # still waiting for the advert
        missing = [h for h in advert.tx_hashes if h not in node.tx_store]
        if missing:
            if request_from is not None:
                # the seed sender validated the block, so it has every tx
                self._request_txs(node, missing, request_from, advert.key(), force=True)
            return
        rec = reconstruct_block(seed, proto.registry, node.tx_store)
        assert rec.ok, rec.reason
        block = rec.block
        verdict = validate_block(block, proto.registry, proto.chain)
        if verdict.reason is Reason.WRONG_PREV_HASH:
            return  # parent still in flight; retried on the next acceptance
        node.pending.pop(pend.block_h, None)
        if not verdict.accepted:
            return
        pb = pend.cpb + self._post_find_extras(node, advert.key(), pend.block_h)
        self._accept(node, block, pb)
        # the forwarded seed carries only seed-family path bytes; advert and
        # pull bytes stay node-local (each hop accounts its own)
        self._flood(node, seed, "seed", pend.block_h.short(), pend.src, pend.cpb + serialized_size(seed))

    def _post_find_extras(self, node: _Node, key, bh: Hash) -> float:
        """Advert and pull bytes that had to move after the block was found."""
        found = self.find_time[bh]
        extra = 0.0
        adv = node.advert_in.get(key)
        if adv is not None and adv[0] >= found:
            extra += adv[1]
        for t, size in node.pull_log.get(key, ()):
            if t >= found:
                extra += size
        return extra

    def _handle_full_block(self, node: _Node, block: Block, src: int, cpb: float) -> None:
        bh = block_hash(block)
        if bh in node.accepted:
            return
        verdict = validate_block_baseline(block, node.proto.chain)
        if verdict.reason is Reason.WRONG_PREV_HASH:
            self._add_pending(node, _PendingSeed(make_block_seed(block), src, cpb, bh, full_block=block))
            return
        if not verdict.accepted:
            return
        self._accept(node, block, cpb)
        self._flood(node, block, "block", bh.short(), src, cpb + serialized_size(block))

    def _handle_tx_request(self, node: _Node, d: _Delivery) -> None:
        req: TxRequest = d.msg
        have = tuple(
            node.tx_store.txs[h] for h in req.hashes if h in node.tx_store
        )
        if have:
            self._send(node.nid, d.src, TxResponse(have), "txresp", "", 0.0)

    def _handle_tx_response(self, node: _Node, resp: TxResponse) -> None:
        for tx in resp.txs:
            h = txid(tx)
            key = node.req_map.pop(h, None)
            if key is not None:
                node.pull_log.setdefault(key, []).append((self.now, float(tx.nominal_size_bytes)))
            if h not in node.tx_store:
                oid = gossip_dedup_key(tx).short()
                node.seen.add(oid)
                self._ingest_tx(node, tx)
                self._flood(node, tx, "tx", oid, None, 0.0)

    def _request_txs(
        self, node: _Node, missing: list[Hash], target: int, key, force: bool = False
    ) -> None:
        outstanding = missing if force else [h for h in missing if h not in node.req_map]
        if not outstanding:
            return
        req = TxRequest(tuple(outstanding))
        for h in outstanding:
            node.req_map[h] = key
        node.pull_log.setdefault(key, []).append(
            (self.now + self.proc, float(serialized_size(req)))
        )
        self._send(node.nid, target, req, "txreq", "", 0.0)

    def _retry_pending_for_tx(self, node: _Node, h: Hash) -> None:
        if not node.pending:
            return
        for pend in list(node.pending.values()):
            self._try_seed(node, pend)

    def _accept(self, node: _Node, block: Block, pb: float) -> None:
        bh = block_hash(block)
        node.accepted.add(bh)
        node.accept_pb[bh] = pb
        self.log.records.append(
            LogRecord(self.now, "block_accept", node.nid, -1, "", 0, -1, bh.short(), "", pb)
        )
        for tx in block.transactions:
            if txid(tx) not in node.tx_store:
                node.tx_store.insert_unchecked(tx)
        proto = node.proto
        pre_tip = proto.chain.tip_hash
        _, _, next_advert = on_block_accepted(proto, block)
        if proto.chain.tip_hash != pre_tip:
            self.log.records.append(
                LogRecord(
                    self.now,
                    "tip_adopt",
                    node.nid,
                    -1,
                    "",
                    0,
                    -1,
                    proto.chain.tip_hash.short(),
                    "",
                    float(proto.chain.height),
                )
            )
            if next_advert is not None:
                oid = gossip_dedup_key(next_advert).short()
                node.seen.add(oid)
                self._flood(node, next_advert, "advert", oid, None, float(serialized_size(next_advert)))
            self._restart_mining(node, next_advert)
        # a newly known block may unblock seeds waiting on their parent
        for pend in list(node.pending.values()):
            if pend.seed.header.prev_block_hash == bh:
                self._try_seed(node, pend)
