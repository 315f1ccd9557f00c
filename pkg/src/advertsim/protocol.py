"""Advertise-ahead relay protocol: adverts, seeds, reconstruction, validation.

A miner announces the exact ordered transaction list of its next block in
an advert keyed by (coinbase address, previous block hash). Peers pull any
transactions they are missing while the block is being mined. Once mined,
the block travels as a compact seed (coinbase address, coinbase
transaction, header); every peer reconstructs the full block from the
registered advert and its transaction store, and accepts it only if the
fixed validation ladder passes.

State containers here (registry, mempool, chain) are per-node and
single-threaded; the messages they exchange are immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .core import (
    ADVERT_FRAMING_BYTES,
    HEADER_WIRE_BYTES,
    MAX_BLOCK_SIZE_BYTES,
    DEFAULT_COINBASE_SIZE_BYTES,
    Address,
    Block,
    BlockHeader,
    CoinbaseTransaction,
    Hash,
    Outpoint,
    Transaction,
    block_hash,
    merkle_root,
    serialize,
    serialized_size,
    txid,
)
from .mining import check_pow


class Reason(Enum):
    OK = "OK"
    NO_MATCHING_ADVERT = "NO_MATCHING_ADVERT"
    COINBASE_MISMATCH = "COINBASE_MISMATCH"
    WRONG_PREV_HASH = "WRONG_PREV_HASH"
    POW_FAIL = "POW_FAIL"
    TX_LIST_MISMATCH = "TX_LIST_MISMATCH"
    MERKLE_MISMATCH = "MERKLE_MISMATCH"
    MISSING_TXS = "MISSING_TXS"
    INVALID_TX = "INVALID_TX"


@dataclass(frozen=True, slots=True)
class ValidationVerdict:
    reason: Reason

    @property
    def accepted(self) -> bool:
        return self.reason is Reason.OK


class RegistrationResult(Enum):
    REGISTERED = "REGISTERED"
    DUPLICATE_REJECTED = "DUPLICATE_REJECTED"


@dataclass(frozen=True, slots=True)
class Advert:
    """Pre-mining announcement: who will mine, exactly what, on which tip."""

    coinbase_address: Address
    tx_hashes: tuple[Hash, ...]
    prev_block_hash: Hash

    def __post_init__(self) -> None:
        object.__setattr__(self, "coinbase_address", Address(self.coinbase_address))
        object.__setattr__(self, "tx_hashes", tuple(Hash(h) for h in self.tx_hashes))
        object.__setattr__(self, "prev_block_hash", Hash(self.prev_block_hash))
        if len(set(self.tx_hashes)) != len(self.tx_hashes):
            raise ValueError("advert transaction list contains duplicates")

    def key(self) -> tuple[Address, Hash]:
        return (self.coinbase_address, self.prev_block_hash)


@dataclass(frozen=True, slots=True)
class BlockSeed:
    """Post-mining compact relay unit: address, coinbase, header."""

    coinbase_address: Address
    coinbase: CoinbaseTransaction
    header: BlockHeader

    def __post_init__(self) -> None:
        object.__setattr__(self, "coinbase_address", Address(self.coinbase_address))
        if self.coinbase.coinbase_address != self.coinbase_address:
            raise ValueError("seed coinbase does not pay the seed's address")


@serialize.register
def _(advert: Advert) -> bytes:
    parts = [b"\x04", advert.coinbase_address, advert.prev_block_hash]
    parts.append(len(advert.tx_hashes).to_bytes(4, "big"))
    parts.extend(advert.tx_hashes)
    return b"".join(parts)


@serialize.register
def _(seed: BlockSeed) -> bytes:
    return b"".join(
        (b"\x05", seed.coinbase_address, serialize(seed.coinbase), serialize(seed.header))
    )


@serialized_size.register
def _(advert: Advert) -> int:
    return ADVERT_FRAMING_BYTES + 20 + 32 + 32 * len(advert.tx_hashes)


@serialized_size.register
def _(seed: BlockSeed) -> int:
    return 20 + seed.coinbase.nominal_size_bytes + HEADER_WIRE_BYTES


class AdvertRegistry:
    """One advert per (coinbase address, previous block hash); first arrival wins."""

    def __init__(self) -> None:
        self.entries: dict[tuple[Address, Hash], Advert] = {}

    def register(self, advert: Advert) -> RegistrationResult:
        key = advert.key()
        if key in self.entries:
            return RegistrationResult.DUPLICATE_REJECTED
        self.entries[key] = advert
        return RegistrationResult.REGISTERED

    def lookup(self, address: Address, prev_block_hash: Hash) -> Advert | None:
        return self.entries.get((address, prev_block_hash))

    def evict_stale(self, heights: dict[Hash, int], tip_height: int) -> int:
        """Drop entries whose prev hash is two or more blocks behind the tip.

        Entries referencing unknown hashes (pipelined adverts for blocks
        still in flight) are kept. Returns the number evicted.
        """
        stale = [
            key
            for key, adv in self.entries.items()
            if adv.prev_block_hash in heights
            and heights[adv.prev_block_hash] <= tip_height - 2
        ]
        for key in stale:
            del self.entries[key]
        return len(stale)

    def __len__(self) -> int:
        return len(self.entries)


def register_advert(registry: AdvertRegistry, advert: Advert) -> RegistrationResult:
    return registry.register(advert)


class Mempool:
    """Pending transactions, conflict-free and valid against the current tip."""

    def __init__(self) -> None:
        self.txs: dict[Hash, Transaction] = {}
        self.spent_outpoints: dict[Outpoint, Hash] = {}

    def __contains__(self, h: Hash) -> bool:
        return h in self.txs

    def __len__(self) -> int:
        return len(self.txs)

    def get(self, h: Hash) -> Transaction | None:
        return self.txs.get(h)

    def add(self, tx: Transaction, utxo: "UtxoView | dict") -> bool:
        """Admit ``tx`` if it is new, valid against ``utxo``, and conflict-free."""
        h = txid(tx)
        if h in self.txs:
            return False
        if any(op in self.spent_outpoints for op in tx.inputs):
            return False
        if not tx_valid(tx, utxo):
            return False
        self._insert(h, tx)
        return True

    def insert_unchecked(self, tx: Transaction) -> None:
        """Insert without validation. For bootstrap and tests only."""
        self._insert(txid(tx), tx)

    def _insert(self, h: Hash, tx: Transaction) -> None:
        self.txs[h] = tx
        for op in tx.inputs:
            self.spent_outpoints[op] = h

    def remove(self, h: Hash) -> None:
        tx = self.txs.pop(h, None)
        if tx is not None:
            for op in tx.inputs:
                if self.spent_outpoints.get(op) == h:
                    del self.spent_outpoints[op]

    def apply_block(self, block: Block) -> None:
        """Drop transactions included in ``block`` or conflicting with it."""
        for tx in block.transactions:
            self.remove(txid(tx))
            for op in tx.inputs:
                conflictor = self.spent_outpoints.get(op)
                if conflictor is not None:
                    self.remove(conflictor)

    def revalidate(self, utxo: "UtxoView | dict") -> list[Hash]:
        """Drop every pooled transaction no longer valid; returns dropped ids."""
        dropped = [h for h, tx in self.txs.items() if not tx_valid(tx, utxo)]
        for h in dropped:
            self.remove(h)
        return dropped


_SPENT = object()  # tombstone in UtxoView overlays


class UtxoView:
    """Read-only UTXO lookup: an overlay of deltas on a base mapping."""

    __slots__ = ("base", "overrides")

    def __init__(self, base: dict, overrides: dict | None = None) -> None:
        self.base = base
        self.overrides = overrides or {}

    def get(self, outpoint: Outpoint):
        v = self.overrides.get(outpoint)
        if v is _SPENT:
            return None
        if v is not None:
            return v
        return self.base.get(outpoint)

    def __contains__(self, outpoint: Outpoint) -> bool:
        return self.get(outpoint) is not None


def tx_valid(tx: Transaction, utxo: UtxoView | dict) -> bool:
    """All inputs unspent in ``utxo``, and no value created from nothing."""
    total_in = 0
    getter = utxo.get
    for op in tx.inputs:
        entry = getter(op)
        if entry is None:
            return False
        total_in += entry[1]
    return total_in >= sum(v for _, v in tx.outputs)


@dataclass(frozen=True, slots=True)
class AddOutcome:
    """What ChainState.add_block did: extended the tip, reorged, or parked a side block."""

    kind: str  # "extended" | "reorged" | "side"
    removed: tuple[Block, ...] = ()
    added: tuple[Block, ...] = ()

    @property
    def tip_changed(self) -> bool:
        return self.kind != "side"


class ChainState:
    """Validated history: known blocks, heights, and the UTXO set at the tip.

    Tip selection is longest chain; ties keep the incumbent (first
    received wins). Undo data per applied block makes shallow reorgs and
    fork-point UTXO views cheap.
    """

    def __init__(self, genesis_hash: Hash, genesis_utxo: dict[Outpoint, tuple[Address, int]]):
        self.genesis_hash = Hash(genesis_hash)
        self.tip_hash = self.genesis_hash
        self.height = 0
        self.known_blocks: dict[Hash, Block | None] = {self.genesis_hash: None}
        self.heights: dict[Hash, int] = {self.genesis_hash: 0}
        self.utxo: dict[Outpoint, tuple[Address, int]] = dict(genesis_utxo)
        self._parents: dict[Hash, Hash] = {}
        # undo per applied block: (spent entries, created outpoints)
        self._undo: dict[Hash, tuple[tuple[tuple[Outpoint, tuple[Address, int]], ...], tuple[Outpoint, ...]]] = {}

    def knows(self, h: Hash) -> bool:
        return h in self.known_blocks

    def tip_chain(self) -> list[Hash]:
        """Hashes from genesis to tip, inclusive."""
        out = []
        h = self.tip_hash
        while h != self.genesis_hash:
            out.append(h)
            h = self._parents[h]
        out.append(self.genesis_hash)
        out.reverse()
        return out

    # -- UTXO views ------------------------------------------------------

    def utxo_view_at(self, block_h: Hash) -> UtxoView:
        """UTXO view as of ``block_h`` (a known block), tip fast-path free."""
        if block_h == self.tip_hash:
            return UtxoView(self.utxo)
        overrides: dict = {}
        back, forward = self._paths_between(self.tip_hash, block_h)
        for h in back:  # roll the tip back; tip-chain blocks always have undo data
            spent, created = self._undo[h]
            for op in created:
                overrides[op] = _SPENT
            for op, entry in spent:
                overrides[op] = entry
        for h in forward:  # then walk out to the fork block
            blk = self.known_blocks[h]
            assert blk is not None
            spent_ops, created = _block_deltas(blk)
            for op in spent_ops:
                overrides[op] = _SPENT
            for op, entry in created:
                overrides[op] = entry
        return UtxoView(self.utxo, overrides)

    def _paths_between(self, frm: Hash, to: Hash) -> tuple[list[Hash], list[Hash]]:
        """Blocks to unapply from ``frm`` and apply toward ``to`` (fork walk)."""
        a_chain: dict[Hash, None] = {}
        h = frm
        while h != self.genesis_hash:
            a_chain[h] = None
            h = self._parents[h]
        a_chain[self.genesis_hash] = None
        forward = []
        h = to
        while h not in a_chain:
            forward.append(h)
            h = self._parents[h]
        lca = h
        back = []
        h = frm
        while h != lca:
            back.append(h)
            h = self._parents[h]
        forward.reverse()
        return back, forward

    # -- growth ----------------------------------------------------------

    def add_block(self, block: Block) -> AddOutcome:
        """Record a validated block; adopt it if it makes the longest chain.

        The caller must have validated the block (including against its
        parent's UTXO view). Equal-length forks never displace the tip.
        """
        h = block_hash(block)
        parent = block.header.prev_block_hash
        if parent not in self.heights:
            raise ValueError("parent of added block is unknown")
        if h in self.known_blocks:
            return AddOutcome("side")
        height = self.heights[parent] + 1
        self.known_blocks[h] = block
        self.heights[h] = height
        self._parents[h] = parent

        if parent == self.tip_hash:
            self._apply(block, h)
            self.tip_hash = h
            self.height = height
            return AddOutcome("extended", added=(block,))
        if height > self.height:
            return self._reorg_to(block, h)
        return AddOutcome("side")

    def _reorg_to(self, block: Block, h: Hash) -> AddOutcome:
        back, forward = self._paths_between(self.tip_hash, h)
        removed = []
        for bh in back:
            blk = self.known_blocks[bh]
            assert blk is not None
            self._unapply(bh)
            removed.append(blk)
        added = []
        for fh in forward:
            blk = self.known_blocks[fh]
            assert blk is not None
            self._apply(blk, fh)
            added.append(blk)
        self.tip_hash = h
        self.height = self.heights[h]
        return AddOutcome("reorged", removed=tuple(removed), added=tuple(added))

    def _apply(self, block: Block, h: Hash) -> None:
        spent_ops, created = _block_deltas(block)
        spent_entries = tuple((op, self.utxo.pop(op)) for op in spent_ops)
        for op, entry in created:
            self.utxo[op] = entry
        self._undo[h] = (spent_entries, tuple(op for op, _ in created))

    def _unapply(self, h: Hash) -> None:
        spent, created = self._undo.pop(h)
        for op in created:
            del self.utxo[op]
        for op, entry in spent:
            self.utxo[op] = entry


def _block_deltas(block: Block):
    """(outpoints the block spends, (outpoint, entry) pairs it creates)."""
    spent = [op for tx in block.transactions for op in tx.inputs]
    cb_id = txid(block.coinbase)
    created = [((cb_id, 0), (block.coinbase.coinbase_address, block.coinbase.reward))]
    for tx in block.transactions:
        h = txid(tx)
        for i, (addr, value) in enumerate(tx.outputs):
            created.append(((h, i), (addr, value)))
    return spent, created


# --- advert construction ------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SelectionPolicy:
    """Greedy first-fit selection in arrival order under the block size cap."""

    max_block_size_bytes: int = MAX_BLOCK_SIZE_BYTES
    coinbase_size_bytes: int = DEFAULT_COINBASE_SIZE_BYTES


def make_advert(
    address: Address,
    tip: Hash,
    mempool: Mempool,
    policy: SelectionPolicy = SelectionPolicy(),
) -> Advert:
    """Announce the next block: tip, miner address, and the chosen tx list.

    Transactions are taken in arrival order while the modeled block size
    stays under the cap, skipping any that conflict with one already
    chosen. An empty mempool yields an empty list: a coinbase-only block
    is legal.
    """
    budget = policy.max_block_size_bytes - HEADER_WIRE_BYTES - policy.coinbase_size_bytes
    chosen: list[Hash] = []
    spent: set[Outpoint] = set()
    used = 0
    for h, tx in mempool.txs.items():
        s = tx.nominal_size_bytes
        if used + s > budget:
            continue
        if any(op in spent for op in tx.inputs):
            continue
        chosen.append(h)
        spent.update(tx.inputs)
        used += s
    return Advert(coinbase_address=address, tx_hashes=tuple(chosen), prev_block_hash=tip)


def missing_txs(advert: Advert, mempool: Mempool) -> list[Hash]:
    """Advertised hashes not in the pool, in advert order."""
    return [h for h in advert.tx_hashes if h not in mempool]


def make_block_seed(block: Block) -> BlockSeed:
    return BlockSeed(
        coinbase_address=block.coinbase.coinbase_address,
        coinbase=block.coinbase,
        header=block.header,
    )


@dataclass(frozen=True, slots=True)
class ReconstructionResult:
    block: Block | None
    reason: Reason | None = None
    missing: tuple[Hash, ...] = ()

    @property
    def ok(self) -> bool:
        return self.block is not None


def reconstruct_block(
    seed: BlockSeed, registry: AdvertRegistry, mempool: Mempool
) -> ReconstructionResult:
    """Assemble the full block a seed refers to.

    Looks up the advert under (seed address, header's prev hash) and
    resolves the advertised hashes from the pool. Merkle agreement is
    validation's job, not reconstruction's.
    """
    advert = registry.lookup(seed.coinbase_address, seed.header.prev_block_hash)
    if advert is None:
        return ReconstructionResult(None, Reason.NO_MATCHING_ADVERT)
    missing = missing_txs(advert, mempool)
    if missing:
        return ReconstructionResult(None, Reason.MISSING_TXS, tuple(missing))
    txs = tuple(mempool.txs[h] for h in advert.tx_hashes)
    return ReconstructionResult(Block(header=seed.header, coinbase=seed.coinbase, transactions=txs))


# --- validation ---------------------------------------------------------------


def validate_block(block: Block, registry: AdvertRegistry, chain: ChainState) -> ValidationVerdict:
    """Apply the acceptance ladder in fixed order; first failure wins.

    1. an advert exists for (coinbase address, prev hash)
    2. the block's coinbase pays the advertised address
    3. the previous block is known
    4. the header hash meets its difficulty target
    5. the non-coinbase tx ids equal the advertised list exactly, in order
    6. the recomputed Merkle root matches the header
    7. every transaction is valid against the parent's UTXO view,
       with no double spends inside the block
    """
    advert = registry.lookup(block.coinbase.coinbase_address, block.header.prev_block_hash)
    if advert is None:
        return ValidationVerdict(Reason.NO_MATCHING_ADVERT)
    if advert.coinbase_address != block.coinbase.coinbase_address:
        return ValidationVerdict(Reason.COINBASE_MISMATCH)
    if not chain.knows(block.header.prev_block_hash):
        return ValidationVerdict(Reason.WRONG_PREV_HASH)
    if not check_pow(block.header):
        return ValidationVerdict(Reason.POW_FAIL)
    if tuple(txid(t) for t in block.transactions) != advert.tx_hashes:
        return ValidationVerdict(Reason.TX_LIST_MISMATCH)
    if merkle_root(block.all_txids()) != block.header.merkle_root:
        return ValidationVerdict(Reason.MERKLE_MISMATCH)
    if not _txs_valid_against_parent(block, chain):
        return ValidationVerdict(Reason.INVALID_TX)
    return ValidationVerdict(Reason.OK)


def validate_block_baseline(block: Block, chain: ChainState) -> ValidationVerdict:
    """The full-block relay rule: no advert conditions, everything else equal."""
    if not chain.knows(block.header.prev_block_hash):
        return ValidationVerdict(Reason.WRONG_PREV_HASH)
    if not check_pow(block.header):
        return ValidationVerdict(Reason.POW_FAIL)
    if merkle_root(block.all_txids()) != block.header.merkle_root:
        return ValidationVerdict(Reason.MERKLE_MISMATCH)
    if not _txs_valid_against_parent(block, chain):
        return ValidationVerdict(Reason.INVALID_TX)
    return ValidationVerdict(Reason.OK)


def _txs_valid_against_parent(block: Block, chain: ChainState) -> bool:
    view = chain.utxo_view_at(block.header.prev_block_hash)
    seen: set[Outpoint] = set()
    for tx in block.transactions:
        if not tx_valid(tx, view):
            return False
        for op in tx.inputs:
            if op in seen:
                return False
            seen.add(op)
    return True


# --- node-level acceptance ----------------------------------------------------


@dataclass(slots=True)
class NodeProtocolState:
    """One node's protocol-side state; the simulator wraps networking around it."""

    address: Address
    chain: ChainState
    mempool: Mempool
    registry: AdvertRegistry
    policy: SelectionPolicy = field(default_factory=SelectionPolicy)
    mines: bool = True


def on_block_accepted(
    state: NodeProtocolState, block: Block
) -> tuple[ChainState, Mempool, Advert | None]:
    """Absorb a validated block and, if this node mines, found the next advert.

    The tip advances (or reorgs) per longest-chain rules; included and
    conflicting transactions leave the pool; transactions from abandoned
    branches return when still valid. The own-block and other-block cases
    are symmetric: any tip change yields a fresh advert on the new tip.
    """
    outcome = state.chain.add_block(block)
    if outcome.kind == "extended":
        state.mempool.apply_block(block)
    elif outcome.kind == "reorged":
        for blk in outcome.added:
            state.mempool.apply_block(blk)
        view = UtxoView(state.chain.utxo)
        for blk in outcome.removed:
            for tx in blk.transactions:
                state.mempool.add(tx, view)
        state.mempool.revalidate(view)

    advert = None
    if outcome.tip_changed:
        state.registry.evict_stale(state.chain.heights, state.chain.height)
        if state.mines:
            advert = make_advert(state.address, state.chain.tip_hash, state.mempool, state.policy)
            state.registry.register(advert)
    return state.chain, state.mempool, advert
