# moonshot_sim/core/block_store.py

"""
Block tree with ancestry queries.

Each honest validator owns one ``BlockTree``; the safety monitor owns another
holding every block proposed during a run. Blocks whose parent has not arrived
yet wait in an orphan buffer, and certificates for blocks not yet stored wait
in a pending map, because the simulated network reorders messages freely.
"""

from __future__ import annotations

import enum
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Set, Tuple

from .errors import MalformedBlock, UnknownBlock
from .types import GENESIS_BLOCK, Block, BlockId, QuorumCert, encode

logger = logging.getLogger(__name__)


class InsertStatus(str, enum.Enum):
    STORED = "stored"
    BUFFERED = "buffered"
    DUPLICATE = "duplicate"


@dataclass(frozen=True)
class InsertResult:
    """
    Outcome of ``BlockTree.insert_block``.

    ``stored`` lists every block that became part of the tree because of this
    insertion, in storage order: the inserted block first, then any orphans
    that were waiting on it.
    """

    status: InsertStatus
    stored: Tuple[Block, ...] = ()


def _check_extends(block: Block, parent: Block) -> None:
    if block.height != parent.height + 1:
        raise MalformedBlock(
            f"Block {block.id} has height {block.height}, expected {parent.height + 1} "
            f"(parent {parent.id})"
        )
    if block.view <= parent.view:
        raise MalformedBlock(
            f"Block {block.id} has view {block.view}, not above parent view {parent.view}"
        )


@dataclass
class BlockTree:
    blocks: Dict[BlockId, Block] = field(default_factory=dict)
    children: Dict[BlockId, Set[BlockId]] = field(default_factory=lambda: defaultdict(set))
    certified: Dict[BlockId, Set[QuorumCert]] = field(default_factory=lambda: defaultdict(set))
    orphans: Dict[BlockId, Dict[BlockId, Block]] = field(default_factory=lambda: defaultdict(dict))
    pending_certified: Dict[BlockId, Set[QuorumCert]] = field(
        default_factory=lambda: defaultdict(set)
    )

    def __post_init__(self) -> None:
        if GENESIS_BLOCK.id not in self.blocks:
            self.blocks[GENESIS_BLOCK.id] = GENESIS_BLOCK

    def __contains__(self, block_id: object) -> bool:
        return block_id in self.blocks

    def __len__(self) -> int:
        return len(self.blocks)

    def get(self, block_id: BlockId) -> Optional[Block]:
        return self.blocks.get(block_id)

    def insert_block(self, block: Block) -> InsertResult:
        """
        Stores ``block`` or buffers it until its parent arrives.

        Args:
            block: The block to insert.

        Returns:
            An ``InsertResult``. Inserting a block that is already stored or
            already buffered is an idempotent no-op.

        Raises:
            MalformedBlock: If the parent is stored and the block's height is
                not parent height + 1 or its view is not above the parent view.
        """
        if block.id in self.blocks:
            return InsertResult(InsertStatus.DUPLICATE)
        parent = self.blocks.get(block.parent)
        if parent is None:
            waiting = self.orphans[block.parent]
            if block.id in waiting:
                return InsertResult(InsertStatus.DUPLICATE)
            waiting[block.id] = block
            logger.debug("Buffered orphan %s waiting for %s", block.id, block.parent)
            return InsertResult(InsertStatus.BUFFERED)
        _check_extends(block, parent)
        stored = [block]
        self._store(block)
        self._flush_orphans(block.id, stored)
        return InsertResult(InsertStatus.STORED, tuple(stored))

    def _store(self, block: Block) -> None:
        self.blocks[block.id] = block
        self.children[block.parent].add(block.id)
        waiting_certs = self.pending_certified.pop(block.id, None)
        if waiting_certs:
            self.certified[block.id].update(waiting_certs)

    def _flush_orphans(self, root_id: BlockId, stored: List[Block]) -> None:
        frontier = [root_id]
        while frontier:
            parent_id = frontier.pop()
            waiting = self.orphans.pop(parent_id, None)
            if not waiting:
                continue
            parent = self.blocks[parent_id]
            for orphan_id in sorted(waiting):
                orphan = waiting[orphan_id]
                try:
                    _check_extends(orphan, parent)
                except MalformedBlock as e:
                    logger.debug("Discarding buffered block: %s", e)
                    continue
                self._store(orphan)
                stored.append(orphan)
                frontier.append(orphan.id)

    def record_certified(self, qc: QuorumCert) -> bool:
        """
        Attaches ``qc`` to the block it certifies.

        Returns:
            True if the block is stored and the certificate was recorded;
            False if the block is unknown, in which case the certificate is
            held back and recorded when the block arrives.
        """
        if qc.block_id not in self.blocks:
            self.pending_certified[qc.block_id].add(qc)
            return False
        self.certified[qc.block_id].add(qc)
        return True

    def certificates(self, block_id: BlockId) -> Set[QuorumCert]:
        return self.certified.get(block_id, set())

    def is_ancestor(self, ancestor: BlockId, descendant: BlockId) -> bool:
        """
        Reflexive ancestry test by walking parent links from ``descendant``.

        Raises:
            UnknownBlock: If either block is not stored.
        """
        top = self.blocks.get(ancestor)
        node = self.blocks.get(descendant)
        if top is None:
            raise UnknownBlock(f"Unknown block {ancestor}")
        if node is None:
            raise UnknownBlock(f"Unknown block {descendant}")
        while node.height > top.height:
            node = self.blocks[node.parent]
        return node.id == top.id

    def path_to_genesis(self, block_id: BlockId) -> Iterator[Block]:
        """Yields the block and each of its ancestors down to genesis."""
        node = self.blocks.get(block_id)
        if node is None:
            raise UnknownBlock(f"Unknown block {block_id}")
        while True:
            yield node
            if node.is_genesis:
                return
            node = self.blocks[node.parent]

    def canonical(self) -> str:
        """Sorted encoding of stored and buffered blocks and certificates."""
        parts = [encode(self.blocks[b]) for b in sorted(self.blocks)]
        orphans = sorted(b for waiting in self.orphans.values() for b in waiting)
        certs = sorted(encode(qc) for qcs in self.certified.values() for qc in qcs)
        pending = sorted(encode(qc) for qcs in self.pending_certified.values() for qc in qcs)
        return "#".join(
            ["|".join(parts), "|".join(orphans), "|".join(certs), "|".join(pending)]
        )
