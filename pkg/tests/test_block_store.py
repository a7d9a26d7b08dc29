# tests/test_block_store.py

import random

import pytest

from moonshot_sim.core.block_store import BlockTree, InsertStatus
from moonshot_sim.core.errors import MalformedBlock, UnknownBlock
from moonshot_sim.core.types import GENESIS_BLOCK, GENESIS_ID, Block

from .conftest import qc_for


def test_new_tree_holds_only_genesis():
    tree = BlockTree()
    assert len(tree) == 1
    assert GENESIS_ID in tree


def test_insert_child_of_genesis(b1):
    tree = BlockTree()
    result = tree.insert_block(b1)
    assert result.status is InsertStatus.STORED
    assert result.stored == (b1,)
    assert tree.get(b1.id) == b1


def test_insert_is_idempotent(b1):
    tree = BlockTree()
    tree.insert_block(b1)
    assert tree.insert_block(b1).status is InsertStatus.DUPLICATE
    assert len(tree) == 2


def test_orphan_waits_for_parent(b1, b2):
    tree = BlockTree()
    assert tree.insert_block(b2).status is InsertStatus.BUFFERED
    assert b2.id not in tree
    assert tree.insert_block(b2).status is InsertStatus.DUPLICATE

    result = tree.insert_block(b1)
    assert result.stored == (b1, b2)
    assert tree.is_ancestor(b1.id, b2.id)


def test_wrong_height_is_rejected(b1):
    tree = BlockTree()
    tree.insert_block(b1)
    with pytest.raises(MalformedBlock):
        tree.insert_block(Block(b1.height + 2, 5, b1.id, "bad"))


def test_view_must_increase(b1):
    tree = BlockTree()
    tree.insert_block(b1)
    with pytest.raises(MalformedBlock):
        tree.insert_block(b1.child(b1.view, "same-view"))


def test_malformed_orphan_is_discarded_on_flush(b1):
    tree = BlockTree()
    bad = Block(5, 9, b1.id, "bad")
    assert tree.insert_block(bad).status is InsertStatus.BUFFERED
    assert tree.insert_block(b1).stored == (b1,)
    assert bad.id not in tree


def test_is_ancestor_examples(b1, b2):
    tree = BlockTree()
    tree.insert_block(b1)
    tree.insert_block(b2)
    sibling = b1.child(3, "sibling")
    tree.insert_block(sibling)

    assert tree.is_ancestor(GENESIS_ID, b2.id)
    assert tree.is_ancestor(b2.id, b2.id)
    assert not tree.is_ancestor(b2.id, b1.id)
    assert not tree.is_ancestor(b2.id, sibling.id)


def test_is_ancestor_unknown_block(b1):
    tree = BlockTree()
    with pytest.raises(UnknownBlock):
        tree.is_ancestor(GENESIS_ID, b1.id)
    with pytest.raises(UnknownBlock):
        tree.is_ancestor(b1.id, GENESIS_ID)


def test_path_to_genesis(b1, b2):
    tree = BlockTree()
    tree.insert_block(b1)
    tree.insert_block(b2)
    assert [b.id for b in tree.path_to_genesis(b2.id)] == [b2.id, b1.id, GENESIS_ID]


def test_certificate_waits_for_its_block(b1):
    tree = BlockTree()
    qc = qc_for(b1)
    assert not tree.record_certified(qc)
    assert tree.certificates(b1.id) == set()
    tree.insert_block(b1)
    assert tree.certificates(b1.id) == {qc}


def test_canonical_is_insertion_order_independent(b1, b2):
    first, second = BlockTree(), BlockTree()
    for block in (b1, b2):
        first.insert_block(block)
    for block in (b2, b1):
        second.insert_block(block)
    assert first.canonical() == second.canonical()


def _random_tree(rng: random.Random, size: int):
    blocks = [GENESIS_BLOCK]
    for i in range(size):
        parent = rng.choice(blocks)
        blocks.append(parent.child(parent.view + rng.randint(1, 3), f"r{i}"))
    return blocks


def _check_ancestry(seed: int):
    rng = random.Random(seed)
    blocks = _random_tree(rng, 14)
    by_id = {b.id: b for b in blocks}

    tree = BlockTree()
    shuffled = blocks[1:]
    rng.shuffle(shuffled)
    for block in shuffled:
        tree.insert_block(block)
    assert len(tree) == len(blocks)

    def oracle(a, d):
        node = by_id[d]
        while True:
            if node.id == a:
                return True
            if node.is_genesis:
                return False
            node = by_id[node.parent]

    for a in blocks:
        for d in blocks:
            assert tree.is_ancestor(a.id, d.id) == oracle(a.id, d.id)


@pytest.mark.parametrize("seed", range(40))
def test_is_ancestor_matches_parent_walk(seed):
    _check_ancestry(seed)


@pytest.mark.slow
def test_is_ancestor_matches_parent_walk_on_a_thousand_trees():
    for seed in range(40, 1000):
        _check_ancestry(seed)
