# tests/test_adversary.py

import numpy as np
import pytest

from moonshot_sim.core.adversary import (
    Adversary,
    Equivocator,
    RandomAdversary,
    ScriptedAdversary,
    VoteSplitter,
    check_authorship,
    inject_byzantine,
    make_adversary,
)
from moonshot_sim.core.config import ADVERSARY_QUEUE_LIMIT, AdversaryStrategy, SimConfig
from moonshot_sim.core.errors import ForgeryAttempt
from moonshot_sim.core.trace import Inject
from moonshot_sim.core.types import (
    GENESIS_ID,
    NormalProposal,
    OptimisticProposal,
    QcMsg,
    Send,
    TcMsg,
    TimeoutMsg,
    Vote,
    VoteKind,
)

from .conftest import qc_for, tc_for


def _rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


@pytest.fixture
def byz_config():
    return SimConfig(byzantine=(3,), adversary_strategy="equivocator")


def test_forged_sender_is_rejected(gqc):
    with pytest.raises(ForgeryAttempt):
        check_authorship(TimeoutMsg(1, 0, gqc), (3,))
    check_authorship(TimeoutMsg(1, 3, gqc), (3,))


def test_adversary_output_is_vetted(byz_config, gqc):
    class Forger(Adversary):
        def react(self, observed, step, rng):
            return [Inject(TimeoutMsg(1, 0, gqc))]

    with pytest.raises(ForgeryAttempt):
        inject_byzantine(Forger(byz_config), [], 0, _rng())


def test_scripted_adversary_rejects_honest_sender(gqc):
    cfg = SimConfig(byzantine=(3,), adversary_strategy="scripted", script_path="unused.script")
    with pytest.raises(ForgeryAttempt):
        ScriptedAdversary(cfg, [(1, Inject(TimeoutMsg(1, 2, gqc)))])


def test_scripted_adversary_releases_due_entries(gqc):
    cfg = SimConfig(byzantine=(3,), adversary_strategy="scripted", script_path="unused.script")
    first, second = Inject(TimeoutMsg(1, 3, gqc)), Inject(TimeoutMsg(2, 3, gqc))
    adv = ScriptedAdversary(cfg, [(2, first), (5, second)])
    assert adv.due(1) is None
    assert adv.due(3) == first
    assert adv.due(4) is None
    assert adv.remaining() == [second]
    assert adv.due(9) == second


def test_passive_adversary_stays_silent(gqc, b1):
    adv = make_adversary(SimConfig(byzantine=(3,)))
    adv.observe([Send(NormalProposal(b1, gqc, 1, 1))], 0, _rng())
    assert not adv.has_injection()
    assert b1.id in adv.knowledge.blocks


def test_make_adversary_by_strategy():
    for strategy, cls in [
        ("equivocator", Equivocator),
        ("vote_splitter", VoteSplitter),
        ("random", RandomAdversary),
        ("passive", Adversary),
    ]:
        adv = make_adversary(SimConfig(byzantine=(3,), adversary_strategy=strategy))
        assert type(adv) is cls


def test_knowledge_forms_tc_from_observed_timeouts(byz_config, gqc):
    adv = Adversary(byz_config)
    adv.observe([Send(TimeoutMsg(4, a, gqc)) for a in (0, 1, 2)], 0, _rng())
    qcs, tcs = adv.knowledge.fresh()
    assert [tc.view for tc in tcs] == [4]
    assert adv.knowledge.max_view == 5


def _split_targets(injections, cls):
    by_block = {}
    for inj in injections:
        if isinstance(inj.msg, cls):
            by_block.setdefault(inj.msg.block.id, []).append(inj.dst)
    return by_block


def test_equivocator_splits_optimistic_proposals(byz_config, gqc, b1, b2):
    adv = Equivocator(byz_config)
    adv.observe([Send(NormalProposal(b2, qc_for(b1), 2, 2))], 0, _rng(3))
    queued = list(adv.queue)

    targets = _split_targets(queued, OptimisticProposal)
    assert len(targets) == 2
    dsts = [d for ds in targets.values() for d in ds]
    assert sorted(dsts) == [0, 1, 2]
    assert all(ds for ds in targets.values())
    parents = set()
    for inj in queued:
        assert inj.msg.src == 3
        if isinstance(inj.msg, OptimisticProposal):
            assert inj.msg.view == 3
            parents.add(inj.msg.block.parent)
    # The first pair swaps a sibling for a child of the genesis certificate.
    assert parents == {b2.id, GENESIS_ID}

    byz_votes = [inj.msg for inj in queued if isinstance(inj.msg, Vote)]
    assert {v.block_id for v in byz_votes} == set(targets)
    assert {v.kind for v in byz_votes} == {VoteKind.OPTIMISTIC}


def test_stale_branch_reaches_the_larger_group(byz_config, b1, b2):
    adv = Equivocator(byz_config)
    adv.observe([Send(NormalProposal(b2, qc_for(b1), 2, 2))], 0, _rng(5))
    targets = _split_targets(adv.queue, OptimisticProposal)
    stale = [bid for bid, dsts in targets.items() if len(dsts) == 2]
    assert len(stale) == 1
    proposal = next(
        inj.msg for inj in adv.queue
        if isinstance(inj.msg, OptimisticProposal) and inj.msg.block.id == stale[0]
    )
    assert proposal.block.parent == GENESIS_ID


def test_stale_branch_alternates_with_siblings(byz_config, gqc, b1, b2):
    adv = Equivocator(byz_config)
    adv.observe([Send(NormalProposal(b2, qc_for(b1), 2, 2))], 0, _rng())
    adv.queue.clear()
    b6 = b2.child(6, "p6")
    adv.observe([Send(NormalProposal(b6, qc_for(b2), 6, 2))], 1, _rng())
    parents = {
        inj.msg.block.parent for inj in adv.queue if isinstance(inj.msg, OptimisticProposal)
    }
    assert parents == {b6.id}


def test_stale_parent_needs_a_certificate_two_views_back(byz_config, gqc, b1, b2):
    adv = Equivocator(byz_config)
    assert adv.stale_parent(b1) is None
    assert adv.stale_parent(b2).id == GENESIS_ID
    adv.observe(
        [Send(NormalProposal(b1, gqc, 1, 1)), Send(NormalProposal(b2, qc_for(b1), 2, 2))], 0, _rng()
    )
    b4 = b2.child(4, "p4")
    assert adv.stale_parent(b4).id == b1.id


def test_equivocator_acts_once_per_view(byz_config, gqc, b1, b2):
    adv = Equivocator(byz_config)
    proposal = Send(NormalProposal(b2, qc_for(b1), 2, 2))
    adv.observe([proposal], 0, _rng())
    size = len(adv.queue)
    adv.observe([proposal], 1, _rng())
    assert len(adv.queue) == size


def test_equivocator_splits_normal_proposals(byz_config, gqc, b1, b2):
    adv = Equivocator(byz_config)
    adv.observe([Send(NormalProposal(b2, qc_for(b1), 2, 2))], 0, _rng())
    adv.queue.clear()
    adv.observe([Send(QcMsg(qc_for(b2), 0))], 1, _rng())
    targets = _split_targets(adv.queue, NormalProposal)
    assert len(targets) == 2
    assert sorted(d for ds in targets.values() for d in ds) == [0, 1, 2]


def test_equivocator_ignores_views_it_does_not_lead(gqc, b1):
    adv = Equivocator(SimConfig(byzantine=(3,), adversary_strategy="equivocator"))
    adv.observe([Send(NormalProposal(b1, gqc, 1, 1))], 0, _rng())
    assert not adv.has_injection()


def test_vote_splitter_votes_every_kind(gqc, b1):
    adv = VoteSplitter(SimConfig(byzantine=(3,), adversary_strategy="vote_splitter"))
    adv.observe([Send(NormalProposal(b1, gqc, 1, 1))], 0, _rng())
    kinds = sorted(inj.msg.kind.value for inj in adv.queue)
    assert kinds == sorted(k.value for k in VoteKind)
    assert all(inj.msg.author == 3 and inj.msg.block_id == b1.id for inj in adv.queue)


def test_vote_splitter_times_out_with_stale_lock(gqc, b1, b2):
    adv = VoteSplitter(SimConfig(byzantine=(3,), adversary_strategy="vote_splitter"))
    adv.observe([Send(QcMsg(qc_for(b1), 0)), Send(QcMsg(qc_for(b2), 0))], 0, _rng())
    adv.queue.clear()
    adv.observe([Send(TimeoutMsg(3, 0, qc_for(b2)))], 1, _rng())
    (inj,) = adv.queue
    assert inj.msg.author == 3 and inj.msg.view == 3
    assert inj.msg.high_qc.view < 2


def test_random_adversary_only_speaks_as_byzantine(gqc, b1):
    cfg = SimConfig(f=2, byzantine=(2, 5), adversary_strategy="random")
    adv = RandomAdversary(cfg)
    rng = _rng(17)
    for step in range(50):
        adv.observe([Send(NormalProposal(b1, gqc, 1, 1)), Send(TcMsg(tc_for(1), 0))], step, rng)
    assert adv.has_injection()
    assert all(inj.msg.src in (2, 5) for inj in adv.queue)


def test_queue_is_bounded(gqc, b1):
    adv = VoteSplitter(SimConfig(byzantine=(3,), adversary_strategy="vote_splitter"))
    for i in range(ADVERSARY_QUEUE_LIMIT):
        adv.observe([Send(NormalProposal(b1.child(2 + i, f"x{i}"), gqc, 2 + i, 2))], i, _rng())
    assert len(adv.queue) == ADVERSARY_QUEUE_LIMIT
    assert adv.strategy is AdversaryStrategy.VOTE_SPLITTER
