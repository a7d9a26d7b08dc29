# moonshot_sim/core/validator.py

"""
Honest Pipelined Moonshot replica.

``ValidatorState`` holds one validator's local state and exposes one method
per protocol event. Each public entry point (``start``, ``handle_message``,
``timer_expire_event``) runs to completion and returns the messages the
validator sent while handling the event.

Handler order inside composite events is fixed: embedded certificates are
processed first (lock, then commit, then view advancement), then the vote,
then the optimistic proposal for the next view.

Mutations (see ``config.Mutation``) each switch off exactly one guard or
threshold so that the safety monitor can be shown to catch unsafe variants.
"""

from __future__ import annotations

import json
import logging
from typing import Dict, List, Optional, Set, Tuple, Union

from .block_store import BlockTree, InsertStatus
from .config import Mutation
from .errors import MalformedBlock
from .types import (
    GENESIS_ID,
    NO_VIEW,
    Block,
    BlockId,
    FallbackProposal,
    Message,
    NormalProposal,
    OptimisticProposal,
    QcMsg,
    QuorumCert,
    Send,
    TcMsg,
    TimeoutCert,
    TimeoutMsg,
    ValidatorId,
    View,
    Vote,
    VoteKind,
    WeakTcMsg,
    WeakTimeoutCert,
    encode,
    genesis_qc,
    leader,
    qc_rank,
    quorum_size,
    tc_high_qc,
    validate_qc,
    validate_tc,
    validate_weak_tc,
    validator_count,
    weak_quorum_size,
)

logger = logging.getLogger(__name__)

Certificate = Union[QuorumCert, TimeoutCert]
TimeoutEvidence = Union[TimeoutCert, WeakTimeoutCert]


class ValidatorState:
    """
    Local state of one honest validator.

    Attributes follow the protocol's own vocabulary: ``r_c`` is the current
    view, ``lock`` the highest-view certificate seen, ``t_l`` the highest view
    a timeout was sent for, ``t_r`` whether the current view's timer has
    expired, ``a_n``/``a_o``/``a_f`` the latest views with a normal,
    optimistic, or fallback vote sent, and ``b_o`` the block optimistically
    voted in ``r_c``.
    """

    def __init__(self, vid: ValidatorId, f: int, mutation: Optional[Mutation] = None):
        self.id: ValidatorId = vid
        self.f = f
        self.n = validator_count(f)
        self.mutation = mutation
        self.qc_quorum = (
            weak_quorum_size(f) if mutation is Mutation.WEAK_QUORUM else quorum_size(f)
        )

        self.r_c: View = 1
        self.lock: QuorumCert = genesis_qc(self.n)
        self.t_l: View = NO_VIEW
        self.t_r: bool = False
        self.a_n: View = NO_VIEW
        self.a_o: View = NO_VIEW
        self.a_f: View = NO_VIEW
        self.b_o: Optional[BlockId] = None

        self.possessed_normal_for_round: Set[View] = set()
        self.possessed_fallback_for_round: Set[View] = set()
        self.possessed_optimistic_for_round: Set[View] = set()

        self.vote_pool: Dict[Tuple, Set[ValidatorId]] = {}
        self.formed_qcs: Set[Tuple] = set()
        self.timeout_pool: Dict[View, Dict[ValidatorId, TimeoutMsg]] = {}

        self.tree = BlockTree()
        self.tree.record_certified(self.lock)
        self.processed_qcs: Set[Tuple] = {self.lock.key}
        self.committed: List[BlockId] = [GENESIS_ID]
        self.committed_set: Set[BlockId] = {GENESIS_ID}
        self.directly_committed: Set[BlockId] = set()
        self.pending_commits: Dict[BlockId, None] = {}

        self.entry_cert: Certificate = self.lock
        self.pending_optimistic: Dict[View, OptimisticProposal] = {}
        self.deferred_proposal: Optional[Tuple[View, Certificate]] = None
        self.own_optimistic: Dict[View, Block] = {}
        self.proposed_views: Set[View] = set()
        self.payload_counter = 0

        self.outbox: List[Send] = []
        # Append-only logs read by the safety monitor at event boundaries.
        self.qc_log: List[QuorumCert] = []
        self.direct_commit_log: List[Tuple[BlockId, View]] = []

    # ------------------------------------------------------------------
    # Event entry points
    # ------------------------------------------------------------------

    def start(self) -> List[Send]:
        """Bootstraps view 1; its leader proposes on top of the genesis certificate."""
        self.outbox = []
        if self.id == leader(self.r_c, self.n):
            self.propose_normal()
        return self._drain()

    def handle_message(self, m: Message) -> List[Send]:
        """
        Dispatches ``m`` to the matching protocol handler.

        Returns:
            Every message sent while handling ``m``.
        """
        self.outbox = []
        if isinstance(m, NormalProposal):
            if self._from_leader(m.block, m.view, m.src):
                self.normal_proposal_processing(m.block, m.qc, m.src)
        elif isinstance(m, FallbackProposal):
            if self._from_leader(m.block, m.view, m.src):
                self.fallback_proposal_processing(m.block, m.qc, m.tc, m.src)
        elif isinstance(m, OptimisticProposal):
            if self._from_leader(m.block, m.view, m.src):
                self.optimistic_proposal_processing(m.block, m.src)
        elif isinstance(m, Vote):
            self.accumulate_vote(m)
        elif isinstance(m, TimeoutMsg):
            self.accumulate_timeout(m)
        elif isinstance(m, QcMsg):
            self.qc_processing(m.qc)
        elif isinstance(m, TcMsg):
            self.tc_processing(m.tc)
        elif isinstance(m, WeakTcMsg):
            if validate_weak_tc(m.wtc, self.f, self.qc_quorum):
                self.timeout_sync(m.wtc.view, m.wtc)
            else:
                logger.debug("v%d dropped invalid weak TC %s", self.id, encode(m.wtc))
        else:
            logger.debug("v%d dropped unknown message %r", self.id, m)
        return self._drain()

    def timer_expire_event(self) -> List[Send]:
        """Fires the local view timer and returns the timeout it sends, if any."""
        self.outbox = []
        self.timer_expire()
        return self._drain()

    def _drain(self) -> List[Send]:
        sent, self.outbox = self.outbox, []
        return sent

    def _from_leader(self, block: Block, view: View, src: ValidatorId) -> bool:
        if block.view != view or src != leader(view, self.n):
            logger.debug("v%d dropped proposal for view %d from v%d", self.id, view, src)
            return False
        return True

    def _send(self, msg: Message, dst: Optional[ValidatorId] = None) -> None:
        self.outbox.append(Send(msg, dst))

    # ------------------------------------------------------------------
    # Certificates, lock and commit
    # ------------------------------------------------------------------

    def qc_processing(self, qc: QuorumCert) -> None:
        """
        Adopts a certificate as the lock if it is higher, checks it for
        direct commits and enters view ``qc.view + 1`` if that is ahead.

        Args:
            qc: Any certificate seen locally; invalid ones are dropped.
        """
        if not validate_qc(qc, self.f, self.qc_quorum):
            logger.debug("v%d dropped invalid QC %s", self.id, encode(qc))
            return
        if qc.view > self.lock.view:
            self.lock = qc
        if qc.key not in self.processed_qcs:
            self.processed_qcs.add(qc.key)
            self.qc_log.append(qc)
            self.tree.record_certified(qc)
            self._try_direct_commit(qc.block_id)
            self._flush_commits()
        if qc.view >= self.r_c:
            self.advance_view(qc.view + 1, qc)

    def _adjacent(self, parent_view: View, child_view: View) -> bool:
        if self.mutation is Mutation.NON_ADJACENT_COMMIT:
            return child_view > parent_view
        return child_view == parent_view + 1

    def _commit_view(self, parent_id: BlockId, child_id: BlockId) -> Optional[View]:
        """View of the parent's certificate that directly commits it, if any."""
        child_qcs = self.tree.certificates(child_id)
        if not child_qcs:
            return None
        for pqc in sorted(self.tree.certificates(parent_id), key=qc_rank, reverse=True):
            if any(self._adjacent(pqc.view, cqc.view) for cqc in child_qcs):
                return pqc.view
        return None

    def _try_direct_commit(self, block_id: BlockId) -> None:
        block = self.tree.get(block_id)
        if block is None:
            return
        if not block.is_genesis:
            view = self._commit_view(block.parent, block.id)
            if view is not None:
                self._direct_commit(block.parent, view)
        for child_id in sorted(self.tree.children.get(block.id, ())):
            view = self._commit_view(block.id, child_id)
            if view is not None:
                self._direct_commit(block.id, view)

    def _direct_commit(self, block_id: BlockId, view: View) -> None:
        if block_id == GENESIS_ID or block_id in self.directly_committed:
            return
        self.directly_committed.add(block_id)
        self.direct_commit_log.append((block_id, view))
        if block_id not in self.committed_set:
            self.pending_commits[block_id] = None

    def _flush_commits(self) -> None:
        """Commits pending targets together with all of their uncommitted ancestors."""
        for target in list(self.pending_commits):
            if target in self.committed_set:
                del self.pending_commits[target]
                continue
            if target not in self.tree:
                continue
            path: List[BlockId] = []
            for block in self.tree.path_to_genesis(target):
                if block.id in self.committed_set:
                    break
                path.append(block.id)
            for block_id in reversed(path):
                self.committed.append(block_id)
                self.committed_set.add(block_id)
            del self.pending_commits[target]
            logger.debug("v%d committed %s (chain length %d)", self.id, target, len(self.committed))

    # ------------------------------------------------------------------
    # Views and proposals
    # ------------------------------------------------------------------

    def advance_view(self, to_view: View, via: Certificate) -> None:
        """
        Enters ``to_view`` and forwards the certificate that justifies it.

        Args:
            to_view: Target view; ignored unless above ``r_c``.
            via: A QC (multicast) or TC (sent to the new leader only).
        """
        if to_view <= self.r_c:
            return
        self.r_c = to_view
        self.t_r = False
        self.b_o = None
        self.entry_cert = via
        self.deferred_proposal = None
        if isinstance(via, QuorumCert):
            self._send(QcMsg(via, self.id))
        else:
            self._send(TcMsg(via, self.id), dst=leader(to_view, self.n))
        for stale in [v for v in self.pending_optimistic if v < to_view]:
            del self.pending_optimistic[stale]

        if self.id == leader(to_view, self.n):
            if isinstance(via, QuorumCert):
                self.propose_normal()
            else:
                self.propose_fallback(via)

        buffered = self.pending_optimistic.pop(to_view, None)
        if buffered is not None:
            self.optimistic_proposal_processing(buffered.block, buffered.src)

    def _new_payload(self) -> str:
        self.payload_counter += 1
        return f"v{self.id}.{self.payload_counter}"

    def _block_for(self, parent: Block) -> Block:
        reused = self.own_optimistic.get(self.r_c)
        if reused is not None and reused.parent == parent.id:
            return reused
        return parent.child(self.r_c, self._new_payload())

    def propose_normal(self) -> None:
        """Leader only: proposes on the entry QC, or defers until its block arrives."""
        qc = self.entry_cert
        if not isinstance(qc, QuorumCert) or self.r_c in self.proposed_views:
            return
        parent = self.tree.get(qc.block_id)
        if parent is None:
            self.deferred_proposal = (self.r_c, qc)
            return
        block = self._block_for(parent)
        self.proposed_views.add(self.r_c)
        self._send(NormalProposal(block, qc, self.r_c, self.id))

    def propose_fallback(self, tc: TimeoutCert) -> None:
        """
        Leader only: proposes on the highest certificate inside ``tc``.

        Args:
            tc: The timeout certificate the view was entered with.
        """
        if self.r_c in self.proposed_views:
            return
        high = tc_high_qc(tc)
        parent = self.tree.get(high.block_id)
        if parent is None:
            self.deferred_proposal = (self.r_c, tc)
            return
        block = self._block_for(parent)
        self.proposed_views.add(self.r_c)
        self._send(FallbackProposal(block, high, tc, self.r_c, self.id))

    def optimistic_propose_next(self, voted_block: Block) -> None:
        """
        Proposes a child of ``voted_block`` for the next view if this
        validator leads it, at most once per view.
        """
        next_view = voted_block.view + 1
        if self.id != leader(next_view, self.n) or next_view in self.own_optimistic:
            return
        block = voted_block.child(next_view, self._new_payload())
        self.own_optimistic[next_view] = block
        self._send(OptimisticProposal(block, next_view, self.id))

    def _insert(self, block: Block) -> bool:
        try:
            result = self.tree.insert_block(block)
        except MalformedBlock as e:
            logger.debug("v%d discarded block: %s", self.id, e)
            return False
        if result.status is InsertStatus.STORED:
            for stored in result.stored:
                self._on_block_stored(stored)
            self._flush_commits()
        return True

    def _on_block_stored(self, block: Block) -> None:
        self._try_direct_commit(block.id)
        if self.deferred_proposal is None:
            return
        view, cert = self.deferred_proposal
        wanted = cert.block_id if isinstance(cert, QuorumCert) else tc_high_qc(cert).block_id
        if view == self.r_c and wanted == block.id:
            self.deferred_proposal = None
            if isinstance(cert, QuorumCert):
                self.propose_normal()
            else:
                self.propose_fallback(cert)

    # ------------------------------------------------------------------
    # Voting
    # ------------------------------------------------------------------

    def _vote(self, kind: VoteKind, block: Block) -> None:
        self._send(Vote(kind, block.id, self.r_c, self.id))

    def _has_not_voted(self, view: View) -> bool:
        return self.a_n < view and self.a_o < view and self.a_f < view

    def optimistic_proposal_processing(self, b: Block, src: ValidatorId) -> None:
        """
        Handles an optimistic proposal.

        Proposals for a future view are buffered until the view is entered.
        The vote requires the lock to be a view r_c-1 certificate for the
        parent and no timeout for the previous view.

        Args:
            b: The proposed block.
            src: Sender; must lead ``b.view``.
        """
        if src != leader(b.view, self.n) or not self._insert(b):
            return
        if b.view > self.r_c:
            self.pending_optimistic.setdefault(b.view, OptimisticProposal(b, b.view, src))
            return
        if b.view < self.r_c or b.view in self.possessed_optimistic_for_round:
            return
        view = self.r_c
        self.possessed_optimistic_for_round.add(view)

        timeout_ok = self.mutation is Mutation.NO_TIMEOUT_GUARD or self.t_l < view - 1
        lock_ok = self.mutation is Mutation.NO_LOCK_CHECK or (
            self.lock.block_id == b.parent and self.lock.view == view - 1
        )
        if timeout_ok and lock_ok and self._has_not_voted(view):
            self._vote(VoteKind.OPTIMISTIC, b)
            self.a_o = view
            self.b_o = b.id
            self.optimistic_propose_next(b)

    def send_prepare_n_condition(self, b: Block, qc: QuorumCert) -> bool:
        """
        Returns:
            True iff a normal vote for ``b`` justified by ``qc`` is allowed in
            the current view.
        """
        view = self.r_c
        equivocation_ok = (
            self.mutation is Mutation.NO_EQUIVOCATION_GUARD
            or self.a_o < view
            or self.b_o == b.id
        )
        return (
            b.view == view
            and self.a_f < view
            and self.t_l < view
            and equivocation_ok
            and self.a_n < view
            and qc.block_id == b.parent
            and qc.view + 1 == view
        )

    def normal_proposal_processing(self, b: Block, qc: QuorumCert, src: ValidatorId) -> None:
        """
        Handles a normal proposal: processes its QC, then votes once per view.

        Args:
            b: The proposed block.
            qc: Certificate for ``b``'s parent from the previous view.
            src: Sender; must lead ``b.view``.
        """
        if src != leader(b.view, self.n) or qc.block_id != b.parent:
            return
        if not validate_qc(qc, self.f, self.qc_quorum) or not self._insert(b):
            return
        if qc.key not in self.processed_qcs or qc.view >= self.r_c:
            self.qc_processing(qc)
        if b.view != self.r_c or self.t_r or b.view in self.possessed_normal_for_round:
            return
        self.possessed_normal_for_round.add(self.r_c)
        if self.send_prepare_n_condition(b, qc):
            self._vote(VoteKind.NORMAL, b)
            self.a_n = self.r_c
            if self.b_o != b.id:
                self.optimistic_propose_next(b)

    def fallback_proposal_processing(
        self, b: Block, qc: QuorumCert, tc: TimeoutCert, src: ValidatorId
    ) -> None:
        """
        Handles a fallback proposal built on a timeout certificate.

        Args:
            b: The proposed block; must extend the highest QC inside ``tc``.
            qc: That highest QC.
            tc: Timeout certificate for ``b.view - 1``.
            src: Sender; must lead ``b.view``.
        """
        if src != leader(b.view, self.n) or tc.view + 1 != b.view:
            return
        if not validate_tc(tc, self.f, self.qc_quorum) or not validate_qc(qc, self.f, self.qc_quorum):
            return
        if not self._insert(b):
            return
        self.tc_processing(tc)
        self.qc_processing(qc)
        if b.view != self.r_c or b.view in self.possessed_fallback_for_round:
            return
        view = self.r_c
        self.possessed_fallback_for_round.add(view)
        high = tc_high_qc(tc)
        extends_high = (
            qc.view == high.view and qc.block_id == high.block_id and b.parent == high.block_id
        )
        if extends_high and self.t_l < view and self.a_n < view and self.a_f < view:
            self._vote(VoteKind.FALLBACK, b)
            self.a_f = view
            self.optimistic_propose_next(b)

    def accumulate_vote(self, v: Vote) -> None:
        """Pools ``v`` and forms a QC once the quorum is reached."""
        if not 0 <= v.author < self.n:
            logger.debug("v%d dropped vote with author %d", self.id, v.author)
            return
        if self.mutation is Mutation.MIXED_QC_KINDS:
            key: Tuple = (v.view, v.block_id)
        else:
            key = (v.view, v.kind.value, v.block_id)
        pool = self.vote_pool.setdefault(key, set())
        if v.author in pool:
            return
        pool.add(v.author)
        if len(pool) == self.qc_quorum and key not in self.formed_qcs:
            self.formed_qcs.add(key)
            self.qc_processing(QuorumCert(v.view, v.block_id, v.kind, tuple(pool)))

    # ------------------------------------------------------------------
    # Timeouts
    # ------------------------------------------------------------------

    def timer_expire(self) -> None:
        self.t_r = True
        if self.t_l < self.r_c:
            self._send(TimeoutMsg(self.r_c, self.id, self.lock))
            self.t_l = self.r_c

    def timeout_sync(self, view: View, evidence: TimeoutEvidence) -> None:
        """
        Joins a timeout others started.

        Args:
            view: The view being timed out; ignored below ``r_c``.
            evidence: The weak TC or TC that shows f+1 validators timed out.
        """
        if view < self.r_c or self.t_l >= view:
            return
        self._send(TimeoutMsg(view, self.id, self.lock))
        self.t_l = view

    def accumulate_timeout(self, t: TimeoutMsg) -> None:
        """
        Pools ``t``; f+1 timeouts trigger a timeout of our own and 2f+1
        form a TC.
        """
        if not 0 <= t.author < self.n or not validate_qc(t.high_qc, self.f, self.qc_quorum):
            logger.debug("v%d dropped malformed timeout %s", self.id, encode(t))
            return
        bucket = self.timeout_pool.setdefault(t.view, {})
        if t.author in bucket:
            return
        bucket[t.author] = t
        count = len(bucket)
        if count == weak_quorum_size(self.f):
            self.timeout_sync(t.view, WeakTimeoutCert(t.view, tuple(bucket.values())))
        if count == quorum_size(self.f):
            self.tc_processing(TimeoutCert(t.view, tuple(bucket.values())))

    def tc_processing(self, tc: TimeoutCert) -> None:
        """
        Adopts a TC: locks its highest certificate, times out the view and
        enters ``tc.view + 1``.
        """
        if not validate_tc(tc, self.f, self.qc_quorum):
            logger.debug("v%d dropped invalid TC for view %d", self.id, tc.view)
            return
        self.qc_processing(tc_high_qc(tc))
        self.timeout_sync(tc.view, tc)
        if tc.view >= self.r_c:
            self.advance_view(tc.view + 1, tc)

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    def snapshot(self) -> str:
        """Canonical encoding of the full local state (outbox excluded)."""
        entry = self.entry_cert
        data = {
            "id": self.id,
            "r_c": self.r_c,
            "lock": encode(self.lock),
            "t_l": self.t_l,
            "t_r": self.t_r,
            "a": [self.a_n, self.a_o, self.a_f],
            "b_o": self.b_o,
            "possessed": [
                sorted(self.possessed_normal_for_round),
                sorted(self.possessed_fallback_for_round),
                sorted(self.possessed_optimistic_for_round),
            ],
            "votes": sorted(
                [list(map(str, k)), sorted(authors)] for k, authors in self.vote_pool.items()
            ),
            "timeouts": sorted(
                [view, sorted(encode(t) for t in bucket.values())]
                for view, bucket in self.timeout_pool.items()
            ),
            "tree": self.tree.canonical(),
            "processed": sorted(list(map(str, k)) for k in self.processed_qcs),
            "committed": self.committed,
            "pending_commits": list(self.pending_commits),
            "entry": encode(entry),
            "pending_opt": sorted(encode(p) for p in self.pending_optimistic.values()),
            "deferred": None
            if self.deferred_proposal is None
            else [self.deferred_proposal[0], encode(self.deferred_proposal[1])],
            "own_opt": sorted(encode(b) for b in self.own_optimistic.values()),
            "proposed": sorted(self.proposed_views),
            "payloads": self.payload_counter,
        }
        return json.dumps(data, sort_keys=True, separators=(",", ":"))
