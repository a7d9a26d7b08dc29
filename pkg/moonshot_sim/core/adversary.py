# moonshot_sim/core/adversary.py

"""
Byzantine adversary strategies.

Byzantine validators have no ``ValidatorState``; the adversary speaks for
them. It sees every message honest validators send, remembers the blocks and
certificates those messages carry, and reacts by queueing ``Inject`` events
that the scheduler later executes. It may send anything under a Byzantine
identity but never under an honest one: ``inject_byzantine`` rejects such
messages with ``ForgeryAttempt``.
"""

import logging
from collections import deque
from typing import Deque, Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .config import ADVERSARY_QUEUE_LIMIT, AdversaryStrategy, SimConfig
from .errors import ForgeryAttempt
from .trace import Inject, ScriptEntry
from .types import (
    GENESIS_BLOCK,
    Block,
    BlockId,
    FallbackProposal,
    Message,
    NormalProposal,
    OptimisticProposal,
    QcMsg,
    QuorumCert,
    TcMsg,
    TimeoutCert,
    TimeoutMsg,
    ValidatorId,
    View,
    Vote,
    VoteKind,
    WeakTcMsg,
    encode,
    genesis_qc,
    leader,
    qc_rank,
    quorum_size,
    tc_high_qc,
    validator_count,
)

logger = logging.getLogger(__name__)


def check_authorship(msg: Message, byzantine: Iterable[ValidatorId]) -> None:
    """
    Raises:
        ForgeryAttempt: If ``msg`` claims an honest sender.
    """
    if msg.src not in set(byzantine):
        raise ForgeryAttempt(f"adversary attempted to send as honest validator {msg.src}: {encode(msg)}")


class Knowledge:
    """Blocks and certificates the adversary has observed on the network."""

    def __init__(self, f: int):
        self.f = f
        self.n = validator_count(f)
        self.blocks: Dict[BlockId, Block] = {GENESIS_BLOCK.id: GENESIS_BLOCK}
        genesis = genesis_qc(self.n)
        self.qcs: Dict[Tuple, QuorumCert] = {genesis.key: genesis}
        self.timeouts: Dict[View, Dict[ValidatorId, TimeoutMsg]] = {}
        self.tcs: Dict[View, TimeoutCert] = {}
        self.max_view: View = 1
        # Certificates first seen since the last call to ``fresh``.
        self.new_qcs: List[QuorumCert] = []
        self.new_tcs: List[TimeoutCert] = []

    def learn(self, msg: Message) -> None:
        if isinstance(msg, (NormalProposal, FallbackProposal, OptimisticProposal)):
            self.blocks.setdefault(msg.block.id, msg.block)
            self.max_view = max(self.max_view, msg.view)
        if isinstance(msg, (NormalProposal, FallbackProposal)):
            self._learn_qc(msg.qc)
        if isinstance(msg, FallbackProposal):
            self._learn_tc(msg.tc)
        elif isinstance(msg, QcMsg):
            self._learn_qc(msg.qc)
        elif isinstance(msg, TcMsg):
            self._learn_tc(msg.tc)
        elif isinstance(msg, WeakTcMsg):
            for t in msg.wtc.timeouts:
                self._learn_timeout(t)
        elif isinstance(msg, TimeoutMsg):
            self._learn_timeout(msg)
        elif isinstance(msg, Vote):
            self.max_view = max(self.max_view, msg.view)

    def _learn_qc(self, qc: QuorumCert) -> None:
        if qc.key not in self.qcs:
            self.qcs[qc.key] = qc
            self.new_qcs.append(qc)
        self.max_view = max(self.max_view, qc.view + 1)

    def _learn_tc(self, tc: TimeoutCert) -> None:
        if tc.view not in self.tcs:
            self.tcs[tc.view] = tc
            self.new_tcs.append(tc)
        for t in tc.timeouts:
            self._learn_timeout(t)
        self.max_view = max(self.max_view, tc.view + 1)

    def _learn_timeout(self, t: TimeoutMsg) -> None:
        self._learn_qc(t.high_qc)
        bucket = self.timeouts.setdefault(t.view, {})
        bucket.setdefault(t.author, t)
        if len(bucket) >= quorum_size(self.f) and t.view not in self.tcs:
            chosen = [bucket[a] for a in sorted(bucket)[: quorum_size(self.f)]]
            self.tcs[t.view] = TimeoutCert(t.view, tuple(chosen))
            self.new_tcs.append(self.tcs[t.view])
            self.max_view = max(self.max_view, t.view + 1)

    def fresh(self) -> Tuple[List[QuorumCert], List[TimeoutCert]]:
        qcs, tcs = self.new_qcs, self.new_tcs
        self.new_qcs, self.new_tcs = [], []
        return qcs, tcs

    def high_qc(self) -> QuorumCert:
        return min(self.qcs.values(), key=qc_rank)

    def stale_qcs(self) -> List[QuorumCert]:
        """Known certificates below the highest one, lowest first."""
        top = self.high_qc().view
        return sorted((qc for qc in self.qcs.values() if qc.view < top), key=qc_rank, reverse=True)


class Adversary:
    """Silent Byzantine validators; the base for every other strategy."""

    strategy = AdversaryStrategy.PASSIVE

    def __init__(self, config: SimConfig):
        self.config = config
        self.byzantine: Tuple[ValidatorId, ...] = config.byzantine
        self.honest: Tuple[ValidatorId, ...] = config.honest
        self.n = config.n
        self.knowledge = Knowledge(config.f)
        self.queue: Deque[Inject] = deque(maxlen=ADVERSARY_QUEUE_LIMIT)

    def observe(self, sends: Sequence, step: int, rng: np.random.Generator) -> None:
        """Learns from the messages an event put on the network and queues reactions."""
        observed = [s.msg for s in sends]
        for msg in observed:
            self.knowledge.learn(msg)
        if self.byzantine:
            self.queue.extend(inject_byzantine(self, observed, step, rng))

    def react(self, observed: Sequence[Message], step: int, rng: np.random.Generator) -> List[Inject]:
        return []

    def due(self, step: int) -> Optional[Inject]:
        """An injection that must run at ``step`` regardless of the scheduler's draw."""
        return None

    def has_injection(self) -> bool:
        return bool(self.queue)

    def next_injection(self) -> Inject:
        return self.queue.popleft()

    def _votes(self, kind: VoteKind, block: Block) -> List[Inject]:
        return [Inject(Vote(kind, block.id, block.view, b)) for b in self.byzantine]

    def _leads(self, view: View) -> Optional[ValidatorId]:
        ldr = leader(view, self.n)
        return ldr if ldr in self.byzantine else None


def inject_byzantine(
    adversary: Adversary, observed: Sequence[Message], step: int, rng: np.random.Generator
) -> List[Inject]:
    """
    Asks ``adversary`` for its reaction to ``observed`` and vets the result.

    Raises:
        ForgeryAttempt: If any produced message carries an honest sender.
    """
    injections = adversary.react(observed, step, rng)
    for injection in injections:
        check_authorship(injection.msg, adversary.byzantine)
    if injections:
        logger.debug("Adversary queued %d injection(s) at step %d", len(injections), step)
    return injections


class Equivocator(Adversary):
    """
    Byzantine leaders send two conflicting proposals for every view they lead,
    each to a different part of the honest validators, and every Byzantine
    validator votes for both.

    Every other optimistic pair swaps one sibling for a block extending a stale
    certified block, one at least two views below the proposal just seen and so
    below the lock honest validators hold when they enter the view. Only a
    validator that skips the lock check votes for it.
    """

    strategy = AdversaryStrategy.EQUIVOCATOR

    def __init__(self, config: SimConfig):
        super().__init__(config)
        self._done: Set[Tuple[str, View]] = set()
        self._counter = 0
        self._stale_next = True

    def _pair(self, parent: Block, view: View, ldr: ValidatorId) -> Tuple[Block, Block]:
        self._counter += 1
        tag = f"byz{ldr}.{self._counter}"
        return parent.child(view, tag + "a"), parent.child(view, tag + "b")

    def _split(self, first: Message, second: Message, rng: np.random.Generator) -> List[Inject]:
        order = [int(v) for v in rng.permutation(len(self.honest))]
        cut = max(1, len(order) // 2)
        out = []
        for rank, idx in enumerate(order):
            out.append(Inject(first if rank < cut else second, self.honest[idx]))
        return out

    def stale_parent(self, parent: Block) -> Optional[Block]:
        """Highest ranked known certified block from a view below ``parent.view - 1``."""
        for qc in sorted(self.knowledge.qcs.values(), key=qc_rank):
            if qc.view < parent.view - 1 and qc.block_id in self.knowledge.blocks:
                return self.knowledge.blocks[qc.block_id]
        return None

    def react(self, observed: Sequence[Message], step: int, rng: np.random.Generator) -> List[Inject]:
        out: List[Inject] = []
        for msg in observed:
            if isinstance(msg, (NormalProposal, FallbackProposal, OptimisticProposal)):
                out.extend(self._optimistic(msg.block, rng))
        qcs, tcs = self.knowledge.fresh()
        for qc in sorted(qcs, key=qc_rank):
            out.extend(self._normal(qc, rng))
        for tc in sorted(tcs, key=lambda t: t.view):
            out.extend(self._fallback(tc, rng))
        return out

    def _optimistic(self, parent: Block, rng: np.random.Generator) -> List[Inject]:
        view = parent.view + 1
        ldr = self._leads(view)
        if ldr is None or ("opt:" + parent.id, view) in self._done:
            return []
        self._done.add(("opt:" + parent.id, view))
        a, b = self._pair(parent, view, ldr)
        stale = self.stale_parent(parent) if self._stale_next else None
        self._stale_next = not self._stale_next
        if stale is not None:
            b = stale.child(view, b.payload)
            logger.debug("Equivocator extends stale block %s in view %d", stale.id, view)
        return (
            self._split(OptimisticProposal(a, view, ldr), OptimisticProposal(b, view, ldr), rng)
            + self._votes(VoteKind.OPTIMISTIC, a)
            + self._votes(VoteKind.OPTIMISTIC, b)
        )

    def _normal(self, qc: QuorumCert, rng: np.random.Generator) -> List[Inject]:
        view = qc.view + 1
        ldr = self._leads(view)
        parent = self.knowledge.blocks.get(qc.block_id)
        if ldr is None or parent is None or ("normal", view) in self._done:
            return []
        self._done.add(("normal", view))
        a, b = self._pair(parent, view, ldr)
        return (
            self._split(NormalProposal(a, qc, view, ldr), NormalProposal(b, qc, view, ldr), rng)
            + self._votes(VoteKind.NORMAL, a)
            + self._votes(VoteKind.NORMAL, b)
        )

    def _fallback(self, tc: TimeoutCert, rng: np.random.Generator) -> List[Inject]:
        view = tc.view + 1
        ldr = self._leads(view)
        high = tc_high_qc(tc)
        parent = self.knowledge.blocks.get(high.block_id)
        if ldr is None or parent is None or ("fallback", view) in self._done:
            return []
        self._done.add(("fallback", view))
        a, b = self._pair(parent, view, ldr)
        return (
            self._split(
                FallbackProposal(a, high, tc, view, ldr), FallbackProposal(b, high, tc, view, ldr), rng
            )
            + self._votes(VoteKind.FALLBACK, a)
            + self._votes(VoteKind.FALLBACK, b)
        )


class VoteSplitter(Adversary):
    """
    Byzantine validators vote for every block they see, in every vote kind,
    and answer honest timeouts with timeouts carrying stale locks.
    """

    strategy = AdversaryStrategy.VOTE_SPLITTER

    def __init__(self, config: SimConfig):
        super().__init__(config)
        self._voted: Set[BlockId] = set()
        self._timed_out: Set[View] = set()

    def react(self, observed: Sequence[Message], step: int, rng: np.random.Generator) -> List[Inject]:
        out: List[Inject] = []
        for msg in observed:
            if isinstance(msg, (NormalProposal, FallbackProposal, OptimisticProposal)):
                if msg.block.id in self._voted:
                    continue
                self._voted.add(msg.block.id)
                for kind in VoteKind:
                    out.extend(self._votes(kind, msg.block))
            elif isinstance(msg, TimeoutMsg) and msg.view not in self._timed_out:
                self._timed_out.add(msg.view)
                stale = self.knowledge.stale_qcs()
                lock = stale[int(rng.integers(len(stale)))] if stale else genesis_qc(self.n)
                out.extend(Inject(TimeoutMsg(msg.view, b, lock)) for b in self.byzantine)
        return out


class RandomAdversary(Adversary):
    """Well-formed random messages under Byzantine identities."""

    strategy = AdversaryStrategy.RANDOM

    REACT_PROBABILITY = 0.5

    def __init__(self, config: SimConfig):
        super().__init__(config)
        self._counter = 0

    def react(self, observed: Sequence[Message], step: int, rng: np.random.Generator) -> List[Inject]:
        out: List[Inject] = []
        for _ in observed:
            if rng.random() >= self.REACT_PROBABILITY:
                continue
            msg = self._random_message(rng)
            if msg is None:
                continue
            dst: Optional[ValidatorId] = None
            if rng.random() < 0.5:
                dst = self.honest[int(rng.integers(len(self.honest)))]
            out.append(Inject(msg, dst))
        return out

    def _pick(self, rng: np.random.Generator, items: Sequence):
        return items[int(rng.integers(len(items)))]

    def _random_message(self, rng: np.random.Generator) -> Optional[Message]:
        k = self.knowledge
        author = self._pick(rng, self.byzantine)
        view = max(1, k.max_view + int(rng.integers(-1, 2)))
        blocks = sorted(k.blocks)
        qcs = sorted(k.qcs.values(), key=qc_rank)
        choice = int(rng.integers(5))
        if choice == 0:
            kind = self._pick(rng, list(VoteKind))
            return Vote(kind, self._pick(rng, blocks), view, author)
        if choice == 1:
            return TimeoutMsg(view, author, self._pick(rng, qcs))
        if choice == 2:
            return QcMsg(self._pick(rng, qcs), author)
        ldr = self._leads(view)
        if ldr is None:
            return Vote(VoteKind.NORMAL, self._pick(rng, blocks), view, author)
        self._counter += 1
        payload = f"rnd{ldr}.{self._counter}"
        if choice == 3:
            parent = k.blocks[self._pick(rng, blocks)]
            if parent.view >= view:
                return None
            return OptimisticProposal(parent.child(view, payload), view, ldr)
        qc = self._pick(rng, qcs)
        parent = k.blocks.get(qc.block_id)
        if parent is None or parent.view >= view:
            return None
        return NormalProposal(parent.child(view, payload), qc, view, ldr)


class ScriptedAdversary(Adversary):
    """Replays the injections of a script file at the steps it names."""

    strategy = AdversaryStrategy.SCRIPTED

    def __init__(self, config: SimConfig, entries: Sequence[ScriptEntry]):
        super().__init__(config)
        for _step, injection in entries:
            check_authorship(injection.msg, self.byzantine)
        self.entries: Deque[ScriptEntry] = deque(entries)

    def due(self, step: int) -> Optional[Inject]:
        if self.entries and self.entries[0][0] <= step:
            return self.entries.popleft()[1]
        return None

    def remaining(self) -> List[Inject]:
        return [injection for _step, injection in self.entries]


def make_adversary(config: SimConfig, script: Optional[Sequence[ScriptEntry]] = None) -> Adversary:
    """Builds the adversary named by ``config.adversary_strategy``."""
    strategy = config.adversary_strategy
    if strategy is AdversaryStrategy.SCRIPTED:
        return ScriptedAdversary(config, script or ())
    if strategy is AdversaryStrategy.EQUIVOCATOR:
        return Equivocator(config)
    if strategy is AdversaryStrategy.VOTE_SPLITTER:
        return VoteSplitter(config)
    if strategy is AdversaryStrategy.RANDOM:
        return RandomAdversary(config)
    return Adversary(config)
