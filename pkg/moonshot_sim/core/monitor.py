# moonshot_sim/core/monitor.py

"""
Global safety monitor.

The monitor is an omniscient observer of a simulation. It records every
message an honest validator sends, every block and certificate seen anywhere
on the network, and every direct commit the validators perform. After each
event it checks the safety property (committed chains never diverge)
together with the supporting invariants that imply it.

The ``check_*`` functions are pure: they read a ``GlobalLedger`` and the
honest validator states and return a ``Violation`` or None. ``SafetyMonitor``
maintains the ledger incrementally and runs the checks on what changed at
each step, so the first violating step is pinpointed.

A certificate enters the ledger when an honest validator vouches for it: it
formed or processed it, sent it, or it rides inside a timeout an honest
validator really sent. Certificates that only Byzantine validators vouch for
are recorded only if they are well formed at the full 2f+1 threshold and
every honest signer really cast the matching vote; anything else is what
honest validators reject on receipt, so it is ignored.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

from .block_store import BlockTree
from .errors import MalformedBlock, UnknownBlock
from .types import (
    FallbackProposal,
    Message,
    NormalProposal,
    OptimisticProposal,
    QcMsg,
    QuorumCert,
    Send,
    TcMsg,
    TimeoutMsg,
    ValidatorId,
    View,
    Vote,
    VoteKind,
    WeakTcMsg,
    Block,
    BlockId,
    encode,
    validate_qc,
    validate_tc,
    validate_weak_tc,
)
from .validator import ValidatorState

logger = logging.getLogger(__name__)

States = Mapping[ValidatorId, ValidatorState]

# Check names as they appear in violation reports.
VERIFY_QUORUM = "verify_quorum"
BLOCKCHAIN_PREFIX = "blockchain_prefix"
QUORUM_AFTER_LDC_DESCENDANT = "quorum_after_ldc_descendant"
ANCESTOR_CLOSURE = "all_ancestors_committed"
COMMITTED_BLOCKS_ANCESTORS = "committed_blocks_ancestors"
VOTE_BUDGET = "vote_budget"
CERTIFICATE_UNIQUENESS = "certificate_uniqueness"
NORMAL_VOTE_JUSTIFIED = "normal_vote_justified"
TIMEOUT_EVIDENCE = "timeout_evidence"
VALIDATOR_INVARIANTS = "validator_invariants"


@dataclass(frozen=True)
class Violation:
    kind: str
    step: int
    detail: str

    def render(self) -> str:
        return f"VIOLATION kind={self.kind} step={self.step} detail={self.detail}"


@dataclass
class GlobalLedger:
    """Append-only record of honest sends and of every certificate observed."""

    honest: Tuple[ValidatorId, ...]
    sent_votes: Set[Vote] = field(default_factory=set)
    sent_timeouts: Set[TimeoutMsg] = field(default_factory=set)
    certified: Dict[Tuple[View, str], Dict[BlockId, QuorumCert]] = field(
        default_factory=lambda: defaultdict(dict)
    )
    direct_commits: Set[Tuple[ValidatorId, BlockId, View]] = field(default_factory=set)
    global_tree: BlockTree = field(default_factory=BlockTree)
    warnings: List[str] = field(default_factory=list)

    def add_block(self, block: Block) -> None:
        try:
            self.global_tree.insert_block(block)
        except MalformedBlock as e:
            logger.debug("Monitor ignored malformed block: %s", e)

    def add_certificate(self, qc: QuorumCert) -> bool:
        """Returns True if this (view, kind, block) was not certified before."""
        bucket = self.certified[(qc.view, qc.kind.value)]
        if qc.block_id in bucket:
            return False
        bucket[qc.block_id] = qc
        self.global_tree.record_certified(qc)
        return True

    def certified_blocks(self) -> Iterable[Tuple[View, BlockId]]:
        for (view, _kind), bucket in sorted(self.certified.items()):
            for block_id in sorted(bucket):
                yield view, block_id


def _is_ancestor(tree: BlockTree, a: BlockId, d: BlockId) -> Optional[bool]:
    try:
        return tree.is_ancestor(a, d)
    except UnknownBlock:
        return None


def verify_quorum(ledger: GlobalLedger, qc: QuorumCert) -> bool:
    """True iff every honest signer of ``qc`` really sent the matching vote."""
    if qc.is_genesis():
        return True
    honest = set(ledger.honest)
    return all(
        Vote(qc.kind, qc.block_id, qc.view, signer) in ledger.sent_votes
        for signer in qc.signers
        if signer in honest
    )


def check_blockchain_prefix(ledger: GlobalLedger, states: States, step: int = 0) -> Optional[Violation]:
    """Every pair of honest committed chains is prefix-related."""
    chains = sorted(
        ((vid, st.committed) for vid, st in states.items()), key=lambda item: (-len(item[1]), item[0])
    )
    if not chains:
        return None
    longest_id, longest = chains[0]
    for vid, chain in chains[1:]:
        if longest[: len(chain)] != chain:
            return Violation(
                BLOCKCHAIN_PREFIX,
                step,
                f"v{vid}={list(chain)} v{longest_id}={list(longest)}",
            )
    return None


def check_quorum_after_ldc_descendant(ledger: GlobalLedger, step: int = 0) -> Optional[Violation]:
    """Every block certified after a direct commit's view descends from the committed block."""
    commits = sorted({(block_id, view) for _vid, block_id, view in ledger.direct_commits})
    certified = list(ledger.certified_blocks())
    for block_id, view in commits:
        for cert_view, cert_block in certified:
            if cert_view <= view:
                continue
            if _is_ancestor(ledger.global_tree, block_id, cert_block) is False:
                return Violation(
                    QUORUM_AFTER_LDC_DESCENDANT,
                    step,
                    f"committed={block_id}@{view} certified={cert_block}@{cert_view}",
                )
    return None


def _lookup(ledger: GlobalLedger, st: ValidatorState, block_id: BlockId) -> Optional[Block]:
    return ledger.global_tree.get(block_id) or st.tree.get(block_id)


def check_ancestor_closure(ledger: GlobalLedger, states: States, step: int = 0) -> Optional[Violation]:
    """Each honest validator's committed set contains every ancestor of its members."""
    for vid, st in sorted(states.items()):
        committed = set(st.committed)
        for block_id in st.committed:
            block = _lookup(ledger, st, block_id)
            if block is None or block.is_genesis:
                continue
            if block.parent not in committed:
                return Violation(
                    ANCESTOR_CLOSURE,
                    step,
                    f"v{vid} committed {block_id} without its parent {block.parent}",
                )
    return None


def check_committed_blocks_ancestors(
    ledger: GlobalLedger, states: States, step: int = 0
) -> Optional[Violation]:
    """Each honest validator's committed blocks are totally ordered by ancestry."""
    for vid, st in sorted(states.items()):
        blocks = [b for b in (_lookup(ledger, st, bid) for bid in st.committed) if b is not None]
        blocks.sort(key=lambda b: (b.height, b.id))
        for lower, upper in zip(blocks, blocks[1:]):
            tree = ledger.global_tree if upper.id in ledger.global_tree else st.tree
            if _is_ancestor(tree, lower.id, upper.id) is False:
                return Violation(
                    COMMITTED_BLOCKS_ANCESTORS,
                    step,
                    f"v{vid} committed unrelated blocks {lower.id} and {upper.id}",
                )
    return None


def _vote_budget_problem(votes: Iterable[Vote]) -> Optional[str]:
    optimistic = [v for v in votes if v.kind is VoteKind.OPTIMISTIC]
    regular = [v for v in votes if v.kind is not VoteKind.OPTIMISTIC]
    if len(optimistic) > 1:
        return "more than one optimistic vote"
    if len(regular) > 1:
        return "more than one normal/fallback vote"
    if optimistic and regular and regular[0].kind is VoteKind.NORMAL:
        if optimistic[0].block_id != regular[0].block_id:
            return "optimistic and normal votes name different blocks"
    return None


def check_vote_budget(ledger: GlobalLedger, step: int = 0) -> Optional[Violation]:
    """
    Per honest validator and view: at most one optimistic vote, at most one
    normal-or-fallback vote, and an optimistic plus a normal vote must name
    the same block.
    """
    grouped: Dict[Tuple[ValidatorId, View], List[Vote]] = defaultdict(list)
    for vote in ledger.sent_votes:
        grouped[(vote.author, vote.view)].append(vote)
    for (author, view), votes in sorted(grouped.items()):
        problem = _vote_budget_problem(votes)
        if problem:
            rendered = ",".join(sorted(encode(v) for v in votes))
            return Violation(VOTE_BUDGET, step, f"v{author} view {view}: {problem}: [{rendered}]")
    return None


def check_certificate_uniqueness(ledger: GlobalLedger, step: int = 0) -> Optional[Violation]:
    """No two blocks are certified in the same view with the same vote kind."""
    for (view, kind), bucket in sorted(ledger.certified.items()):
        if len(bucket) > 1:
            return Violation(
                CERTIFICATE_UNIQUENESS,
                step,
                f"view {view} kind {kind} certifies {sorted(bucket)}",
            )
    return None


def _timeout_problem(timeout: TimeoutMsg, earlier: Iterable[TimeoutMsg]) -> Optional[str]:
    if timeout.high_qc.view >= timeout.view:
        return (
            f"v{timeout.author} timed out view {timeout.view} "
            f"with a view {timeout.high_qc.view} certificate"
        )
    for other in earlier:
        if other.view == timeout.view:
            continue
        lower, upper = sorted((other, timeout), key=lambda t: t.view)
        if upper.high_qc.view < lower.high_qc.view:
            return (
                f"v{timeout.author} timed out view {upper.view} with a view {upper.high_qc.view} "
                f"certificate after timing out view {lower.view} with view {lower.high_qc.view}"
            )
    return None


def check_timeout_evidence(ledger: GlobalLedger, step: int = 0) -> Optional[Violation]:
    """
    Every honest timeout carries a certificate from an earlier view, and the
    certificates one validator attaches to its timeouts never go back in view.
    """
    by_author: Dict[ValidatorId, List[TimeoutMsg]] = defaultdict(list)
    for timeout in sorted(ledger.sent_timeouts, key=lambda t: (t.author, t.view, encode(t))):
        problem = _timeout_problem(timeout, by_author[timeout.author])
        if problem:
            return Violation(TIMEOUT_EVIDENCE, step, problem)
        by_author[timeout.author].append(timeout)
    return None


def check_validator_invariants(states: States, step: int = 0) -> Optional[Violation]:
    """Local bookkeeping invariants every honest validator maintains between events."""
    for vid, st in sorted(states.items()):
        problems = []
        if max(st.a_n, st.a_o, st.a_f) > st.r_c:
            problems.append(f"vote views {st.a_n},{st.a_o},{st.a_f} above r_c {st.r_c}")
        if st.lock.view >= st.r_c:
            problems.append(f"lock view {st.lock.view} not below r_c {st.r_c}")
        if st.b_o is not None:
            block = st.tree.get(st.b_o)
            if block is not None and block.view != st.r_c:
                problems.append(f"b_o {st.b_o} is not from view {st.r_c}")
        if problems:
            return Violation(VALIDATOR_INVARIANTS, step, f"v{vid}: " + "; ".join(problems))
    return None


def check_full_safety(ledger: GlobalLedger, states: States, step: int = 0) -> List[Violation]:
    """Runs every ledger-wide check; an empty list means the state is safe."""
    found = [
        check_blockchain_prefix(ledger, states, step),
        check_quorum_after_ldc_descendant(ledger, step),
        check_ancestor_closure(ledger, states, step),
        check_committed_blocks_ancestors(ledger, states, step),
        check_vote_budget(ledger, step),
        check_certificate_uniqueness(ledger, step),
        check_timeout_evidence(ledger, step),
        check_validator_invariants(states, step),
    ]
    return [v for v in found if v is not None]


# A certificate and the timeout carrying it; None when the sender itself vouches for it.
Carried = Tuple[QuorumCert, Optional[TimeoutMsg]]


def _embedded(msg: Message) -> Tuple[List[Block], List[Carried]]:
    """Blocks and certificates carried by a message."""
    if isinstance(msg, NormalProposal):
        return [msg.block], [(msg.qc, None)]
    if isinstance(msg, FallbackProposal):
        return [msg.block], [(msg.qc, None)] + [(t.high_qc, t) for t in msg.tc.timeouts]
    if isinstance(msg, OptimisticProposal):
        return [msg.block], []
    if isinstance(msg, TimeoutMsg):
        return [], [(msg.high_qc, msg)]
    if isinstance(msg, QcMsg):
        return [], [(msg.qc, None)]
    if isinstance(msg, TcMsg):
        return [], [(t.high_qc, t) for t in msg.tc.timeouts]
    if isinstance(msg, WeakTcMsg):
        return [], [(t.high_qc, t) for t in msg.wtc.timeouts]
    return [], []


def _timeout_certificate_valid(msg: Message, f: int) -> bool:
    if isinstance(msg, (FallbackProposal, TcMsg)):
        return validate_tc(msg.tc, f)
    if isinstance(msg, WeakTcMsg):
        return validate_weak_tc(msg.wtc, f)
    return True


@dataclass
class _Progress:
    qc_index: int = 0
    commit_index: int = 0
    committed_len: int = 1
    r_c: View = 1
    t_l: View = -1


class SafetyMonitor:
    """
    Incremental driver of the safety checks for one simulation.

    Call ``record_sends`` for every batch of messages put on the network
    (honest outboxes and adversary injections alike) and ``after_event`` once
    the event that produced them has completed.

    Args:
        honest: Ids of the honest validators.
        f: Fault bound; certificates only Byzantine validators vouch for must
            carry 2f+1 signers.
    """

    def __init__(self, honest: Iterable[ValidatorId], f: int):
        self.ledger = GlobalLedger(tuple(sorted(honest)))
        self.f = f
        self._honest = set(self.ledger.honest)
        self._progress: Dict[ValidatorId, _Progress] = {
            vid: _Progress() for vid in self.ledger.honest
        }
        self._new_certs: List[QuorumCert] = []
        self._new_votes: List[Vote] = []
        self._new_timeouts: List[TimeoutMsg] = []
        self._new_commits: List[Tuple[BlockId, View]] = []
        self._votes_by_slot: Dict[Tuple[ValidatorId, View], List[Vote]] = defaultdict(list)
        self._timeouts_by_author: Dict[ValidatorId, List[TimeoutMsg]] = defaultdict(list)
        self._commit_points: Set[Tuple[BlockId, View]] = set()
        self._unresolved: List[Tuple[BlockId, View, BlockId, View]] = []
        self._warned: Set[Tuple[View, BlockId, BlockId]] = set()

    def record_sends(self, sends: Iterable[Send]) -> None:
        for send in sends:
            msg = send.msg
            honest_src = msg.src in self._honest
            if honest_src and isinstance(msg, Vote) and msg not in self.ledger.sent_votes:
                self.ledger.sent_votes.add(msg)
                self._new_votes.append(msg)
            elif honest_src and isinstance(msg, TimeoutMsg) and msg not in self.ledger.sent_timeouts:
                self.ledger.sent_timeouts.add(msg)
                self._new_timeouts.append(msg)
            blocks, certs = _embedded(msg)
            for block in blocks:
                self.ledger.add_block(block)
            if not honest_src and not _timeout_certificate_valid(msg, self.f):
                logger.debug("Monitor ignored malformed timeout certificate from v%d", msg.src)
                continue
            for qc, carrier in certs:
                if self._admissible(qc, carrier, honest_src):
                    self._new_certs.append(qc)
                else:
                    logger.debug("Monitor ignored unattested certificate %s from v%d", encode(qc), msg.src)

    def _admissible(self, qc: QuorumCert, carrier: Optional[TimeoutMsg], honest_src: bool) -> bool:
        vouched = honest_src if carrier is None else carrier in self.ledger.sent_timeouts
        if vouched:
            return True
        return validate_qc(qc, self.f) and verify_quorum(self.ledger, qc)

    def after_event(self, step: int, states: States) -> List[Violation]:
        """Consumes what changed during the last event and checks it."""
        violations: List[Violation] = []
        changed: Dict[ValidatorId, ValidatorState] = {}
        for vid, st in sorted(states.items()):
            progress = self._progress[vid]
            self._new_certs.extend(st.qc_log[progress.qc_index:])
            progress.qc_index = len(st.qc_log)
            for block_id, view in st.direct_commit_log[progress.commit_index:]:
                self.ledger.direct_commits.add((vid, block_id, view))
                self._new_commits.append((block_id, view))
            progress.commit_index = len(st.direct_commit_log)
            if len(st.committed) != progress.committed_len:
                changed[vid] = st
                progress.committed_len = len(st.committed)
            if st.r_c < progress.r_c or st.t_l < progress.t_l:
                violations.append(
                    Violation(
                        VALIDATOR_INVARIANTS,
                        step,
                        f"v{vid}: r_c {progress.r_c}->{st.r_c} or t_l {progress.t_l}->{st.t_l} decreased",
                    )
                )
            progress.r_c, progress.t_l = st.r_c, st.t_l

        violations.extend(self._check_new_votes(step, states))
        violations.extend(self._check_new_timeouts(step))
        violations.extend(self._check_new_certificates(step))
        violations.extend(self._check_commit_points(step))
        if changed:
            for check in (
                check_blockchain_prefix(self.ledger, states, step),
                check_ancestor_closure(self.ledger, changed, step),
                check_committed_blocks_ancestors(self.ledger, changed, step),
            ):
                if check is not None:
                    violations.append(check)
        local = check_validator_invariants(states, step)
        if local is not None:
            violations.append(local)
        for violation in violations:
            logger.warning(violation.render())
        return violations

    def _check_new_votes(self, step: int, states: States) -> List[Violation]:
        found = []
        for vote in self._new_votes:
            slot = self._votes_by_slot[(vote.author, vote.view)]
            slot.append(vote)
            problem = _vote_budget_problem(slot)
            if problem:
                rendered = ",".join(sorted(encode(v) for v in slot))
                found.append(
                    Violation(VOTE_BUDGET, step, f"v{vote.author} view {vote.view}: {problem}: [{rendered}]")
                )
            if vote.kind is VoteKind.NORMAL:
                problem = self._normal_vote_problem(vote, states)
                if problem:
                    found.append(Violation(NORMAL_VOTE_JUSTIFIED, step, problem))
        self._new_votes = []
        return found

    def _check_new_timeouts(self, step: int) -> List[Violation]:
        found = []
        for timeout in self._new_timeouts:
            earlier = self._timeouts_by_author[timeout.author]
            problem = _timeout_problem(timeout, earlier)
            if problem:
                found.append(Violation(TIMEOUT_EVIDENCE, step, problem))
            earlier.append(timeout)
        self._new_timeouts = []
        return found

    def _normal_vote_problem(self, vote: Vote, states: States) -> Optional[str]:
        st = states.get(vote.author)
        if st is None:
            return None
        block = st.tree.get(vote.block_id) or self.ledger.global_tree.get(vote.block_id)
        if block is None:
            return None
        justified = any(
            key[0] == vote.view - 1 and key[2] == block.parent for key in st.processed_qcs
        )
        if justified:
            return None
        return f"v{vote.author} voted normal for {vote.block_id} in view {vote.view} without a view {vote.view - 1} QC for its parent"

    def _check_new_certificates(self, step: int) -> List[Violation]:
        found = []
        for qc in self._new_certs:
            if qc.is_genesis():
                continue
            if not verify_quorum(self.ledger, qc):
                found.append(Violation(VERIFY_QUORUM, step, f"unbacked certificate {encode(qc)}"))
            if not self.ledger.add_certificate(qc):
                continue
            bucket = self.ledger.certified[(qc.view, qc.kind.value)]
            if len(bucket) > 1:
                found.append(
                    Violation(
                        CERTIFICATE_UNIQUENESS,
                        step,
                        f"view {qc.view} kind {qc.kind.value} certifies {sorted(bucket)}",
                    )
                )
            self._warn_mixed_kinds(qc)
            for block_id, view in sorted(self._commit_points):
                if qc.view > view:
                    self._unresolved.append((block_id, view, qc.block_id, qc.view))
        self._new_certs = []
        return found

    def _warn_mixed_kinds(self, qc: QuorumCert) -> None:
        for kind in VoteKind:
            if kind is qc.kind:
                continue
            for other in self.ledger.certified.get((qc.view, kind.value), {}):
                if other == qc.block_id:
                    continue
                pair = (qc.view,) + tuple(sorted((other, qc.block_id)))
                if pair in self._warned:
                    continue
                self._warned.add(pair)  # type: ignore[arg-type]
                message = (
                    f"view {qc.view}: {kind.value} certificate for {other} and "
                    f"{qc.kind.value} certificate for {qc.block_id}"
                )
                self.ledger.warnings.append(message)
                logger.warning("Conflicting certificates of different kinds: %s", message)

    def _check_commit_points(self, step: int) -> List[Violation]:
        for block_id, view in self._new_commits:
            if (block_id, view) in self._commit_points:
                continue
            self._commit_points.add((block_id, view))
            for cert_view, cert_block in self.ledger.certified_blocks():
                if cert_view > view:
                    self._unresolved.append((block_id, view, cert_block, cert_view))
        self._new_commits = []

        found = []
        still_open = []
        for block_id, view, cert_block, cert_view in self._unresolved:
            related = _is_ancestor(self.ledger.global_tree, block_id, cert_block)
            if related is None:
                still_open.append((block_id, view, cert_block, cert_view))
            elif not related:
                found.append(
                    Violation(
                        QUORUM_AFTER_LDC_DESCENDANT,
                        step,
                        f"committed={block_id}@{view} certified={cert_block}@{cert_view}",
                    )
                )
        self._unresolved = still_open
        return found
