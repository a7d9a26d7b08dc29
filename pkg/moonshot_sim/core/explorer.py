# moonshot_sim/core/explorer.py

"""
Exhaustive bounded exploration of event interleavings.

Starting from the state right after bootstrap, ``explore`` tries every
schedulable event at every node (each distinct pending delivery, each timer
expiry that would change a validator's state, and each unused message of the
adversary vocabulary) up to a depth bound, depth-first. States are memoized on
a digest of every validator's canonical snapshot, the pending multiset, the
unused vocabulary and the monitor's ledger, so interleavings that converge are
expanded once. The safety monitor runs at every node.

Events at different validators touch disjoint local state and commute, so
the search carries a sleep set: after exploring an event, its later siblings
need not try it again below them unless something dependent happened first.
Injections count as dependent on everything. The reduction prunes
transitions, not states, so ``states_visited`` does not depend on it.

A node holds the validators, the pending list and the monitor. Successors
share every validator the event does not touch; only the destination and the
monitor are copied. One engine ``Simulation`` with trace recording off runs
every event.

Exploration is lossless: drops and duplicates are not modeled, since a
message that is never scheduled within the bound behaves like a dropped one.
"""

import copy
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from .config import DEFAULT_EXPLORE_STATE_BUDGET, AdversaryStrategy, SimConfig
from .errors import ExplorationBudgetExceeded
from .monitor import GlobalLedger, SafetyMonitor, Violation
from .network import Delivery, Simulation
from .trace import Deliver, Inject, SimEvent, Start, TimerExpire, encode_event, load_script
from .types import ValidatorId, encode
from .validator import ValidatorState

logger = logging.getLogger(__name__)


@dataclass
class ExploreReport:
    config: SimConfig
    depth: int
    states_visited: int
    complete: bool
    violations: List[Violation] = field(default_factory=list)
    counterexample: List[str] = field(default_factory=list)
    """Encoded events from bootstrap to the first violating state."""
    deepest: int = 0

    @property
    def safe(self) -> bool:
        return not self.violations


@dataclass
class _Node:
    validators: Dict[ValidatorId, ValidatorState]
    pending: List[Delivery]
    monitor: SafetyMonitor
    unused: Tuple[Inject, ...]
    snapshots: Dict[ValidatorId, str]


def _ledger_digest(ledger: GlobalLedger) -> str:
    votes = sorted(encode(v) for v in ledger.sent_votes)
    certs = sorted(f"{view}:{kind}:{block}" for (view, kind), b in ledger.certified.items() for block in b)
    commits = sorted(f"{vid}:{block}:{view}" for vid, block, view in ledger.direct_commits)
    return "|".join(votes) + "#" + "|".join(certs) + "#" + "|".join(commits)


def _digest(
    snapshots: Sequence[str], pending: Sequence[Delivery], unused: Sequence[Inject], ledger: GlobalLedger
) -> str:
    parts = list(snapshots)
    parts.append("|".join(sorted(f"{dst}:{encode(msg)}" for dst, msg in pending)))
    parts.append("|".join(sorted(encode_event(i) for i in unused)))
    parts.append(_ledger_digest(ledger))
    return hashlib.blake2b("\n".join(parts).encode("utf-8"), digest_size=16).hexdigest()


def state_key(sim: Simulation, unused: Sequence[Inject]) -> str:
    """Digest of everything that determines the subtree below a node."""
    snapshots = [sim.validators[vid].snapshot() for vid in sorted(sim.validators)]
    return _digest(snapshots, sim.pending, unused, sim.monitor.ledger)


def _node_key(node: _Node) -> str:
    snapshots = [node.snapshots[vid] for vid in sorted(node.snapshots)]
    return _digest(snapshots, node.pending, node.unused, node.monitor.ledger)


def _events(
    validators: Dict[ValidatorId, ValidatorState],
    pending: Sequence[Delivery],
    unused: Sequence[Inject],
    timers: bool,
) -> List[SimEvent]:
    events: Dict[str, SimEvent] = {}
    for dst, msg in pending:
        event = Deliver(dst, msg)
        events.setdefault(encode_event(event), event)
    if timers:
        for vid in sorted(validators):
            v = validators[vid]
            if not v.t_r or v.t_l < v.r_c:
                events.setdefault(encode_event(TimerExpire(vid)), TimerExpire(vid))
    for injection in unused:
        events.setdefault(encode_event(injection), injection)
    return [events[k] for k in sorted(events)]


def enabled_events(sim: Simulation, unused: Sequence[Inject], timers: bool = True) -> List[SimEvent]:
    """Distinct events schedulable at ``sim``, in canonical order."""
    return _events(sim.validators, sim.pending, unused, timers)


def _actor(event: SimEvent) -> Optional[ValidatorId]:
    if isinstance(event, (Deliver, TimerExpire)):
        return event.dst
    return None


def independent(first: SimEvent, second: SimEvent) -> bool:
    """True iff the two events run at different validators and so commute."""
    a, b = _actor(first), _actor(second)
    return a is not None and b is not None and a != b


class _Search:
    def __init__(self, engine: Simulation, budget: int, timers: bool, reduction: bool):
        self.engine = engine
        self.budget = budget
        self.timers = timers
        self.reduction = reduction
        self.visited: Dict[str, Tuple[int, FrozenSet[str]]] = {}
        self.violations: List[Violation] = []
        self.counterexample: List[str] = []
        self.deepest = 0

    def successor(self, node: _Node, event: SimEvent, step: int) -> Tuple[_Node, List[Violation]]:
        validators = dict(node.validators)
        snapshots = dict(node.snapshots)
        touched = _actor(event)
        if touched is not None:
            validators[touched] = copy.deepcopy(node.validators[touched])
        pending = list(node.pending)
        unused = node.unused
        if isinstance(event, Deliver):
            pending.remove((event.dst, event.msg))
        elif isinstance(event, Inject):
            idx = unused.index(event)
            unused = unused[:idx] + unused[idx + 1:]
        engine = self.engine
        engine.validators = validators
        engine.pending = pending
        engine.monitor = copy.deepcopy(node.monitor)
        engine.step = step
        found = engine.apply(event)
        if touched is not None:
            snapshots[touched] = validators[touched].snapshot()
        return _Node(validators, engine.pending, engine.monitor, unused, snapshots), found

    def _seen(self, key: str, left: int, sleep: FrozenSet[str]) -> Optional[FrozenSet[str]]:
        """Returns None to skip the node, else the sleep set to explore it with."""
        stored = self.visited.get(key)
        if stored is None:
            if len(self.visited) >= self.budget:
                raise ExplorationBudgetExceeded(f"state budget of {self.budget} exhausted")
            self.visited[key] = (left, sleep)
            return sleep
        stored_left, stored_sleep = stored
        if stored_left >= left and stored_sleep <= sleep:
            return None
        if stored_left >= left:
            return sleep & stored_sleep
        self.visited[key] = (left, sleep)
        return sleep

    def visit(self, node: _Node, path: List[str], left: int, sleep: Dict[str, SimEvent]) -> bool:
        """Returns True once a violation has been found below this node."""
        explore_sleep = self._seen(_node_key(node), left, frozenset(sleep))
        if explore_sleep is None:
            return False
        asleep = {k: sleep[k] for k in explore_sleep}
        self.deepest = max(self.deepest, len(path) - 1)
        if left == 0:
            return False
        done: Dict[str, SimEvent] = {}
        for event in _events(node.validators, node.pending, node.unused, self.timers):
            encoded = encode_event(event)
            if encoded in asleep:
                continue
            child, found = self.successor(node, event, len(path))
            child_path = path + [encoded]
            if found:
                self.violations = found
                self.counterexample = child_path
                self.deepest = max(self.deepest, len(child_path) - 1)
                return True
            child_sleep: Dict[str, SimEvent] = {}
            if self.reduction:
                for k, other in list(asleep.items()) + list(done.items()):
                    if independent(event, other):
                        child_sleep[k] = other
            if self.visit(child, child_path, left - 1, child_sleep):
                return True
            done[encoded] = event
        return False


def explore(
    config: SimConfig,
    depth: int,
    state_budget: int = DEFAULT_EXPLORE_STATE_BUDGET,
    timers: bool = False,
    vocabulary: Optional[Sequence[Inject]] = None,
    reduction: bool = True,
) -> ExploreReport:
    """
    Explores every interleaving of at most ``depth`` events after bootstrap.

    Args:
        config: Run configuration. Only its fault bound, Byzantine set and
            mutation matter; randomized adversaries are replaced by the
            finite vocabulary.
        depth: Number of events explored below the bootstrap state.
        state_budget: Distinct states visited before giving up.
        timers: Whether timer expiries are schedulable events.
        vocabulary: Injectable Byzantine messages, each usable once. Defaults
            to the messages of ``config.script_path`` (their steps ignored).
        reduction: Prune commuting orders with sleep sets. Turning it off
            visits the same states through more transitions.

    Returns:
        An ``ExploreReport``; ``complete`` is False when the budget ran out.

    Raises:
        ValueError: If ``depth`` is negative.
    """
    if depth < 0:
        raise ValueError(f"exploration depth must be >= 0, got {depth}")
    if vocabulary is None:
        entries = load_script(config.script_path) if config.script_path else []
        vocabulary = [injection for _step, injection in entries]
    overrides = {"drop_probability": 0.0, "duplicate_probability": 0.0}
    if config.adversary_strategy not in (AdversaryStrategy.PASSIVE, AdversaryStrategy.SCRIPTED):
        logger.info(
            "Exploration replaces the %s adversary with its injection vocabulary",
            config.adversary_strategy.value,
        )
        overrides["adversary_strategy"] = AdversaryStrategy.PASSIVE
    base = config.with_overrides(**overrides)

    engine = Simulation(base, record_trace=False)
    root_path = [encode_event(Start())]
    found = engine.apply(Start())
    if found:
        return ExploreReport(config, depth, 1, True, found, root_path, 0)
    root = _Node(
        validators=dict(engine.validators),
        pending=list(engine.pending),
        monitor=engine.monitor,
        unused=tuple(vocabulary),
        snapshots={vid: v.snapshot() for vid, v in engine.validators.items()},
    )

    search = _Search(engine, state_budget, timers, reduction)
    complete = True
    try:
        search.visit(root, root_path, depth, {})
    except ExplorationBudgetExceeded as e:
        logger.warning("Exploration incomplete: %s", e)
        complete = False
    logger.info("Explored %d state(s) to depth %d", len(search.visited), depth)
    return ExploreReport(
        config=config,
        depth=depth,
        states_visited=len(search.visited),
        complete=complete,
        violations=search.violations,
        counterexample=search.counterexample,
        deepest=search.deepest,
    )
