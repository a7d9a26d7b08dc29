# tests/test_explorer.py

from pathlib import Path

import pytest

from moonshot_sim.core import config
from moonshot_sim.core.config import Mutation, SimConfig
from moonshot_sim.core.explorer import enabled_events, explore, independent, state_key
from moonshot_sim.core.network import Simulation
from moonshot_sim.core.trace import Deliver, Inject, Start, TimerExpire, load_script
from moonshot_sim.core.types import GENESIS_BLOCK, NormalProposal, TimeoutMsg, Vote, VoteKind, genesis_qc

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _explore_config(**extra):
    cfg = config.load_config(str(CONFIGS / "explore.cfg"))
    return cfg.with_overrides(script_path=str(CONFIGS / "explore.script"), **extra)


def test_depth_zero_visits_only_the_root():
    report = explore(SimConfig(), 0)
    assert report.states_visited == 1
    assert report.complete and report.safe
    assert report.deepest == 0


def test_negative_depth_is_rejected():
    with pytest.raises(ValueError):
        explore(SimConfig(), -1)


def test_shallow_honest_exploration_is_safe_and_complete():
    report = explore(SimConfig(), 2, timers=True)
    assert report.complete and report.safe
    assert report.states_visited > 1
    assert report.deepest == 2


def test_deeper_exploration_without_timers():
    report = explore(SimConfig(), 3)
    assert report.complete and report.safe
    assert report.deepest == 3


# The view 1 leader's proposal reaches all four validators. Delivering it
# makes the receiver multicast a normal vote, and validator 2, the view 2
# leader, also multicasts an optimistic proposal. Two deliveries therefore
# reach 6 pairs of proposals, 3 x 4 votes and 8 messages from validator 2.
@pytest.mark.parametrize("depth, timers, expected", [(1, False, 5), (2, False, 31), (1, True, 9)])
def test_honest_state_counts(depth, timers, expected):
    report = explore(SimConfig(), depth, timers=timers)
    assert report.complete and report.safe
    assert report.states_visited == expected


@pytest.mark.parametrize("timers", [False, True])
def test_sleep_sets_keep_every_state(timers):
    reduced = explore(SimConfig(), 3, timers=timers)
    full = explore(SimConfig(), 3, timers=timers, reduction=False)
    assert reduced.complete and full.complete
    assert reduced.states_visited == full.states_visited


def test_state_budget_makes_the_report_partial():
    report = explore(SimConfig(), 3, state_budget=3)
    assert not report.complete
    assert report.states_visited == 3


def test_vocabulary_is_used_at_most_once():
    gqc = genesis_qc(4)
    vocabulary = [Inject(TimeoutMsg(1, 3, gqc)), Inject(TimeoutMsg(2, 3, gqc))]
    cfg = SimConfig(byzantine=(3,))
    report = explore(cfg, 3, vocabulary=vocabulary)
    assert report.complete and report.safe


def test_randomized_adversary_is_replaced_by_vocabulary():
    cfg = SimConfig(byzantine=(3,), adversary_strategy="random")
    report = explore(cfg, 1)
    assert report.safe
    assert report.config is cfg


def test_shipped_vocabulary_is_small():
    assert len(load_script(str(CONFIGS / "explore.script"))) <= 6


def test_shipped_exploration_is_safe_at_shallow_depth():
    report = explore(_explore_config(), 4)
    assert report.complete and report.safe
    assert report.deepest == 4


@pytest.mark.slow
def test_shipped_exploration_completes_at_depth_ten():
    report = explore(_explore_config(), 10, state_budget=50_000_000)
    assert report.complete and report.safe
    assert report.deepest == 10


@pytest.mark.slow
def test_weak_quorum_mutant_is_found_by_exploration():
    # Byzantine view 1 leader: one proposal to validator 0, another to validator 2, a vote for each.
    gqc = genesis_qc(4)
    cfg = SimConfig(byzantine=(1,), mutation=Mutation.WEAK_QUORUM)
    x, y = GENESIS_BLOCK.child(1, "x"), GENESIS_BLOCK.child(1, "y")
    vocabulary = [
        Inject(NormalProposal(x, gqc, 1, 1), 0),
        Inject(NormalProposal(y, gqc, 1, 1), 2),
        Inject(Vote(VoteKind.NORMAL, x.id, 1, 1), 0),
        Inject(Vote(VoteKind.NORMAL, y.id, 1, 1), 2),
    ]
    report = explore(cfg, 10, state_budget=2_000_000, vocabulary=vocabulary)
    assert not report.safe
    assert 0 < len(report.counterexample) - 1 <= 10
    assert report.counterexample[0] == '{"type":"Start"}'


def test_full_quorum_survives_the_equivocating_vocabulary():
    gqc = genesis_qc(4)
    x, y = GENESIS_BLOCK.child(1, "x"), GENESIS_BLOCK.child(1, "y")
    vocabulary = [Inject(NormalProposal(x, gqc, 1, 1), 0), Inject(NormalProposal(y, gqc, 1, 1), 2)]
    report = explore(SimConfig(byzantine=(1,)), 4, vocabulary=vocabulary)
    assert report.complete and report.safe


def test_deliveries_to_different_validators_are_independent():
    gqc = genesis_qc(4)
    vote = Vote(VoteKind.NORMAL, "genesis", 0, 0)
    assert independent(Deliver(0, vote), Deliver(1, vote))
    assert independent(Deliver(0, vote), TimerExpire(2))
    assert not independent(Deliver(0, vote), TimerExpire(0))
    assert not independent(Deliver(1, vote), Deliver(1, TimeoutMsg(1, 3, gqc)))
    assert not independent(Inject(TimeoutMsg(1, 3, gqc)), Deliver(2, vote))


def test_enabled_events_are_canonical_and_distinct():
    sim = Simulation(SimConfig(duplicate_probability=0.0))
    sim.apply(Start())
    sim.pending.append(sim.pending[0])
    injection = Inject(TimeoutMsg(1, 3, genesis_qc(4)))
    events = enabled_events(sim, (injection,), timers=True)
    deliveries = [e for e in events if isinstance(e, Deliver)]
    assert len(deliveries) == 4
    assert sum(isinstance(e, TimerExpire) for e in events) == 4
    assert events.count(injection) == 1
    assert enabled_events(sim, (injection,), timers=False) == [
        e for e in events if not isinstance(e, TimerExpire)
    ]


def test_fired_timer_is_not_enabled_twice():
    sim = Simulation(SimConfig())
    sim.apply(Start())
    sim.apply(TimerExpire(0))
    timers = [e for e in enabled_events(sim, (), timers=True) if isinstance(e, TimerExpire)]
    assert TimerExpire(0) not in timers
    assert TimerExpire(1) in timers


def test_state_key_ignores_delivery_order():
    first, second = Simulation(SimConfig()), Simulation(SimConfig())
    first.apply(Start())
    second.apply(Start())
    second.pending.reverse()
    assert state_key(first, ()) == state_key(second, ())
    second.pending.pop()
    assert state_key(first, ()) != state_key(second, ())
