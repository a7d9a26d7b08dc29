# moonshot_sim/core/network.py

"""
Deterministic discrete-event scheduler and adversarial network.

A ``Simulation`` owns the honest validators, the multiset of pending
deliveries, the adversary and the safety monitor. Each step executes exactly
one event chosen by a seeded PCG64 generator:

1. a scripted injection that is due, if any;
2. otherwise, with ``inject_probability``, a queued adversary injection;
3. otherwise a pending delivery (or, with ``timer_probability``, a timer
   expiry at a random honest validator);
4. when nothing is pending, a queued injection or else a timer expiry.

Multicasts fan out when sent: each honest recipient gets an independent
pending delivery that may be dropped or duplicated on its own. Pending
deliveries persist until scheduled. After every event the safety monitor
checks the new state and the run stops at the first violation.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .adversary import Adversary, check_authorship, make_adversary
from .config import SimConfig
from .errors import TraceMismatch
from .monitor import SafetyMonitor, Violation
from .trace import (
    Deliver,
    Inject,
    ScriptEntry,
    SimEvent,
    Start,
    TimerExpire,
    TraceWriter,
    encode_event,
    encode_outbox,
    load_script,
    read_trace,
)
from .types import Message, Send, ValidatorId
from .validator import ValidatorState

logger = logging.getLogger(__name__)

Delivery = Tuple[ValidatorId, Message]


@dataclass
class RunReport:
    """Outcome of one simulation; ``violations`` is empty for a safe run."""

    config: SimConfig
    steps: int
    commits: Dict[ValidatorId, int]
    violations: List[Violation] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    trace_path: Optional[str] = None
    first_commit_step: Optional[int] = None

    @property
    def safe(self) -> bool:
        return not self.violations

    @property
    def max_chain_length(self) -> int:
        return max(self.commits.values(), default=0)

    @property
    def total_commits(self) -> int:
        return sum(self.commits.values())


class Simulation:
    """
    One simulated execution.

    Args:
        config: The validated run configuration.
        script: Scripted injections, required by the scripted adversary.
        trace_path: Where ``run`` saves the trace; None keeps it in memory.
        record_trace: When False no trace lines are kept.
    """

    def __init__(
        self,
        config: SimConfig,
        script: Optional[Sequence[ScriptEntry]] = None,
        trace_path: Optional[str] = None,
        record_trace: bool = True,
    ):
        self.config = config
        self.rng = np.random.Generator(np.random.PCG64(config.seed))
        self.honest: Tuple[ValidatorId, ...] = config.honest
        self._honest_set = set(self.honest)
        self.validators: Dict[ValidatorId, ValidatorState] = {
            vid: ValidatorState(vid, config.f, config.mutation) for vid in self.honest
        }
        self.pending: List[Delivery] = []
        self.adversary: Adversary = make_adversary(config, script)
        self.monitor = SafetyMonitor(self.honest, config.f)
        self.trace = TraceWriter(config, trace_path, recording=record_trace)
        self.step = 0
        self.violations: List[Violation] = []
        self.first_commit_step: Optional[int] = None

    # ------------------------------------------------------------------
    # Scheduling
    # ------------------------------------------------------------------

    def _random_honest(self) -> ValidatorId:
        return self.honest[int(self.rng.integers(len(self.honest)))]

    def _take_pending(self) -> Delivery:
        idx = int(self.rng.integers(len(self.pending)))
        last = self.pending.pop()
        if idx == len(self.pending):
            return last
        chosen, self.pending[idx] = self.pending[idx], last
        return chosen

    def choose_event(self) -> Optional[SimEvent]:
        """Draws the next event, or None when nothing can happen."""
        cfg = self.config
        if self.step == 0:
            return Start()
        forced = self.adversary.due(self.step)
        if forced is not None:
            return forced
        if self.adversary.has_injection() and self.rng.random() < cfg.inject_probability:
            return self.adversary.next_injection()
        if self.pending:
            if self.honest and not cfg.quiescent_timers and self.rng.random() < cfg.timer_probability:
                return TimerExpire(self._random_honest())
            dst, msg = self._take_pending()
            return Deliver(dst, msg)
        if self.adversary.has_injection():
            return self.adversary.next_injection()
        if self.honest:
            return TimerExpire(self._random_honest())
        return None

    def _fan_out(self, sends: Sequence[Send]) -> None:
        cfg = self.config
        for send in sends:
            if send.dst is None:
                targets: Sequence[ValidatorId] = self.honest
            elif send.dst in self._honest_set:
                targets = (send.dst,)
            else:
                continue
            for dst in targets:
                if cfg.drop_probability > 0 and self.rng.random() < cfg.drop_probability:
                    continue
                copies = 1
                if cfg.duplicate_probability > 0 and self.rng.random() < cfg.duplicate_probability:
                    copies = 2
                self.pending.extend([(dst, send.msg)] * copies)

    # ------------------------------------------------------------------
    # Execution
    # ------------------------------------------------------------------

    def execute(self, event: SimEvent) -> List[Send]:
        """Runs one event to completion and returns the messages it produced."""
        if isinstance(event, Start):
            sends: List[Send] = []
            for vid in self.honest:
                sends.extend(self.validators[vid].start())
            return sends
        if isinstance(event, Deliver):
            return self.validators[event.dst].handle_message(event.msg)
        if isinstance(event, TimerExpire):
            return self.validators[event.dst].timer_expire_event()
        if isinstance(event, Inject):
            check_authorship(event.msg, self.config.byzantine)
            return [Send(event.msg, event.dst)]
        raise TypeError(f"Unknown simulation event {event!r}")

    def apply(
        self, event: SimEvent, network: bool = True, recorded: Optional[str] = None
    ) -> List[Violation]:
        """
        Executes ``event``, records it, and runs the safety monitor.

        Args:
            event: The event to execute.
            network: When False the produced messages are not scheduled and
                the adversary does not react (replay mode).
            recorded: Outbox encoding the event must reproduce, if known.

        Returns:
            The violations found after this event.

        Raises:
            TraceMismatch: If ``recorded`` differs from the recomputed outbox.
        """
        sends = self.execute(event)
        if recorded is not None:
            actual = encode_outbox(sends)
            if actual != recorded:
                raise TraceMismatch(self.step, recorded, actual)
        self.monitor.record_sends(sends)
        if network:
            self._fan_out(sends)
            if not isinstance(event, Inject):
                self.adversary.observe(sends, self.step, self.rng)
        self.trace.record(self.step, event, sends)
        found = self.monitor.after_event(self.step, self.validators)
        if self.first_commit_step is None and any(
            len(v.committed) > 1 for v in self.validators.values()
        ):
            self.first_commit_step = self.step
        for violation in found:
            self.trace.violation(violation.render())
        self.violations.extend(found)
        self.step += 1
        return found

    def run(self) -> RunReport:
        """Executes up to ``max_steps`` events, stopping at the first violation."""
        logger.info(
            "Running seed %d: f=%d byzantine=%s adversary=%s mutation=%s",
            self.config.seed,
            self.config.f,
            list(self.config.byzantine),
            self.config.adversary_strategy.value,
            self.config.mutation.value if self.config.mutation else "none",
        )
        while self.step < self.config.max_steps:
            event = self.choose_event()
            if event is None:
                logger.info("Seed %d quiesced after %d steps", self.config.seed, self.step)
                break
            if self.apply(event):
                break
        return self.report(self.trace.save())

    def report(self, trace_path: Optional[str] = None) -> RunReport:
        return RunReport(
            config=self.config,
            steps=self.step,
            commits={vid: len(v.committed) - 1 for vid, v in self.validators.items()},
            violations=list(self.violations),
            warnings=list(self.monitor.ledger.warnings),
            trace_path=trace_path,
            first_commit_step=self.first_commit_step,
        )


def script_for(config: SimConfig) -> Optional[List[ScriptEntry]]:
    if config.script_path is None:
        return None
    return load_script(config.script_path)


def run(config: SimConfig, trace_path: Optional[str] = None) -> RunReport:
    """
    Runs one simulation.

    Args:
        config: The run configuration; its seed fixes every random choice.
        trace_path: File to write the trace to, or None to skip writing.

    Returns:
        The run report. Safety violations are reported, not raised.

    Raises:
        TraceFormatError: If the configured script file cannot be parsed.
        ForgeryAttempt: If a scripted injection names an honest sender.
    """
    return Simulation(config, script_for(config), trace_path).run()


def replay(trace_path: str) -> RunReport:
    """
    Re-executes a recorded trace event by event.

    The recorded events are applied in order without consulting the
    scheduler; each recomputed outbox must match the recorded one.

    Raises:
        TraceFormatError: If the file is not a trace.
        TraceMismatch: At the first step whose number or outbox differs.
    """
    parsed = read_trace(trace_path)
    sim = Simulation(parsed.config, trace_path=None)
    for record in parsed.records:
        if record.step != sim.step:
            raise TraceMismatch(sim.step, f"step={record.step}", f"step={sim.step}")
        sim.apply(record.event, network=False, recorded=record.outbox)
        logger.debug("Replayed %s", encode_event(record.event))
    return sim.report(trace_path)
