# tests/conftest.py

from typing import Iterable, Optional

import pytest

from moonshot_sim.core.config import SimConfig
from moonshot_sim.core.types import (
    GENESIS_BLOCK,
    Block,
    QuorumCert,
    TimeoutCert,
    TimeoutMsg,
    Vote,
    VoteKind,
    genesis_qc,
)
from moonshot_sim.core.validator import ValidatorState

F = 1
N = 4


def qc_for(block: Block, view: Optional[int] = None, kind: VoteKind = VoteKind.NORMAL,
           signers: Iterable[int] = (0, 1, 2)) -> QuorumCert:
    return QuorumCert(block.view if view is None else view, block.id, kind, tuple(signers))


def timeouts(view: int, authors: Iterable[int], high_qc: Optional[QuorumCert] = None):
    lock = high_qc or genesis_qc(N)
    return tuple(TimeoutMsg(view, a, lock) for a in authors)


def tc_for(view: int, authors: Iterable[int] = (0, 1, 2), high_qc: Optional[QuorumCert] = None) -> TimeoutCert:
    return TimeoutCert(view, timeouts(view, authors, high_qc))


def votes(kind: VoteKind, block: Block, authors: Iterable[int], view: Optional[int] = None):
    return [Vote(kind, block.id, block.view if view is None else view, a) for a in authors]


def sent(outbox, cls):
    return [s.msg for s in outbox if isinstance(s.msg, cls)]


@pytest.fixture
def gqc() -> QuorumCert:
    return genesis_qc(N)


@pytest.fixture
def b1() -> Block:
    return GENESIS_BLOCK.child(1, "p1")


@pytest.fixture
def b2(b1) -> Block:
    return b1.child(2, "p2")


@pytest.fixture
def make_validator():
    def _make(vid: int = 0, mutation=None, f: int = F) -> ValidatorState:
        return ValidatorState(vid, f, mutation)

    return _make


@pytest.fixture
def small_config() -> SimConfig:
    return SimConfig(f=1, byzantine=(), seed=7, max_steps=400, timer_probability=0.0)
