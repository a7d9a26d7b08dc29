# moonshot_sim/core/types.py

"""
Protocol data types for the Pipelined Moonshot simulator.

Every type here is an immutable value. Each one renders to a canonical,
single-line JSON encoding (sorted keys, compact separators, a ``type`` tag)
that the trace files use verbatim and that ``decode`` turns back into the
same value.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, Optional, Tuple, Type, Union

View = int
Height = int
ValidatorId = int
BlockId = str

NO_VIEW: View = -1
"""Sentinel below every real view (used for t_l, a_n, a_o, a_f before any send)."""

GENESIS_ID: BlockId = "genesis"
GENESIS_PAYLOAD: str = ""


def validator_count(f: int) -> int:
    """Returns n = 3f+1."""
    return 3 * f + 1


def quorum_size(f: int) -> int:
    """Signers a QC or TC needs: 2f+1."""
    return 2 * f + 1


def weak_quorum_size(f: int) -> int:
    """Timeouts a weak TC needs: f+1."""
    return f + 1


def leader(view: View, n: int) -> ValidatorId:
    """
    Round-robin leader schedule.

    Args:
        view: The view whose leader is requested.
        n: Number of validators (must be at least 1).

    Returns:
        The validator index ``view mod n``.
    """
    if n < 1:
        raise ValueError(f"leader schedule needs n >= 1, got {n}")
    return view % n


class VoteKind(str, enum.Enum):
    NORMAL = "normal"
    FALLBACK = "fallback"
    OPTIMISTIC = "optimistic"


def _canonical(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def block_id_for(height: Height, view: View, parent: BlockId, payload: str) -> BlockId:
    """
    Deterministic block identifier standing in for the block hash.

    The id keeps height and view readable and appends a 64-bit digest of the
    canonical (height, view, parent, payload) tuple.
    """
    if (height, view, parent, payload) == (0, 0, GENESIS_ID, GENESIS_PAYLOAD):
        return GENESIS_ID
    digest = hashlib.blake2b(
        _canonical([height, view, parent, payload]).encode("utf-8"), digest_size=8
    ).hexdigest()
    return f"h{height}.v{view}.{digest}"


_DECODERS: Dict[str, Callable[[Dict[str, Any]], Any]] = {}


def _register(tag: str) -> Callable[[Type[Any]], Type[Any]]:
    def wrap(cls: Type[Any]) -> Type[Any]:
        _DECODERS[tag] = cls.from_data
        return cls

    return wrap


@_register("Block")
@dataclass(frozen=True)
class Block:
    height: Height
    view: View
    parent: BlockId
    payload: str
    id: BlockId = field(init=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "id", block_id_for(self.height, self.view, self.parent, self.payload)
        )

    @property
    def is_genesis(self) -> bool:
        return self.id == GENESIS_ID

    def child(self, view: View, payload: str) -> "Block":
        """Builds a block that directly extends this one."""
        return Block(self.height + 1, view, self.id, payload)

    def to_data(self) -> Dict[str, Any]:
        return {
            "type": "Block",
            "id": self.id,
            "height": self.height,
            "view": self.view,
            "parent": self.parent,
            "payload": self.payload,
        }

    @classmethod
    def from_data(cls, data: Dict[str, Any]) -> "Block":
        return cls(int(data["height"]), int(data["view"]), data["parent"], data["payload"])


GENESIS_BLOCK = Block(0, 0, GENESIS_ID, GENESIS_PAYLOAD)


@_register("Vote")
@dataclass(frozen=True)
class Vote:
    kind: VoteKind
    block_id: BlockId
    view: View
    author: ValidatorId

    @property
    def src(self) -> ValidatorId:
        return self.author

    def to_data(self) -> Dict[str, Any]:
        return {
            "type": "Vote",
            "kind": self.kind.value,
            "block": self.block_id,
            "view": self.view,
            "author": self.author,
        }

    @classmethod
    def from_data(cls, data: Dict[str, Any]) -> "Vote":
        return cls(VoteKind(data["kind"]), data["block"], int(data["view"]), int(data["author"]))


@_register("QC")
@dataclass(frozen=True)
class QuorumCert:
    """
    Aggregated evidence that a quorum voted for ``block_id`` in ``view``.

    ``signers`` is kept as a sorted tuple rather than a set so that a
    certificate carrying a duplicated signer stays representable (and is
    rejected by ``validate_qc``).
    """

    view: View
    block_id: BlockId
    kind: VoteKind
    signers: Tuple[ValidatorId, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "signers", tuple(sorted(self.signers)))

    @property
    def key(self) -> Tuple[View, str, BlockId]:
        return (self.view, self.kind.value, self.block_id)

    def is_genesis(self) -> bool:
        return self.view == 0 and self.block_id == GENESIS_ID

    def to_data(self) -> Dict[str, Any]:
        return {
            "type": "QC",
            "view": self.view,
            "block": self.block_id,
            "kind": self.kind.value,
            "signers": list(self.signers),
        }

    @classmethod
    def from_data(cls, data: Dict[str, Any]) -> "QuorumCert":
        return cls(
            int(data["view"]),
            data["block"],
            VoteKind(data["kind"]),
            tuple(int(s) for s in data["signers"]),
        )


def genesis_qc(n: int) -> QuorumCert:
    """Bootstrap certificate: view 0, genesis block, signed by the full validator set."""
    return QuorumCert(0, GENESIS_ID, VoteKind.NORMAL, tuple(range(n)))


def qc_rank(qc: QuorumCert) -> Tuple[int, str, str, str]:
    """Sort key ordering certificates from highest to lowest rank."""
    return (-qc.view, qc.block_id, qc.kind.value, _canonical(list(qc.signers)))


@_register("Timeout")
@dataclass(frozen=True)
class TimeoutMsg:
    view: View
    author: ValidatorId
    high_qc: QuorumCert

    @property
    def src(self) -> ValidatorId:
        return self.author

    def to_data(self) -> Dict[str, Any]:
        return {
            "type": "Timeout",
            "view": self.view,
            "author": self.author,
            "high_qc": self.high_qc.to_data(),
        }

    @classmethod
    def from_data(cls, data: Dict[str, Any]) -> "TimeoutMsg":
        return cls(int(data["view"]), int(data["author"]), QuorumCert.from_data(data["high_qc"]))


def _sorted_timeouts(timeouts: Iterable[TimeoutMsg]) -> Tuple[TimeoutMsg, ...]:
    return tuple(sorted(timeouts, key=lambda t: (t.author, t.view, qc_rank(t.high_qc))))


@_register("TC")
@dataclass(frozen=True)
class TimeoutCert:
    view: View
    timeouts: Tuple[TimeoutMsg, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "timeouts", _sorted_timeouts(self.timeouts))

    def to_data(self) -> Dict[str, Any]:
        return {
            "type": "TC",
            "view": self.view,
            "timeouts": [t.to_data() for t in self.timeouts],
        }

    @classmethod
    def from_data(cls, data: Dict[str, Any]) -> "TimeoutCert":
        return cls(int(data["view"]), tuple(TimeoutMsg.from_data(t) for t in data["timeouts"]))


@_register("WeakTC")
@dataclass(frozen=True)
class WeakTimeoutCert:
    view: View
    timeouts: Tuple[TimeoutMsg, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "timeouts", _sorted_timeouts(self.timeouts))

    def to_data(self) -> Dict[str, Any]:
        return {
            "type": "WeakTC",
            "view": self.view,
            "timeouts": [t.to_data() for t in self.timeouts],
        }

    @classmethod
    def from_data(cls, data: Dict[str, Any]) -> "WeakTimeoutCert":
        return cls(int(data["view"]), tuple(TimeoutMsg.from_data(t) for t in data["timeouts"]))


@_register("NormalProposal")
@dataclass(frozen=True)
class NormalProposal:
    block: Block
    qc: QuorumCert
    view: View
    src: ValidatorId

    def to_data(self) -> Dict[str, Any]:
        return {
            "type": "NormalProposal",
            "block": self.block.to_data(),
            "qc": self.qc.to_data(),
            "view": self.view,
            "src": self.src,
        }

    @classmethod
    def from_data(cls, data: Dict[str, Any]) -> "NormalProposal":
        return cls(
            Block.from_data(data["block"]),
            QuorumCert.from_data(data["qc"]),
            int(data["view"]),
            int(data["src"]),
        )


@_register("FallbackProposal")
@dataclass(frozen=True)
class FallbackProposal:
    block: Block
    qc: QuorumCert
    tc: TimeoutCert
    view: View
    src: ValidatorId

    def to_data(self) -> Dict[str, Any]:
        return {
            "type": "FallbackProposal",
            "block": self.block.to_data(),
            "qc": self.qc.to_data(),
            "tc": self.tc.to_data(),
            "view": self.view,
            "src": self.src,
        }

    @classmethod
    def from_data(cls, data: Dict[str, Any]) -> "FallbackProposal":
        return cls(
            Block.from_data(data["block"]),
            QuorumCert.from_data(data["qc"]),
            TimeoutCert.from_data(data["tc"]),
            int(data["view"]),
            int(data["src"]),
        )


@_register("OptimisticProposal")
@dataclass(frozen=True)
class OptimisticProposal:
    block: Block
    view: View
    src: ValidatorId

    def to_data(self) -> Dict[str, Any]:
        return {
            "type": "OptimisticProposal",
            "block": self.block.to_data(),
            "view": self.view,
            "src": self.src,
        }

    @classmethod
    def from_data(cls, data: Dict[str, Any]) -> "OptimisticProposal":
        return cls(Block.from_data(data["block"]), int(data["view"]), int(data["src"]))


@_register("QcMsg")
@dataclass(frozen=True)
class QcMsg:
    qc: QuorumCert
    src: ValidatorId

    def to_data(self) -> Dict[str, Any]:
        return {"type": "QcMsg", "qc": self.qc.to_data(), "src": self.src}

    @classmethod
    def from_data(cls, data: Dict[str, Any]) -> "QcMsg":
        return cls(QuorumCert.from_data(data["qc"]), int(data["src"]))


@_register("TcMsg")
@dataclass(frozen=True)
class TcMsg:
    tc: TimeoutCert
    src: ValidatorId

    def to_data(self) -> Dict[str, Any]:
        return {"type": "TcMsg", "tc": self.tc.to_data(), "src": self.src}

    @classmethod
    def from_data(cls, data: Dict[str, Any]) -> "TcMsg":
        return cls(TimeoutCert.from_data(data["tc"]), int(data["src"]))


@_register("WeakTcMsg")
@dataclass(frozen=True)
class WeakTcMsg:
    wtc: WeakTimeoutCert
    src: ValidatorId

    def to_data(self) -> Dict[str, Any]:
        return {"type": "WeakTcMsg", "wtc": self.wtc.to_data(), "src": self.src}

    @classmethod
    def from_data(cls, data: Dict[str, Any]) -> "WeakTcMsg":
        return cls(WeakTimeoutCert.from_data(data["wtc"]), int(data["src"]))


Message = Union[
    NormalProposal,
    FallbackProposal,
    OptimisticProposal,
    Vote,
    TimeoutMsg,
    QcMsg,
    TcMsg,
    WeakTcMsg,
]

MESSAGE_TYPES: Tuple[type, ...] = (
    NormalProposal,
    FallbackProposal,
    OptimisticProposal,
    Vote,
    TimeoutMsg,
    QcMsg,
    TcMsg,
    WeakTcMsg,
)


@dataclass(frozen=True)
class Send:
    """An outbox entry: ``dst`` is None for a multicast to every validator."""

    msg: Message
    dst: Optional[ValidatorId] = None

    def to_data(self) -> Dict[str, Any]:
        return {"dst": self.dst, "msg": self.msg.to_data()}

    @classmethod
    def from_data(cls, data: Dict[str, Any]) -> "Send":
        dst = data.get("dst")
        return cls(from_data(data["msg"]), None if dst is None else int(dst))


def from_data(data: Dict[str, Any]) -> Any:
    """Rebuilds a protocol value from its decoded JSON structure."""
    try:
        decoder = _DECODERS[data["type"]]
    except (KeyError, TypeError) as e:
        raise ValueError(f"Unknown or missing type tag in {data!r}") from e
    return decoder(data)


def encode(value: Any) -> str:
    """Canonical single-line encoding of any protocol value."""
    return _canonical(value.to_data())


def decode(text: str) -> Any:
    """Inverse of ``encode``."""
    return from_data(json.loads(text))


def is_message(value: Any) -> bool:
    return isinstance(value, MESSAGE_TYPES)


def validate_qc(qc: QuorumCert, f: int, quorum: Optional[int] = None) -> bool:
    """
    Structural validity of a quorum certificate.

    Args:
        qc: The certificate to check.
        f: Fault bound; the validator set is ``[0, 3f+1)``.
        quorum: Required signer count. Defaults to 2f+1; the WeakQuorum
            mutation passes f+1.

    Returns:
        True for the genesis bootstrap certificate signed by the whole set, or
        for a certificate with exactly ``quorum`` distinct in-range signers.
    """
    n = validator_count(f)
    if qc.is_genesis():
        return qc.signers == tuple(range(n))
    required = quorum_size(f) if quorum is None else quorum
    signers = qc.signers
    return (
        len(signers) == required
        and len(set(signers)) == required
        and all(0 <= s < n for s in signers)
    )


def _valid_timeout_set(
    view: View,
    timeouts: Tuple[TimeoutMsg, ...],
    required: int,
    f: int,
    qc_quorum: Optional[int],
) -> bool:
    n = validator_count(f)
    authors = [t.author for t in timeouts]
    if len(authors) != required or len(set(authors)) != required:
        return False
    for t in timeouts:
        if t.view != view or not 0 <= t.author < n:
            return False
        if not validate_qc(t.high_qc, f, qc_quorum):
            return False
    return True


def validate_tc(tc: TimeoutCert, f: int, qc_quorum: Optional[int] = None) -> bool:
    """True iff 2f+1 distinct authors time out the same view with valid locks."""
    return _valid_timeout_set(tc.view, tc.timeouts, quorum_size(f), f, qc_quorum)


def validate_weak_tc(
    wtc: WeakTimeoutCert, f: int, qc_quorum: Optional[int] = None
) -> bool:
    """
    Args:
        wtc: The weak timeout certificate.
        f: Fault bound.
        qc_quorum: Signer count required of the embedded certificates.

    Returns:
        True iff f+1 distinct authors time out the same view with valid locks.
    """
    return _valid_timeout_set(wtc.view, wtc.timeouts, weak_quorum_size(f), f, qc_quorum)


def tc_high_qc(tc: Union[TimeoutCert, WeakTimeoutCert]) -> QuorumCert:
    """
    Highest ranked certificate embedded in a timeout certificate.

    Rank is the view; ties go to the smallest block id (then kind and
    signers, so the choice is total and replayable).
    """
    return min((t.high_qc for t in tc.timeouts), key=qc_rank)
