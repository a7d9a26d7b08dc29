# moonshot_sim/core/trace.py

"""
Simulation events and the line-oriented trace format.

A trace file starts with one header line holding the full configuration,
followed by one record per executed event::

    # moonshot-sim trace v1 config={"adversary_strategy":"passive",...}
    step=0 | event={"type":"Start"} | outbox=[{"dst":null,"msg":{...}}]
    step=1 | event={"type":"Deliver","dst":2,"msg":{...}} | outbox=[...]
    VIOLATION kind=certificate_uniqueness step=57 detail=...

Every JSON fragment is the canonical encoding from ``types`` (sorted keys,
compact separators), so identical runs produce byte-identical files.

The same module parses scripted adversary files, one injection per line::

    at_step=<int> inject [dst=<int>] <canonical message encoding>
"""

import json
import re
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from .config import SCRIPT_LINE_PATTERN, TRACE_HEADER_PREFIX, SimConfig, build_config
from .errors import ConfigError, TraceFormatError
from .types import Message, Send, ValidatorId, from_data, is_message

_RECORD_RE = re.compile(r"^step=(\d+) \| event=")
_OUTBOX_SEP = " | outbox="
_SCRIPT_RE = re.compile(SCRIPT_LINE_PATTERN)
_DECODER = json.JSONDecoder()


def _canonical(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class Start:
    """Bootstrap event: every honest validator enters view 1."""

    def to_data(self) -> Dict[str, Any]:
        return {"type": "Start"}


@dataclass(frozen=True)
class Deliver:
    dst: ValidatorId
    msg: Message

    def to_data(self) -> Dict[str, Any]:
        return {"type": "Deliver", "dst": self.dst, "msg": self.msg.to_data()}


@dataclass(frozen=True)
class TimerExpire:
    dst: ValidatorId

    def to_data(self) -> Dict[str, Any]:
        return {"type": "TimerExpire", "dst": self.dst}


@dataclass(frozen=True)
class Inject:
    """A Byzantine message put on the network; ``dst`` None means multicast."""

    msg: Message
    dst: Optional[ValidatorId] = None

    def to_data(self) -> Dict[str, Any]:
        return {"type": "Inject", "dst": self.dst, "msg": self.msg.to_data()}


SimEvent = Union[Start, Deliver, TimerExpire, Inject]


def encode_event(event: SimEvent) -> str:
    return _canonical(event.to_data())


def event_from_data(data: Dict[str, Any]) -> SimEvent:
    """
    Rebuilds an event from its decoded JSON structure.

    Raises:
        TraceFormatError: On an unknown event type or a malformed message.
    """
    try:
        kind = data["type"]
        if kind == "Start":
            return Start()
        if kind == "Deliver":
            return Deliver(int(data["dst"]), _message(data["msg"]))
        if kind == "TimerExpire":
            return TimerExpire(int(data["dst"]))
        if kind == "Inject":
            dst = data.get("dst")
            return Inject(_message(data["msg"]), None if dst is None else int(dst))
    except (KeyError, TypeError, ValueError) as e:
        raise TraceFormatError(f"Malformed event {data!r}: {e}") from e
    raise TraceFormatError(f"Unknown event type in {data!r}")


def _message(data: Dict[str, Any]) -> Message:
    value = from_data(data)
    if not is_message(value):
        raise ValueError(f"{type(value).__name__} is not a network message")
    return value


def encode_outbox(sends: Sequence[Send]) -> str:
    return _canonical([s.to_data() for s in sends])


@dataclass(frozen=True)
class TraceRecord:
    step: int
    event: SimEvent
    outbox: str
    """Canonical encoding of the sends the event produced, kept verbatim."""

    def render(self) -> str:
        return f"step={self.step} | event={encode_event(self.event)}{_OUTBOX_SEP}{self.outbox}"


def parse_record(line: str, lineno: int = 0) -> TraceRecord:
    """
    Parses one ``step=... | event=... | outbox=[...]`` line.

    Raises:
        TraceFormatError: If the line does not follow the record format.
    """
    match = _RECORD_RE.match(line)
    if not match:
        raise TraceFormatError(f"line {lineno}: not a trace record: {line[:80]!r}")
    try:
        event_data, end = _DECODER.raw_decode(line, match.end())
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"line {lineno}: bad event encoding: {e}") from e
    if not line.startswith(_OUTBOX_SEP, end):
        raise TraceFormatError(f"line {lineno}: missing outbox field")
    outbox = line[end + len(_OUTBOX_SEP):]
    try:
        if not isinstance(json.loads(outbox), list):
            raise TraceFormatError(f"line {lineno}: outbox is not a list")
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"line {lineno}: bad outbox encoding: {e}") from e
    return TraceRecord(int(match.group(1)), event_from_data(event_data), outbox)


class TraceWriter:
    """
    Collects trace lines in memory and writes them out on ``save``.

    A writer without a path still collects lines, which is what tests and
    campaign workers that skip trace files use. With ``recording`` off it
    keeps only the header, as bounded exploration does.
    """

    def __init__(self, config: SimConfig, path: Optional[str] = None, recording: bool = True):
        self.path = path
        self.recording = recording
        self.lines: List[str] = [TRACE_HEADER_PREFIX + config.canonical()]

    def record(self, step: int, event: SimEvent, sends: Sequence[Send]) -> Optional[TraceRecord]:
        if not self.recording:
            return None
        rec = TraceRecord(step, event, encode_outbox(sends))
        self.lines.append(rec.render())
        return rec

    def violation(self, rendered: str) -> None:
        if self.recording:
            self.lines.append(rendered)

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    def save(self) -> Optional[str]:
        if self.path is None:
            return None
        with open(self.path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.text())
        return self.path


@dataclass
class ParsedTrace:
    config: SimConfig
    records: List[TraceRecord]
    violations: List[str]


def parse_trace_text(text: str, source: str = "<trace>") -> ParsedTrace:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(TRACE_HEADER_PREFIX):
        raise TraceFormatError(f"{source}: missing trace header")
    try:
        config = build_config(json.loads(lines[0][len(TRACE_HEADER_PREFIX):]), source=source)
    except (json.JSONDecodeError, ConfigError) as e:
        raise TraceFormatError(f"{source}: bad header: {e}") from e
    records: List[TraceRecord] = []
    violations: List[str] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("VIOLATION "):
            violations.append(line)
            continue
        records.append(parse_record(line, lineno))
    return ParsedTrace(config, records, violations)


def read_trace(path: str) -> ParsedTrace:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise TraceFormatError(f"Cannot read trace file '{path}': {e}") from e
    return parse_trace_text(text, source=path)


ScriptEntry = Tuple[int, Inject]


def parse_script_text(text: str, source: str = "<script>") -> List[ScriptEntry]:
    """
    Parses a scripted adversary file into (step, injection) pairs.

    Blank lines and ``#`` comments are skipped. Entries are returned sorted by
    step, keeping file order among entries for the same step.
    """
    entries: List[ScriptEntry] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        match = _SCRIPT_RE.match(line)
        if not match:
            raise TraceFormatError(f"{source}:{lineno}: expected 'at_step=<int> inject [dst=<int>] <msg>'")
        step, dst, payload = match.groups()
        try:
            msg = _message(json.loads(payload))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise TraceFormatError(f"{source}:{lineno}: bad message: {e}") from e
        entries.append((int(step), Inject(msg, None if dst is None else int(dst))))
    entries.sort(key=lambda entry: entry[0])
    return entries


def load_script(path: str) -> List[ScriptEntry]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise TraceFormatError(f"Cannot read script file '{path}': {e}") from e
    return parse_script_text(text, source=path)
