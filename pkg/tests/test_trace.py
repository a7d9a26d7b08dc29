# tests/test_trace.py

import json

import pytest

from moonshot_sim.core.config import TRACE_HEADER_PREFIX, SimConfig
from moonshot_sim.core.errors import TraceFormatError
from moonshot_sim.core.trace import (
    Deliver,
    Inject,
    Start,
    TimerExpire,
    TraceRecord,
    TraceWriter,
    encode_event,
    event_from_data,
    parse_record,
    parse_script_text,
    parse_trace_text,
    read_trace,
)
from moonshot_sim.core.types import GENESIS_BLOCK, NormalProposal, Send, TimeoutMsg, Vote, VoteKind, encode


def test_record_line_format(b1):
    vote = Vote(VoteKind.NORMAL, b1.id, 1, 2)
    rec = TraceRecord(4, Deliver(2, vote), "[]")
    line = rec.render()
    assert line.startswith("step=4 | event={")
    assert line.endswith(" | outbox=[]")
    assert parse_record(line) == rec


def test_record_with_payload_containing_separator(gqc):
    tricky = GENESIS_BLOCK.child(1, "a | outbox=[] b")
    rec = TraceRecord(0, Deliver(0, NormalProposal(tricky, gqc, 1, 1)), "[]")
    assert parse_record(rec.render()).event == rec.event


@pytest.mark.parametrize(
    "line",
    [
        "step=x | event={} | outbox=[]",
        "step=1 | event={not json} | outbox=[]",
        'step=1 | event={"type":"Start"}',
        'step=1 | event={"type":"Start"} | outbox={}',
        'step=1 | event={"type":"Warp"} | outbox=[]',
    ],
)
def test_bad_record_lines(line):
    with pytest.raises(TraceFormatError):
        parse_record(line)


def test_event_decoding_rejects_non_messages(b1):
    with pytest.raises(TraceFormatError):
        event_from_data({"type": "Deliver", "dst": 0, "msg": b1.to_data()})


def test_events_encode_canonically(gqc):
    assert encode_event(Start()) == '{"type":"Start"}'
    assert encode_event(TimerExpire(3)) == '{"dst":3,"type":"TimerExpire"}'
    inject = Inject(TimeoutMsg(2, 3, gqc))
    assert event_from_data(inject.to_data()) == inject


def test_writer_collects_lines_without_path(gqc):
    cfg = SimConfig(seed=5)
    writer = TraceWriter(cfg)
    writer.record(0, Start(), [])
    writer.violation("VIOLATION kind=x step=0 detail=y")
    assert writer.save() is None
    lines = writer.text().splitlines()
    assert lines[0] == TRACE_HEADER_PREFIX + cfg.canonical()
    assert lines[1] == 'step=0 | event={"type":"Start"} | outbox=[]'
    assert lines[2].startswith("VIOLATION ")


def test_trace_file_round_trip(tmp_path, gqc, b1):
    cfg = SimConfig(seed=11, byzantine=(3,))
    path = tmp_path / "trace.log"
    writer = TraceWriter(cfg, str(path))
    proposal = NormalProposal(b1, gqc, 1, 1)
    writer.record(0, Start(), [Send(proposal)])
    writer.record(1, Deliver(0, proposal), [Send(Vote(VoteKind.NORMAL, b1.id, 1, 0))])
    writer.violation("VIOLATION kind=x step=1 detail=y")
    assert writer.save() == str(path)

    parsed = read_trace(str(path))
    assert parsed.config == cfg
    assert [r.step for r in parsed.records] == [0, 1]
    assert parsed.records[1].event == Deliver(0, proposal)
    assert parsed.violations == ["VIOLATION kind=x step=1 detail=y"]


def test_trace_without_header():
    with pytest.raises(TraceFormatError):
        parse_trace_text('step=0 | event={"type":"Start"} | outbox=[]\n')


def test_trace_with_bad_config_header():
    with pytest.raises(TraceFormatError):
        parse_trace_text(TRACE_HEADER_PREFIX + '{"f":1,"colour":"red"}\n')


def test_missing_trace_file(tmp_path):
    with pytest.raises(TraceFormatError):
        read_trace(str(tmp_path / "absent.log"))


def test_script_lines_sorted_by_step(gqc, b1):
    vote = Vote(VoteKind.NORMAL, b1.id, 1, 3)
    timeout = TimeoutMsg(1, 3, gqc)
    text = "\n".join(
        [
            "# scripted adversary",
            f"at_step=7 inject {encode(vote)}",
            "",
            f"at_step=2 inject dst=1 {encode(timeout)}",
            f"at_step=7 inject dst=0 {encode(timeout)}",
        ]
    )
    entries = parse_script_text(text)
    assert entries == [
        (2, Inject(timeout, 1)),
        (7, Inject(vote, None)),
        (7, Inject(timeout, 0)),
    ]


@pytest.mark.parametrize(
    "line",
    [
        "inject {}",
        "at_step=1 send {}",
        'at_step=1 inject {"type":"Nope"}',
        "at_step=1 inject {broken",
    ],
)
def test_bad_script_lines(line):
    with pytest.raises(TraceFormatError):
        parse_script_text(line)


def test_script_messages_need_no_block_ids(b1):
    data = b1.to_data()
    del data["id"]
    line = "at_step=0 inject " + json.dumps(
        {"type": "OptimisticProposal", "block": data, "view": 1, "src": 3}
    )
    ((_, injection),) = parse_script_text(line)
    assert injection.msg.block.id == b1.id
