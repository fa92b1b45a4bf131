import json

from hsportal.audit import AuditLog
from hsportal.timeutil import SimClock, parse_utc


def make_log(tmp_path):
    return AuditLog(tmp_path / "audit.log", SimClock(current=parse_utc("2025-01-01T00:00:00Z")))


def test_sequence_is_monotonic(tmp_path):
    log = make_log(tmp_path)
    for i in range(5):
        log.append("query_executed", actor="fitgpt", user_id="u1", details={"n": i})
    assert [e.seq for e in log.events()] == [1, 2, 3, 4, 5]


def test_user_filter(tmp_path):
    log = make_log(tmp_path)
    log.append("grant_created", actor="u1", user_id="u1")
    log.append("grant_created", actor="u2", user_id="u2")
    log.append("query_executed", actor="app", user_id="u1")
    assert [e.kind for e in log.events("u1")] == ["grant_created", "query_executed"]


def test_replay_continues_sequence(tmp_path):
    log = make_log(tmp_path)
    log.append("grant_created", actor="u1", user_id="u1")
    log.append("grant_revoked", actor="u1", user_id="u1")

    reborn = make_log(tmp_path)
    assert [e.kind for e in reborn.events()] == ["grant_created", "grant_revoked"]
    event = reborn.append("query_executed", actor="app", user_id="u1")
    assert event.seq == 3


def test_log_file_is_jsonl(tmp_path):
    log = make_log(tmp_path)
    log.append("grant_created", actor="u1", user_id="u1", details={"grant_id": "g-000001"})
    [line] = (tmp_path / "audit.log").read_text().strip().splitlines()
    doc = json.loads(line)
    assert doc["kind"] == "grant_created"
    assert doc["details"] == {"grant_id": "g-000001"}


def test_memory_only_mode():
    log = AuditLog()
    log.append("query_executed", actor="app")
    assert len(log.events()) == 1
