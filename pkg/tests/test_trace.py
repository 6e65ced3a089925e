import io
import json

import pytest

from linkscrub.errors import TraceParseError
from linkscrub.trace import (FORMAT_VERSION, dump_trace, parse_trace,
                             validate_trace)

HEADER = json.dumps({"format": FORMAT_VERSION})


def _lines(*events):
    out = [HEADER]
    for ev in events:
        out.append(json.dumps(ev))
    return out


def _event(seq, kind, **payload):
    return {"seq": seq, "kind": kind, "page_url": "https://w.s.example/",
            "site": "s.example", "actor": "document", "payload": payload}


def test_empty_stream_yields_empty_trace():
    t = parse_trace([])
    assert t.events == ()
    assert validate_trace(t) == []


def test_header_required():
    with pytest.raises(TraceParseError) as exc:
        parse_trace([json.dumps(_event(1, "script_load", script_id="a"))])
    assert exc.value.line_no == 1


def test_parse_minimal_trace():
    t = parse_trace(_lines(
        _event(1, "script_load", script_id="a", url="https://c.example/x.js"),
        _event(2, "request", request_id="r1", url="https://t.example/p"),
        _event(3, "response", request_id="r1", status=200),
    ))
    assert len(t.events) == 3
    assert t.site == "s.example"
    assert t.trace_id == "s.example::https://w.s.example/"


def test_non_monotone_seq_rejected():
    with pytest.raises(TraceParseError) as exc:
        parse_trace(_lines(
            _event(2, "script_load", script_id="a"),
            _event(2, "script_load", script_id="b"),
        ))
    assert exc.value.line_no == 3


def test_unknown_kind_rejected():
    with pytest.raises(TraceParseError):
        parse_trace(_lines(_event(1, "teleport")))


def test_dangling_response_rejected():
    with pytest.raises(TraceParseError) as exc:
        parse_trace(_lines(_event(1, "response", request_id="nope")))
    assert exc.value.line_no == 2


def test_dangling_redirect_rejected():
    with pytest.raises(TraceParseError):
        parse_trace(_lines(
            _event(1, "redirect", from_request_id="nope",
                   request_id="r2", to_url="https://t.example/")))


def test_bad_store_rejected():
    with pytest.raises(TraceParseError):
        parse_trace(_lines(
            _event(1, "storage_set", store="sessionStorage", key="k",
                   value="v")))


def test_invalid_json_names_line():
    with pytest.raises(TraceParseError) as exc:
        parse_trace([HEADER, "{nope"])
    assert exc.value.line_no == 2


def test_site_mismatch_rejected():
    bad = _event(2, "script_load", script_id="b")
    bad["site"] = "other.example"
    with pytest.raises(TraceParseError):
        parse_trace(_lines(_event(1, "script_load", script_id="a"), bad))


def test_dump_parse_round_trip(tb):
    t = (tb.script("s1")
         .set("s1", "cookie", "uid", "abc")
         .request("s1", "r1", "https://t.example/?uid=abc")
         .response("r1")
         .build())
    text = dump_trace(t)
    again = parse_trace(io.StringIO(text))
    assert again == t
    assert dump_trace(again) == text


def test_validate_reports_duplicate_seq_without_raising():
    t = parse_trace(_lines(_event(1, "script_load", script_id="a")))
    twin = t.events[0]
    from dataclasses import replace
    t = replace(t, events=(twin, replace(twin, kind="eval_script")))
    codes = {f.code for f in validate_trace(t)}
    assert "duplicate-seq" in codes


def test_validate_reports_empty_storage_key(tb):
    t = tb.set("s1", "cookie", "", "v").build()
    codes = {f.code for f in validate_trace(t)}
    assert "empty-storage-key" in codes


def test_validate_clean_trace(tb):
    t = (tb.script("s1")
         .request("s1", "r1", "https://t.example/x")
         .response("r1")
         .build())
    assert validate_trace(t) == []
