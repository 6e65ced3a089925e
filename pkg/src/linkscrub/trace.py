"""Crawl-trace event format: parsing, validation, serialization.

The trace file is the public contract for adapters from real crawlers:
UTF-8, one JSON object per line, a ``{"format": 1}`` header line first, then
events with fields ``seq``, ``kind``, ``page_url``, ``site``, ``actor``,
``payload``. One trace covers one page load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Union

from .errors import TraceParseError

FORMAT_VERSION = 1

EVENT_KINDS = frozenset({
    "script_load",
    "eval_script",
    "storage_set",
    "storage_get",
    "request",
    "response",
    "redirect",
    "element_create",
    "element_request",
})

STORES = frozenset({"cookie", "localStorage"})


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    kind: str
    page_url: str
    site: str
    actor: str
    payload: Mapping

    def to_record(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "page_url": self.page_url,
            "site": self.site,
            "actor": self.actor,
            "payload": dict(self.payload),
        }


@dataclass(frozen=True)
class Trace:
    site: str
    page_url: str
    events: tuple[TraceEvent, ...] = ()

    @property
    def trace_id(self) -> str:
        return f"{self.site}::{self.page_url}"


@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    seqs: tuple[int, ...] = ()


_REQUIRED_FIELDS = ("seq", "kind", "page_url", "site", "actor", "payload")


def _check_event(ev: TraceEvent, known_requests: set, line_no: int) -> None:
    if ev.kind not in EVENT_KINDS:
        raise TraceParseError(f"unknown event kind {ev.kind!r}", line_no)
    p = ev.payload
    if ev.kind in ("storage_set", "storage_get"):
        if p.get("store") not in STORES:
            raise TraceParseError(
                f"storage event needs store in {sorted(STORES)}", line_no)
        if "key" not in p:
            raise TraceParseError("storage event needs a key", line_no)
    elif ev.kind in ("request", "element_request"):
        if "url" not in p or "request_id" not in p:
            raise TraceParseError("request needs url and request_id", line_no)
        known_requests.add(p["request_id"])
    elif ev.kind == "response":
        if p.get("request_id") not in known_requests:
            raise TraceParseError(
                f"response references unknown request id {p.get('request_id')!r}",
                line_no)
    elif ev.kind == "redirect":
        if p.get("from_request_id") not in known_requests:
            raise TraceParseError(
                f"redirect references unknown request id {p.get('from_request_id')!r}",
                line_no)
        if "to_url" not in p or "request_id" not in p:
            raise TraceParseError("redirect needs to_url and request_id", line_no)
        known_requests.add(p["request_id"])
    elif ev.kind == "element_create":
        if "element_id" not in p:
            raise TraceParseError("element_create needs element_id", line_no)


def parse_trace(stream: Union[IO[str], Iterable[str]]) -> Trace:
    """Parse one line-delimited trace.

    An empty stream yields an empty Trace. Unknown kinds, dangling request
    references, and non-monotone seq numbers raise :class:`TraceParseError`
    with the offending line number.
    """
    events: list[TraceEvent] = []
    known_requests: set = set()
    header_seen = False
    last_seq = None
    site = ""
    page_url = ""
    for line_no, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceParseError(f"invalid JSON ({exc.msg})", line_no) from exc
        if not header_seen:
            if record.get("format") != FORMAT_VERSION:
                raise TraceParseError(
                    f"expected header {{\"format\": {FORMAT_VERSION}}}", line_no)
            header_seen = True
            continue
        missing = [f for f in _REQUIRED_FIELDS if f not in record]
        if missing:
            raise TraceParseError(f"missing fields {missing}", line_no)
        ev = TraceEvent(
            seq=record["seq"],
            kind=record["kind"],
            page_url=record["page_url"],
            site=record["site"],
            actor=record["actor"],
            payload=record["payload"],
        )
        if not isinstance(ev.seq, int):
            raise TraceParseError("seq must be an integer", line_no)
        if last_seq is not None and ev.seq <= last_seq:
            raise TraceParseError(
                f"non-monotone seq {ev.seq} after {last_seq}", line_no)
        last_seq = ev.seq
        if not events:
            site = ev.site
            page_url = ev.page_url
        elif ev.site != site:
            raise TraceParseError(
                f"event site {ev.site!r} differs from trace site {site!r}", line_no)
        _check_event(ev, known_requests, line_no)
        events.append(ev)
    return Trace(site=site, page_url=page_url, events=tuple(events))


def validate_trace(t: Trace) -> list[Finding]:
    """Non-mutating invariant check; an empty report means the trace is valid."""
    findings: list[Finding] = []
    seen_seq: dict[int, int] = {}
    known_requests: set = set()
    for ev in t.events:
        if ev.seq in seen_seq:
            findings.append(Finding(
                "duplicate-seq",
                f"seq {ev.seq} used by two events",
                (seen_seq[ev.seq], ev.seq)))
        else:
            seen_seq[ev.seq] = ev.seq
        if ev.site != t.site:
            findings.append(Finding(
                "site-mismatch",
                f"event {ev.seq} has site {ev.site!r}, trace has {t.site!r}",
                (ev.seq,)))
        if ev.kind not in EVENT_KINDS:
            findings.append(Finding(
                "unknown-kind", f"event {ev.seq}: kind {ev.kind!r}", (ev.seq,)))
            continue
        p = ev.payload
        if ev.kind in ("storage_set", "storage_get"):
            if p.get("store") not in STORES:
                findings.append(Finding(
                    "bad-store", f"event {ev.seq}: store {p.get('store')!r}",
                    (ev.seq,)))
            if not p.get("key"):
                findings.append(Finding(
                    "empty-storage-key", f"event {ev.seq}: empty storage key",
                    (ev.seq,)))
            if not isinstance(p.get("value", ""), str):
                findings.append(Finding(
                    "bad-storage-value",
                    f"event {ev.seq}: storage value must be text", (ev.seq,)))
        elif ev.kind in ("request", "element_request"):
            known_requests.add(p.get("request_id"))
        elif ev.kind == "response":
            if p.get("request_id") not in known_requests:
                findings.append(Finding(
                    "dangling-response",
                    f"event {ev.seq}: unknown request id {p.get('request_id')!r}",
                    (ev.seq,)))
        elif ev.kind == "redirect":
            if p.get("from_request_id") not in known_requests:
                findings.append(Finding(
                    "dangling-redirect",
                    f"event {ev.seq}: unknown request id "
                    f"{p.get('from_request_id')!r}",
                    (ev.seq,)))
            known_requests.add(p.get("request_id"))
    # monotone check over the ordered event list
    for a, b in zip(t.events, t.events[1:]):
        if b.seq <= a.seq and a.seq != b.seq:
            findings.append(Finding(
                "non-monotone-seq",
                f"seq {b.seq} follows {a.seq}", (a.seq, b.seq)))
    return findings


def dump_trace(t: Trace) -> str:
    lines = [json.dumps({"format": FORMAT_VERSION})]
    for ev in t.events:
        lines.append(json.dumps(ev.to_record(), sort_keys=True))
    return "\n".join(lines) + "\n"


def write_trace(t: Trace, fh: IO[str]) -> None:
    fh.write(dump_trace(t))


def load_trace(path) -> Trace:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace(fh)
