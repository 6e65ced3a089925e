"""Cross-layer page graph: typed nodes and edges built from a trace,
decoration splitting, and flow-edge (exfiltration/infiltration) detection.

Node ids are derived from content, so identical traces always produce
identical graphs. Finished graphs are treated as immutable.
"""

from __future__ import annotations

import base64
import hashlib
from dataclasses import dataclass, field
from typing import Optional

from . import urls
from .errors import UrlParseError
from .trace import Trace

STORAGE = "storage"
HTML = "html"
SCRIPT = "script"
NETWORK = "network"
DECORATION = "decoration"

INTERACTION = "interaction"
EXFILTRATION = "exfiltration"
INFILTRATION = "infiltration"

# interaction sub-kinds; "splits" carries request -> decoration edges
SUBKINDS = ("set", "get", "initiates", "creates", "responds", "redirects",
            "splits")

ENCODINGS = ("plain", "base64", "md5", "sha1", "sha256")
HEX_ENCODINGS = frozenset({"md5", "sha1", "sha256"})

DEFAULT_MIN_VALUE_LEN = 8

DOCUMENT_NODE = "html:document"


@dataclass
class Node:
    id: str
    kind: str
    attrs: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: str  # interaction | exfiltration | infiltration
    sub: str = ""  # interaction sub-kind
    evidence: Optional[tuple] = None  # (encoding, matched_span) for flow edges

    def dump_line(self) -> str:
        ev = ""
        if self.evidence is not None:
            ev = f"{self.evidence[0]}@{self.evidence[1]}"
        label = self.kind if not self.sub else f"{self.kind}:{self.sub}"
        return f"{self.src}\t{self.dst}\t{label}\t{ev}"


class PageGraph:
    """Mutable during construction, then used read-only."""

    def __init__(self, site: str, page_url: str):
        self.site = site
        self.page_url = page_url
        self.nodes: dict[str, Node] = {}
        self.edges: list[Edge] = []
        self.warnings: list[str] = []
        # ordered storage writes: (seq, node_id, value, actor_node_id)
        self.storage_writes: list[tuple] = []

    # -- construction helpers -------------------------------------------------

    def ensure_node(self, node_id: str, node_kind: str, **attrs) -> Node:
        node = self.nodes.get(node_id)
        if node is None:
            node = Node(node_id, node_kind, dict(attrs))
            self.nodes[node_id] = node
        else:
            for k, v in attrs.items():
                node.attrs.setdefault(k, v)
        return node

    def add_edge(self, src: str, dst: str, kind: str, sub: str = "",
                 evidence=None) -> None:
        self.edges.append(Edge(src, dst, kind, sub, evidence))

    # -- queries --------------------------------------------------------------

    def nodes_of_kind(self, kind: str) -> list[Node]:
        return [n for n in self.nodes.values() if n.kind == kind]

    def decoration_nodes(self) -> list[Node]:
        return self.nodes_of_kind(DECORATION)

    def request_nodes(self) -> list[Node]:
        return [n for n in self.nodes_of_kind(NETWORK)
                if n.attrs.get("direction") == "request"]

    def out_edges(self, node_id: str) -> list[Edge]:
        return [e for e in self.edges if e.src == node_id]

    def in_edges(self, node_id: str) -> list[Edge]:
        return [e for e in self.edges if e.dst == node_id]

    def flow_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.kind in (EXFILTRATION, INFILTRATION)]

    def interaction_view(self) -> tuple[list[Node], list[Edge]]:
        return list(self.nodes.values()), list(self.edges)

    def flow_view(self) -> tuple[list[Node], list[Edge]]:
        """Flow edges plus the interaction edges incident to their endpoints."""
        flow = self.flow_edges()
        endpoints = {e.src for e in flow} | {e.dst for e in flow}
        edges = list(flow)
        for e in self.edges:
            if e.kind == INTERACTION and (e.src in endpoints or e.dst in endpoints):
                edges.append(e)
        node_ids = {e.src for e in edges} | {e.dst for e in edges}
        return [self.nodes[n] for n in node_ids], edges

    def edge_list_dump(self) -> str:
        """Deterministic one-edge-per-line dump for debugging and oracles."""
        return "\n".join(sorted(e.dump_line() for e in self.edges)) + "\n"


def _storage_node_id(store: str, key: str) -> str:
    return f"storage:{store}:{key}"


def _script_node_id(script_id: str) -> str:
    return f"script:{script_id}"


def _request_node_id(request_id) -> str:
    return f"network:req:{request_id}"


def _response_node_id(request_id) -> str:
    return f"network:resp:{request_id}"


def _element_node_id(element_id: str) -> str:
    return f"html:{element_id}"


def _actor_node(g: PageGraph, actor: str) -> str:
    """Resolve an event actor to a node id, creating the node if needed."""
    if actor == "document":
        g.ensure_node(DOCUMENT_NODE, HTML, tag="document")
        return DOCUMENT_NODE
    element = _element_node_id(actor)
    if element in g.nodes:
        return element
    script = _script_node_id(actor)
    # scripts not announced via script_load get an implicit node
    g.ensure_node(script, SCRIPT, url="", length=0, is_eval=False)
    return script


def build_graph(t: Trace) -> PageGraph:
    """Build the interaction graph of a validated trace.

    One storage node per (store, key), one script node per script, one network
    node per request and per response, interaction edges per event.
    """
    g = PageGraph(t.site, t.page_url)
    for ev in t.events:
        p = ev.payload
        if ev.kind in ("script_load", "eval_script"):
            sid = _script_node_id(p.get("script_id", ev.actor))
            g.ensure_node(
                sid, SCRIPT,
                url=p.get("url", ""),
                length=p.get("length", 0),
                is_eval=(ev.kind == "eval_script"),
            )
            g.add_edge(_actor_node(g, ev.actor), sid, INTERACTION, "creates")
        elif ev.kind == "storage_set":
            node = g.ensure_node(
                _storage_node_id(p["store"], p["key"]), STORAGE,
                store=p["store"], key=p["key"])
            value = p.get("value", "")
            node.attrs.setdefault("writes", []).append((ev.seq, value))
            actor = _actor_node(g, ev.actor)
            g.add_edge(actor, node.id, INTERACTION, "set")
            g.storage_writes.append((ev.seq, node.id, value, actor))
        elif ev.kind == "storage_get":
            node = g.ensure_node(
                _storage_node_id(p["store"], p["key"]), STORAGE,
                store=p["store"], key=p["key"])
            if "value" in p:
                node.attrs.setdefault("reads", []).append((ev.seq, p["value"]))
            g.add_edge(_actor_node(g, ev.actor), node.id, INTERACTION, "get")
        elif ev.kind in ("request", "element_request"):
            rid = _request_node_id(p["request_id"])
            g.ensure_node(
                rid, NETWORK, direction="request", url=p["url"],
                request_id=p["request_id"], seq=ev.seq)
            g.add_edge(_actor_node(g, ev.actor), rid, INTERACTION, "initiates")
        elif ev.kind == "response":
            rid = _request_node_id(p["request_id"])
            nid = _response_node_id(p["request_id"])
            g.ensure_node(
                nid, NETWORK, direction="response",
                request_id=p["request_id"], status=p.get("status", 0),
                set_storage=p.get("set_storage", []),
                payload=p.get("payload", ""), seq=ev.seq)
            g.add_edge(rid, nid, INTERACTION, "responds")
        elif ev.kind == "redirect":
            old = _request_node_id(p["from_request_id"])
            new = _request_node_id(p["request_id"])
            g.ensure_node(
                new, NETWORK, direction="request", url=p["to_url"],
                request_id=p["request_id"], seq=ev.seq, redirected=True)
            g.add_edge(old, new, INTERACTION, "redirects")
        elif ev.kind == "element_create":
            eid = _element_node_id(p["element_id"])
            g.ensure_node(eid, HTML, tag=p.get("tag", ""))
            g.add_edge(_actor_node(g, ev.actor), eid, INTERACTION, "creates")
    return g


def attach_decoration_nodes(g: PageGraph) -> PageGraph:
    """Split each request node into one decoration child per link decoration."""
    for req in g.request_nodes():
        url = req.attrs.get("url", "")
        try:
            d = urls.decompose(url)
        except UrlParseError as exc:
            g.warnings.append(f"unparseable request URL {url!r}: {exc}")
            continue
        raw_values = _raw_decoration_values(d)
        for dec, raw_value in zip(urls.name_decorations(d, g.site), raw_values):
            dec_id = f"decoration:{req.attrs['request_id']}:{dec.kind}:{dec.position}"
            g.ensure_node(
                dec_id, DECORATION,
                decoration=dec, value=dec.value, raw_value=raw_value,
                kind=dec.kind, key=dec.id.key, fqdn=dec.id.fqdn,
                position=dec.position, request=req.id)
            g.add_edge(req.id, dec_id, INTERACTION, "splits")
    return g


def _raw_decoration_values(d: urls.DecoratedUrl) -> list[str]:
    """Wire-format value of each decoration, in name_decorations order."""
    out = list(d.raw_dir_segments)
    for token in d.raw_query_tokens:
        out.append(token.split("=", 1)[1] if "=" in token else "")
    if d.raw_fragment is not None:
        if d.fragment_is_kv:
            for token in d.raw_fragment.split("&"):
                out.append(token.split("=", 1)[1])
        else:
            out.append(d.raw_fragment)
    return out


def encode_candidates(value: str) -> set[tuple[str, str]]:
    """The five monitored forms of ``value``: identity, padded Base64, and
    lowercase hex MD5 / SHA-1 / SHA-256 digests."""
    if not value:
        raise ValueError("encode_candidates requires a non-empty value")
    data = value.encode("utf-8")
    return {
        ("plain", value),
        ("base64", base64.b64encode(data).decode("ascii")),
        ("md5", hashlib.md5(data).hexdigest()),
        ("sha1", hashlib.sha1(data).hexdigest()),
        ("sha256", hashlib.sha256(data).hexdigest()),
    }


def _match_encoding(candidates, haystacks: list[str]):
    """First matching (encoding, span) in priority order, else None.

    Hex digests match case-insensitively; plain and base64 are case-sensitive.
    """
    by_encoding = dict(candidates)
    for encoding in ENCODINGS:
        needle = by_encoding[encoding]
        for hay in haystacks:
            if encoding in HEX_ENCODINGS:
                pos = hay.lower().find(needle)
            else:
                pos = hay.find(needle)
            if pos != -1:
                return encoding, (pos, pos + len(needle))
    return None


def _match_containment(candidates, fragments: list[str]):
    """Reverse direction: a decoration value occurring inside an encoded form
    of the storage value (how split identifier chunks are still caught)."""
    by_encoding = dict(candidates)
    for encoding in ENCODINGS:
        form = by_encoding[encoding]
        lowered = form.lower() if encoding in HEX_ENCODINGS else form
        for frag in fragments:
            if not frag:
                continue
            needle = frag.lower() if encoding in HEX_ENCODINGS else frag
            pos = lowered.find(needle)
            if pos != -1:
                return encoding, (pos, pos + len(needle))
    return None


def _storage_values_before(node: Node, seq: int) -> list[str]:
    values = []
    for attr in ("writes", "reads"):
        for ev_seq, value in node.attrs.get(attr, []):
            if ev_seq < seq and value:
                values.append(value)
    # deterministic order, de-duplicated
    return sorted(set(values))


def detect_exfiltration(g: PageGraph,
                        min_len: int = DEFAULT_MIN_VALUE_LEN) -> PageGraph:
    """Add storage -> decoration exfiltration edges.

    A storage value set or read before a request's seq is considered
    exfiltrated through a decoration of that request when any of its five
    encoded forms occurs as a substring of the decoration value (decoded or
    wire form), or, conversely, when the decoration value is itself a
    substring of one of those forms; the reverse direction is what keeps
    identifiers split into chunks detectable. ``min_len`` drops short storage
    values and, in the reverse direction, short decoration values (default 8;
    pass 0 to disable the pre-processing for evasion studies).
    """
    storage_nodes = g.nodes_of_kind(STORAGE)
    children_by_request: dict[str, list[Node]] = {}
    for dec in g.decoration_nodes():
        children_by_request.setdefault(dec.attrs["request"], []).append(dec)
    for req in g.request_nodes():
        seq = req.attrs.get("seq", 0)
        children = children_by_request.get(req.id, [])
        if not children:
            continue
        for snode in storage_nodes:
            for value in _storage_values_before(snode, seq):
                if len(value) < min_len:
                    continue
                candidates = encode_candidates(value)
                for dec in children:
                    haystacks = [dec.attrs["value"]]
                    if dec.attrs.get("raw_value") != dec.attrs["value"]:
                        haystacks.append(dec.attrs["raw_value"])
                    hit = _match_encoding(candidates, haystacks)
                    if hit is None and len(dec.attrs["value"]) >= min_len:
                        hit = _match_containment(candidates, haystacks)
                    if hit is not None:
                        g.add_edge(snode.id, dec.id, EXFILTRATION,
                                   evidence=hit)
    # keep at most one edge per (storage, decoration) pair
    seen = set()
    deduped = []
    for e in g.edges:
        if e.kind == EXFILTRATION:
            pair = (e.src, e.dst)
            if pair in seen:
                continue
            seen.add(pair)
        deduped.append(e)
    g.edges = deduped
    return g


def detect_infiltration(g: PageGraph) -> PageGraph:
    """Add response -> storage infiltration edges.

    Header-set storage entries always infiltrate. A script write is attributed
    to a response iff the stored value (or an encoded form) appears in that
    response's payload and the write happens after the response in seq order.
    """
    responses = [n for n in g.nodes_of_kind(NETWORK)
                 if n.attrs.get("direction") == "response"]
    added = set()

    def add(resp_id: str, storage_id: str, evidence) -> None:
        if (resp_id, storage_id) in added:
            return
        added.add((resp_id, storage_id))
        g.add_edge(resp_id, storage_id, INFILTRATION, evidence=evidence)

    for resp in responses:
        for entry in resp.attrs.get("set_storage", []):
            node = g.ensure_node(
                _storage_node_id(entry["store"], entry["key"]), STORAGE,
                store=entry["store"], key=entry["key"])
            node.attrs.setdefault("writes", []).append(
                (resp.attrs.get("seq", 0), entry.get("value", "")))
            add(resp.id, node.id, ("header", None))
        payload = resp.attrs.get("payload", "")
        if not payload:
            continue
        resp_seq = resp.attrs.get("seq", 0)
        for seq, storage_id, value, _actor in g.storage_writes:
            if seq <= resp_seq or not value:
                continue
            hit = _match_encoding(encode_candidates(value), [payload])
            if hit is not None:
                add(resp.id, storage_id, hit)

    # mark each request whose response infiltrates storage
    infiltrating = {}
    for resp_id, _storage in added:
        infiltrating[resp_id] = infiltrating.get(resp_id, 0) + 1
    for resp in responses:
        count = infiltrating.get(resp.id, 0)
        if count:
            req_id = _request_node_id(resp.attrs["request_id"])
            if req_id in g.nodes:
                g.nodes[req_id].attrs["infiltrations"] = \
                    g.nodes[req_id].attrs.get("infiltrations", 0) + count
    return g


def build_full_graph(t: Trace,
                     min_len: int = DEFAULT_MIN_VALUE_LEN) -> PageGraph:
    """Convenience pipeline: build, split decorations, detect both flows."""
    g = build_graph(t)
    attach_decoration_nodes(g)
    detect_exfiltration(g, min_len=min_len)
    detect_infiltration(g)
    return g
