"""Adversarial trace transforms for the evasion study.

Three transforms over the URLs carried in traces: random renaming of
query/fragment keys plus path reordering, splitting long decoration values
into 8-character chunks under suffixed keys, and combining all decorations of
a request into a single SHA-256 path decoration.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import replace
from typing import Callable, Optional

from .trace import Trace, TraceEvent
from .urls import DecoratedUrl, decompose, random_token, reassemble

_URL_FIELDS = {"request": "url", "element_request": "url",
               "redirect": "to_url", "script_load": None, "eval_script": None}

SPLIT_CHUNK = 8


def _map_urls(trace: Trace,
              fn: Callable[[str, TraceEvent], str]) -> Trace:
    events = []
    for ev in trace.events:
        field = _URL_FIELDS.get(ev.kind)
        if field and field in ev.payload:
            payload = dict(ev.payload)
            payload[field] = fn(payload[field], ev)
            events.append(replace(ev, payload=payload))
        else:
            events.append(ev)
    return replace(trace, events=tuple(events))


def _rebuild(d: DecoratedUrl, raw_dirs=None, raw_query=None,
             raw_fragment: object = "unchanged") -> str:
    out = replace(
        d,
        raw_dir_segments=tuple(raw_dirs) if raw_dirs is not None
        else d.raw_dir_segments,
        raw_query_tokens=tuple(raw_query) if raw_query is not None
        else d.raw_query_tokens,
        raw_fragment=d.raw_fragment if raw_fragment == "unchanged"
        else raw_fragment,
    )
    return reassemble(out)


def evade_rename(traces, seed: int = 0) -> list[Trace]:
    """Replace query/fragment keys with random tokens and permute the order
    of path directory levels; decoration values are untouched."""

    def transform(url: str, ev: TraceEvent) -> str:
        rng = random.Random(f"rename|{seed}|{ev.site}|{ev.seq}|{url}")
        try:
            d = decompose(url)
        except Exception:
            return url
        dirs = list(d.raw_dir_segments)
        rng.shuffle(dirs)
        query = []
        for token in d.raw_query_tokens:
            if "=" in token:
                key, value = token.split("=", 1)
                query.append(f"{random_token(rng, max(1, len(key)))}={value}")
            else:
                query.append(token)
        fragment = d.raw_fragment
        if d.fragment_is_kv:
            parts = []
            for token in d.raw_fragment.split("&"):
                key, value = token.split("=", 1)
                parts.append(f"{random_token(rng, max(1, len(key)))}={value}")
            fragment = "&".join(parts)
        return _rebuild(d, raw_dirs=dirs, raw_query=query,
                        raw_fragment=fragment)

    return [_map_urls(t, transform) for t in traces]


def _chunks(value: str, size: int = SPLIT_CHUNK) -> list[str]:
    return [value[i:i + size] for i in range(0, len(value), size)]


def evade_split(traces) -> list[Trace]:
    """Split every decoration value longer than 8 characters into consecutive
    8-character chunks carried by suffixed sibling decorations."""

    def transform(url: str, ev: TraceEvent) -> str:
        try:
            d = decompose(url)
        except Exception:
            return url
        dirs = []
        for seg in d.raw_dir_segments:
            dirs.extend(_chunks(seg) if len(seg) > SPLIT_CHUNK else [seg])
        query = []
        for token in d.raw_query_tokens:
            if "=" in token:
                key, value = token.split("=", 1)
                if len(value) > SPLIT_CHUNK:
                    query.extend(f"{key}_{i}={chunk}"
                                 for i, chunk in enumerate(_chunks(value)))
                    continue
            query.append(token)
        fragment = d.raw_fragment
        if d.fragment_is_kv:
            parts = []
            for token in d.raw_fragment.split("&"):
                key, value = token.split("=", 1)
                if len(value) > SPLIT_CHUNK:
                    parts.extend(f"{key}_{i}={chunk}"
                                 for i, chunk in enumerate(_chunks(value)))
                else:
                    parts.append(token)
            fragment = "&".join(parts)
        elif fragment and len(fragment) > SPLIT_CHUNK:
            fragment = "&".join(
                f"fragment_{i}={chunk}"
                for i, chunk in enumerate(_chunks(fragment)))
        return _rebuild(d, raw_dirs=dirs, raw_query=query,
                        raw_fragment=fragment)

    return [_map_urls(t, transform) for t in traces]


def combine_decorations(d: DecoratedUrl) -> Optional[str]:
    """SHA-256 hex of the canonical concatenation of a URL's decorations,
    or None when the URL carries no decorations."""
    pairs = []
    for i, seg in enumerate(d.raw_dir_segments):
        pairs.append(f"path|{i}={seg}")
    for token in d.raw_query_tokens:
        pairs.append(token if "=" in token else f"{token}=")
    if d.raw_fragment is not None:
        if d.fragment_is_kv:
            pairs.extend(d.raw_fragment.split("&"))
        elif d.raw_fragment:
            pairs.append(f"fragment={d.raw_fragment}")
    if not pairs:
        return None
    return hashlib.sha256("&".join(pairs).encode("utf-8")).hexdigest()


def evade_combine(traces) -> list[Trace]:
    """Replace all decorations of each request by a single path decoration
    holding the SHA-256 of their canonical concatenation."""

    def transform(url: str, ev: TraceEvent) -> str:
        try:
            d = decompose(url)
        except Exception:
            return url
        digest = combine_decorations(d)
        if digest is None:
            return url
        out = replace(
            d,
            raw_dir_segments=(digest,),
            raw_query_tokens=(),
            raw_fragment=None,
            had_path=True,
            had_query=False,
        )
        return reassemble(out)

    return [_map_urls(t, transform) for t in traces]
