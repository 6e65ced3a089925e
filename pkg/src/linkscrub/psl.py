"""Registrable-domain ("site") computation from a bundled public suffix snapshot.

The snapshot is a versioned repo asset (data/public_suffix_snapshot.dat) in the
standard public suffix list format: one rule per line, ``//`` comments,
``*.`` wildcard rules and ``!`` exception rules.
"""

from __future__ import annotations

import functools
from importlib import resources

SNAPSHOT_NAME = "public_suffix_snapshot.dat"


@functools.lru_cache(maxsize=1)
def _load_rules() -> frozenset[str]:
    text = resources.files("linkscrub.data").joinpath(SNAPSHOT_NAME).read_text("utf-8")
    rules = set()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("//"):
            continue
        rules.add(line)
    return frozenset(rules)


def public_suffix(host: str) -> str:
    """Return the public suffix of ``host`` (PSL algorithm, default rule ``*``)."""
    labels = host.lower().rstrip(".").split(".")
    rules = _load_rules()
    best = 0  # number of labels in the matched suffix
    for i in range(len(labels)):
        tail = labels[i:]
        candidate = ".".join(tail)
        wildcard = ".".join(["*"] + tail[1:])
        if "!" + candidate in rules:
            # exception rule: suffix is one label shorter than the rule
            best = max(best, len(tail) - 1)
        elif candidate in rules:
            best = max(best, len(tail))
        elif wildcard in rules:
            best = max(best, len(tail))
    if best == 0:
        best = 1  # default rule "*": the rightmost label is the suffix
    return ".".join(labels[-best:])


def registrable_domain(host: str) -> str:
    """Public-suffix-plus-one domain of ``host``.

    If the host equals its public suffix (no registrable part), the lowercased
    host itself is returned so callers always get a usable site key.
    """
    host = host.lower().rstrip(".")
    suffix = public_suffix(host)
    labels = host.split(".")
    n_suffix = suffix.count(".") + 1
    if len(labels) <= n_suffix:
        return host
    return ".".join(labels[-(n_suffix + 1):])
