"""Ground-truth labels (ATS / NonATS / Unknown) per decoration identity.

Three sources: a simplified request filter list (Non-ATS side), a cookie
purpose table (exfiltrated advertising/analytics cookies imply ATS), and a
curated list of known ATS decoration keys. ATS takes precedence on conflict;
conflicts are retained in the provenance for audit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Optional

from . import urls
from .errors import RuleLoadError, UrlParseError
from .graph import EXFILTRATION, PageGraph
from .urls import DecorationId, fqdn_pattern_matches

ATS = "ATS"
NON_ATS = "NonATS"
UNKNOWN = "Unknown"

COOKIE_PURPOSES = ("strictly-necessary", "functional", "analytics",
                   "advertising")
ATS_PURPOSES = frozenset({"analytics", "advertising"})


@dataclass(frozen=True)
class RequestRule:
    """One rule of the simplified request-filter dialect.

    ``||host^`` anchors match the host and its subdomains; any other pattern
    is a plain substring match on the full URL.
    """

    pattern: str
    host_anchor: Optional[str] = None

    def matches(self, url: str, fqdn: str) -> bool:
        if self.host_anchor is not None:
            return fqdn_pattern_matches("*." + self.host_anchor, fqdn)
        return self.pattern in url


def parse_request_rules(lines: Iterable[str]) -> list[RequestRule]:
    rules = []
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("!"):
            continue
        for unsupported in ("##", "#@#", "@@", "$"):
            if unsupported in line:
                raise RuleLoadError(
                    f"unsupported filter syntax {unsupported!r}", line)
        if line.startswith("||"):
            body = line[2:]
            if not body.endswith("^") or not body[:-1]:
                raise RuleLoadError("malformed host anchor", line)
            rules.append(RequestRule(line, host_anchor=body[:-1].lower()))
        else:
            rules.append(RequestRule(line))
    return rules


def match_request_filter(url: str, rules: Iterable[RequestRule]) -> str:
    """ATS iff any rule matches ``url``; NonATS otherwise."""
    try:
        fqdn = urls.decompose(url).fqdn
    except UrlParseError:
        fqdn = ""
    for rule in rules:
        if rule.matches(url, fqdn):
            return ATS
    return NON_ATS


@dataclass(frozen=True)
class CookiePurposeEntry:
    domain: str  # '' or '*' scopes to any domain
    key: str
    purpose: str


def parse_cookie_purpose_db(lines: Iterable[str]) -> list[CookiePurposeEntry]:
    entries = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise RuleLoadError(
                f"cookie purpose line {line_no} needs domain,key,purpose", line)
        domain, key, purpose = (p.strip() for p in parts)
        if purpose not in COOKIE_PURPOSES:
            raise RuleLoadError(
                f"unknown cookie purpose {purpose!r} (line {line_no})", line)
        entries.append(CookiePurposeEntry(domain, key, purpose))
    return entries


def cookie_purpose(entries: Iterable[CookiePurposeEntry], site: str,
                   key: str) -> Optional[str]:
    """Most specific purpose for a cookie key: domain-scoped beats global."""
    fallback = None
    for e in entries:
        if e.key != key:
            continue
        if e.domain in ("", "*"):
            fallback = e.purpose
        elif e.domain == site:
            return e.purpose
    return fallback


@dataclass(frozen=True)
class CuratedEntry:
    fqdn: str  # pattern; '*' allowed
    key: str


def parse_curated_list(lines: Iterable[str]) -> list[CuratedEntry]:
    entries = []
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "|" not in line:
            raise RuleLoadError("curated entry must be fqdn|key", line)
        fqdn, key = line.split("|", 1)
        entries.append(CuratedEntry(fqdn, key))
    return entries


@dataclass
class LabeledDecoration:
    id: DecorationId
    label: str
    provenance: tuple[str, ...] = ()


def label_decorations(graphs: Iterable[PageGraph],
                      request_rules: Iterable[RequestRule] = (),
                      cookie_purpose_db: Iterable[CookiePurposeEntry] = (),
                      curated_ats: Iterable[CuratedEntry] = (),
                      conflicts: Optional[list] = None
                      ) -> list[LabeledDecoration]:
    """Label every decoration identity observed in ``graphs``.

    Per identity (site, fqdn, key): decorations of requests no rule flags are
    NonATS candidates; exfiltration of an analytics/advertising cookie or a
    curated-list hit makes it ATS. ATS wins on conflict (conflict appended to
    ``conflicts`` when given); identities with no firing source are Unknown.
    Duplicate observations across graphs merge with provenance union.
    """
    request_rules = list(request_rules)
    cookie_purpose_db = list(cookie_purpose_db)
    curated_ats = list(curated_ats)

    provenance: dict[DecorationId, set] = {}
    exfil_sources: dict[str, list] = {}

    for g in graphs:
        exfil_sources.clear()
        for e in g.edges:
            if e.kind == EXFILTRATION:
                exfil_sources.setdefault(e.dst, []).append(e.src)
        for dec in g.decoration_nodes():
            req = g.nodes[dec.attrs["request"]]
            dec_obj = dec.attrs["decoration"]
            dec_id = dec_obj.id
            prov = provenance.setdefault(dec_id, set())
            if (request_rules
                    and match_request_filter(req.attrs.get("url", ""),
                                             request_rules) == NON_ATS):
                prov.add("request-filter-clean")
            for src in exfil_sources.get(dec.id, ()):
                snode = g.nodes[src]
                if snode.attrs.get("store") != "cookie":
                    continue
                purpose = cookie_purpose(
                    cookie_purpose_db, g.site, snode.attrs.get("key", ""))
                if purpose in ATS_PURPOSES:
                    prov.add("cookie-purpose")
            for entry in curated_ats:
                if (entry.key == dec_id.key
                        and fqdn_pattern_matches(entry.fqdn, dec_id.fqdn)):
                    prov.add("curated")

    out = []
    for dec_id in sorted(provenance,
                         key=lambda d: (d.site, d.fqdn, d.key)):
        prov = provenance[dec_id]
        ats = prov & {"cookie-purpose", "curated"}
        non_ats = "request-filter-clean" in prov
        if ats:
            label = ATS
            if non_ats and conflicts is not None:
                conflicts.append(
                    f"{dec_id}: ATS ({', '.join(sorted(ats))}) overrides "
                    "clean-request NonATS")
        elif non_ats:
            label = NON_ATS
        else:
            label = UNKNOWN
        out.append(LabeledDecoration(dec_id, label, tuple(sorted(prov))))
    return out


_LABEL_COLUMNS = ["site", "fqdn", "key", "label", "provenance"]


def write_labels(labeled: Iterable[LabeledDecoration], fh: IO[str]) -> None:
    writer = csv.writer(fh)
    writer.writerow(_LABEL_COLUMNS)
    for item in labeled:
        writer.writerow([item.id.site, item.id.fqdn, item.id.key,
                         item.label, ";".join(item.provenance)])


def read_labels(fh: IO[str]) -> list[LabeledDecoration]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header != _LABEL_COLUMNS:
        raise RuleLoadError("bad label file header", str(header))
    out = []
    for row in reader:
        if not row:
            continue
        site, fqdn, key, label, prov = row
        out.append(LabeledDecoration(
            DecorationId(site, fqdn, key), label,
            tuple(p for p in prov.split(";") if p)))
    return out
