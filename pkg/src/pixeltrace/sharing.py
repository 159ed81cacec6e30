"""Detection of identifier values crossing domain boundaries in request URLs.

Five value predicates are checked for every (URL parameter, live identifier
cookie) pair, in precedence order, and the first that holds names the
technique: DS (the value is the identifier), PPS (the identifier is a token
of the value), PCS (the value is a token of the identifier), GA (the value
is the trailing ``Z.C`` part of a ``GAX.Y.Z.C`` cookie) and B64 (the value
base64-decodes to the identifier). A sixth technique, ES, is inferred from
redirect semantics rather than from values.
"""

from __future__ import annotations

import base64
import binascii
import re
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from urllib.parse import parse_qsl, urlsplit

from .cookies import CookieClass, CookieClassification
from .crawl_model import CookieAction, CrawlDataset, HttpTransaction, PageVisit
from .graph import ChainIndex, RedirectChain, resolve_location
from .psl import IsSuffixOnly, PublicSuffixTable

ENCRYPTED_MARKER = "<encrypted>"

_DELIMITER = re.compile(r"[^a-zA-Z0-9\-_.]+")
_B64_STD = re.compile(r"[A-Za-z0-9+/]+={0,2}")
_B64_URL = re.compile(r"[A-Za-z0-9\-_]+={0,2}")


class Technique(str, Enum):
    DS = "DS"
    PPS = "PPS"
    PCS = "PCS"
    GA = "GA"
    B64 = "B64"
    ES = "ES"


TECHNIQUE_ORDER = {t: i for i, t in enumerate(Technique)}


@dataclass(frozen=True)
class EsRule:
    host: str
    param: str


@dataclass(frozen=True)
class SharingConfig:
    min_token_length: int = 8
    scan_path: bool = False
    es_rules: tuple[EsRule, ...] = (EsRule("doubleclick.net", "google_nid"),)

    def __post_init__(self):
        if self.min_token_length < 1:
            raise ValueError("min_token_length must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SharingConfig":
        rules = d.get("es_rules")
        kwargs = {k: d[k] for k in ("min_token_length", "scan_path") if k in d}
        if rules is not None:
            kwargs["es_rules"] = tuple(EsRule(r["host"], r["param"]) for r in rules)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {"min_token_length": self.min_token_length, "scan_path": self.scan_path,
                "es_rules": [{"host": r.host, "param": r.param} for r in self.es_rules]}


def raw_tokens(value: str) -> list[str]:
    return [tok for tok in _DELIMITER.split(value) if tok]


def tokenize(value: str, cfg: SharingConfig = SharingConfig()) -> list[str]:
    """Split on characters outside ``[a-zA-Z0-9-_.]`` and drop short tokens."""
    return [tok for tok in raw_tokens(value) if len(tok) >= cfg.min_token_length]


def ga_extract(cookie_value: str) -> str | None:
    parts = cookie_value.split(".")
    if len(parts) < 4:
        return None
    return ".".join(parts[-2:])


def b64_decodings(value: str) -> set[str]:
    """Every text the value decodes to under standard or URL-safe base64."""
    out = set()
    value = value.strip()
    for pattern, std in ((_B64_STD, True), (_B64_URL, False)):
        candidate = value.replace(" ", "+") if std else value
        if not pattern.fullmatch(candidate):
            continue
        body = candidate.rstrip("=")
        if len(body) % 4 == 1:
            continue
        body += "=" * (-len(body) % 4)
        try:
            raw = base64.b64decode(body, validate=True) if std else base64.urlsafe_b64decode(body)
            out.add(raw.decode("utf-8"))
        except (binascii.Error, UnicodeDecodeError, ValueError):
            continue
    return out


def base64_match(param_value: str, cookie_value: str, cfg: SharingConfig = SharingConfig()) -> bool:
    for decoded in b64_decodings(param_value):
        if decoded == cookie_value or cookie_value in raw_tokens(decoded):
            return True
    return False


def match_technique(param_value: str, cookie_value: str, cfg: SharingConfig = SharingConfig()) -> Technique | None:
    """The highest-precedence predicate relating a parameter value to a cookie value."""
    n = cfg.min_token_length
    if param_value == cookie_value and len(cookie_value) >= n:
        return Technique.DS
    if cookie_value in tokenize(param_value, cfg):
        return Technique.PPS
    if param_value in tokenize(cookie_value, cfg):
        return Technique.PCS
    ga = ga_extract(cookie_value)
    if ga is not None and ga == param_value and len(ga) >= n:
        return Technique.GA
    if len(cookie_value) >= n and base64_match(param_value, cookie_value, cfg):
        return Technique.B64
    return None


@dataclass(frozen=True)
class SharingEvent:
    sender_domain: str
    receiver_domain: str
    identifier_value: str
    cookie_ref: tuple[str, str]
    technique: Technique
    transaction_id: str
    parameter_name: str | None
    conduit_domain: str | None = None
    partner_id: str | None = None
    source_transaction_id: str | None = None

    def sort_key(self):
        return (self.transaction_id, TECHNIQUE_ORDER[self.technique], self.parameter_name or "",
                self.cookie_ref, self.identifier_value)

    def to_dict(self) -> dict:
        return {
            "transaction_id": self.transaction_id,
            "technique": self.technique.value,
            "parameter_name": self.parameter_name,
            "sender_domain": self.sender_domain,
            "receiver_domain": self.receiver_domain,
            "identifier_value": self.identifier_value,
            "cookie_ref": list(self.cookie_ref),
            "conduit_domain": self.conduit_domain,
            "partner_id": self.partner_id,
            "source_transaction_id": self.source_transaction_id,
        }


@dataclass(frozen=True)
class LiveCookie:
    host: str
    key: str
    value: str
    owner: str
    start: int
    end: int | None  # exclusive start, inclusive end

    def live_at(self, ts: int) -> bool:
        return self.start < ts and (self.end is None or ts <= self.end)


class IdentifierJar:
    """Identifier cookie values of one crawl, indexed by value and by time.

    A value is live at time T when the latest journal event for its
    (host, key) strictly before T carried that value and was not a deletion.
    """

    def __init__(self, d: CrawlDataset, cls: CookieClassification, psl: PublicSuffixTable,
                 cfg: SharingConfig = SharingConfig()):
        self.cfg = cfg
        per_pair: dict[tuple[str, str], list] = defaultdict(list)
        for e in d.cookie_journal:
            if cls.classes.get(e.cookie.pair) is CookieClass.IDENTIFIER:
                per_pair[e.cookie.pair].append(e)
        self.entries: list[LiveCookie] = []
        for (host, key), events in sorted(per_pair.items()):
            try:
                owner = psl.registrable_domain(host)
            except (IsSuffixOnly, ValueError):
                continue
            # collapse consecutive events carrying the same value
            spans = []
            for e in events:
                value = None if e.action is CookieAction.DELETED else e.cookie.value
                if spans and spans[-1][1] == value:
                    continue
                if spans:
                    spans[-1][2] = e.timestamp
                spans.append([e.timestamp, value, None])
            for start, value, end in spans:
                if value is not None:
                    self.entries.append(LiveCookie(host, key, value, owner, start, end))
        self.by_value: dict[str, list[LiveCookie]] = defaultdict(list)
        self.by_token: dict[str, list[LiveCookie]] = defaultdict(list)
        self.by_ga: dict[str, list[LiveCookie]] = defaultdict(list)
        self.by_owner: dict[str, list[LiveCookie]] = defaultdict(list)
        n = cfg.min_token_length
        for lc in self.entries:
            self.by_owner[lc.owner].append(lc)
            if len(lc.value) >= n:
                self.by_value[lc.value].append(lc)
            for tok in set(tokenize(lc.value, cfg)):
                self.by_token[tok].append(lc)
            ga = ga_extract(lc.value)
            if ga is not None and len(ga) >= n:
                self.by_ga[ga].append(lc)

    def live(self, ts: int) -> list[LiveCookie]:
        return [lc for lc in self.entries if lc.live_at(ts)]

    def candidates(self, param_value: str, ts: int) -> dict[LiveCookie, Technique]:
        """Live identifier cookies related to ``param_value``, with the winning technique."""
        found: dict[LiveCookie, Technique] = {}

        def offer(cands, tech):
            for lc in cands:
                if lc.live_at(ts):
                    prev = found.get(lc)
                    if prev is None or TECHNIQUE_ORDER[tech] < TECHNIQUE_ORDER[prev]:
                        found[lc] = tech

        offer(self.by_value.get(param_value, ()), Technique.DS)
        for tok in tokenize(param_value, self.cfg):
            if tok != param_value:
                offer(self.by_value.get(tok, ()), Technique.PPS)
        offer(self.by_token.get(param_value, ()), Technique.PCS)
        offer(self.by_ga.get(param_value, ()), Technique.GA)
        for decoded in b64_decodings(param_value):
            offer(self.by_value.get(decoded, ()), Technique.B64)
            for tok in set(raw_tokens(decoded)):
                offer(self.by_value.get(tok, ()), Technique.B64)
        return found


def url_parameters(url: str, cfg: SharingConfig = SharingConfig()) -> list[tuple[str, str]]:
    parts = urlsplit(url)
    params = parse_qsl(parts.query, keep_blank_values=True)
    if cfg.scan_path:
        segs = [s for s in parts.path.split("/") if s]
        params += [(f"path[{i}]", s) for i, s in enumerate(segs)]
    return params


def _domain(host: str | None, psl: PublicSuffixTable) -> str | None:
    if not host:
        return None
    try:
        return psl.registrable_domain(host)
    except (IsSuffixOnly, ValueError):
        return None


def _conduit(owner: str, t: HttpTransaction, page: PageVisit | None, graph: ChainIndex | None,
             by_id: dict | None, psl: PublicSuffixTable) -> str | None:
    if graph is not None and by_id is not None:
        pred = graph.predecessor.get(t.transaction_id)
        if pred is not None and _domain(by_id[pred].host, psl) == owner:
            return owner
    if t.referer:
        d = _domain(urlsplit(t.referer).hostname, psl)
        if d is not None:
            return d
    if page is not None and owner == page.first_party_domain:
        return page.first_party_domain
    return None


def detect_url_sharing(t: HttpTransaction, jar: IdentifierJar, psl: PublicSuffixTable,
                       page: PageVisit | None = None, graph: ChainIndex | None = None,
                       by_id: dict | None = None) -> list[SharingEvent]:
    """Identifier values of other domains carried in ``t``'s URL parameters."""
    receiver = _domain(t.host, psl)
    if receiver is None:
        return []
    events = set()
    for name, value in url_parameters(t.url, jar.cfg):
        if not value:
            continue
        for lc, tech in jar.candidates(value, t.timestamp).items():
            if lc.owner == receiver:
                continue
            ident = ga_extract(lc.value) if tech is Technique.GA else lc.value
            events.add(SharingEvent(
                sender_domain=lc.owner,
                receiver_domain=receiver,
                identifier_value=ident,
                cookie_ref=(lc.host, lc.key),
                technique=tech,
                transaction_id=t.transaction_id,
                parameter_name=name,
                conduit_domain=_conduit(lc.owner, t, page, graph, by_id, psl),
            ))
    return sorted(events, key=SharingEvent.sort_key)


def _host_matches(host: str, rule_host: str) -> bool:
    return host == rule_host or host.endswith("." + rule_host)


def encrypted_sharing_scan(chain: RedirectChain, jar: IdentifierJar, psl: PublicSuffixTable,
                           by_id: dict[str, HttpTransaction],
                           cls: CookieClassification | None = None) -> list[SharingEvent]:
    """Infer encrypted sharing from a (host, trigger parameter, redirect) pattern.

    A step to a configured host that carries the trigger parameter and answers
    with a redirect to another registrable domain shares the host's identifier
    with that domain, provided the host owns an identifier cookie at that time.
    """
    events = []
    for i, tid in enumerate(chain.steps):
        t = by_id[tid]
        if not t.is_redirect:
            continue
        for rule in jar.cfg.es_rules:
            if not _host_matches(t.host, rule.host):
                continue
            params = dict(parse_qsl(urlsplit(t.url).query, keep_blank_values=True))
            if rule.param not in params:
                continue
            sender = _domain(t.host, psl)
            target = resolve_location(t)
            receiver = _domain(urlsplit(target).hostname, psl) if target else None
            if sender is None or receiver is None or receiver == sender:
                continue
            owned = _owned_identifier(t, sender, jar, cls, psl)
            if owned is None:
                continue
            nxt = chain.steps[i + 1] if i + 1 < len(chain.steps) else tid
            events.append(SharingEvent(
                sender_domain=sender,
                receiver_domain=receiver,
                identifier_value=ENCRYPTED_MARKER,
                cookie_ref=owned,
                technique=Technique.ES,
                transaction_id=nxt,
                parameter_name=None,
                conduit_domain=sender,
                partner_id=params[rule.param],
                source_transaction_id=tid,
            ))
    return sorted(events, key=SharingEvent.sort_key)


def _owned_identifier(t: HttpTransaction, owner: str, jar: IdentifierJar,
                      cls: CookieClassification | None, psl: PublicSuffixTable) -> tuple[str, str] | None:
    refs = set()
    for lc in jar.by_owner.get(owner, ()):
        if lc.live_at(t.timestamp):
            refs.add((lc.host, lc.key))
    if cls is not None:
        for c in (*t.cookies_sent, *t.cookies_set):
            if cls.classes.get(c.pair) is CookieClass.IDENTIFIER and _domain(c.host, psl) == owner:
                refs.add(c.pair)
    return min(refs) if refs else None


@dataclass
class SharingResult:
    events: list[SharingEvent] = field(default_factory=list)

    def by_transaction(self) -> dict[str, list[SharingEvent]]:
        out: dict[str, list[SharingEvent]] = defaultdict(list)
        for e in self.events:
            out[e.transaction_id].append(e)
        return dict(out)

    def technique_counts(self) -> dict[str, int]:
        counts = {t.value: 0 for t in Technique}
        for e in self.events:
            counts[e.technique.value] += 1
        return counts


def scan_page(p: PageVisit, graph: ChainIndex, jar: IdentifierJar, psl: PublicSuffixTable,
              cls: CookieClassification | None = None) -> list[SharingEvent]:
    by_id = {t.transaction_id: t for t in p.transactions}
    events = []
    for t in p.transactions:
        events.extend(detect_url_sharing(t, jar, psl, p, graph, by_id))
    for chain in graph.chains:
        events.extend(encrypted_sharing_scan(chain, jar, psl, by_id, cls))
    return sorted(events, key=SharingEvent.sort_key)
