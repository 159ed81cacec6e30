"""Adblock-syntax network rules, Disconnect-style domain lists, and blocked closures.

Only the network-rule subset relevant to request evaluation is supported:
``||`` / ``|`` anchors, the ``*`` wildcard, the ``^`` separator, ``@@``
exceptions, ``$third-party``, ``$domain=`` and the resource types script,
image, stylesheet, subdocument, xmlhttprequest and other. A rule carrying any
other option, and any ``/regex/`` rule, is kept but inert.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from urllib.parse import urldefrag, urlsplit

from .cookies import CookieClass, CookieClassification
from .crawl_model import CookieAction, CrawlDataset, HttpTransaction, PageVisit, is_third_party
from .graph import ChainIndex
from .psl import IsSuffixOnly, PublicSuffixTable

RESOURCE_TYPES = frozenset({"script", "image", "stylesheet", "subdocument", "xmlhttprequest", "other"})
_COSMETIC = ("##", "#@#", "#?#")
_TOKEN = re.compile(r"[a-z0-9]+")
_SEPARATOR = r"(?:[^a-zA-Z0-9_\-.%]|$)"
_DOMAIN_ANCHOR = r"^[a-z][a-z0-9+.\-]*://(?:[^/?#]*\.)?"


class RuleKind(str, Enum):
    BLOCKING = "Blocking"
    EXCEPTION = "Exception"


class Anchor(str, Enum):
    DOMAIN = "DomainAnchor"
    START = "StartAnchor"
    PLAIN = "Plain"


class VerdictStatus(str, Enum):
    DIRECT = "DirectMatch"
    REDIRECT_DESCENDANT = "RedirectDescendant"
    FRAME_CHILD = "BlockedFrameChild"
    ALLOWED = "Allowed"

    @property
    def blocked(self) -> bool:
        return self is not VerdictStatus.ALLOWED


@dataclass(frozen=True)
class FilterRule:
    raw: str
    kind: RuleKind
    anchor: Anchor
    pattern: str
    end_anchor: bool = False
    third_party: bool | None = None
    include_domains: tuple[str, ...] = ()
    exclude_domains: tuple[str, ...] = ()
    include_types: frozenset = frozenset()
    exclude_types: frozenset = frozenset()
    unsupported_options: tuple[str, ...] = ()
    regex_rule: bool = False

    @property
    def inert(self) -> bool:
        return self.regex_rule or bool(self.unsupported_options)

    @property
    def exception(self) -> bool:
        return self.kind is RuleKind.EXCEPTION

    def compile(self) -> re.Pattern:
        parts = []
        for ch in self.pattern:
            if ch == "*":
                parts.append(".*")
            elif ch == "^":
                parts.append(_SEPARATOR)
            else:
                parts.append(re.escape(ch))
        prefix = {Anchor.DOMAIN: _DOMAIN_ANCHOR, Anchor.START: "^", Anchor.PLAIN: ""}[self.anchor]
        return re.compile(prefix + "".join(parts) + ("$" if self.end_anchor else ""), re.IGNORECASE)

    def safe_token(self) -> str | None:
        """Longest literal token that any matching URL must contain as a whole token."""
        best = None
        pat = self.pattern.lower()
        for m in _TOKEN.finditer(pat):
            s, e = m.span()
            left_ok = (s > 0 and pat[s - 1] != "*") or (s == 0 and self.anchor is not Anchor.PLAIN)
            right_ok = (e < len(pat) and pat[e] != "*") or (e == len(pat) and self.end_anchor)
            if left_ok and right_ok and (best is None or len(m.group()) > len(best)):
                best = m.group()
        return best


class RuleSyntaxError(ValueError):
    pass


def parse_rule(line: str) -> FilterRule | None:
    """Parse one network rule; None for comments, blanks and cosmetic rules."""
    line = line.strip()
    if not line or line.startswith("!") or line.startswith("[Adblock"):
        return None
    if any(marker in line for marker in _COSMETIC):
        return None
    raw = line
    kind = RuleKind.BLOCKING
    if line.startswith("@@"):
        kind = RuleKind.EXCEPTION
        line = line[2:]
    if len(line) > 1 and line.startswith("/") and line.endswith("/"):
        return FilterRule(raw, kind, Anchor.PLAIN, line, regex_rule=True)
    options = ""
    dollar = line.rfind("$")
    if dollar >= 0:
        line, options = line[:dollar], line[dollar + 1:]
    if len(line) > 1 and line.startswith("/") and line.endswith("/"):
        return FilterRule(raw, kind, Anchor.PLAIN, line, regex_rule=True)
    anchor = Anchor.PLAIN
    if line.startswith("||"):
        anchor, line = Anchor.DOMAIN, line[2:]
    elif line.startswith("|"):
        anchor, line = Anchor.START, line[1:]
    end = False
    if line.endswith("|"):
        end, line = True, line[:-1]
    if not line and anchor is not Anchor.PLAIN and not options:
        raise RuleSyntaxError(f"empty pattern: {raw!r}")
    third = None
    inc_d, exc_d, inc_t, exc_t, unsupported = [], [], set(), set(), []
    for opt in filter(None, (o.strip() for o in options.split(","))):
        low = opt.lower()
        neg = low.startswith("~")
        name = low[1:] if neg else low
        if name == "third-party":
            third = not neg
        elif low.startswith("domain="):
            for dom in opt[7:].split("|"):
                dom = dom.strip().lower()
                if not dom:
                    continue
                if dom.startswith("~"):
                    exc_d.append(dom[1:])
                else:
                    inc_d.append(dom)
        elif name in RESOURCE_TYPES:
            (exc_t if neg else inc_t).add(name)
        else:
            unsupported.append(opt)
    return FilterRule(raw, kind, anchor, line, end, third, tuple(inc_d), tuple(exc_d),
                      frozenset(inc_t), frozenset(exc_t), tuple(unsupported))


@dataclass
class ParseSummary:
    rules: int = 0
    inert: int = 0
    cosmetic: int = 0
    comments: int = 0
    skipped: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rules": self.rules, "inert": self.inert, "cosmetic": self.cosmetic,
                "comments": self.comments, "skipped": list(self.skipped)}


class RuleSet:
    """Immutable collection of parsed rules with a token prefilter."""

    def __init__(self, rules=(), summary: ParseSummary | None = None):
        self.summary = summary or ParseSummary()
        active = [r for r in rules if not r.inert]
        self.inert = [r for r in rules if r.inert]
        self.blocking = sorted((r for r in active if not r.exception), key=lambda r: r.raw)
        self.exceptions = sorted((r for r in active if r.exception), key=lambda r: r.raw)
        self._compiled: dict[str, re.Pattern] = {}
        self._block_index = self._index(self.blocking)
        self._exc_index = self._index(self.exceptions)

    def _index(self, rules):
        index: dict[str | None, list[FilterRule]] = {}
        for r in rules:
            self._compiled.setdefault(r.raw, r.compile())
            index.setdefault(r.safe_token(), []).append(r)
        return index

    def __len__(self) -> int:
        return len(self.blocking) + len(self.exceptions) + len(self.inert)

    def candidates(self, url: str, exceptions: bool) -> list[FilterRule]:
        index = self._exc_index if exceptions else self._block_index
        out = list(index.get(None, ()))
        for tok in set(_TOKEN.findall(url.lower())):
            out.extend(index.get(tok, ()))
        return out

    def pattern_matches(self, rule: FilterRule, url: str) -> bool:
        return self._compiled[rule.raw].search(url) is not None


def parse_filter_list(text: str) -> RuleSet:
    summary = ParseSummary()
    rules = []
    seen = set()
    for line in text.splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("!") or s.startswith("[Adblock"):
            summary.comments += 1
            continue
        if any(marker in s for marker in _COSMETIC):
            summary.cosmetic += 1
            continue
        try:
            rule = parse_rule(s)
        except RuleSyntaxError:
            summary.skipped.append(s)
            continue
        if rule is None or rule.raw in seen:
            continue
        seen.add(rule.raw)
        rules.append(rule)
        summary.rules += 1
        summary.inert += rule.inert
    return RuleSet(rules, summary)


def _domain_match(domain: str, entry: str) -> bool:
    return domain == entry or domain.endswith("." + entry)


def _options_hold(rule: FilterRule, resource_type: str, page_domain: str | None,
                  third_party: bool | None) -> bool:
    if rule.third_party is not None:
        if third_party is None or third_party != rule.third_party:
            return False
    if rule.include_domains or rule.exclude_domains:
        if page_domain is None:
            if rule.include_domains:
                return False
        else:
            if rule.include_domains and not any(_domain_match(page_domain, d) for d in rule.include_domains):
                return False
            if any(_domain_match(page_domain, d) for d in rule.exclude_domains):
                return False
    if rule.include_types and resource_type not in rule.include_types:
        return False
    if resource_type in rule.exclude_types:
        return False
    return True


@dataclass(frozen=True)
class MatchResult:
    blocked: bool
    rule: FilterRule | None = None
    exception: FilterRule | None = None


def match_request(rs: RuleSet, url: str, resource_type: str = "other", page_domain: str | None = None,
                  initiator_domain: str | None = None, psl: PublicSuffixTable | None = None) -> MatchResult:
    """Evaluate one request; any matching exception wins over every blocking rule."""
    psl = psl or PublicSuffixTable.bundled()
    third = None
    if page_domain is not None:
        host = urlsplit(url).hostname
        try:
            third = psl.registrable_domain(host) != page_domain if host else None
        except (IsSuffixOnly, ValueError):
            third = True

    def first(rules):
        hits = [r for r in rules if _options_hold(r, resource_type, page_domain, third)
                and rs.pattern_matches(r, url)]
        return min(hits, key=lambda r: r.raw) if hits else None

    exc = first(rs.candidates(url, exceptions=True))
    if exc is not None:
        return MatchResult(False, None, exc)
    hit = first(rs.candidates(url, exceptions=False))
    return MatchResult(hit is not None, hit)


# Disconnect-style lists


@dataclass
class DisconnectList:
    entries: dict[str, str] = field(default_factory=dict)  # domain -> category

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_json(cls, text: str) -> "DisconnectList":
        data = json.loads(text)
        cats = data.get("categories", data) if isinstance(data, dict) else {}
        out = cls()

        def walk(node, category):
            if isinstance(node, dict):
                for k in sorted(node):
                    v = node[k]
                    if isinstance(v, list) and all(isinstance(x, str) for x in v):
                        for dom in v:
                            out.entries.setdefault(dom.strip().lower(), category)
                    elif isinstance(v, (dict, list)):
                        walk(v, category)
            elif isinstance(node, list):
                for item in node:
                    walk(item, category)

        for category in sorted(cats):
            walk(cats[category], category)
        return out

    @classmethod
    def from_text(cls, text: str) -> "DisconnectList":
        stripped = text.lstrip()
        if stripped.startswith("{"):
            return cls.from_json(text)
        out = cls()
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip().lower()
            if line:
                out.entries.setdefault(line, "")
        return out

    @classmethod
    def from_file(cls, path) -> "DisconnectList":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def match_disconnect(dl: DisconnectList, host: str) -> bool:
    host = host.lower().rstrip(".")
    labels = host.split(".")
    return any(".".join(labels[i:]) in dl.entries for i in range(len(labels)))


# Resource types and per-visit closure


def _same_visit_urls(p: PageVisit) -> set[str]:
    urls = {urldefrag(t.url)[0] for t in p.transactions}
    if p.first_party_url:
        urls.add(urldefrag(p.first_party_url)[0])
    return urls


def is_subframe(t: HttpTransaction, p: PageVisit, visit_urls: set[str] | None = None) -> bool:
    """An HTML response loaded by another document of the same visit."""
    if t.content_type != "text/html" or not t.referer:
        return False
    if p.first_party_url and urldefrag(t.url)[0] == urldefrag(p.first_party_url)[0]:
        return False
    urls = visit_urls if visit_urls is not None else _same_visit_urls(p)
    return urldefrag(t.referer)[0] in urls


def resource_type_of(t: HttpTransaction, subframe: bool = False) -> str:
    ct = t.content_type
    if ct.startswith("image/"):
        return "image"
    if "javascript" in ct or "ecmascript" in ct:
        return "script"
    if ct == "text/css":
        return "stylesheet"
    if ct == "text/html" and subframe:
        return "subdocument"
    return "other"


@dataclass(frozen=True)
class ListConfig:
    """One filter configuration: Adblock rules, a domain list, or both (union)."""

    name: str
    rules: RuleSet | None = None
    disconnect: DisconnectList | None = None


@dataclass(frozen=True)
class BlockVerdict:
    status: VerdictStatus
    matched_rule: str | None = None
    follow_up: bool = False

    def to_dict(self) -> dict:
        return {"status": self.status.value, "matched_rule": self.matched_rule, "follow_up": self.follow_up}


def direct_verdict_fn(cfg: ListConfig, p: PageVisit, psl: PublicSuffixTable):
    """Return ``t -> matched rule text or None`` for one page under ``cfg``."""
    urls = _same_visit_urls(p)

    def fn(t: HttpTransaction) -> str | None:
        if cfg.rules is not None:
            rtype = resource_type_of(t, is_subframe(t, p, urls))
            res = match_request(cfg.rules, t.url, rtype, p.first_party_domain, None, psl)
            if res.blocked:
                return res.rule.raw
        if cfg.disconnect is not None and is_third_party(t, p, psl) and match_disconnect(cfg.disconnect, t.host):
            return f"disconnect:{t.host}"
        return None

    return fn


def blocked_closure(p: PageVisit, chains: ChainIndex, verdict_fn) -> dict[str, BlockVerdict]:
    """Direct hits plus their redirect descendants and blocked-frame children."""
    txs = sorted(p.transactions, key=lambda t: t.timestamp)
    order = {t.transaction_id: i for i, t in enumerate(txs)}
    urls = _same_visit_urls(p)
    latest_by_url: dict[str, list[int]] = {}
    for i, t in enumerate(txs):
        latest_by_url.setdefault(urldefrag(t.url)[0], []).append(i)
    out: dict[str, BlockVerdict] = {}
    tainted: dict[str, bool] = {}

    def referer_parent(t: HttpTransaction) -> HttpTransaction | None:
        if not t.referer:
            return None
        idx = order[t.transaction_id]
        cands = [j for j in latest_by_url.get(urldefrag(t.referer)[0], ()) if j < idx]
        return txs[cands[-1]] if cands else None

    for t in txs:
        tid = t.transaction_id
        rule = verdict_fn(t)
        pred = chains.predecessor.get(tid)
        parent = referer_parent(t)
        taint = False
        if parent is not None:
            pv = out[parent.transaction_id]
            taint = tainted[parent.transaction_id] or (
                pv.status.blocked and is_subframe(parent, p, urls))
        tainted[tid] = taint
        if rule is not None:
            out[tid] = BlockVerdict(VerdictStatus.DIRECT, rule)
        elif pred is not None and out[pred].status in (VerdictStatus.DIRECT, VerdictStatus.REDIRECT_DESCENDANT):
            out[tid] = BlockVerdict(VerdictStatus.REDIRECT_DESCENDANT)
        elif taint or (pred is not None and out[pred].status is VerdictStatus.FRAME_CHILD):
            out[tid] = BlockVerdict(VerdictStatus.FRAME_CHILD)
        else:
            out[tid] = BlockVerdict(VerdictStatus.ALLOWED)
    return out


def trackers_follow_up(d: CrawlDataset, verdicts: dict[str, BlockVerdict],
                       classes: CookieClassification) -> set[str]:
    """Allowed requests sending an identifier cookie first set by a blocked request."""
    first_set = {}
    for e in d.cookie_journal:
        if e.action is CookieAction.SET and e.cookie.pair not in first_set:
            first_set[e.cookie.pair] = e
    out = set()
    for t in d.transactions:
        v = verdicts.get(t.transaction_id)
        if v is None or v.status.blocked:
            continue
        for c in t.cookies_sent:
            if classes.classes.get(c.pair) is not CookieClass.IDENTIFIER:
                continue
            e = first_set.get(c.pair)
            if e is None or e.transaction_id is None or e.timestamp > t.timestamp:
                continue
            src = verdicts.get(e.transaction_id)
            if src is not None and src.status.blocked:
                out.add(t.transaction_id)
                break
    return out


def apply_follow_up(verdicts: dict[str, BlockVerdict], follow: set[str]) -> dict[str, BlockVerdict]:
    return {tid: (BlockVerdict(v.status, v.matched_rule, True) if tid in follow else v)
            for tid, v in verdicts.items()}
