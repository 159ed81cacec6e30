"""Crawl-log data model, line-delimited JSON ingest, and cross-crawl pairing."""

from __future__ import annotations

import base64
import binascii
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator
from urllib.parse import urlsplit

from .psl import IsSuffixOnly, PublicSuffixTable, normalize_host

logger = logging.getLogger(__name__)

ORPHAN_VISIT_ID = "__orphan__"
BODY_CAP_BYTES = 100 * 1024


class CrawlLabel(str, Enum):
    A = "A"
    B = "B"


class SetContext(str, Enum):
    FIRST_PARTY = "FirstParty"
    THIRD_PARTY = "ThirdParty"


class CookieOrigin(str, Enum):
    HTTP_HEADER = "HttpHeader"
    SCRIPT = "Script"
    UNKNOWN = "Unknown"


class CookieAction(str, Enum):
    SET = "Set"
    SENT = "Sent"
    DELETED = "Deleted"


class UnreadableInput(OSError):
    pass


class SchemaViolation(ValueError):
    def __init__(self, line: int, field: str, message: str):
        super().__init__(f"line {line}: field {field!r}: {message}")
        self.line = line
        self.field = field


@dataclass(frozen=True)
class CookieInstance:
    host: str
    key: str
    value: str
    expiry: int | None = None
    set_context: SetContext = SetContext.THIRD_PARTY
    origin: CookieOrigin = CookieOrigin.UNKNOWN

    def __post_init__(self):
        object.__setattr__(self, "host", normalize_host(self.host))

    @property
    def pair(self) -> tuple[str, str]:
        return (self.host, self.key)

    @property
    def triple(self) -> tuple[str, str, str]:
        return (self.host, self.key, self.value)

    def to_dict(self) -> dict:
        d = {"host": self.host, "key": self.key, "value": self.value,
             "set_context": self.set_context.value, "origin": self.origin.value}
        if self.expiry is not None:
            d["expiry"] = self.expiry
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CookieInstance":
        return cls(
            host=d["host"],
            key=d["key"],
            value=d["value"],
            expiry=d.get("expiry"),
            set_context=SetContext(d.get("set_context", SetContext.THIRD_PARTY.value)),
            origin=CookieOrigin(d.get("origin", CookieOrigin.UNKNOWN.value)),
        )


def _header(headers, name: str) -> str | None:
    name = name.lower()
    for k, v in headers:
        if k.lower() == name:
            return v
    return None


@dataclass
class HttpTransaction:
    transaction_id: str
    page_visit_id: str
    url: str
    method: str = "GET"
    request_headers: list[tuple[str, str]] = field(default_factory=list)
    response_status: int | None = None
    response_headers: list[tuple[str, str]] = field(default_factory=list)
    cookies_sent: list[CookieInstance] = field(default_factory=list)
    cookies_set: list[CookieInstance] = field(default_factory=list)
    body: bytes | None = None
    timestamp: int = 0

    def __post_init__(self):
        parts = urlsplit(self.url)
        if parts.scheme not in ("http", "https") or not parts.hostname:
            raise ValueError(f"not an absolute http(s) URL: {self.url!r}")
        self.host = parts.hostname.lower()

    def request_header(self, name: str) -> str | None:
        return _header(self.request_headers, name)

    def response_header(self, name: str) -> str | None:
        return _header(self.response_headers, name)

    @property
    def referer(self) -> str | None:
        return self.request_header("Referer")

    @property
    def location(self) -> str | None:
        return self.response_header("Location")

    @property
    def content_type(self) -> str:
        ct = self.response_header("Content-Type") or ""
        return ct.split(";", 1)[0].strip().lower()

    @property
    def content_length(self) -> int | None:
        raw = self.response_header("Content-Length")
        try:
            return int(raw) if raw is not None else None
        except ValueError:
            return None

    @property
    def is_redirect(self) -> bool:
        return self.response_status is not None and 300 <= self.response_status < 400 and bool(self.location)

    def to_record(self) -> dict:
        rec = {
            "kind": "transaction",
            "transaction_id": self.transaction_id,
            "page_visit_id": self.page_visit_id,
            "url": self.url,
            "method": self.method,
            "request_headers": [list(h) for h in self.request_headers],
            "response_status": self.response_status,
            "response_headers": [list(h) for h in self.response_headers],
            "cookies_sent": [c.to_dict() for c in self.cookies_sent],
            "cookies_set": [c.to_dict() for c in self.cookies_set],
            "timestamp": self.timestamp,
        }
        if self.body is not None:
            rec["body_b64"] = base64.b64encode(self.body).decode("ascii")
        return rec


@dataclass
class PageVisit:
    page_visit_id: str
    first_party_url: str | None
    first_party_domain: str | None
    transactions: list[HttpTransaction] = field(default_factory=list)

    @property
    def is_orphan(self) -> bool:
        return self.page_visit_id == ORPHAN_VISIT_ID

    @property
    def start(self) -> int | None:
        return self.transactions[0].timestamp if self.transactions else None


@dataclass(frozen=True)
class JournalEntry:
    timestamp: int
    cookie: CookieInstance
    action: CookieAction
    transaction_id: str | None = None
    page_visit_id: str | None = None
    # derived entries mirror a transaction's cookies_sent/cookies_set
    derived: bool = False

    def to_record(self) -> dict:
        rec = {"kind": "cookie_event", "timestamp": self.timestamp,
               "action": self.action.value, "cookie": self.cookie.to_dict()}
        if self.transaction_id is not None:
            rec["transaction_id"] = self.transaction_id
        if self.page_visit_id is not None:
            rec["page_visit_id"] = self.page_visit_id
        return rec


@dataclass
class ParseReport:
    lines: int = 0
    skipped: int = 0
    orphans: int = 0
    errors: list[str] = field(default_factory=list)


class CrawlDataset:
    """One crawl, indexed at construction and treated as read-only afterward."""

    def __init__(self, label, page_visits, journal, report: ParseReport | None = None):
        self.crawl_label = CrawlLabel(label)
        self.page_visits: list[PageVisit] = list(page_visits)
        self.cookie_journal: list[JournalEntry] = sorted(journal, key=lambda e: e.timestamp)
        self.report = report or ParseReport()
        self.by_transaction_id: dict[str, HttpTransaction] = {}
        self.by_page_visit_id: dict[str, PageVisit] = {}
        self.by_host: dict[str, list[HttpTransaction]] = defaultdict(list)
        self.page_of: dict[str, PageVisit] = {}
        for p in self.page_visits:
            self.by_page_visit_id[p.page_visit_id] = p
            for t in p.transactions:
                self.by_transaction_id[t.transaction_id] = t
                self.by_host[t.host].append(t)
                self.page_of[t.transaction_id] = p
        self.by_host = dict(self.by_host)

    @property
    def transactions(self) -> Iterator[HttpTransaction]:
        for p in self.page_visits:
            yield from p.transactions

    def transaction_count(self) -> int:
        return len(self.by_transaction_id)

    def page_for_entry(self, entry: JournalEntry) -> PageVisit | None:
        if entry.transaction_id is not None and entry.transaction_id in self.page_of:
            return self.page_of[entry.transaction_id]
        if entry.page_visit_id is not None:
            return self.by_page_visit_id.get(entry.page_visit_id)
        # fall back to the visit active at that time
        active = None
        for p in self.page_visits:
            if p.is_orphan or p.start is None:
                continue
            if p.start <= entry.timestamp:
                if active is None or p.start >= active.start:
                    active = p
        return active

    def explicit_journal(self) -> list[JournalEntry]:
        return [e for e in self.cookie_journal if not e.derived]

    def first_set_events(self) -> dict[tuple[str, str], JournalEntry]:
        """Earliest Set event per (host, key)."""
        first: dict[tuple[str, str], JournalEntry] = {}
        for e in self.cookie_journal:
            if e.action is CookieAction.SET and e.cookie.pair not in first:
                first[e.cookie.pair] = e
        return first


def first_party_domain_of(url: str | None, psl: PublicSuffixTable) -> str | None:
    if not url:
        return None
    host = urlsplit(url).hostname
    if not host:
        return None
    try:
        return psl.registrable_domain(host)
    except (IsSuffixOnly, ValueError):
        return None


def _transaction_from_record(rec: dict) -> HttpTransaction:
    body = rec.get("body_b64")
    return HttpTransaction(
        transaction_id=str(rec["transaction_id"]),
        page_visit_id=rec.get("page_visit_id"),
        url=rec["url"],
        method=rec.get("method", "GET"),
        request_headers=[(str(k), str(v)) for k, v in rec.get("request_headers", [])],
        response_status=rec.get("response_status"),
        response_headers=[(str(k), str(v)) for k, v in rec.get("response_headers", [])],
        cookies_sent=[CookieInstance.from_dict(c) for c in rec.get("cookies_sent", [])],
        cookies_set=[CookieInstance.from_dict(c) for c in rec.get("cookies_set", [])],
        body=base64.b64decode(body, validate=True) if body is not None else None,
        timestamp=int(rec.get("timestamp", 0)),
    )


def _journal_from_record(rec: dict) -> JournalEntry:
    return JournalEntry(
        timestamp=int(rec["timestamp"]),
        cookie=CookieInstance.from_dict(rec["cookie"]),
        action=CookieAction(rec["action"]),
        transaction_id=rec.get("transaction_id"),
        page_visit_id=rec.get("page_visit_id"),
    )


def parse_crawl_log(lines: Iterable[str], label="A", psl: PublicSuffixTable | None = None,
                    strict: bool = False) -> CrawlDataset:
    """Parse line-delimited JSON records into an indexed :class:`CrawlDataset`.

    Malformed lines are skipped and counted unless ``strict`` is set, in which
    case the first one raises :class:`SchemaViolation`.
    """
    psl = psl or PublicSuffixTable.bundled()
    report = ParseReport()
    visits: dict[str, dict] = {}
    transactions: list[HttpTransaction] = []
    line_of: dict[str, int] = {}
    journal: list[JournalEntry] = []

    def reject(lineno, fieldname, message):
        if strict:
            raise SchemaViolation(lineno, fieldname, message)
        report.skipped += 1
        report.errors.append(f"line {lineno}: {fieldname}: {message}")

    try:
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            report.lines += 1
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                reject(lineno, "<record>", f"invalid JSON ({exc.msg})")
                continue
            if not isinstance(rec, dict):
                reject(lineno, "<record>", "record is not an object")
                continue
            kind = rec.get("kind")
            try:
                if kind == "page_visit":
                    visits[str(rec["page_visit_id"])] = rec
                elif kind == "transaction":
                    t = _transaction_from_record(rec)
                    if not t.page_visit_id:
                        if strict:
                            raise SchemaViolation(lineno, "page_visit_id", "missing")
                        t.page_visit_id = ORPHAN_VISIT_ID
                        report.orphans += 1
                    transactions.append(t)
                    line_of[t.transaction_id] = lineno
                elif kind == "cookie_event":
                    journal.append(_journal_from_record(rec))
                else:
                    reject(lineno, "kind", f"unknown record kind {kind!r}")
            except SchemaViolation:
                raise
            except KeyError as exc:
                reject(lineno, str(exc.args[0]), "missing")
            except (ValueError, TypeError, binascii.Error) as exc:
                reject(lineno, "url" if "URL" in str(exc) else "<value>", str(exc))
    except OSError as exc:
        raise UnreadableInput(str(exc)) from exc

    pages: dict[str, PageVisit] = {}
    for pid, rec in visits.items():
        url = rec.get("first_party_url")
        pages[pid] = PageVisit(pid, url, first_party_domain_of(url, psl))
    for t in transactions:
        if t.page_visit_id not in pages:
            if t.page_visit_id != ORPHAN_VISIT_ID:
                if strict:
                    raise SchemaViolation(line_of.get(t.transaction_id, 0), "page_visit_id", f"unknown page visit {t.page_visit_id!r}")
                report.orphans += 1
                t.page_visit_id = ORPHAN_VISIT_ID
            if ORPHAN_VISIT_ID not in pages:
                pages[ORPHAN_VISIT_ID] = PageVisit(ORPHAN_VISIT_ID, None, None)
        pages[t.page_visit_id].transactions.append(t)
    for p in pages.values():
        p.transactions.sort(key=lambda t: t.timestamp)
        for t in p.transactions:
            for c in t.cookies_sent:
                journal.append(JournalEntry(t.timestamp, c, CookieAction.SENT, t.transaction_id,
                                            p.page_visit_id, derived=True))
            for c in t.cookies_set:
                journal.append(JournalEntry(t.timestamp, c, CookieAction.SET, t.transaction_id,
                                            p.page_visit_id, derived=True))
    ordered = sorted(pages.values(), key=lambda p: (p.is_orphan, p.start if p.start is not None else 0,
                                                     p.page_visit_id))
    if report.skipped:
        logger.warning("crawl %s: skipped %d malformed line(s)", label, report.skipped)
    return CrawlDataset(label, ordered, journal, report)


def read_crawl_log(path, label="A", psl: PublicSuffixTable | None = None,
                   strict: bool = False) -> CrawlDataset:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_crawl_log(fh, label, psl, strict)
    except OSError as exc:
        raise UnreadableInput(f"{path}: {exc}") from exc


def serialize(dataset: CrawlDataset) -> list[str]:
    """Render a dataset back to line-delimited JSON (derived journal entries omitted)."""
    out = []
    for p in dataset.page_visits:
        if not p.is_orphan:
            out.append(json.dumps({"kind": "page_visit", "page_visit_id": p.page_visit_id,
                                   "first_party_url": p.first_party_url}))
        for t in p.transactions:
            rec = t.to_record()
            if p.is_orphan:
                rec["page_visit_id"] = None
            out.append(json.dumps(rec))
    for e in dataset.explicit_journal():
        out.append(json.dumps(e.to_record()))
    return out


def is_third_party(t: HttpTransaction, p: PageVisit, psl: PublicSuffixTable) -> bool | None:
    """True iff the request's registrable domain differs from the page's.

    Returns None when either side cannot be resolved (public-suffix-only host
    or an orphan visit); callers exclude such requests and count them.
    """
    if p.first_party_domain is None:
        return None
    try:
        return psl.registrable_domain(t.host) != p.first_party_domain
    except (IsSuffixOnly, ValueError):
        return None


@dataclass
class PairedCrawls:
    crawl_a: CrawlDataset
    crawl_b: CrawlDataset
    pairing: dict[tuple[str, str], tuple[frozenset, frozenset]]
    # distinct (host, key, value) per crawl, for instance-weighted counts
    instances_a: frozenset = frozenset()
    instances_b: frozenset = frozenset()


def _observed_triples(d: CrawlDataset) -> set[tuple[str, str, str]]:
    return {e.cookie.triple for e in d.cookie_journal if e.action is not CookieAction.DELETED}


def pair_crawls(a: CrawlDataset, b: CrawlDataset) -> PairedCrawls:
    """Map every (host, key) seen in either crawl to its value sets per crawl."""
    ta, tb = _observed_triples(a), _observed_triples(b)
    va: dict[tuple[str, str], set] = defaultdict(set)
    vb: dict[tuple[str, str], set] = defaultdict(set)
    for h, k, v in ta:
        va[(h, k)].add(v)
    for h, k, v in tb:
        vb[(h, k)].add(v)
    keys = sorted(set(va) | set(vb))
    pairing = {pk: (frozenset(va.get(pk, ())), frozenset(vb.get(pk, ()))) for pk in keys}
    return PairedCrawls(a, b, pairing, frozenset(ta), frozenset(tb))
