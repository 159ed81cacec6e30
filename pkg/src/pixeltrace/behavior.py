"""Six-category tracking-behavior classification and prevalence aggregation."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum

from .cookies import CookieClass, CookieClassification
from .crawl_model import CrawlDataset, HttpTransaction, PageVisit, is_third_party
from .graph import ChainIndex, Initiator, InitiatorKind, initiator_of
from .pixels import ImageKind, PixelConfig, classify_image
from .psl import IsSuffixOnly, PublicSuffixTable
from .sharing import SharingEvent


class BehaviorCategory(str, Enum):
    BASIC = "BasicTracking"
    BASIC_BY_TRACKER = "BasicTrackingByTracker"
    THIRD_TO_THIRD = "ThirdToThirdSync"
    FORWARDING = "CookieForwarding"
    FIRST_TO_THIRD = "FirstToThirdSync"
    ANALYTICS = "Analytics"


# attribution order when one category must stand for a multi-label request
PRECEDENCE = (
    BehaviorCategory.THIRD_TO_THIRD,
    BehaviorCategory.FORWARDING,
    BehaviorCategory.FIRST_TO_THIRD,
    BehaviorCategory.ANALYTICS,
    BehaviorCategory.BASIC_BY_TRACKER,
    BehaviorCategory.BASIC,
)
SYNCING = frozenset({BehaviorCategory.THIRD_TO_THIRD, BehaviorCategory.FORWARDING,
                     BehaviorCategory.FIRST_TO_THIRD})
BASIC_KINDS = frozenset({BehaviorCategory.BASIC, BehaviorCategory.BASIC_BY_TRACKER})

CONTENT_BUCKETS = ("script", "invisible image", "text/html", "big image", "application/json",
                   "font", "stylesheet", "other image", "other")


class MappingFileInvalid(ValueError):
    pass


@dataclass(frozen=True)
class BehaviorLabel:
    category: BehaviorCategory
    transaction_id: str
    cookie_refs: tuple[tuple[str, str], ...] = ()
    sharing_event_refs: tuple[tuple, ...] = ()
    initiator: Initiator | None = None

    def to_dict(self) -> dict:
        return {
            "transaction_id": self.transaction_id,
            "category": self.category.value,
            "cookie_refs": [list(r) for r in self.cookie_refs],
            "sharing_event_refs": [list(r) for r in self.sharing_event_refs],
            "initiator": self.initiator.to_dict() if self.initiator else None,
        }


def primary_category(categories) -> BehaviorCategory | None:
    for c in PRECEDENCE:
        if c in categories:
            return c
    return None


@dataclass
class BehaviorContext:
    """What the rules need to know about one page visit."""

    page: PageVisit
    chains: ChainIndex
    classes: CookieClassification
    events: dict[str, list[SharingEvent]]
    psl: PublicSuffixTable
    basic_trackers: frozenset = frozenset()
    per_page_trackers: bool = False
    by_id: dict[str, HttpTransaction] = field(default_factory=dict)

    def __post_init__(self):
        if not self.by_id:
            self.by_id = {t.transaction_id: t for t in self.page.transactions}

    def domain(self, host: str) -> str | None:
        try:
            return self.psl.registrable_domain(host)
        except (IsSuffixOnly, ValueError):
            return None


def own_identifier_refs(t: HttpTransaction, ctx: BehaviorContext) -> tuple[tuple[str, str], ...]:
    """Identifier cookies of t's own registrable domain sent with, or set by, t."""
    mine = ctx.domain(t.host)
    refs = set()
    for c in (*t.cookies_sent, *t.cookies_set):
        if ctx.classes.classes.get(c.pair) is CookieClass.IDENTIFIER and ctx.domain(c.host) == mine:
            refs.add(c.pair)
    return tuple(sorted(refs))


def _event_ref(e: SharingEvent) -> tuple:
    return (e.transaction_id, e.technique.value, e.parameter_name or "", e.sender_domain, *e.cookie_ref)


def rule_basic(t: HttpTransaction, ctx: BehaviorContext) -> bool:
    return bool(is_third_party(t, ctx.page, ctx.psl)) and bool(own_identifier_refs(t, ctx))


def page_basic_trackers(p: PageVisit, classes: CookieClassification, psl: PublicSuffixTable) -> set[str]:
    ctx = BehaviorContext(p, ChainIndex([]), classes, {}, psl)
    out = set()
    for t in p.transactions:
        if rule_basic(t, ctx):
            d = ctx.domain(t.host)
            if d:
                out.add(d)
    return out


def global_basic_trackers(d: CrawlDataset, classes: CookieClassification,
                          psl: PublicSuffixTable) -> frozenset:
    """Domains that send or set their own identifier cookie as a third party anywhere."""
    out = set()
    for p in d.page_visits:
        out |= page_basic_trackers(p, classes, psl)
    return frozenset(out)


def rule_basic_by_tracker(t: HttpTransaction, ctx: BehaviorContext) -> bool:
    if not rule_basic(t, ctx):
        return False
    init = initiator_of(t, ctx.chains, ctx.page, ctx.psl, ctx.by_id)
    if init.kind is not InitiatorKind.THIRD_PARTY or init.domain == ctx.domain(t.host):
        return False
    if ctx.per_page_trackers:
        trackers = page_basic_trackers(ctx.page, ctx.classes, ctx.psl)
    else:
        trackers = ctx.basic_trackers
    return init.domain in trackers


def _inbound(t: HttpTransaction, ctx: BehaviorContext, first_party_source: bool) -> list[SharingEvent]:
    if not is_third_party(t, ctx.page, ctx.psl):
        return []
    fp = ctx.page.first_party_domain
    return [e for e in ctx.events.get(t.transaction_id, ())
            if (e.sender_domain == fp) == first_party_source]


def rule_syncing(t: HttpTransaction, ctx: BehaviorContext) -> BehaviorCategory | None:
    if not _inbound(t, ctx, first_party_source=False):
        return None
    return BehaviorCategory.THIRD_TO_THIRD if own_identifier_refs(t, ctx) else BehaviorCategory.FORWARDING


def rule_first_to_third(t: HttpTransaction, ctx: BehaviorContext) -> BehaviorCategory | None:
    if not _inbound(t, ctx, first_party_source=True):
        return None
    return BehaviorCategory.FIRST_TO_THIRD if own_identifier_refs(t, ctx) else BehaviorCategory.ANALYTICS


def classify_request(t: HttpTransaction, ctx: BehaviorContext) -> set[BehaviorLabel]:
    if not is_third_party(t, ctx.page, ctx.psl):
        return set()
    own = own_identifier_refs(t, ctx)
    init = initiator_of(t, ctx.chains, ctx.page, ctx.psl, ctx.by_id)
    labels = set()
    sync = rule_syncing(t, ctx)
    if sync is not None:
        evs = tuple(sorted(_event_ref(e) for e in _inbound(t, ctx, False)))
        labels.add(BehaviorLabel(sync, t.transaction_id, own, evs, init))
    f2t = rule_first_to_third(t, ctx)
    if f2t is not None:
        evs = tuple(sorted(_event_ref(e) for e in _inbound(t, ctx, True)))
        labels.add(BehaviorLabel(f2t, t.transaction_id, own, evs, init))
    if any(lb.category in SYNCING for lb in labels) or not own:
        return labels
    if rule_basic_by_tracker(t, ctx):
        labels.add(BehaviorLabel(BehaviorCategory.BASIC_BY_TRACKER, t.transaction_id, own, (), init))
    else:
        labels.add(BehaviorLabel(BehaviorCategory.BASIC, t.transaction_id, own, (), init))
    return labels


def classify_page(ctx: BehaviorContext) -> list[BehaviorLabel]:
    out = []
    for t in ctx.page.transactions:
        out.extend(classify_request(t, ctx))
    return sort_labels(out)


_CAT_ORDER = {c: i for i, c in enumerate(BehaviorCategory)}


def sort_labels(labels) -> list[BehaviorLabel]:
    return sorted(labels, key=lambda lb: (lb.transaction_id, _CAT_ORDER[lb.category]))


def content_bucket(t: HttpTransaction, cfg: PixelConfig = PixelConfig()) -> str:
    ct = t.content_type
    if "javascript" in ct or "ecmascript" in ct:
        return "script"
    if ct.startswith("image/") or (t.body is not None and not ct):
        kind = classify_image(t, cfg).kind
        if kind.invisible:
            return "invisible image"
        if kind is ImageKind.BIG_IMAGE:
            return "big image"
        return "other image"
    if ct == "text/html":
        return "text/html"
    if ct == "application/json":
        return "application/json"
    if ct.startswith("font/") or "font" in ct:
        return "font"
    if ct == "text/css":
        return "stylesheet"
    return "other"


def load_company_map(path) -> dict[str, str]:
    """Two-column text file: registrable domain, company name (tab, comma or spaces)."""
    mapping = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise MappingFileInvalid(f"{path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" in line:
            parts = line.split("\t", 1)
        elif "," in line:
            parts = line.split(",", 1)
        else:
            parts = line.split(None, 1)
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise MappingFileInvalid(f"{path}:{n}: expected two columns")
        mapping[parts[0].strip().lower()] = parts[1].strip()
    return mapping


@dataclass
class PrevalenceReport:
    sites: int = 0
    category_prevalence: dict[str, float] = field(default_factory=dict)
    category_sites: dict[str, int] = field(default_factory=dict)
    label_counts: dict[str, int] = field(default_factory=dict)
    top_trackers: dict[str, list[tuple[str, int]]] = field(default_factory=dict)
    tracker_sites: dict[str, int] = field(default_factory=dict)
    company_sites: dict[str, int] = field(default_factory=dict)
    content_type_shares: dict[str, float] = field(default_factory=dict)
    cross_site_analytics_receivers: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sites": self.sites,
            "category_prevalence": dict(self.category_prevalence),
            "category_sites": dict(self.category_sites),
            "label_counts": dict(self.label_counts),
            "top_trackers": {k: [list(x) for x in v] for k, v in self.top_trackers.items()},
            "tracker_sites": dict(self.tracker_sites),
            "company_sites": dict(self.company_sites),
            "content_type_shares": dict(self.content_type_shares),
            "cross_site_analytics_receivers": list(self.cross_site_analytics_receivers),
        }


def aggregate(labels: list[BehaviorLabel], d: CrawlDataset, psl: PublicSuffixTable,
              mapping: dict[str, str] | None = None, top_n: int = 10,
              pixel_cfg: PixelConfig = PixelConfig()) -> PrevalenceReport:
    sites = sorted({p.first_party_domain for p in d.page_visits if p.first_party_domain})
    cat_sites: dict[BehaviorCategory, set] = defaultdict(set)
    tracker_cat_sites: dict[BehaviorCategory, dict[str, set]] = defaultdict(lambda: defaultdict(set))
    tracker_sites: dict[str, set] = defaultdict(set)
    counts = Counter()
    tracking_tx = set()
    for lb in labels:
        counts[lb.category] += 1
        p = d.page_of.get(lb.transaction_id)
        t = d.by_transaction_id.get(lb.transaction_id)
        if p is None or t is None or not p.first_party_domain:
            continue
        tracking_tx.add(lb.transaction_id)
        try:
            receiver = psl.registrable_domain(t.host)
        except (IsSuffixOnly, ValueError):
            receiver = t.host
        cat_sites[lb.category].add(p.first_party_domain)
        tracker_cat_sites[lb.category][receiver].add(p.first_party_domain)
        tracker_sites[receiver].add(p.first_party_domain)
    n = len(sites)
    buckets = Counter(content_bucket(d.by_transaction_id[tid], pixel_cfg) for tid in tracking_tx)
    total = sum(buckets.values())
    company: dict[str, set] = defaultdict(set)
    if mapping:
        for dom, s in tracker_sites.items():
            if dom in mapping:
                company[mapping[dom]] |= s
    analytics = tracker_cat_sites.get(BehaviorCategory.ANALYTICS, {})
    return PrevalenceReport(
        sites=n,
        category_prevalence={c.value: (len(cat_sites[c]) / n if n else 0.0) for c in BehaviorCategory},
        category_sites={c.value: len(cat_sites[c]) for c in BehaviorCategory},
        label_counts={c.value: counts[c] for c in BehaviorCategory},
        top_trackers={
            c.value: sorted(((dom, len(s)) for dom, s in tracker_cat_sites[c].items()),
                            key=lambda kv: (-kv[1], kv[0]))[:top_n]
            for c in BehaviorCategory
        },
        tracker_sites={dom: len(s) for dom, s in sorted(tracker_sites.items())},
        company_sites={co: len(s) for co, s in sorted(company.items())},
        content_type_shares={b: (buckets[b] / total if total else 0.0) for b in CONTENT_BUCKETS},
        cross_site_analytics_receivers=sorted(dom for dom, s in analytics.items() if len(s) > 1),
    )
