"""Behavior labels joined with filter-list verdicts: what the lists miss and why."""

from __future__ import annotations

import csv
import json
import os
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .behavior import CONTENT_BUCKETS, PRECEDENCE, BehaviorLabel, content_bucket, primary_category
from .cookies import CookieClass, CookieClassification
from .crawl_model import CookieAction, CrawlDataset, is_third_party
from .filterlist import BlockVerdict
from .psl import IsSuffixOnly, PublicSuffixTable

SECTIONS = ("summary", "venn", "missed", "missed_by_content_type", "missed_by_category",
            "explanations", "top_missed_services")


class UnwritablePath(OSError):
    pass


@dataclass
class MissedRequest:
    transaction_id: str
    categories: list[str]
    primary_category: str
    host: str
    content_type: str
    site: str
    fp_context: bool = False
    large_scope: bool = False


@dataclass
class ServiceEntry:
    host: str
    requests: int
    sites: int
    cookies: list[list] = field(default_factory=list)  # [key, expiry]


@dataclass
class ListSection:
    name: str
    summary: dict = field(default_factory=dict)
    venn: dict = field(default_factory=lambda: {"behavior_only": 0, "list_only": 0, "both": 0})
    missed: list[MissedRequest] = field(default_factory=list)
    missed_by_content_type: dict = field(default_factory=dict)
    missed_by_category: dict = field(default_factory=dict)
    explanations: dict = field(default_factory=lambda: {"fp_context_share": 0.0, "large_scope_share": 0.0})
    top_missed_services: list[ServiceEntry] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "summary": dict(self.summary),
            "venn": dict(self.venn),
            "missed": [asdict(m) for m in self.missed],
            "missed_by_content_type": dict(self.missed_by_content_type),
            "missed_by_category": dict(self.missed_by_category),
            "explanations": dict(self.explanations),
            "top_missed_services": [asdict(s) for s in self.top_missed_services],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ListSection":
        return cls(
            name=d["name"],
            summary=dict(d["summary"]),
            venn=dict(d["venn"]),
            missed=[MissedRequest(**m) for m in d["missed"]],
            missed_by_content_type=dict(d["missed_by_content_type"]),
            missed_by_category=dict(d["missed_by_category"]),
            explanations=dict(d["explanations"]),
            top_missed_services=[ServiceEntry(**s) for s in d["top_missed_services"]],
        )


@dataclass
class ComparisonReport:
    lists: list[ListSection] = field(default_factory=list)

    def section(self, name: str) -> ListSection:
        for s in self.lists:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"schema": "pixeltrace.comparison/1", "lists": [s.to_dict() for s in self.lists]}

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        return cls([ListSection.from_dict(s) for s in d.get("lists", [])])


def _share(n, d) -> float:
    return n / d if d else 0.0


def _first_party_context_cookies(d: CrawlDataset, psl: PublicSuffixTable) -> set[tuple[str, str]]:
    """(host, key) pairs whose earliest Set happened on a page of their own site."""
    seen = set()
    out = set()
    for e in d.cookie_journal:
        if e.action is not CookieAction.SET or e.cookie.pair in seen:
            continue
        seen.add(e.cookie.pair)
        page = d.page_for_entry(e)
        if page is None or not page.first_party_domain:
            continue
        try:
            if psl.registrable_domain(e.cookie.host) == page.first_party_domain:
                out.add(e.cookie.pair)
        except (IsSuffixOnly, ValueError):
            continue
    return out


def compare(labels: list[BehaviorLabel], verdicts_per_list: dict[str, dict[str, BlockVerdict]],
            d: CrawlDataset, psl: PublicSuffixTable,
            classes: CookieClassification | None = None, top_n: int = 20) -> ComparisonReport:
    cats: dict[str, set] = defaultdict(set)
    for lb in labels:
        cats[lb.transaction_id].add(lb.category)
    third = {}
    for p in d.page_visits:
        for t in p.transactions:
            tp = is_third_party(t, p, psl)
            if tp:
                third[t.transaction_id] = p
    fp_cookies = _first_party_context_cookies(d, psl)
    sites = sorted({p.first_party_domain for p in d.page_visits if p.first_party_domain})
    report = ComparisonReport()
    for name in sorted(verdicts_per_list):
        verdicts = verdicts_per_list[name]
        sec = ListSection(name)
        tracking = [tid for tid in sorted(third) if cats.get(tid)]
        blocked = {tid for tid in third if verdicts.get(tid) is not None and verdicts[tid].status.blocked}
        for tid in sorted(third):
            b, lab = tid in blocked, bool(cats.get(tid))
            if b and lab:
                sec.venn["both"] += 1
            elif b:
                sec.venn["list_only"] += 1
            elif lab:
                sec.venn["behavior_only"] += 1
        missed_pre = [tid for tid in tracking if tid not in blocked]
        follow = [tid for tid in missed_pre if verdicts.get(tid) is not None and verdicts[tid].follow_up]
        follow_set = set(follow)
        large_cookie_total = 0
        large_cookie_hits = 0
        services: dict[str, dict] = {}
        for tid in missed_pre:
            if tid in follow_set:
                continue
            t = d.by_transaction_id[tid]
            p = third[tid]
            carried = [*t.cookies_sent, *t.cookies_set]
            fp_ctx = any(c.pair in fp_cookies for c in carried)
            large = False
            seen_pairs = set()
            for c in carried:
                if c.pair in seen_pairs:
                    continue
                seen_pairs.add(c.pair)
                try:
                    reg = psl.registrable_domain(c.host)
                except (IsSuffixOnly, ValueError):
                    continue
                if reg == p.first_party_domain:
                    continue
                large_cookie_total += 1
                if c.host == reg:
                    large_cookie_hits += 1
                    if t.host != c.host:
                        large = True
            pc = primary_category(cats[tid])
            sec.missed.append(MissedRequest(
                transaction_id=tid,
                categories=[c.value for c in PRECEDENCE if c in cats[tid]],
                primary_category=pc.value,
                host=t.host,
                content_type=content_bucket(t),
                site=p.first_party_domain,
                fp_context=fp_ctx,
                large_scope=large,
            ))
            svc = services.setdefault(t.host, {"requests": 0, "sites": set(), "cookies": set()})
            svc["requests"] += 1
            svc["sites"].add(p.first_party_domain)
            for c in carried:
                if classes is None or classes.classes.get(c.pair) is CookieClass.IDENTIFIER:
                    svc["cookies"].add((c.key, c.expiry))
        n_missed = len(sec.missed)
        by_ct = Counter(m.content_type for m in sec.missed)
        by_cat = Counter(m.primary_category for m in sec.missed)
        sec.missed_by_content_type = {b: _share(by_ct[b], n_missed) for b in CONTENT_BUCKETS}
        sec.missed_by_category = {c.value: _share(by_cat[c.value], n_missed) for c in PRECEDENCE}
        sec.explanations = {
            "fp_context_share": _share(sum(m.fp_context for m in sec.missed), n_missed),
            "large_scope_share": _share(large_cookie_hits, large_cookie_total),
        }
        ranked = sorted(services.items(), key=lambda kv: (-len(kv[1]["sites"]), -kv[1]["requests"], kv[0]))
        sec.top_missed_services = [
            ServiceEntry(host, v["requests"], len(v["sites"]),
                         [[k, e] for k, e in sorted(v["cookies"], key=lambda x: (x[0], x[1] is None, x[1] or 0))])
            for host, v in ranked[:top_n]
        ]
        missed_sites = {m.site for m in sec.missed}
        missed_domains = set()
        for m in sec.missed:
            try:
                missed_domains.add(psl.registrable_domain(m.host))
            except (IsSuffixOnly, ValueError):
                missed_domains.add(m.host)
        sec.summary = {
            "third_party_requests": len(third),
            "tracking_requests": len(tracking),
            "blocked_tracking_requests": len(tracking) - len(missed_pre),
            "missed_before_follow_up": len(missed_pre),
            "follow_up": len(follow),
            "missed": n_missed,
            "missed_share": _share(n_missed, len(tracking)),
            "missed_tracker_domains": len(missed_domains),
            "sites": len(sites),
            "sites_with_missed": len(missed_sites),
            "sites_with_missed_share": _share(len(missed_sites), len(sites)),
        }
        report.lists.append(sec)
    return report


def _ensure_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UnwritablePath(f"{path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise UnwritablePath(f"{path}: not writable")


def dumps(report: ComparisonReport) -> str:
    return json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n"


def _section_rows(sec: ListSection, section: str) -> tuple[list[str], list[list]]:
    if section == "summary":
        return ["metric", "value"], [[k, v] for k, v in sec.summary.items()]
    if section == "venn":
        return ["region", "count"], [[k, v] for k, v in sec.venn.items()]
    if section == "missed":
        cols = ["transaction_id", "categories", "primary_category", "host", "content_type", "site",
                "fp_context", "large_scope"]
        return cols, [[m.transaction_id, "|".join(m.categories), m.primary_category, m.host,
                       m.content_type, m.site, m.fp_context, m.large_scope] for m in sec.missed]
    if section == "missed_by_content_type":
        return ["content_type", "share"], [[k, v] for k, v in sec.missed_by_content_type.items()]
    if section == "missed_by_category":
        return ["category", "share"], [[k, v] for k, v in sec.missed_by_category.items()]
    if section == "explanations":
        return ["explanation", "share"], [[k, v] for k, v in sec.explanations.items()]
    if section == "top_missed_services":
        return ["host", "requests", "sites", "cookies"], [
            [s.host, s.requests, s.sites, ";".join(f"{k}:{'' if e is None else e}" for k, e in s.cookies)]
            for s in sec.top_missed_services]
    raise KeyError(section)


def export(report: ComparisonReport, path, fmt: str = "structured") -> list[Path]:
    """Write the report; returns the files written.

    ``structured`` writes one JSON document (``path`` may be a file or a
    directory). ``tabular`` writes one CSV per section into directory ``path``,
    with a leading ``list`` column naming the filter configuration.
    """
    path = Path(path)
    if fmt == "structured":
        target = path / "comparison.json" if path.suffix != ".json" else path
        _ensure_dir(target.parent)
        try:
            target.write_text(dumps(report), encoding="utf-8")
        except OSError as exc:
            raise UnwritablePath(f"{target}: {exc}") from exc
        return [target]
    if fmt != "tabular":
        raise ValueError(f"unknown format {fmt!r}")
    _ensure_dir(path)
    written = []
    for section in SECTIONS:
        target = path / f"{section}.csv"
        header = None
        rows = []
        for sec in report.lists:
            cols, body = _section_rows(sec, section)
            header = cols
            rows.extend([sec.name, *r] for r in body)
        if header is None:
            header = _section_rows(ListSection(""), section)[0]
        try:
            with open(target, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["list", *header])
                w.writerows(rows)
        except OSError as exc:
            raise UnwritablePath(f"{target}: {exc}") from exc
        written.append(target)
    return written


def load(path) -> ComparisonReport:
    with open(path, encoding="utf-8") as fh:
        return ComparisonReport.from_dict(json.load(fh))
