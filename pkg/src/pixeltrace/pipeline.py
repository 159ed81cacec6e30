"""End-to-end analysis: pairing, classification, sharing, behaviors and verdicts."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .behavior import BehaviorContext, BehaviorLabel, aggregate, classify_page, global_basic_trackers
from .cookies import CookieClassification, CookieConfig, classify_cookies
from .crawl_model import CrawlDataset, PairedCrawls, pair_crawls
from .filterlist import (BlockVerdict, DisconnectList, ListConfig, apply_follow_up, blocked_closure,
                         direct_verdict_fn, parse_filter_list, trackers_follow_up)
from .graph import DEFAULT_WINDOW_MS, ChainIndex, build_chains
from .pixels import PixelConfig, pixel_prevalence
from .psl import PublicSuffixTable
from .sharing import IdentifierJar, SharingConfig, SharingEvent, scan_page


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AnalysisConfig:
    sharing: SharingConfig = SharingConfig()
    cookies: CookieConfig = CookieConfig()
    pixels: PixelConfig = PixelConfig()
    window_ms: int = DEFAULT_WINDOW_MS
    per_page_trackers: bool = False
    workers: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisConfig":
        try:
            return cls(
                sharing=SharingConfig.from_dict(d.get("sharing", {})),
                cookies=CookieConfig(**d.get("cookies", {})),
                pixels=PixelConfig(**d.get("pixels", {})),
                window_ms=int(d.get("window_ms", DEFAULT_WINDOW_MS)),
                per_page_trackers=bool(d.get("per_page_trackers", False)),
                workers=int(d.get("workers", 1)),
            )
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid run configuration: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "sharing": self.sharing.to_dict(),
            "cookies": {"id_as_key_min_length": self.cookies.id_as_key_min_length},
            "pixels": {"invisible_max": self.pixels.invisible_max, "big_min": self.pixels.big_min},
            "window_ms": self.window_ms,
            "per_page_trackers": self.per_page_trackers,
        }


def load_run_config(path) -> AnalysisConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return AnalysisConfig.from_dict(data)


@dataclass
class Analysis:
    dataset: CrawlDataset
    paired: PairedCrawls
    classes: CookieClassification
    chains: dict[str, ChainIndex]
    events: list[SharingEvent]
    labels: list[BehaviorLabel]
    basic_trackers: frozenset
    cfg: AnalysisConfig = field(default_factory=AnalysisConfig)

    def events_by_transaction(self) -> dict[str, list[SharingEvent]]:
        out: dict[str, list[SharingEvent]] = {}
        for e in self.events:
            out.setdefault(e.transaction_id, []).append(e)
        return out


def _pmap(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def analyze(a: CrawlDataset, b: CrawlDataset, psl: PublicSuffixTable | None = None,
            cfg: AnalysisConfig = AnalysisConfig()) -> Analysis:
    """Run every behavior analysis on crawl ``a``, using ``b`` only to find identifiers."""
    psl = psl or PublicSuffixTable.bundled()
    paired = pair_crawls(a, b)
    classes = classify_cookies(paired, cfg.cookies)
    pages = a.page_visits
    chain_list = _pmap(lambda p: build_chains(p, cfg.window_ms), pages, cfg.workers)
    chains = {p.page_visit_id: c for p, c in zip(pages, chain_list)}
    jar = IdentifierJar(a, classes, psl, cfg.sharing)
    per_page_events = _pmap(lambda p: scan_page(p, chains[p.page_visit_id], jar, psl, classes),
                            pages, cfg.workers)
    events = sorted((e for evs in per_page_events for e in evs), key=SharingEvent.sort_key)
    trackers = global_basic_trackers(a, classes, psl)

    def label_page(pair):
        p, evs = pair
        by_tx: dict[str, list[SharingEvent]] = {}
        for e in evs:
            by_tx.setdefault(e.transaction_id, []).append(e)
        ctx = BehaviorContext(p, chains[p.page_visit_id], classes, by_tx, psl, trackers,
                              cfg.per_page_trackers)
        return classify_page(ctx)

    per_page_labels = _pmap(label_page, list(zip(pages, per_page_events)), cfg.workers)
    labels = [lb for lbs in per_page_labels for lb in lbs]
    return Analysis(a, paired, classes, chains, events, labels, trackers, cfg)


def compute_verdicts(an: Analysis, lc: ListConfig, psl: PublicSuffixTable | None = None) -> dict[str, BlockVerdict]:
    """Blocked closure over every visit, then the follow-up pass in crawl order."""
    psl = psl or PublicSuffixTable.bundled()

    def one(p):
        return blocked_closure(p, an.chains[p.page_visit_id], direct_verdict_fn(lc, p, psl))

    verdicts: dict[str, BlockVerdict] = {}
    for part in _pmap(one, an.dataset.page_visits, an.cfg.workers):
        verdicts.update(part)
    follow = trackers_follow_up(an.dataset, verdicts, an.classes)
    return apply_follow_up(verdicts, follow)


def list_configs(easylist: str | None = None, easyprivacy: str | None = None,
                 disconnect: str | None = None) -> list[ListConfig]:
    """EL+EP combined, Disconnect alone, and their union, for whichever inputs exist."""
    text = "\n".join(x for x in (easylist, easyprivacy) if x)
    rules = parse_filter_list(text) if text else None
    dl = DisconnectList.from_text(disconnect) if disconnect else None
    out = []
    if rules is not None:
        out.append(ListConfig("easylist+easyprivacy", rules=rules))
    if dl is not None:
        out.append(ListConfig("disconnect", disconnect=dl))
    if rules is not None and dl is not None:
        out.append(ListConfig("union", rules=rules, disconnect=dl))
    return out


def analysis_document(an: Analysis, psl: PublicSuffixTable | None = None,
                      mapping: dict[str, str] | None = None, sharing: bool = True,
                      behaviors: bool = True, pixels: bool = True, cookies: bool = True) -> dict:
    """Structured, order-stable summary of an analysis run."""
    psl = psl or PublicSuffixTable.bundled()
    doc = {
        "schema": "pixeltrace.analysis/1",
        "config": an.cfg.to_dict(),
        "crawl": an.dataset.crawl_label.value,
        "transactions": an.dataset.transaction_count(),
        "page_visits": len(an.dataset.page_visits),
        "redirect_ambiguities": sum(c.ambiguities for c in an.chains.values()),
    }
    if pixels:
        doc["pixels"] = pixel_prevalence(an.dataset, psl, an.cfg.pixels).to_dict()
    if cookies:
        doc["cookies"] = an.classes.to_dict()
    if sharing:
        counts = {}
        for e in an.events:
            counts[e.technique.value] = counts.get(e.technique.value, 0) + 1
        doc["sharing"] = {"technique_counts": dict(sorted(counts.items())),
                          "events": [e.to_dict() for e in an.events]}
    if behaviors:
        doc["behaviors"] = {
            "labels": [lb.to_dict() for lb in an.labels],
            "prevalence": aggregate(an.labels, an.dataset, psl, mapping, pixel_cfg=an.cfg.pixels).to_dict(),
            "basic_trackers": sorted(an.basic_trackers),
        }
    return doc
