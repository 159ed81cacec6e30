"""Seeded generator of paired crawl logs with known tracking behaviors.

The generator first builds an abstract plan: pages, planned requests, which
identifier cookies each request carries, which parameter carries which
cookie under which encoding, and who caused each request. Both crawl logs are
rendered from the same plan with different identifier values, so the pair
differs exactly where two independent browsers would.

Ground truth is derived from the plan alone. The six behavior rules, the
filter-fixture verdicts and the follow-up rule are re-evaluated on plan
facts, never on parsed logs, so the truth is independent of the analyzer.
"""

from __future__ import annotations

import base64
import json
import math
import random
import string
import struct
import zlib
from collections import Counter
from dataclasses import dataclass, field
from urllib.parse import urlencode

from .crawl_model import (CookieInstance, CookieOrigin, CrawlDataset, HttpTransaction, PageVisit,
                          SetContext, serialize)

CATEGORIES = ("BasicTracking", "BasicTrackingByTracker", "ThirdToThirdSync", "CookieForwarding",
              "FirstToThirdSync", "Analytics")
TECHNIQUES = ("DS", "PPS", "PCS", "GA", "B64", "ES")
VALUE_TECHNIQUES = TECHNIQUES[:5]
FIXTURE_LIST_NAME = "easylist+easyprivacy"
MAX_PLANTS_PER_PAGE = 12

_WORDS = ("amber", "birch", "cobalt", "delta", "ember", "fjord", "garnet", "harbor", "indigo", "juniper",
          "kelp", "lumen", "maple", "nectar", "onyx", "pepper", "quartz", "raven", "sable", "tundra",
          "umber", "violet", "willow", "xenon", "yarrow", "zephyr")
_ALNUM = string.ascii_letters + string.digits


class InfeasibleConfig(ValueError):
    pass


class CorpusMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ThirdPartySpec:
    domain: str
    behaviors: tuple[str, ...] = ()
    techniques: tuple[str, ...] = ()


@dataclass
class ScenarioConfig:
    seed: int = 1
    n_sites: int = 20
    pages_per_site: int = 3
    third_parties: int | list = 30
    planted_rates: dict = field(default_factory=lambda: {c: 5 for c in CATEGORIES})
    follow_ups: int = 4
    blocked_frames: int = 4
    large_scope: int = 4
    portals: int = 2
    invisible_rate: float | None = 0.35
    noise: dict = field(default_factory=lambda: {"requests": 100, "safe_cookies": 4,
                                                 "unknown_cookies": 4, "id_as_key": 2})
    filter_fixture: list | None = None
    fixture_profile: str = "full"
    es_host: str = "adexchange-dc.net"
    es_param: str = "partner_nid"

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InfeasibleConfig(f"unknown scenario field(s): {sorted(unknown)}")
        d = dict(d)
        tps = d.get("third_parties")
        if isinstance(tps, list):
            d["third_parties"] = [ThirdPartySpec(t["domain"], tuple(t.get("behaviors", ())),
                                                 tuple(t.get("techniques", ()))) for t in tps]
        try:
            cfg = cls(**d)
        except TypeError as exc:
            raise InfeasibleConfig(str(exc)) from exc
        if "noise" in d:
            cfg.noise = {**cls().noise, **d["noise"]}
        return cfg

    def to_dict(self) -> dict:
        tps = self.third_parties
        if isinstance(tps, list):
            tps = [{"domain": t.domain, "behaviors": list(t.behaviors), "techniques": list(t.techniques)}
                   for t in tps]
        return {
            "seed": self.seed, "n_sites": self.n_sites, "pages_per_site": self.pages_per_site,
            "third_parties": tps, "planted_rates": dict(self.planted_rates),
            "follow_ups": self.follow_ups, "blocked_frames": self.blocked_frames,
            "large_scope": self.large_scope, "portals": self.portals,
            "invisible_rate": self.invisible_rate, "noise": dict(self.noise),
            "filter_fixture": self.filter_fixture, "fixture_profile": self.fixture_profile,
            "es_host": self.es_host, "es_param": self.es_param,
        }


def load_scenario(path) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InfeasibleConfig(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InfeasibleConfig("scenario must be a JSON object")
    return ScenarioConfig.from_dict(data)


# image bodies

GIF_1X1 = (b"GIF89a\x01\x00\x01\x00\x80\x00\x00\xff\xff\xff\x00\x00\x00!\xf9\x04\x01\x00\x00\x00\x00"
           b",\x00\x00\x00\x00\x01\x00\x01\x00\x00\x02\x02D\x01\x00;")


def gif_header(w: int, h: int) -> bytes:
    return b"GIF89a" + struct.pack("<HH", w, h) + b"\x00\x00\x00;"


def png_image(w: int, h: int) -> bytes:
    def chunk(kind, data):
        return struct.pack(">I", len(data)) + kind + data + struct.pack(">I", zlib.crc32(kind + data))
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 6, 0, 0, 0)
    raw = b"".join(b"\x00" + b"\x00" * (4 * w) for _ in range(min(h, 2)))
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b"")


def jpeg_header(w: int, h: int) -> bytes:
    app0 = b"\xff\xe0" + struct.pack(">H", 16) + b"JFIF\x00\x01\x01\x00\x00\x01\x00\x01\x00\x00"
    sof = b"\xff\xc0" + struct.pack(">HBHHB", 11, 8, h, w, 1) + b"\x01\x11\x00"
    return b"\xff\xd8" + app0 + sof + b"\xff\xd9"


_BODIES = {
    "gif1x1": lambda: GIF_1X1,
    "png1x1": lambda: png_image(1, 1),
    "zero": lambda: b"",
    "small": lambda: gif_header(20, 30),
    "big": lambda: png_image(300, 250),
    "bigjpeg": lambda: jpeg_header(728, 90),
}
INVISIBLE_BODIES = ("gif1x1", "png1x1", "zero")


# plan


@dataclass(frozen=True)
class Share:
    """A parameter value carrying an identifier cookie under some encoding."""

    cookie: tuple[str, str]
    technique: str
    variant: str = ""


@dataclass(eq=False)
class PTx:
    serial: int
    page: "PPage"
    host: str
    domain: str
    path: str
    ctype: str
    params: list = field(default_factory=list)
    status: int = 200
    body: str | None = None
    referer: "PTx | None" = None
    pred: "PTx | None" = None
    succ: "PTx | None" = None
    cookies: list = field(default_factory=list)
    extras: list = field(default_factory=list)  # (kind, host, key_or_index)
    es_step: bool = False
    main: bool = False


@dataclass(eq=False)
class PPage:
    index: int
    site: str
    host: str
    path: str
    txs: list = field(default_factory=list)

    @property
    def main(self) -> PTx:
        return self.txs[0]


@dataclass
class Actor:
    domain: str
    host: str
    role: str
    cookie_host: str = ""
    cookie_keys: dict = field(default_factory=dict)  # format -> key


@dataclass
class FixtureRule:
    raw: str
    exception: bool = False
    host: str | None = None
    path: str | None = None
    literal: str | None = None
    types: frozenset | None = None
    not_types: frozenset = frozenset()
    third_party: bool | None = None
    domains: tuple = ()
    not_domains: tuple = ()


_FIXTURE_TYPES = {"script", "image", "stylesheet", "subdocument", "xmlhttprequest", "other"}


def parse_fixture_rule(line: str) -> FixtureRule | None:
    """Tiny parser for the rule shapes the generator's truth can evaluate."""
    s = line.strip()
    if not s or s.startswith("!") or any(m in s for m in ("##", "#@#", "#?#")):
        return None
    rule = FixtureRule(raw=s)
    if s.startswith("@@"):
        rule.exception, s = True, s[2:]
    opts = ""
    if "$" in s:
        s, opts = s.split("$", 1)
    if any(ch in s for ch in "*|") and not s.startswith("||"):
        raise InfeasibleConfig(f"fixture rule shape not supported: {line!r}")
    if s.startswith("||"):
        body = s[2:]
        if body.endswith("^"):
            rule.host = body[:-1]
        elif "/" in body:
            rule.host, rest = body.split("/", 1)
            rule.path = "/" + rest
        else:
            raise InfeasibleConfig(f"fixture rule shape not supported: {line!r}")
        if any(ch in rule.host for ch in "*^|/") or (rule.path and any(ch in rule.path for ch in "*^|")):
            raise InfeasibleConfig(f"fixture rule shape not supported: {line!r}")
    else:
        if not s or "^" in s:
            raise InfeasibleConfig(f"fixture rule shape not supported: {line!r}")
        rule.literal = s.lower()
    types, not_types = set(), set()
    for o in filter(None, opts.split(",")):
        neg = o.startswith("~")
        name = o[1:] if neg else o
        if name == "third-party":
            rule.third_party = not neg
        elif o.startswith("domain="):
            doms = o[7:].split("|")
            rule.domains = tuple(d for d in doms if not d.startswith("~"))
            rule.not_domains = tuple(d[1:] for d in doms if d.startswith("~"))
        elif name in _FIXTURE_TYPES:
            (not_types if neg else types).add(name)
        else:
            return None  # unsupported option: the rule never applies
    rule.types = frozenset(types) if types else None
    rule.not_types = frozenset(not_types)
    return rule


class Plan:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.pages: list[PPage] = []
        self.serial = 0
        self.cookie_owner: dict[tuple[str, str], str] = {}
        self.cookie_format: dict[tuple[str, str], str] = {}
        self.fixture: list[str] = []
        self.planted: Counter = Counter()
        self.planted_tx: dict[int, str] = {}
        self.es_rule = (cfg.es_host, cfg.es_param)

    def new_tx(self, page: PPage, actor_host: str, domain: str, path: str, ctype: str, **kw) -> PTx:
        self.serial += 1
        t = PTx(self.serial, page, actor_host, domain, path, ctype, **kw)
        page.txs.append(t)
        return t

    def register_cookie(self, host: str, key: str, owner: str, fmt: str) -> tuple[str, str]:
        ref = (host, key)
        self.cookie_owner[ref] = owner
        self.cookie_format[ref] = fmt
        return ref


def _rand(rng: random.Random, n: int, alphabet=_ALNUM) -> str:
    return "".join(rng.choice(alphabet) for _ in range(n))


def _validate(cfg: ScenarioConfig) -> None:
    if cfg.n_sites < 1 or cfg.pages_per_site < 1:
        raise InfeasibleConfig("need at least one site and one page per site")
    if cfg.portals < 0 or cfg.portals > cfg.n_sites:
        raise InfeasibleConfig("portals must be between 0 and n_sites")
    unknown = set(cfg.planted_rates) - set(CATEGORIES)
    if unknown:
        raise InfeasibleConfig(f"unknown categories in planted_rates: {sorted(unknown)}")
    if any(int(v) < 0 for v in cfg.planted_rates.values()):
        raise InfeasibleConfig("planted counts must be non-negative")
    if cfg.invisible_rate is not None and not 0.0 < cfg.invisible_rate < 1.0:
        raise InfeasibleConfig("invisible_rate must be in (0, 1)")
    if cfg.fixture_profile not in ("full", "follow_up_only", "none"):
        raise InfeasibleConfig(f"unknown fixture_profile {cfg.fixture_profile!r}")
    plants = sum(int(v) for v in cfg.planted_rates.values()) + cfg.follow_ups * 2 + cfg.blocked_frames \
        + cfg.large_scope
    capacity = cfg.n_sites * cfg.pages_per_site * MAX_PLANTS_PER_PAGE
    if plants > capacity:
        raise InfeasibleConfig(f"{plants} planted instances do not fit in {capacity} page slots")


def _build_actors(plan: Plan) -> dict[str, list[Actor]]:
    cfg, rng = plan.cfg, plan.rng
    words = list(_WORDS)
    rng.shuffle(words)
    actors: dict[str, list[Actor]] = {k: [] for k in (
        "site", "portal", "tracker", "cookieless", "noise", "es", "frame", "cdn", "fu")}
    used = set()

    def name(stem: str, tld: str) -> str:
        i = len(used)
        d = f"{words[i % len(words)]}-{stem}{i}.{tld}"
        used.add(d)
        return d

    for i in range(cfg.n_sites):
        if i < cfg.portals:
            d = name("portal", "com")
            a = Actor(d, "www." + d, "portal")
            actors["portal"].append(a)
        else:
            tld = "co.uk" if i % 7 == 3 else "com"
            d = name("site", tld)
            a = Actor(d, "www." + d, "site")
        actors["site"].append(a)

    specs = cfg.third_parties if isinstance(cfg.third_parties, list) else None
    n_tp = len(specs) if specs is not None else int(cfg.third_parties)
    need_special = 1 + (cfg.blocked_frames > 0) + (cfg.large_scope > 0) + (cfg.follow_ups > 0)
    n_rest = n_tp - cfg.portals - need_special
    if specs is None:
        n_noise = min(5, max(0, n_rest - 6))
        n_cookieless = max(2, (n_rest - n_noise) // 5)
        n_trackers = n_rest - n_noise - n_cookieless
        if n_trackers < 4:
            raise InfeasibleConfig(f"{n_tp} third parties leave {n_trackers} trackers; need at least 4")
        for _ in range(n_trackers):
            d = name("trk", "net")
            sub = rng.choice(("px", "t", "sync", "collect", ""))
            actors["tracker"].append(Actor(d, f"{sub}.{d}" if sub else d, "tracker"))
        for _ in range(n_cookieless):
            d = name("rcv", "net")
            actors["cookieless"].append(Actor(d, "collect." + d, "cookieless"))
        for _ in range(n_noise):
            d = name("cdn", "net")
            actors["noise"].append(Actor(d, "static." + d, "noise"))
    else:
        for spec in specs:
            beh = set(spec.behaviors)
            bad = beh - set(CATEGORIES)
            if bad or set(spec.techniques) - set(TECHNIQUES):
                raise InfeasibleConfig(f"{spec.domain}: unknown behavior or technique")
            passive = beh & {"CookieForwarding", "Analytics"}
            active = beh - passive
            if passive and active:
                raise InfeasibleConfig(f"{spec.domain}: cannot both hold and lack an identifier cookie")
            role = "cookieless" if passive else ("tracker" if active else "noise")
            host = {"tracker": "t.", "cookieless": "collect.", "noise": "static."}[role] + spec.domain
            actors[role].append(Actor(spec.domain, host, role))
        if len(actors["tracker"]) < 4:
            raise InfeasibleConfig("at least four tracker-role third parties are required")
    if not actors["cookieless"] and (cfg.planted_rates.get("CookieForwarding", 0)
                                     or cfg.planted_rates.get("Analytics", 0)):
        raise InfeasibleConfig("forwarding or analytics plants need a cookieless receiver")

    es = Actor(cfg.es_host, "cm." + cfg.es_host, "es")
    actors["es"].append(es)
    if cfg.blocked_frames > 0:
        d = name("frames", "net")
        actors["frame"].append(Actor(d, "frames." + d, "frame"))
    if cfg.large_scope > 0:
        d = name("cdnfunc", "net")
        actors["cdn"].append(Actor(d, "static." + d, "cdn", cookie_host=d))
    if cfg.follow_ups > 0:
        d = name("fu", "net")
        actors["fu"].append(Actor(d, "px." + d, "fu", cookie_host=d))

    # identifier cookie sets
    for a in actors["site"]:
        keys = {"plain": "uid", "compound": "sid", "ga": "_tid"} if a.role == "portal" else \
            {"plain": "_fpid", "compound": "_fps", "ga": "_ga"}
        a.cookie_host = a.domain
        a.cookie_keys = keys
    for a in actors["tracker"] + actors["es"] + actors["frame"] + actors["cdn"]:
        a.cookie_host = a.cookie_host or a.host
        a.cookie_keys = {"plain": "uid", "compound": "sid", "ga": "_tid"}
    for a in actors["site"] + actors["tracker"] + actors["es"] + actors["frame"] + actors["cdn"]:
        for fmt, key in a.cookie_keys.items():
            plan.register_cookie(a.cookie_host, key, a.domain, fmt)
    # portals act as trackers on other sites
    actors["tracker"] = actors["portal"] + actors["tracker"]
    return actors


def _carried(a: Actor) -> list[tuple[str, str]]:
    return [(a.cookie_host, k) for k in a.cookie_keys.values()]


_FMT_FOR = {"DS": "plain", "PPS": "plain", "B64": "plain", "PCS": "compound", "GA": "ga"}
_TRACKER_CTYPES = (("application/javascript", None), ("image/gif", "gif1x1"), ("image/gif", "zero"),
                   ("image/png", "png1x1"), ("text/html", None), ("application/json", None),
                   ("image/png", "big"), ("image/gif", "small"), ("text/css", None), ("font/woff2", None))


def _share_param(plan: Plan, owner: Actor, technique: str) -> tuple[str, Share]:
    fmt = _FMT_FOR[technique]
    ref = (owner.cookie_host, owner.cookie_keys[fmt])
    variant = ""
    if technique == "B64":
        variant = plan.rng.choice(("std", "std-nopad", "url", "url-nopad"))
    elif technique == "PPS":
        variant = plan.rng.choice(("|", "~", ":", "!"))
    name = plan.rng.choice(("uid", "partner_uid", "u", "cid", "ext_id", "puid", "rid"))
    return name, Share(ref, technique, variant)


class _Builder:
    """Turns plant descriptions into planned requests on pages."""

    def __init__(self, plan: Plan, actors: dict):
        self.plan = plan
        self.rng = plan.rng
        self.a = actors
        self.tech_cycle: dict[str, int] = Counter()

    def technique(self, cat: str, allowed) -> str:
        i = self.tech_cycle[cat]
        self.tech_cycle[cat] += 1
        return allowed[i % len(allowed)]

    def pick(self, pool: list[Actor], page: PPage, exclude=()) -> Actor:
        cands = [x for x in pool if x.domain != page.site and x.domain not in exclude]
        if not cands:
            raise InfeasibleConfig(f"no third party available on {page.site}")
        return self.rng.choice(cands)

    def tracker_req(self, page: PPage, t: Actor, referer: PTx | None, pred: PTx | None = None,
                    ctype=None, body=None, params=None, path=None) -> PTx:
        if ctype is None:
            ctype, body = self.rng.choice(_TRACKER_CTYPES)
        tx = self.plan.new_tx(page, t.host, t.domain, path or self.rng.choice(("/p", "/b", "/i", "/tag", "/px")),
                              ctype, params=list(params or []), body=body, referer=referer, pred=pred,
                              cookies=_carried(t) if t.cookie_keys else [])
        if pred is not None:
            pred.succ = tx
            pred.status = 302
        return tx

    def redirect_step(self, page: PPage, s: Actor, referer: PTx, params=None, carry=True) -> PTx:
        tx = self.plan.new_tx(page, s.host, s.domain, self.rng.choice(("/sync", "/cm", "/redir", "/match")),
                              "text/plain", params=list(params or []), status=302, referer=referer,
                              cookies=_carried(s) if carry and s.cookie_keys else [])
        return tx

    # category templates

    def basic(self, page, t=None):
        t = t or self.pick(self.a["tracker"] + self.a["cdn"], page)
        if t.role == "cdn":
            return self.tracker_req(page, t, page.main, ctype=self.rng.choice(("font/woff2", "text/css")))
        return self.tracker_req(page, t, page.main)

    def basic_by_tracker(self, page):
        t1 = self.pick(self.a["tracker"], page)
        t2 = self.pick(self.a["tracker"], page, exclude={t1.domain})
        if self.rng.random() < 0.5:
            step = self.redirect_step(page, t1, page.main)
            return self.tracker_req(page, t2, page.main, pred=step, ctype="image/gif", body="gif1x1")
        frame = self.plan.new_tx(page, t1.host, t1.domain, f"/frame/{self.plan.serial + 1}", "text/html",
                                 referer=page.main, cookies=_carried(t1))
        return self.tracker_req(page, t2, frame)

    def sync(self, page, cat: str):
        techs = TECHNIQUES if (self.a["es"] and self.a["tracker"]) else VALUE_TECHNIQUES
        tech = self.technique(cat, techs)
        receivers = self.a["tracker"] if cat == "ThirdToThirdSync" else self.a["cookieless"]
        if tech == "ES":
            e = self.a["es"][0]
            r = self.pick(receivers, page, exclude={e.domain})
            step = self.redirect_step(page, e, page.main, params=[(self.plan.es_rule[1], self.rng.choice(_WORDS))])
            step.es_step = True
            return self.tracker_req(page, r, page.main, pred=step, ctype="image/gif", body="gif1x1"), tech
        s = self.pick(self.a["tracker"], page)
        r = self.pick(receivers, page, exclude={s.domain})
        name, share = _share_param(self.plan, s, tech)
        step = self.redirect_step(page, s, page.main)
        return self.tracker_req(page, r, page.main, pred=step, ctype="image/gif", body="gif1x1",
                                params=[(name, share)]), tech

    def first_party_share(self, page, cat: str):
        tech = self.technique(cat, VALUE_TECHNIQUES)
        site = self._site(page)
        receivers = self.a["tracker"] if cat == "FirstToThirdSync" else self.a["cookieless"]
        r = self.pick(receivers, page)
        name, share = _share_param(self.plan, site, tech)
        if cat == "FirstToThirdSync" and self.a["cookieless"] and self.rng.random() < 0.4:
            i = self.pick(self.a["cookieless"], page, exclude={r.domain})
            step = self.redirect_step(page, i, page.main, params=[(name, share)], carry=False)
            return self.tracker_req(page, r, page.main, pred=step, ctype="image/gif", body="gif1x1",
                                    params=[(name, share)]), tech
        ctype, body = self.rng.choice((("image/gif", "gif1x1"), ("image/gif", "zero"), ("text/plain", None)))
        return self.tracker_req(page, r, page.main, ctype=ctype, body=body, params=[(name, share)]), tech

    def _site(self, page) -> Actor:
        for s in self.a["site"]:
            if s.domain == page.site:
                return s
        raise KeyError(page.site)

    def blocked_frame(self, page):
        f = self.a["frame"][0]
        frame = self.plan.new_tx(page, f.host, f.domain, f"/adframe/{self.plan.serial + 1}", "text/html",
                                 referer=page.main, cookies=_carried(f))
        for _ in range(self.rng.randint(1, 3)):
            t = self.pick(self.a["tracker"], page)
            if self.rng.random() < 0.3:
                t2 = self.pick(self.a["tracker"], page, exclude={t.domain})
                step = self.redirect_step(page, t, frame)
                self.tracker_req(page, t2, frame, pred=step, ctype="image/gif", body="gif1x1")
            else:
                self.tracker_req(page, t, frame)
        return frame

    def follow_up_family(self, early: PPage, late: PPage, k: int):
        fu = self.a["fu"][0]
        ref = self.plan.register_cookie(fu.cookie_host, f"fid{k}", fu.domain, "plain")
        setter = self.plan.new_tx(early, "ads." + fu.domain, fu.domain, "/serve", "application/javascript",
                                  referer=early.main, cookies=[ref])
        user = self.plan.new_tx(late, fu.host, fu.domain, "/px", "image/gif", body="gif1x1",
                                referer=late.main, cookies=[ref])
        return setter, user

    def noise(self, page):
        r = self.rng.random()
        if r < 0.35 or not self.a["noise"]:
            ctype, body = self.rng.choice((("application/javascript", None), ("text/css", None),
                                           ("image/png", "big"), ("image/gif", "small"), ("image/jpeg", "bigjpeg")))
            return self.plan.new_tx(page, page.host, page.site, self.rng.choice(("/static/app", "/img/hero", "/css/main")),
                                    ctype, body=body, referer=page.main)
        n = self.rng.choice(self.a["noise"])
        ctype, body = self.rng.choice((("font/woff2", None), ("application/javascript", None), ("text/css", None),
                                       ("image/png", "big"), ("image/gif", "small"), ("application/json", None)))
        return self.plan.new_tx(page, n.host, n.domain, self.rng.choice(("/lib", "/fonts/a", "/v2/assets")),
                                ctype, body=body, referer=page.main, params=[("v", str(self.rng.randint(1, 99)))])


def _plant(plan: Plan, actors: dict) -> None:
    cfg, rng = plan.cfg, plan.rng
    b = _Builder(plan, actors)
    sites = actors["site"]
    for si, site in enumerate(sites):
        for k in range(cfg.pages_per_site):
            page = PPage(len(plan.pages), site.domain, site.host, f"/page{k}")
            plan.pages.append(page)
            plan.new_tx(page, site.host, site.domain, page.path, "text/html",
                        cookies=_carried(site), main=True)
    # portals are visited first, so their cookies start in a first-party context
    work = []
    for cat in CATEGORIES:
        work += [cat] * int(cfg.planted_rates.get(cat, 0))
    work += ["frame"] * cfg.blocked_frames + ["cdn"] * cfg.large_scope
    rng.shuffle(work)
    n_pages = len(plan.pages)
    load = Counter()
    eligible = [p for p in plan.pages if p.index >= cfg.portals * cfg.pages_per_site] or plan.pages
    for item in work:
        page = min(rng.sample(eligible, min(3, len(eligible))), key=lambda p: (load[p.index], p.index))
        load[page.index] += 1
        tx = None
        if item == "BasicTracking":
            tx = b.basic(page)
        elif item == "BasicTrackingByTracker":
            tx = b.basic_by_tracker(page)
        elif item in ("ThirdToThirdSync", "CookieForwarding"):
            tx, _ = b.sync(page, item)
        elif item in ("FirstToThirdSync", "Analytics"):
            tx, _ = b.first_party_share(page, item)
        elif item == "frame":
            b.blocked_frame(page)
        elif item == "cdn":
            b.basic(page, actors["cdn"][0])
        if tx is not None:
            plan.planted_tx[tx.serial] = item
        plan.planted[item] += 1
    # follow-up families: a blocked setter early, an allowed user later
    if cfg.follow_ups:
        half = max(1, n_pages // 2)
        for k in range(cfg.follow_ups):
            early = plan.pages[rng.randrange(0, half)]
            late = plan.pages[rng.randrange(half, n_pages)] if n_pages > 1 else early
            if late is early:
                raise InfeasibleConfig("follow-up families need at least two pages")
            b.follow_up_family(early, late, k)
        plan.planted["follow_up"] = cfg.follow_ups
    # noise
    for _ in range(int(cfg.noise.get("requests", 0))):
        b.noise(rng.choice(plan.pages))
    _plant_cookie_noise(plan, actors)
    if cfg.invisible_rate is not None:
        _balance_pixels(plan, actors, cfg.invisible_rate)
    _order_pages(plan)


def _plant_cookie_noise(plan: Plan, actors: dict) -> None:
    cfg, rng = plan.cfg, plan.rng
    hosts = actors["noise"] or actors["cookieless"]
    if not hosts:
        return
    for kind, n in (("safe", cfg.noise.get("safe_cookies", 0)), ("unknown", cfg.noise.get("unknown_cookies", 0)),
                    ("idaskey", cfg.noise.get("id_as_key", 0))):
        for i in range(int(n)):
            a = hosts[i % len(hosts)]
            for page in rng.sample(plan.pages, min(len(plan.pages), 2)):
                tx = plan.new_tx(page, a.host, a.domain, "/n", "application/javascript", referer=page.main)
                tx.extras.append((kind, a.host, f"{kind}{i}"))


def _balance_pixels(plan: Plan, actors: dict, rate: float) -> None:
    rng = plan.rng
    imgs = [t for p in plan.pages for t in p.txs if t.ctype.startswith("image/")]
    inv = sum(t.body in INVISIBLE_BODIES for t in imgs)
    n = len(imgs)
    if n and abs(inv / n - rate) < 0.002:
        return
    if n == 0 or inv / n < rate:
        k = max(0, round((rate * n - inv) / (1 - rate)))
        pool = actors["noise"] or actors["cookieless"]
        for _ in range(k):
            page = rng.choice(plan.pages)
            if pool:
                a = rng.choice(pool)
                plan.new_tx(page, a.host, a.domain, "/pixel", "image/gif", body=rng.choice(INVISIBLE_BODIES),
                            referer=page.main)
            else:
                plan.new_tx(page, page.host, page.site, "/pixel", "image/gif", body="gif1x1", referer=page.main)
    else:
        k = max(0, round(inv / rate - n))
        for _ in range(k):
            page = rng.choice(plan.pages)
            plan.new_tx(page, page.host, page.site, "/img/photo", "image/png",
                        body=rng.choice(("big", "small")), referer=page.main)


def _order_pages(plan: Plan) -> None:
    """Keep creation order but make every redirect successor follow its predecessor."""
    for p in plan.pages:
        out, placed = [], set()
        for t in p.txs:
            if t.pred is not None and t.pred.serial not in placed:
                continue  # emitted right after its predecessor
            chain = [t]
            while chain[-1].succ is not None:
                chain.append(chain[-1].succ)
            for c in chain:
                if c.serial not in placed:
                    placed.add(c.serial)
                    out.append(c)
        for t in p.txs:
            if t.serial not in placed:
                placed.add(t.serial)
                out.append(t)
        p.txs = out


# fixture


def _default_fixture(plan: Plan, actors: dict) -> list[str]:
    cfg = plan.cfg
    lines = ["! synthetic filter fixture", "##.ad-banner", "example.org#@#.sponsored"]
    for fu in actors["fu"]:
        lines.append(f"||ads.{fu.domain}^")
    if cfg.fixture_profile == "follow_up_only":
        return lines
    if cfg.fixture_profile == "none":
        return ["! empty fixture"]
    trackers = [t for t in actors["tracker"] if t.role == "tracker"]
    blocked = trackers[: max(1, len(trackers) // 6)]
    for t in blocked:
        lines.append(f"||{t.domain}^$third-party")
    if blocked:
        lines.append(f"@@||{blocked[0].host}/tag$script")
    if len(trackers) > len(blocked) + 1:
        t = trackers[len(blocked)]
        sites = [s.domain for s in actors["site"][cfg.portals::5]][:3]
        if sites:
            lines.append(f"||{t.domain}^$domain={'|'.join(sites)}")
        lines.append(f"||{trackers[len(blocked) + 1].domain}^$popup")
    for f in actors["frame"]:
        lines.append(f"||{f.domain}^$subdocument")
    if actors["noise"]:
        lines.append(f"||{actors['noise'][0].domain}^$third-party,script")
    lines.append("/img/hero$image,~third-party")
    return lines


# rendering


def _cookie_value(rng: random.Random, fmt: str, taken: set) -> str:
    while True:
        if fmt == "plain":
            v = _rand(rng, 16)
        elif fmt == "compound":
            v = f"s1~{_rand(rng, 16)}~{rng.randint(100000, 999999)}"
        else:
            v = f"GA1.2.{rng.randint(100000000, 999999999)}.{rng.randint(1000000000, 1999999999)}"
        if v not in taken:
            taken.add(v)
            return v


def _encode(value: str, share: Share) -> str:
    t = share.technique
    if t == "DS":
        return value
    if t == "PPS":
        d = share.variant
        return f"v1{d}{value}{d}x9"
    if t == "PCS":
        return value.split("~")[1]
    if t == "GA":
        return ".".join(value.split(".")[-2:])
    if t == "B64":
        raw = value.encode()
        enc = base64.urlsafe_b64encode(raw) if share.variant.startswith("url") else base64.b64encode(raw)
        enc = enc.decode()
        return enc.rstrip("=") if share.variant.endswith("nopad") else enc
    raise ValueError(t)


class _Renderer:
    def __init__(self, plan: Plan, label: str, values: dict, extra_values: dict):
        self.plan = plan
        self.label = label
        self.values = values
        self.extra_values = extra_values

    def tid(self, t: PTx) -> str:
        return f"{self.label.lower()}{t.serial:06d}"

    def url(self, t: PTx) -> str:
        if t.main:
            return f"https://{t.host}{t.path}"
        params = []
        for name, v in t.params:
            params.append((name, _encode(self.values[v.cookie], v) if isinstance(v, Share) else v))
        params.append(("cb", f"{t.serial:07d}"))
        return f"https://{t.host}{t.path}?{urlencode(params)}"

    def render(self) -> CrawlDataset:
        plan = self.plan
        seen: set = set()
        ts = 1_600_000_000_000
        pages = []
        for p in plan.pages:
            ts += 5000
            pv = PageVisit(f"{self.label.lower()}-p{p.index:04d}", f"https://{p.host}{p.path}", p.site)
            for t in p.txs:
                ts += 1 + (t.serial * 7919) % 40
                sent, set_ = [], []
                ctx = SetContext.FIRST_PARTY if t.domain == p.site else SetContext.THIRD_PARTY
                for ref in t.cookies:
                    c = CookieInstance(ref[0], ref[1], self.values[ref], None, ctx, CookieOrigin.HTTP_HEADER)
                    if ref in seen:
                        sent.append(c)
                    else:
                        seen.add(ref)
                        set_.append(CookieInstance(ref[0], ref[1], c.value, ts // 1000 + 31_536_000, ctx,
                                                   CookieOrigin.HTTP_HEADER))
                for kind, host, key in t.extras:
                    ev = self.extra_values.get((kind, host, key))
                    if ev is None:
                        continue
                    k, v = ev
                    ref = (host, k)
                    c = CookieInstance(host, k, v, None, ctx, CookieOrigin.HTTP_HEADER)
                    if ref in seen:
                        sent.append(c)
                    else:
                        seen.add(ref)
                        set_.append(CookieInstance(host, k, v, ts // 1000 + 86_400, ctx, CookieOrigin.HTTP_HEADER))
                req_h = [("Referer", self.url(t.referer))] if t.referer is not None else []
                resp_h = [("Content-Type", t.ctype)]
                if t.succ is not None:
                    resp_h.append(("Location", self.url(t.succ)))
                body = _BODIES[t.body]() if t.body else None
                if body is not None:
                    resp_h.append(("Content-Length", str(len(body))))
                pv.transactions.append(HttpTransaction(
                    self.tid(t), pv.page_visit_id, self.url(t), "GET", req_h, t.status, resp_h,
                    sent, set_, body, ts))
            pages.append(pv)
        return CrawlDataset(self.label, pages, [])


def _values_for(plan: Plan, rng: random.Random, taken: set) -> dict:
    return {ref: _cookie_value(rng, plan.cookie_format[ref], taken) for ref in sorted(plan.cookie_owner)}


def _extra_values(plan: Plan, rng: random.Random) -> tuple[dict, dict]:
    a, b = {}, {}
    extras = sorted({e for p in plan.pages for t in p.txs for e in t.extras})
    for kind, host, key in extras:
        if kind == "safe":
            v = "consent-" + _rand(rng, 6)
            a[(kind, host, key)] = b[(kind, host, key)] = (key, v)
        elif kind == "unknown":
            target = a if rng.random() < 0.5 else b
            target[(kind, host, key)] = (key, _rand(rng, 12))
        else:
            v = _rand(rng, 14)
            a[(kind, host, key)] = (f"k_{_rand(rng, 8)}", v)
            b[(kind, host, key)] = (f"k_{_rand(rng, 8)}", v)
    return a, b


# ground truth from plan facts


def _rtype(t: PTx) -> str:
    if t.ctype.startswith("image/"):
        return "image"
    if "javascript" in t.ctype:
        return "script"
    if t.ctype == "text/css":
        return "stylesheet"
    if t.ctype == "text/html" and t.referer is not None and not t.main:
        return "subdocument"
    return "other"


def _fixture_hit(r: FixtureRule, t: PTx, url: str) -> bool:
    site = t.page.site
    if r.host is not None:
        if not (t.host == r.host or t.host.endswith("." + r.host)):
            return False
        if r.path is not None and not t.path.startswith(r.path):
            return False
    elif r.literal not in url.lower():
        return False
    if r.third_party is not None and (t.domain != site) != r.third_party:
        return False
    if r.domains and not any(site == d or site.endswith("." + d) for d in r.domains):
        return False
    if any(site == d or site.endswith("." + d) for d in r.not_domains):
        return False
    rt = _rtype(t)
    if r.types is not None and rt not in r.types:
        return False
    if rt in r.not_types:
        return False
    return True


def expected_verdicts(plan: Plan, rules: list[FixtureRule], url_of) -> dict[int, str]:
    out: dict[int, str] = {}
    taint: dict[int, bool] = {}
    for p in plan.pages:
        for t in p.txs:
            url = url_of(t)
            direct = any(_fixture_hit(r, t, url) for r in rules if not r.exception) and \
                not any(_fixture_hit(r, t, url) for r in rules if r.exception)
            par = t.referer
            tnt = False
            if par is not None:
                tnt = taint[par.serial] or (out[par.serial] != "Allowed" and _rtype(par) == "subdocument")
            taint[t.serial] = tnt
            pred = out.get(t.pred.serial) if t.pred is not None else None
            if direct:
                out[t.serial] = "DirectMatch"
            elif pred in ("DirectMatch", "RedirectDescendant"):
                out[t.serial] = "RedirectDescendant"
            elif tnt or pred == "BlockedFrameChild":
                out[t.serial] = "BlockedFrameChild"
            else:
                out[t.serial] = "Allowed"
    return out


def expected_follow_ups(plan: Plan, verdicts: dict[int, str]) -> set[int]:
    first: dict = {}
    out = set()
    for p in plan.pages:
        for t in p.txs:
            refs = list(t.cookies)
            for ref in refs:
                if ref not in first:
                    first[ref] = t
                    continue
                if verdicts[t.serial] == "Allowed" and verdicts[first[ref].serial] != "Allowed":
                    out.add(t.serial)
    return out


def expected_labels(plan: Plan) -> tuple[dict[int, set], dict[int, set]]:
    """Re-derive every behavior label from plan facts."""
    owner = plan.cookie_owner

    def third(t):
        return t.domain != t.page.site

    def own(t):
        return any(owner.get(ref) == t.domain for ref in t.cookies)

    basic_set = {t.domain for p in plan.pages for t in p.txs if third(t) and own(t)}
    labels: dict[int, set] = {}
    techs: dict[int, set] = {}
    for p in plan.pages:
        for t in p.txs:
            inbound = []  # (owner domain, technique)
            for _, v in t.params:
                if isinstance(v, Share) and owner[v.cookie] != t.domain:
                    inbound.append((owner[v.cookie], v.technique))
            if t.pred is not None and t.pred.es_step and t.pred.domain != t.domain and own(t.pred):
                inbound.append((t.pred.domain, "ES"))
            if inbound:
                techs[t.serial] = {x[1] for x in inbound}
            if not third(t):
                continue
            cats = set()
            mine = own(t)
            if any(o != p.site for o, _ in inbound):
                cats.add("ThirdToThirdSync" if mine else "CookieForwarding")
            if any(o == p.site for o, _ in inbound):
                cats.add("FirstToThirdSync" if mine else "Analytics")
            if mine and not cats & {"ThirdToThirdSync", "CookieForwarding", "FirstToThirdSync"}:
                init = t.pred if t.pred is not None else t.referer
                d = init.domain if init is not None else None
                if d is not None and d != p.site and d != t.domain and d in basic_set:
                    cats.add("BasicTrackingByTracker")
                else:
                    cats.add("BasicTracking")
            if cats:
                labels[t.serial] = cats
    return labels, techs


@dataclass
class GroundTruth:
    labels: dict[str, list[str]] = field(default_factory=dict)
    techniques: dict[str, list[str]] = field(default_factory=dict)
    verdicts: dict[str, str] = field(default_factory=dict)
    follow_up: dict[str, bool] = field(default_factory=dict)
    planted: dict[str, int] = field(default_factory=dict)
    # the one transaction each category plant produced; other labels are incidental
    planted_instances: dict[str, str] = field(default_factory=dict)
    list_name: str = FIXTURE_LIST_NAME
    invisible_rate: float = 0.0

    def category_counts(self) -> dict[str, int]:
        c = Counter(cat for cats in self.labels.values() for cat in cats)
        return {k: c[k] for k in CATEGORIES}

    def to_dict(self) -> dict:
        return {
            "list_name": self.list_name,
            "planted": dict(self.planted),
            "planted_instances": dict(sorted(self.planted_instances.items())),
            "invisible_rate": self.invisible_rate,
            "category_counts": self.category_counts(),
            "labels": {k: list(v) for k, v in sorted(self.labels.items())},
            "techniques": {k: list(v) for k, v in sorted(self.techniques.items())},
            "verdicts": dict(sorted(self.verdicts.items())),
            "follow_up": dict(sorted(self.follow_up.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(labels={k: list(v) for k, v in d["labels"].items()},
                   techniques={k: list(v) for k, v in d.get("techniques", {}).items()},
                   verdicts=dict(d["verdicts"]), follow_up=dict(d["follow_up"]),
                   planted=dict(d.get("planted", {})),
                   planted_instances=dict(d.get("planted_instances", {})), list_name=d.get("list_name", FIXTURE_LIST_NAME),
                   invisible_rate=d.get("invisible_rate", 0.0))


@dataclass
class Corpus:
    crawl_a: list[str]
    crawl_b: list[str]
    truth: GroundTruth
    filter_lines: list[str]
    run_config: dict

    def write(self, out_dir) -> dict[str, str]:
        from pathlib import Path
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "crawl_a": out / "crawl_a.jsonl",
            "crawl_b": out / "crawl_b.jsonl",
            "truth": out / "truth.json",
            "filters": out / "filters.txt",
            "run_config": out / "run_config.json",
        }
        files["crawl_a"].write_text("\n".join(self.crawl_a) + "\n", encoding="utf-8")
        files["crawl_b"].write_text("\n".join(self.crawl_b) + "\n", encoding="utf-8")
        files["truth"].write_text(json.dumps(self.truth.to_dict(), indent=1) + "\n", encoding="utf-8")
        files["filters"].write_text("\n".join(self.filter_lines) + "\n", encoding="utf-8")
        files["run_config"].write_text(json.dumps(self.run_config, indent=2) + "\n", encoding="utf-8")
        return {k: str(v) for k, v in files.items()}


def generate(cfg: ScenarioConfig) -> Corpus:
    """Build both crawl logs and the ground truth; identical configs give identical bytes."""
    _validate(cfg)
    plan = Plan(cfg)
    actors = _build_actors(plan)
    _plant(plan, actors)
    plan.fixture = list(cfg.filter_fixture) if cfg.filter_fixture is not None else _default_fixture(plan, actors)
    rules = [r for r in (parse_fixture_rule(x) for x in plan.fixture) if r is not None]

    vrng = random.Random(cfg.seed * 7_368_787 + 1)
    taken: set = set()
    values_a = _values_for(plan, vrng, taken)
    values_b = _values_for(plan, vrng, taken)
    extra_a, extra_b = _extra_values(plan, vrng)
    ra = _Renderer(plan, "A", values_a, extra_a)
    rb = _Renderer(plan, "B", values_b, extra_b)
    da, db = ra.render(), rb.render()

    labels, techs = expected_labels(plan)
    verdicts = expected_verdicts(plan, rules, ra.url)
    follow = expected_follow_ups(plan, verdicts)
    all_tx = [t for p in plan.pages for t in p.txs]
    imgs = [t for t in all_tx if t.ctype.startswith("image/")]
    truth = GroundTruth(
        labels={ra.tid(t): sorted(labels[t.serial]) for t in all_tx if t.serial in labels},
        techniques={ra.tid(t): sorted(techs[t.serial]) for t in all_tx if t.serial in techs},
        verdicts={ra.tid(t): verdicts[t.serial] for t in all_tx},
        follow_up={ra.tid(t): (t.serial in follow) for t in all_tx},
        planted={k: plan.planted[k] for k in sorted(plan.planted)},
        planted_instances={ra.tid(t): plan.planted_tx[t.serial] for t in all_tx if t.serial in plan.planted_tx},
        invisible_rate=(sum(t.body in INVISIBLE_BODIES for t in imgs) / len(imgs)) if imgs else 0.0,
    )
    run_config = {
        "sharing": {"min_token_length": 8, "scan_path": False,
                    "es_rules": [{"host": "doubleclick.net", "param": "google_nid"},
                                 {"host": cfg.es_host, "param": cfg.es_param}]},
    }
    return Corpus(serialize(da), serialize(db), truth, plan.fixture, run_config)


# scoring


@dataclass
class Score:
    precision: dict[str, float]
    recall: dict[str, float]
    verdict_accuracy: float
    follow_up_accuracy: float
    technique_accuracy: float
    counts: dict[str, dict[str, int]]

    def perfect(self) -> bool:
        return (all(v == 1.0 for v in self.precision.values()) and all(v == 1.0 for v in self.recall.values())
                and self.verdict_accuracy == 1.0 and self.follow_up_accuracy == 1.0)

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall,
                "verdict_accuracy": self.verdict_accuracy, "follow_up_accuracy": self.follow_up_accuracy,
                "technique_accuracy": self.technique_accuracy, "counts": self.counts}


def score(pred_labels: dict[str, set], pred_verdicts: dict[str, str], pred_follow: dict[str, bool],
          truth: GroundTruth, pred_techniques: dict[str, set] | None = None) -> Score:
    """Per-category precision and recall plus exact-match verdict and follow-up accuracy.

    A category with no truth and no prediction scores 1.0 on both metrics.
    """
    if set(pred_verdicts) != set(truth.verdicts) or set(pred_follow) != set(truth.follow_up):
        raise CorpusMismatch("predicted transaction ids do not match the ground truth corpus")
    stray = set(pred_labels) - set(truth.verdicts)
    if stray:
        raise CorpusMismatch(f"{len(stray)} labeled transaction(s) not in the ground truth corpus")
    precision, recall, counts = {}, {}, {}
    for cat in CATEGORIES:
        t = {tid for tid, cats in truth.labels.items() if cat in cats}
        p = {tid for tid, cats in pred_labels.items() if cat in cats}
        tp = len(t & p)
        precision[cat] = tp / len(p) if p else (1.0 if not t else 0.0)
        recall[cat] = tp / len(t) if t else (1.0 if not p else 0.0)
        counts[cat] = {"truth": len(t), "predicted": len(p), "true_positive": tp}
    n = len(truth.verdicts)
    vacc = sum(pred_verdicts[k] == v for k, v in truth.verdicts.items()) / n if n else 1.0
    facc = sum(bool(pred_follow[k]) == v for k, v in truth.follow_up.items()) / n if n else 1.0
    tacc = 1.0
    if pred_techniques is not None:
        keys = set(truth.techniques) | set(pred_techniques)
        if keys:
            tacc = sum(set(truth.techniques.get(k, ())) == set(pred_techniques.get(k, ())) for k in keys) / len(keys)
    return Score(precision, recall, vacc, facc, tacc, counts)


def acceptance_scenario(seed: int = 2024) -> ScenarioConfig:
    """200 sites x 3 pages, 50 third parties, 50 plants per category."""
    return ScenarioConfig(
        seed=seed, n_sites=200, pages_per_site=3, third_parties=50,
        planted_rates={c: 50 for c in CATEGORIES}, follow_ups=20, blocked_frames=20, large_scope=12,
        portals=2, invisible_rate=0.35,
        noise={"requests": 1500, "safe_cookies": 6, "unknown_cookies": 6, "id_as_key": 3},
    )
