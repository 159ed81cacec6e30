"""Identifier-cookie classification from two crawls run on different machines.

A (host, key) pair is:

* ``Safe`` when some identical (host, key, value) instance appears in both crawls,
* ``IdAsKey`` when the same value appears under different keys of that host
  across the crawls (the identifier lives in the key),
* ``Unknown`` when the pair only shows up in one crawl,
* ``Identifier`` otherwise: present in both crawls with no value in common.

Cookie lifetime is never used as a filter.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum

from .crawl_model import PairedCrawls
from .psl import normalize_host

ID_AS_KEY_MIN_VALUE_LENGTH = 8


class CookieClass(str, Enum):
    SAFE = "Safe"
    UNKNOWN = "Unknown"
    ID_AS_KEY = "IdAsKey"
    IDENTIFIER = "Identifier"


@dataclass(frozen=True)
class CookieConfig:
    id_as_key_min_length: int = ID_AS_KEY_MIN_VALUE_LENGTH


@dataclass(frozen=True)
class IdAsKeyDetection:
    host: str
    key_a: str
    key_b: str
    shared_value: str


@dataclass
class CookieClassification:
    classes: dict[tuple[str, str], CookieClass]
    identifier_values: dict[tuple[str, str], tuple[frozenset, frozenset]] = field(default_factory=dict)
    id_as_key: list[IdAsKeyDetection] = field(default_factory=list)
    instance_counts: dict[str, int] = field(default_factory=dict)

    @property
    def counts(self) -> dict[str, int]:
        c = Counter(self.classes.values())
        return {k.value: c[k] for k in CookieClass}

    def lookup(self, host: str, key: str) -> CookieClass:
        return self.classes.get((normalize_host(host), key), CookieClass.UNKNOWN)

    def is_identifier(self, host: str, key: str) -> bool:
        return self.classes.get((host, key)) is CookieClass.IDENTIFIER

    def to_dict(self) -> dict:
        return {
            "counts": self.counts,
            "instance_counts": dict(self.instance_counts),
            "pairs": [{"host": h, "key": k, "class": c.value}
                      for (h, k), c in sorted(self.classes.items())],
            "id_as_key": [{"host": d.host, "key_a": d.key_a, "key_b": d.key_b,
                           "shared_value": d.shared_value} for d in self.id_as_key],
        }


def detect_id_as_key(p: PairedCrawls, cfg: CookieConfig = CookieConfig()) -> list[IdAsKeyDetection]:
    """Same host and value under different keys across the two crawls."""
    # host -> value -> keys, per crawl
    in_a: dict[str, dict[str, set]] = defaultdict(lambda: defaultdict(set))
    in_b: dict[str, dict[str, set]] = defaultdict(lambda: defaultdict(set))
    for (host, key), (va, vb) in p.pairing.items():
        for v in va:
            if len(v) >= cfg.id_as_key_min_length:
                in_a[host][v].add(key)
        for v in vb:
            if len(v) >= cfg.id_as_key_min_length:
                in_b[host][v].add(key)
    found = []
    for host in sorted(set(in_a) & set(in_b)):
        va, vb = in_a[host], in_b[host]
        for value in sorted(set(va) & set(vb)):
            for ka in sorted(va[value]):
                for kb in sorted(vb[value]):
                    if ka != kb:
                        found.append(IdAsKeyDetection(host, ka, kb, value))
    return found


def classify_cookies(p: PairedCrawls, cfg: CookieConfig = CookieConfig()) -> CookieClassification:
    detections = detect_id_as_key(p, cfg)
    id_as_key_pairs = {(d.host, d.key_a) for d in detections} | {(d.host, d.key_b) for d in detections}
    classes: dict[tuple[str, str], CookieClass] = {}
    id_values = {}
    for pair, (va, vb) in p.pairing.items():
        if va & vb:
            cls = CookieClass.SAFE
        elif pair in id_as_key_pairs:
            cls = CookieClass.ID_AS_KEY
        elif not va or not vb:
            cls = CookieClass.UNKNOWN
        else:
            cls = CookieClass.IDENTIFIER
            id_values[pair] = (va, vb)
        classes[pair] = cls
    inst = Counter()
    for h, k, _ in p.instances_a:
        inst[classes[(h, k)]] += 1
    for h, k, _ in p.instances_b:
        inst[classes[(h, k)]] += 1
    return CookieClassification(
        classes=classes,
        identifier_values=id_values,
        id_as_key=detections,
        instance_counts={k.value: inst[k] for k in CookieClass},
    )


def identifier_lookup(c: CookieClassification, host: str, key: str) -> CookieClass:
    return c.lookup(host, key)
