"""Registrable-domain (eTLD+1) resolution backed by a Public Suffix List file."""

from __future__ import annotations

import ipaddress
from functools import lru_cache
from importlib import resources
from pathlib import Path


class IsSuffixOnly(ValueError):
    """The hostname is itself a public suffix and has no registrable domain."""

    def __init__(self, host: str):
        super().__init__(f"{host!r} is a public suffix")
        self.host = host


def is_ip_literal(host: str) -> bool:
    try:
        ipaddress.ip_address(host.strip("[]"))
    except ValueError:
        return False
    return True


def normalize_host(host: str) -> str:
    host = host.strip().lower().rstrip(".")
    if host.startswith("."):
        host = host.lstrip(".")
    return host


class PublicSuffixTable:
    """Suffix rules (exact, wildcard, exception) with an optional naive fallback.

    In fallback mode the registrable domain is simply the last two labels.
    """

    def __init__(self, rules=(), fallback: bool = False):
        self.exact: set[str] = set()
        self.wildcard: set[str] = set()
        self.exception: set[str] = set()
        self.fallback = fallback
        for rule in rules:
            self.add_rule(rule)
        self._cache: dict[str, str] = {}

    def add_rule(self, rule: str) -> None:
        rule = rule.strip().lower()
        if not rule or rule.startswith("//"):
            return
        # only the first whitespace-delimited token is the rule
        rule = rule.split()[0]
        if rule.startswith("!"):
            self.exception.add(rule[1:])
        elif rule.startswith("*."):
            self.wildcard.add(rule[2:])
        else:
            self.exact.add(rule)

    @classmethod
    def from_text(cls, text: str) -> "PublicSuffixTable":
        return cls(text.splitlines())

    @classmethod
    def from_file(cls, path) -> "PublicSuffixTable":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def naive(cls) -> "PublicSuffixTable":
        return cls(fallback=True)

    @classmethod
    def bundled(cls) -> "PublicSuffixTable":
        return _bundled_table()

    def __len__(self) -> int:
        return len(self.exact) + len(self.wildcard) + len(self.exception)

    def public_suffix(self, host: str) -> str:
        labels = host.split(".")
        if self.fallback:
            return labels[-1]
        # walk from the longest candidate to the shortest
        for i in range(len(labels)):
            candidate = ".".join(labels[i:])
            if candidate in self.exception:
                return ".".join(labels[i + 1:])
            if candidate in self.exact:
                return candidate
            parent = ".".join(labels[i + 1:])
            if i + 1 < len(labels) and parent in self.wildcard:
                return candidate
        # implicit "*" rule
        return labels[-1]

    def registrable_domain(self, host: str) -> str:
        host = normalize_host(host)
        cached = self._cache.get(host)
        if cached is not None:
            return cached
        if not host:
            raise ValueError("empty hostname")
        if is_ip_literal(host):
            result = host
        else:
            suffix = self.public_suffix(host)
            if host == suffix:
                raise IsSuffixOnly(host)
            n = suffix.count(".") + 2
            result = ".".join(host.split(".")[-n:])
        self._cache[host] = result
        return result


@lru_cache(maxsize=1)
def _bundled_table() -> PublicSuffixTable:
    text = resources.files("pixeltrace").joinpath("data/public_suffix_list.dat").read_text(encoding="utf-8")
    return PublicSuffixTable.from_text(text)


def registrable_domain(host: str, psl: PublicSuffixTable | None = None) -> str:
    """Return the eTLD+1 of ``host``; IP literals are returned unchanged."""
    return (psl or _bundled_table()).registrable_domain(host)
