"""Redirect-chain reconstruction and initiator attribution per page visit."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from urllib.parse import urldefrag, urljoin, urlsplit

from .crawl_model import HttpTransaction, PageVisit
from .psl import IsSuffixOnly, PublicSuffixTable

DEFAULT_WINDOW_MS = 30_000


class InitiatorKind(str, Enum):
    FIRST_PARTY = "FirstParty"
    THIRD_PARTY = "ThirdParty"
    UNKNOWN = "Unknown"


class Via(str, Enum):
    REDIRECT = "Redirect"
    REFERER = "Referer"


@dataclass(frozen=True)
class RedirectChain:
    steps: tuple[str, ...]
    page_visit_id: str

    @property
    def terminal(self) -> str:
        return self.steps[-1]


@dataclass(frozen=True)
class Initiator:
    kind: InitiatorKind
    domain: str | None = None
    via: Via | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "domain": self.domain,
                "via": self.via.value if self.via else None}


def resolve_location(t: HttpTransaction) -> str | None:
    loc = t.location
    if not loc:
        return None
    return urldefrag(urljoin(t.url, loc.strip()))[0]


def _norm(url: str) -> str:
    return urldefrag(url)[0]


@dataclass
class ChainIndex:
    """Chains of one page visit plus lookups used by downstream modules."""

    chains: list[RedirectChain]
    predecessor: dict[str, str] = field(default_factory=dict)
    successor: dict[str, str] = field(default_factory=dict)
    ambiguities: int = 0

    def chain_of(self, transaction_id: str) -> RedirectChain | None:
        return self._chain_of.get(transaction_id)

    def ancestors(self, transaction_id: str) -> list[str]:
        out = []
        cur = self.predecessor.get(transaction_id)
        while cur is not None:
            out.append(cur)
            cur = self.predecessor.get(cur)
        return out

    def __post_init__(self):
        self._chain_of = {tid: c for c in self.chains for tid in c.steps}


def build_chains(p: PageVisit, window_ms: int = DEFAULT_WINDOW_MS) -> ChainIndex:
    """Link 3xx responses to the earliest later unclaimed request for their Location.

    Every transaction ends up in exactly one chain; requests with no redirect
    relationship form singleton chains. When more than one candidate could
    follow a redirect, the earliest wins and an ambiguity is counted.
    """
    txs = sorted(p.transactions, key=lambda t: t.timestamp)
    by_url: dict[str, list[int]] = {}
    for i, t in enumerate(txs):
        by_url.setdefault(_norm(t.url), []).append(i)
    claimed: set[int] = set()
    predecessor: dict[str, str] = {}
    successor: dict[str, str] = {}
    ambiguities = 0
    for i, t in enumerate(txs):
        if not t.is_redirect:
            continue
        target = resolve_location(t)
        candidates = [j for j in by_url.get(target, ())
                      if j > i and j not in claimed
                      and 0 <= txs[j].timestamp - t.timestamp <= window_ms]
        if not candidates:
            continue
        if len(candidates) > 1:
            ambiguities += 1
        j = candidates[0]
        claimed.add(j)
        predecessor[txs[j].transaction_id] = t.transaction_id
        successor[t.transaction_id] = txs[j].transaction_id
    chains = []
    for t in txs:
        if t.transaction_id in predecessor:
            continue
        steps = [t.transaction_id]
        while steps[-1] in successor:
            steps.append(successor[steps[-1]])
        chains.append(RedirectChain(tuple(steps), p.page_visit_id))
    return ChainIndex(chains, predecessor, successor, ambiguities)


def _domain_of_url(url: str, psl: PublicSuffixTable) -> str | None:
    try:
        host = urlsplit(url).hostname
        return psl.registrable_domain(host) if host else None
    except (IsSuffixOnly, ValueError):
        return None


def initiator_of(t: HttpTransaction, chains: ChainIndex, p: PageVisit,
                 psl: PublicSuffixTable, by_id: dict[str, HttpTransaction] | None = None) -> Initiator:
    """Who caused ``t``: its redirect predecessor, else its Referer, else unknown."""
    pred_id = chains.predecessor.get(t.transaction_id)
    if pred_id is not None:
        if by_id is None:
            by_id = {x.transaction_id: x for x in p.transactions}
        domain = _domain_of_url(by_id[pred_id].url, psl)
        via = Via.REDIRECT
    elif t.referer:
        domain = _domain_of_url(t.referer, psl)
        via = Via.REFERER
    else:
        return Initiator(InitiatorKind.UNKNOWN)
    if domain is None:
        return Initiator(InitiatorKind.UNKNOWN, None, via)
    if domain == p.first_party_domain:
        return Initiator(InitiatorKind.FIRST_PARTY, domain, via)
    return Initiator(InitiatorKind.THIRD_PARTY, domain, via)
