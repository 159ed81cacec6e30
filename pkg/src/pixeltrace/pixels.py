"""Invisible-pixel detection from stored image bodies and prevalence statistics."""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

from .crawl_model import CrawlDataset, HttpTransaction, PageVisit
from .graph import build_chains
from .psl import IsSuffixOnly, PublicSuffixTable

__all__ = [
    "ImageKind", "ImageFormat", "ImageClass", "PixelConfig", "PixelPrevalenceReport",
    "TruncatedHeader", "NotAnImage", "sniff_format", "image_dimensions",
    "classify_image", "is_image_transaction", "pixel_prevalence", "invisible_subset",
]


class ImageKind(str, Enum):
    INVISIBLE_1X1 = "Invisible1x1"
    ZERO_CONTENT = "ZeroContent"
    SMALL_IMAGE = "SmallImage"
    BIG_IMAGE = "BigImage"
    UNKNOWN_FORMAT = "UnknownFormat"

    @property
    def invisible(self) -> bool:
        return self in (ImageKind.INVISIBLE_1X1, ImageKind.ZERO_CONTENT)


class ImageFormat(str, Enum):
    GIF = "GIF"
    PNG = "PNG"
    JPEG = "JPEG"
    WEBP = "WEBP-unsupported"
    OTHER = "Other"


class TruncatedHeader(ValueError):
    pass


class NotAnImage(ValueError):
    pass


@dataclass(frozen=True)
class PixelConfig:
    invisible_max: int = 1
    big_min: int = 50


@dataclass(frozen=True)
class ImageClass:
    kind: ImageKind
    width: int | None = None
    height: int | None = None
    format: ImageFormat = ImageFormat.OTHER


PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_SOF_MARKERS = (0xC0, 0xC2)
# markers without a length field
_STANDALONE = {0x01, *range(0xD0, 0xD8)}


def sniff_format(body: bytes) -> ImageFormat:
    if body[:6] in (b"GIF87a", b"GIF89a"):
        return ImageFormat.GIF
    if body[:8] == PNG_SIGNATURE:
        return ImageFormat.PNG
    if body[:2] == b"\xff\xd8":
        return ImageFormat.JPEG
    if body[:4] == b"RIFF" and body[8:12] == b"WEBP":
        return ImageFormat.WEBP
    return ImageFormat.OTHER


def _jpeg_dimensions(body: bytes) -> tuple[int, int]:
    pos = 2
    n = len(body)
    while pos < n:
        if body[pos] != 0xFF:
            raise TruncatedHeader("JPEG marker expected")
        while pos < n and body[pos] == 0xFF:
            pos += 1
        if pos >= n:
            break
        marker = body[pos]
        pos += 1
        if marker in _STANDALONE:
            continue
        if marker == 0xD9 or marker == 0xDA:
            # end of image or start of scan before any frame header
            break
        if pos + 2 > n:
            break
        (seglen,) = struct.unpack(">H", body[pos:pos + 2])
        if marker in _SOF_MARKERS:
            if pos + 7 > n:
                break
            height, width = struct.unpack(">HH", body[pos + 3:pos + 7])
            return width, height
        pos += seglen
    raise TruncatedHeader("no SOF0/SOF2 frame header in JPEG data")


def image_dimensions(body: bytes) -> tuple[int, int] | None:
    """Read (width, height) from a GIF, PNG or JPEG header without decoding pixels.

    Returns None for any other format. Raises TruncatedHeader when the body
    carries a known signature but ends before the dimension fields.
    """
    fmt = sniff_format(body)
    if fmt is ImageFormat.GIF:
        if len(body) < 10:
            raise TruncatedHeader("GIF logical screen descriptor incomplete")
        return struct.unpack("<HH", body[6:10])
    if fmt is ImageFormat.PNG:
        if len(body) < 24 or body[12:16] != b"IHDR":
            raise TruncatedHeader("PNG IHDR chunk incomplete")
        return struct.unpack(">II", body[16:24])
    if fmt is ImageFormat.JPEG:
        return _jpeg_dimensions(body)
    return None


def is_image_transaction(t: HttpTransaction) -> bool:
    return t.content_type.startswith("image/") or t.body is not None


def classify_image(t: HttpTransaction, cfg: PixelConfig = PixelConfig()) -> ImageClass:
    if not is_image_transaction(t):
        raise NotAnImage(t.transaction_id)
    body = t.body
    if body is None:
        if t.content_length == 0:
            return ImageClass(ImageKind.ZERO_CONTENT)
        return ImageClass(ImageKind.UNKNOWN_FORMAT)
    if len(body) == 0:
        return ImageClass(ImageKind.ZERO_CONTENT)
    fmt = sniff_format(body)
    try:
        dims = image_dimensions(body)
    except TruncatedHeader:
        dims = None
    if dims is None:
        return ImageClass(ImageKind.UNKNOWN_FORMAT, format=fmt)
    w, h = dims
    if w <= cfg.invisible_max and h <= cfg.invisible_max:
        kind = ImageKind.INVISIBLE_1X1
    elif w > cfg.big_min and h > cfg.big_min:
        kind = ImageKind.BIG_IMAGE
    else:
        kind = ImageKind.SMALL_IMAGE
    return ImageClass(kind, w, h, fmt)


@dataclass
class PixelPrevalenceReport:
    total_images: int = 0
    invisible_share: float = 0.0
    zero_content_share: float = 0.0
    one_by_one_share: float = 0.0
    domains_with_pixel_share: float = 0.0
    pages_with_pixel_share: float = 0.0
    top_serving_domains: list[tuple[str, int]] = field(default_factory=list)
    kind_counts: dict[str, int] = field(default_factory=dict)
    unsupported_formats: int = 0

    def to_dict(self) -> dict:
        return {
            "total_images": self.total_images,
            "invisible_share": self.invisible_share,
            "zero_content_share": self.zero_content_share,
            "one_by_one_share": self.one_by_one_share,
            "domains_with_pixel_share": self.domains_with_pixel_share,
            "pages_with_pixel_share": self.pages_with_pixel_share,
            "top_serving_domains": [list(x) for x in self.top_serving_domains],
            "kind_counts": dict(self.kind_counts),
            "unsupported_formats": self.unsupported_formats,
        }


def _share(n: int, d: int) -> float:
    return n / d if d else 0.0


def pixel_prevalence(d: CrawlDataset, psl: PublicSuffixTable | None = None,
                     cfg: PixelConfig = PixelConfig(), top_n: int = 20) -> PixelPrevalenceReport:
    """Share of image responses that are invisible pixels, and where they appear.

    The denominator counts every image-typed response; dimension buckets only
    apply where a body was stored.
    """
    psl = psl or PublicSuffixTable.bundled()
    kinds: Counter = Counter()
    serving: Counter = Counter()
    unsupported = 0
    pages_with = 0
    real_pages = 0
    sites: set[str] = set()
    sites_with: set[str] = set()
    for p in d.page_visits:
        has_pixel = False
        for t in p.transactions:
            if not is_image_transaction(t):
                continue
            cls = classify_image(t, cfg)
            kinds[cls.kind] += 1
            if cls.format is ImageFormat.WEBP:
                unsupported += 1
            if cls.kind.invisible:
                has_pixel = True
                try:
                    serving[psl.registrable_domain(t.host)] += 1
                except (IsSuffixOnly, ValueError):
                    serving[t.host] += 1
        if p.is_orphan:
            continue
        real_pages += 1
        pages_with += has_pixel
        if p.first_party_domain:
            sites.add(p.first_party_domain)
            if has_pixel:
                sites_with.add(p.first_party_domain)
    total = sum(kinds.values())
    zero = kinds[ImageKind.ZERO_CONTENT]
    one = kinds[ImageKind.INVISIBLE_1X1]
    top = sorted(serving.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    return PixelPrevalenceReport(
        total_images=total,
        invisible_share=_share(zero + one, total),
        zero_content_share=_share(zero, total),
        one_by_one_share=_share(one, total),
        domains_with_pixel_share=_share(len(sites_with), len(sites)),
        pages_with_pixel_share=_share(pages_with, real_pages),
        top_serving_domains=top,
        kind_counts={k.value: kinds[k] for k in ImageKind},
        unsupported_formats=unsupported,
    )


def invisible_subset(d: CrawlDataset, cfg: PixelConfig = PixelConfig()) -> CrawlDataset:
    """Sub-dataset of invisible-pixel transactions plus their redirect ancestors."""
    keep_pages = []
    kept_ids: set[str] = set()
    for p in d.page_visits:
        chains = build_chains(p)
        keep: set[str] = set()
        for t in p.transactions:
            if is_image_transaction(t) and classify_image(t, cfg).kind.invisible:
                keep.add(t.transaction_id)
                keep.update(chains.ancestors(t.transaction_id))
        if keep:
            kept_ids |= keep
            keep_pages.append(PageVisit(p.page_visit_id, p.first_party_url, p.first_party_domain,
                                        [t for t in p.transactions if t.transaction_id in keep]))
    journal = [e for e in d.cookie_journal
               if e.transaction_id is not None and e.transaction_id in kept_ids]
    return CrawlDataset(d.crawl_label, keep_pages, journal, d.report)
