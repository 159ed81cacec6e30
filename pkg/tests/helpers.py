"""Small builders for hand-made crawl fixtures."""

from pixeltrace.crawl_model import CookieInstance, CrawlDataset, HttpTransaction, PageVisit, parse_crawl_log, serialize
from pixeltrace.psl import PublicSuffixTable

PSL = PublicSuffixTable.bundled()


def ck(host, key, value, expiry=None):
    return CookieInstance(host, key, value, expiry)


def tx(tid, url, ts, pv="p1", status=200, ctype="text/html", referer=None, location=None,
       sent=(), set_=(), body=None):
    req = [("Referer", referer)] if referer else []
    resp = [("Content-Type", ctype)]
    if location:
        resp.append(("Location", location))
    return HttpTransaction(tid, pv, url, "GET", req, status, resp, list(sent), list(set_), body, ts)


def page(pv, url, txs):
    for t in txs:
        t.page_visit_id = pv
    return PageVisit(pv, url, PSL.registrable_domain(url.split("/")[2]), list(txs))


def dataset(pages, label="A"):
    """Round-trip through the log format so derived journal entries exist."""
    lines = serialize(CrawlDataset(label, pages, []))
    return parse_crawl_log(lines, label, PSL)
