import csv
import os

import pytest

from pixeltrace.behavior import BehaviorCategory as C, BehaviorLabel
from pixeltrace.filterlist import BlockVerdict, VerdictStatus
from pixeltrace.report import SECTIONS, ComparisonReport, UnwritablePath, compare, dumps, export, load

from helpers import PSL, ck, dataset, page, tx

SITE = "https://www.site.com/"
ALLOWED = BlockVerdict(VerdictStatus.ALLOWED)
DIRECT = BlockVerdict(VerdictStatus.DIRECT, "||x^")
FOLLOW = BlockVerdict(VerdictStatus.ALLOWED, follow_up=True)


def _fixture(n_tracking=10, n_plain=3):
    txs = [tx("m", SITE, 0, set_=[ck("site.com", "_fp", "FPVALUE12345")])]
    for i in range(n_tracking):
        txs.append(tx(f"t{i}", f"https://px{i}.tracker{i % 3}.net/p", 10 + i, referer=SITE, ctype="image/gif",
                      body=b"GIF89a\x01\x00\x01\x00\x00\x00\x00;",
                      sent=[ck(f"tracker{i % 3}.net", "uid", f"UID{i % 3}ABCDEFGH")]))
    for i in range(n_plain):
        txs.append(tx(f"n{i}", f"https://cdn{i}.net/lib.js", 100 + i, referer=SITE,
                      ctype="application/javascript"))
    d = dataset([page("p", SITE, txs)])
    labels = [BehaviorLabel(C.BASIC, f"t{i}") for i in range(n_tracking)]
    return d, labels


def _verdicts(d, blocked=(), follow=(), extra_blocked=()):
    out = {t.transaction_id: ALLOWED for t in d.transactions}
    for tid in (*blocked, *extra_blocked):
        out[tid] = DIRECT
    for tid in follow:
        out[tid] = FOLLOW
    return out


def test_missed_excludes_blocked_and_follow_up():
    d, labels = _fixture()
    v = _verdicts(d, blocked=[f"t{i}" for i in range(7)], follow=["t7"], extra_blocked=["n0"])
    sec = compare(labels, {"el": v}, d, PSL).section("el")
    assert [m.transaction_id for m in sec.missed] == ["t8", "t9"]
    s = sec.summary
    assert (s["tracking_requests"], s["blocked_tracking_requests"], s["follow_up"], s["missed"]) == (10, 7, 1, 2)
    assert sec.venn == {"both": 7, "list_only": 1, "behavior_only": 3}
    assert s["missed_share"] == pytest.approx(0.2)


def test_all_blocked_means_nothing_missed():
    d, labels = _fixture()
    sec = compare(labels, {"el": _verdicts(d, blocked=[f"t{i}" for i in range(10)])}, d, PSL).section("el")
    assert sec.missed == [] and sec.venn["behavior_only"] == 0
    assert sum(sec.missed_by_category.values()) == 0


def test_shares_are_bounded_and_category_shares_sum_to_one():
    d, labels = _fixture()
    labels.append(BehaviorLabel(C.ANALYTICS, "t9"))
    sec = compare(labels, {"el": _verdicts(d, blocked=["t0"])}, d, PSL).section("el")
    assert sum(sec.missed_by_category.values()) == pytest.approx(1.0)
    assert sum(sec.missed_by_content_type.values()) == pytest.approx(1.0)
    assert sec.missed_by_category["Analytics"] == pytest.approx(1 / 9)
    for v in (*sec.explanations.values(), sec.summary["missed_share"], sec.summary["sites_with_missed_share"]):
        assert 0.0 <= v <= 1.0


def test_large_scope_and_first_party_context():
    d = dataset([page("p", SITE, [
        tx("m", SITE, 0, set_=[ck("site.com", "_fp", "FPVALUE12345")]),
        tx("cdn", "https://cdn.bigplatform.net/x.gif", 10, referer=SITE, ctype="image/gif",
           sent=[ck("bigplatform.net", "uid", "UIDABCDEFGH1")]),
        tx("own", "https://px.narrow.net/x.gif", 11, referer=SITE, ctype="image/gif",
           sent=[ck("px.narrow.net", "uid", "UIDZYXWVUT12")]),
    ])])
    labels = [BehaviorLabel(C.BASIC, "cdn"), BehaviorLabel(C.BASIC, "own")]
    sec = compare(labels, {"el": _verdicts(d)}, d, PSL).section("el")
    by = {m.transaction_id: m for m in sec.missed}
    assert by["cdn"].large_scope and not by["own"].large_scope
    assert sec.explanations["large_scope_share"] == pytest.approx(0.5)
    assert not by["cdn"].fp_context


def test_top_missed_services_ranked_by_sites():
    d, labels = _fixture()
    sec = compare(labels, {"el": _verdicts(d)}, d, PSL, top_n=3).section("el")
    assert len(sec.top_missed_services) == 3
    assert all(s.sites == 1 and s.requests == 1 for s in sec.top_missed_services)
    assert [s.host for s in sec.top_missed_services] == sorted(s.host for s in sec.top_missed_services)


def test_structured_round_trip(tmp_path):
    d, labels = _fixture()
    rep = compare(labels, {"a": _verdicts(d, blocked=["t1"]), "b": _verdicts(d)}, d, PSL)
    [path] = export(rep, tmp_path)
    assert load(path) == rep
    assert ComparisonReport.from_dict(rep.to_dict()) == rep
    assert dumps(rep) == path.read_text()


def test_tabular_export_has_one_file_per_section(tmp_path):
    d, labels = _fixture()
    rep = compare(labels, {"a": _verdicts(d, blocked=["t1"]), "b": _verdicts(d)}, d, PSL)
    files = export(rep, tmp_path / "tab", "tabular")
    assert [f.stem for f in files] == list(SECTIONS)
    with open(tmp_path / "tab" / "missed.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "list"
    assert len(rows) == 1 + 9 + 10
    assert {r[0] for r in rows[1:]} == {"a", "b"}


def test_empty_report_is_valid(tmp_path):
    rep = compare([], {}, dataset([]), PSL)
    assert rep.lists == []
    files = export(rep, tmp_path, "tabular")
    assert len(files) == len(SECTIONS)
    assert all(f.read_text().startswith("list,") for f in files)
    [j] = export(rep, tmp_path / "r.json")
    assert load(j) == rep


def test_unwritable_destination(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(UnwritablePath):
        export(ComparisonReport(), blocker / "sub", "tabular")
    if os.geteuid() != 0:
        ro = tmp_path / "ro"
        ro.mkdir()
        ro.chmod(0o500)
        with pytest.raises(UnwritablePath):
            export(ComparisonReport(), ro)


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(ValueError):
        export(ComparisonReport(), tmp_path, "xml")
