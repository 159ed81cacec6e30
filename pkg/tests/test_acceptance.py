"""Acceptance criteria 1-9, one test each.

Every test records a ``PASS``/``FAIL`` line; the lines are printed as they
happen and again in the pytest terminal summary. Run this file directly
(``python3 tests/test_acceptance.py``) to see only these checks.
"""

import contextlib
import random
import time

from pixeltrace.behavior import SYNCING, BehaviorCategory
from pixeltrace.cli import main
from pixeltrace.crawl_model import CookieAction, parse_crawl_log
from pixeltrace.filterlist import match_request, parse_filter_list
from pixeltrace.pixels import ImageKind, classify_image, pixel_prevalence
from pixeltrace.report import compare
from pixeltrace.sharing import IdentifierJar, Technique, detect_url_sharing, ga_extract
from pixeltrace.synth import (CATEGORIES, GIF_1X1, ScenarioConfig, acceptance_scenario, generate, gif_header,
                              png_image, score)

import test_closure as closure
import test_sharing as sharing_fx
from e2e import predictions, run_corpus
from filter_vectors import flat
from helpers import PSL, tx
from oracles import (classify_with_pairing, naive_classes, naive_sharing_events, random_cookie_crawls,
                     random_sharing_fixture)
from synth_cache import acceptance_corpus

RESULTS: list[str] = []


@contextlib.contextmanager
def criterion(n, title):
    """Record PASS when the block finishes without an assertion error."""
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        line = f"FAIL criterion {n}: {title} ({type(exc).__name__}: {exc})"
        RESULTS.append(line)
        print(line)
        raise
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    line = f"PASS criterion {n}: {title}" + (f" ({extra})" if extra else "")
    RESULTS.append(line)
    print(line)


def test_criterion_1_end_to_end_oracle():
    with criterion(1, "simulate, analyze, score gives perfect metrics in under 60 s") as info:
        start = time.perf_counter()
        corpus = acceptance_corpus()
        an, _, verdicts = run_corpus(corpus)
        labels, vs, follow, techs = predictions(an, verdicts)
        s = score(labels, vs, follow, corpus.truth, techs)
        elapsed = time.perf_counter() - start
        cfg = acceptance_scenario()
        assert (cfg.n_sites, cfg.pages_per_site, cfg.third_parties) == (200, 3, 50)
        assert all(corpus.truth.planted.get(c, 0) >= 50 for c in CATEGORIES)
        seen = {t for ts in corpus.truth.techniques.values() for t in ts}
        assert seen == {t.value for t in Technique}, seen
        assert all(v == 1.0 for v in s.precision.values()), s.precision
        assert all(v == 1.0 for v in s.recall.values()), s.recall
        assert s.verdict_accuracy == 1.0 and s.follow_up_accuracy == 1.0
        assert elapsed < 60
        info["seconds"] = f"{elapsed:.1f}"
        info["transactions"] = len(vs)


def test_criterion_2_cookie_classification_oracle():
    with criterion(2, "cookie classes equal the brute-force partition on 100 random crawl pairs") as info:
        id_as_key = 0
        for seed in range(100):
            a, b = random_cookie_crawls(random.Random(seed), max_instances=1000)
            got = classify_with_pairing(a, b).classes
            want = naive_classes(a, b)
            assert got == want, f"seed {seed}"
            id_as_key += sum(v.value == "IdAsKey" for v in want.values())
        assert id_as_key > 0
        info["id_as_key_pairs"] = id_as_key


def test_criterion_3_sharing_oracle():
    with criterion(3, "sharing events equal the all-pairs oracle; ES fires only on full triples") as info:
        total = 0
        for seed in range(100):
            d, cls, identifiers = random_sharing_fixture(random.Random(seed), max_tx=500)
            jar = IdentifierJar(d, cls, PSL)
            got = {(e.transaction_id, e.parameter_name, e.cookie_ref, e.technique.value, e.sender_domain,
                    e.receiver_domain, e.identifier_value)
                   for t in d.transactions for e in detect_url_sharing(t, jar, PSL)}
            assert got == naive_sharing_events(d, identifiers), f"seed {seed}"
            total += len(got)
        es = [e for e in sharing_fx._es_events(sharing_fx._es_page()) if e.technique is Technique.ES]
        assert len(es) == 1
        for kw in ({"param": None}, {"param": "other"}, {"status": 200},
                   {"location": "https://www.doubleclick.net/again"}, {"host": "notdoubleclick.net"},
                   {"carry": False}):
            assert not [e for e in sharing_fx._es_events(sharing_fx._es_page(**kw))
                        if e.technique is Technique.ES], kw
        info["events"] = total


def test_criterion_4_ga_rule():
    with criterion(4, "GA values give Z.C and short values give None") as info:
        rng = random.Random(4)
        for _ in range(1000):
            x, y = rng.randint(0, 9), rng.randint(0, 9)
            z, c = str(rng.randint(0, 10**10)), str(rng.randint(10**8, 2 * 10**9))
            assert ga_extract(f"GA{x}.{y}.{z}.{c}") == f"{z}.{c}"
        short = 0
        for _ in range(1000):
            parts = [str(rng.randint(0, 10**6)) for _ in range(rng.randint(1, 3))]
            if rng.random() < 0.5:
                parts[0] = "GA" + parts[0]
            assert ga_extract(".".join(parts)) is None
            short += 1
        info["checked"] = 1000 + short


def test_criterion_5_filter_conformance():
    cosmetic = "example.org##.ad\n##div.sponsored\nt.net#@#.ad\n"
    with criterion(5, "filter engine agrees with every hand-built vector") as info:
        vectors = list(flat())
        assert len(vectors) >= 150
        for rule, url, rtype, page_domain, expected in vectors:
            for text in (rule, cosmetic + rule + "\n" + cosmetic):
                got = match_request(parse_filter_list(text), url, rtype, page_domain, psl=PSL).blocked
                assert got is expected, (rule, url, rtype, page_domain)
        info["vectors"] = len(vectors)


def test_criterion_6_blocking_closure():
    with criterion(6, "blocked closure reproduces the chain and frame truth tables") as info:
        rows = 0
        for direct, expected in closure.CHAIN_TABLE:
            got = closure._closure(closure._chain3(), set(direct))
            assert (got["a"], got["b"], got["c"]) == expected, direct
            rows += 1
        keys = ("f", "i", "g", "j", "r", "r2", "s", "k", "n")
        for direct, expected in closure.FRAME_TABLE:
            got = closure._closure(closure._frames(), set(direct))
            assert tuple(got[k] for k in keys) == expected, direct
            rows += 1
        info["rows"] = rows


def test_criterion_7_pixels():
    with criterion(7, "pixel fixtures classify correctly and the planted 35% rate is recovered") as info:
        def kind(body, ctype):
            return classify_image(tx("i", "https://px.t.net/i", 1, ctype=ctype, body=body)).kind
        assert kind(GIF_1X1, "image/gif") is ImageKind.INVISIBLE_1X1
        assert kind(png_image(1, 1), "image/png") is ImageKind.INVISIBLE_1X1
        assert kind(b"", "image/gif") is ImageKind.ZERO_CONTENT
        assert kind(gif_header(51, 51), "image/gif") is ImageKind.BIG_IMAGE
        assert kind(png_image(51, 51), "image/png") is ImageKind.BIG_IMAGE
        rate = pixel_prevalence(parse_crawl_log(acceptance_corpus().crawl_a, "A", PSL)).invisible_share
        assert abs(rate - 0.35) <= 0.01
        info["invisible_share"] = f"{rate:.4f}"


def _cli_run(tmp, corpus_dir, workers):
    work = tmp / "work"
    c = corpus_dir
    common = ["--work", str(work), "--crawl-a", str(c / "crawl_a.jsonl"), "--crawl-b", str(c / "crawl_b.jsonl"),
              "--run-config", str(c / "run_config.json"), "--workers", str(workers)]
    assert main(["analyze", *common]) == 0
    assert main(["compare", *common, "--easylist", str(c / "filters.txt")]) == 0
    assert main(["report", "--work", str(work), "--out", str(tmp / "tab"), "--format", "tabular"]) == 0
    assert main(["report", "--work", str(work), "--out", str(tmp / "rep.json")]) == 0
    files = {p.name: p.read_bytes() for p in (work / "analysis.json", work / "comparison.json",
                                              work / "verdicts.json", tmp / "rep.json")}
    files.update({p.name: p.read_bytes() for p in sorted((tmp / "tab").iterdir())})
    return files


def test_criterion_8_determinism(tmp_path):
    with criterion(8, "analyze, compare and report are byte-identical across runs and worker counts") as info:
        corpus_dir = tmp_path / "corpus"
        acceptance_corpus().write(corpus_dir)
        runs = [_cli_run(tmp_path / f"r{i}", corpus_dir, w) for i, w in enumerate((1, 4, 1))]
        assert runs[0] == runs[1] == runs[2]
        info["files"] = len(runs[0])


def test_criterion_9_invariants():
    with criterion(9, "no Basic with a syncing label, classes partition pairs, missed and blocked disjoint") as info:
        corpora = [acceptance_corpus()]
        for seed in range(5):
            corpora.append(generate(ScenarioConfig(seed=seed, n_sites=25, pages_per_site=2, third_parties=16,
                                                   planted_rates={c: 4 for c in CATEGORIES})))
        labels_checked = 0
        for corpus in corpora:
            an, lc, verdicts = run_corpus(corpus)
            cats = {}
            for lb in an.labels:
                cats.setdefault(lb.transaction_id, set()).add(lb.category)
            for cs in cats.values():
                assert not (BehaviorCategory.BASIC in cs and cs & SYNCING)
            labels_checked += len(cats)
            pairs = {e.cookie.pair for d in (an.paired.crawl_a, an.paired.crawl_b) for e in d.cookie_journal
                     if e.action is not CookieAction.DELETED}
            assert set(an.classes.classes) == pairs
            sec = compare(an.labels, {lc.name: verdicts}, an.dataset, PSL, an.classes).section(lc.name)
            blocked = {k for k, v in verdicts.items() if v.status.blocked}
            assert not {m.transaction_id for m in sec.missed} & blocked
        info["corpora"] = len(corpora)
        info["labeled_transactions"] = labels_checked


if __name__ == "__main__":
    import sys

    import pytest
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
