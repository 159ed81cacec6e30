import json
import subprocess
import sys

import pytest

from pixeltrace.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SCHEMA, main
from pixeltrace.report import SECTIONS
from pixeltrace.synth import CATEGORIES

SCENARIO = {"seed": 4, "n_sites": 12, "pages_per_site": 2, "third_parties": 16,
            "planted_rates": {c: 3 for c in CATEGORIES}, "follow_ups": 2, "blocked_frames": 2, "large_scope": 2,
            "noise": {"requests": 20}}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "scenario.json").write_text(json.dumps(SCENARIO))
    assert main(["simulate", "--config", str(root / "scenario.json"), "--out", str(root / "corpus")]) == EXIT_OK
    return root


def _work(corpus, tmp_path):
    c = corpus / "corpus"
    work = tmp_path / "work"
    assert main(["ingest", "--work", str(work), "--crawl-a", str(c / "crawl_a.jsonl"),
                 "--crawl-b", str(c / "crawl_b.jsonl")]) == EXIT_OK
    return c, work


def test_full_flow_scores_perfectly(corpus, tmp_path, capsys):
    c, work = _work(corpus, tmp_path)
    assert (work / "ingest.json").exists()
    rc = ["--run-config", str(c / "run_config.json")]
    assert main(["analyze", "--work", str(work), *rc]) == EXIT_OK
    assert main(["compare", "--work", str(work), "--easylist", str(c / "filters.txt"), *rc]) == EXIT_OK
    assert main(["report", "--work", str(work), "--out", str(tmp_path / "tab"), "--format", "tabular"]) == EXIT_OK
    assert sorted(p.stem for p in (tmp_path / "tab").iterdir()) == sorted(SECTIONS)
    capsys.readouterr()
    assert main(["score", "--work", str(work), "--truth", str(c / "truth.json")]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert all(v == 1.0 for v in result["precision"].values())
    assert all(v == 1.0 for v in result["recall"].values())
    assert result["verdict_accuracy"] == result["follow_up_accuracy"] == 1.0


def test_analyze_selected_sections(corpus, tmp_path):
    _, work = _work(corpus, tmp_path)
    out = tmp_path / "pixels.json"
    assert main(["analyze", "--work", str(work), "--pixels", "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert "pixels" in doc and "behaviors" not in doc and "sharing" not in doc


def test_compare_with_three_list_configurations(corpus, tmp_path):
    c, work = _work(corpus, tmp_path)
    dis = tmp_path / "disconnect.txt"
    dis.write_text("doubleclick.net\n")
    ep = tmp_path / "ep.txt"
    ep.write_text("! empty\n")
    assert main(["compare", "--work", str(work), "--easylist", str(c / "filters.txt"),
                 "--easyprivacy", str(ep), "--disconnect", str(dis)]) == EXIT_OK
    names = [s["name"] for s in json.loads((work / "comparison.json").read_text())["lists"]]
    assert names == ["disconnect", "easylist+easyprivacy", "union"]


def test_exit_codes(corpus, tmp_path):
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text(json.dumps({"n_sites": 0}))
    assert main(["simulate", "--config", str(bad_cfg), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    bad_log = tmp_path / "bad.jsonl"
    bad_log.write_text('{"record": "nonsense"}\n')
    c = corpus / "corpus"
    assert main(["ingest", "--work", str(tmp_path / "w"), "--strict", "--crawl-a", str(bad_log),
                 "--crawl-b", str(c / "crawl_b.jsonl")]) == EXIT_SCHEMA
    assert main(["ingest", "--work", str(tmp_path / "w"), "--crawl-a", str(tmp_path / "missing.jsonl"),
                 "--crawl-b", str(c / "crawl_b.jsonl")]) == EXIT_IO
    assert main(["compare", "--work", str(tmp_path / "w"), "--crawl-a", str(c / "crawl_a.jsonl"),
                 "--crawl-b", str(c / "crawl_b.jsonl")]) == EXIT_CONFIG
    junk = tmp_path / "junk.json"
    junk.write_text("[]")
    assert main(["report", "--comparison", str(junk), "--out", str(tmp_path / "r")]) == EXIT_CONFIG
    bad_run = tmp_path / "run.json"
    bad_run.write_text(json.dumps({"window_ms": "soon"}))
    assert main(["analyze", "--work", str(tmp_path / "w"), "--crawl-a", str(c / "crawl_a.jsonl"),
                 "--crawl-b", str(c / "crawl_b.jsonl"), "--run-config", str(bad_run)]) == EXIT_CONFIG


def test_unwritable_report_destination(corpus, tmp_path):
    _, work = _work(corpus, tmp_path)
    c = corpus / "corpus"
    assert main(["compare", "--work", str(work), "--easylist", str(c / "filters.txt")]) == EXIT_OK
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["report", "--work", str(work), "--out", str(blocker / "sub"), "--format", "tabular"]) == EXIT_IO


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "pixeltrace", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("ingest", "analyze", "compare", "report", "simulate", "score"):
        assert cmd in out.stdout
