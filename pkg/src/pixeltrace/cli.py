"""Command-line entry point: ``pixeltrace <command> ...``.

Commands share a work directory (``--work``, default ``pixeltrace-work``)
holding the normalized crawl logs and the intermediate reports, so a typical
run is ``ingest``, ``analyze``, ``compare``, then ``report``.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from .behavior import MappingFileInvalid, load_company_map
from .crawl_model import SchemaViolation, UnreadableInput, read_crawl_log, serialize
from .pipeline import (AnalysisConfig, ConfigError, analysis_document, analyze, compute_verdicts,
                       list_configs, load_run_config)
from .psl import PublicSuffixTable
from .report import UnwritablePath, compare, export, load
from .synth import CorpusMismatch, GroundTruth, InfeasibleConfig, generate, load_scenario, score

EXIT_OK = 0
EXIT_IO = 1
EXIT_SCHEMA = 2
EXIT_CONFIG = 3

log = logging.getLogger("pixeltrace")


def _write_json(path: Path, data) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    except OSError as exc:
        raise UnwritablePath(f"{path}: {exc}") from exc


def _psl(args, work: Path) -> PublicSuffixTable:
    path = getattr(args, "psl", None)
    if path:
        return PublicSuffixTable.from_file(path)
    if (work / "psl.dat").exists():
        return PublicSuffixTable.from_file(work / "psl.dat")
    return PublicSuffixTable.bundled()


def _load_crawls(args, work: Path, psl):
    a = getattr(args, "crawl_a", None) or work / "crawl_a.jsonl"
    b = getattr(args, "crawl_b", None) or work / "crawl_b.jsonl"
    strict = getattr(args, "strict", False)
    return read_crawl_log(a, "A", psl, strict), read_crawl_log(b, "B", psl, strict)


def _run_config(args) -> AnalysisConfig:
    cfg = load_run_config(args.run_config) if getattr(args, "run_config", None) else AnalysisConfig()
    if getattr(args, "workers", None):
        cfg = AnalysisConfig(cfg.sharing, cfg.cookies, cfg.pixels, cfg.window_ms, cfg.per_page_trackers,
                             args.workers)
    return cfg


def cmd_ingest(args) -> int:
    work = Path(args.work)
    psl = _psl(args, work)
    a, b = _load_crawls(args, work, psl)
    work.mkdir(parents=True, exist_ok=True)
    for name, d in (("crawl_a.jsonl", a), ("crawl_b.jsonl", b)):
        (work / name).write_text("\n".join(serialize(d)) + "\n", encoding="utf-8")
    if args.psl:
        shutil.copyfile(args.psl, work / "psl.dat")
    summary = {}
    for d in (a, b):
        summary[d.crawl_label.value] = {
            "page_visits": len(d.page_visits),
            "transactions": d.transaction_count(),
            "journal_entries": len(d.cookie_journal),
            "skipped_lines": d.report.skipped,
            "orphans": d.report.orphans,
            "errors": d.report.errors[:50],
        }
    _write_json(work / "ingest.json", summary)
    for label, s in summary.items():
        print(f"crawl {label}: {s['page_visits']} visits, {s['transactions']} transactions, "
              f"{s['skipped_lines']} skipped")
    return EXIT_OK


def cmd_analyze(args) -> int:
    work = Path(args.work)
    psl = _psl(args, work)
    cfg = _run_config(args)
    mapping = load_company_map(args.company_map) if args.company_map else None
    a, b = _load_crawls(args, work, psl)
    an = analyze(a, b, psl, cfg)
    chosen = {k: getattr(args, k) for k in ("pixels", "cookies", "sharing", "behaviors")}
    if not any(chosen.values()):
        chosen = dict.fromkeys(chosen, True)
    doc = analysis_document(an, psl, mapping, **chosen)
    out = Path(args.out) if args.out else work / "analysis.json"
    _write_json(out, doc)
    print(f"wrote {out}")
    return EXIT_OK


def _read(path) -> str | None:
    if not path:
        return None
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def cmd_compare(args) -> int:
    work = Path(args.work)
    psl = _psl(args, work)
    cfg = _run_config(args)
    try:
        configs = list_configs(_read(args.easylist), _read(args.easyprivacy), _read(args.disconnect))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"disconnect list: {exc}") from exc
    if not configs:
        raise ConfigError("give at least one of --easylist, --easyprivacy, --disconnect")
    a, b = _load_crawls(args, work, psl)
    an = analyze(a, b, psl, cfg)
    verdicts = {lc.name: compute_verdicts(an, lc, psl) for lc in configs}
    report = compare(an.labels, verdicts, a, psl, an.classes)
    export(report, work / "comparison.json")
    _write_json(work / "verdicts.json", {
        name: {tid: v.to_dict() for tid, v in sorted(vs.items())} for name, vs in verdicts.items()})
    if not (work / "analysis.json").exists():
        _write_json(work / "analysis.json", analysis_document(an, psl))
    for sec in report.lists:
        s = sec.summary
        print(f"{sec.name}: {s['tracking_requests']} tracking, {s['missed']} missed "
              f"({s['missed_share']:.1%}), {s['follow_up']} follow-up")
    return EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.comparison) if args.comparison else Path(args.work) / "comparison.json"
    try:
        report = load(src)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"{src}: not a comparison report ({exc})") from exc
    for f in export(report, args.out, args.format):
        print(f"wrote {f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_scenario(args.config)
    corpus = generate(cfg)
    files = corpus.write(args.out)
    _write_json(Path(args.out) / "scenario.json", cfg.to_dict())
    counts = corpus.truth.category_counts()
    print(f"wrote {files['crawl_a']} ({len(corpus.crawl_a)} records); labels: "
          + ", ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_score(args) -> int:
    work = Path(args.work)
    try:
        truth = GroundTruth.from_dict(json.loads(Path(args.truth).read_text(encoding="utf-8")))
        analysis = json.loads((work / "analysis.json").read_text(encoding="utf-8"))
        verdicts_all = json.loads((work / "verdicts.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    name = args.list or truth.list_name
    if name not in verdicts_all:
        raise ConfigError(f"no verdicts for list {name!r}; have {sorted(verdicts_all)}")
    labels: dict[str, set] = {}
    for lb in analysis.get("behaviors", {}).get("labels", []):
        labels.setdefault(lb["transaction_id"], set()).add(lb["category"])
    techs: dict[str, set] = {}
    for e in analysis.get("sharing", {}).get("events", []):
        techs.setdefault(e["transaction_id"], set()).add(e["technique"])
    vs = verdicts_all[name]
    result = score(labels, {k: v["status"] for k, v in vs.items()},
                   {k: v["follow_up"] for k, v in vs.items()}, truth,
                   techs if "sharing" in analysis else None)
    print(json.dumps(result.to_dict(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pixeltrace", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, crawls=True):
        p.add_argument("--work", default="pixeltrace-work", help="work directory (default: %(default)s)")
        if crawls:
            p.add_argument("--crawl-a", help="crawl A log (default: WORK/crawl_a.jsonl)")
            p.add_argument("--crawl-b", help="crawl B log (default: WORK/crawl_b.jsonl)")
            p.add_argument("--psl", help="public suffix list file (default: bundled snapshot)")
            p.add_argument("--strict", action="store_true", help="fail on the first malformed record")

    p = sub.add_parser("ingest", help="validate two crawl logs and store them in the work directory")
    common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("analyze", help="pixels, cookie classes, identifier sharing and behavior labels")
    common(p)
    for flag in ("pixels", "cookies", "sharing", "behaviors"):
        p.add_argument(f"--{flag}", action="store_true", help=f"include the {flag} section")
    p.add_argument("--run-config", help="JSON run configuration")
    p.add_argument("--company-map", help="domain to company mapping file")
    p.add_argument("--workers", type=int, help="worker threads")
    p.add_argument("--out", help="output file (default: WORK/analysis.json)")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("compare", help="compare behavior labels with filter-list verdicts")
    common(p)
    p.add_argument("--easylist")
    p.add_argument("--easyprivacy")
    p.add_argument("--disconnect", help="Disconnect services JSON or one domain per line")
    p.add_argument("--run-config")
    p.add_argument("--workers", type=int)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("report", help="export the comparison report")
    common(p, crawls=False)
    p.add_argument("--comparison", help="comparison.json (default: WORK/comparison.json)")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("structured", "tabular"), default="structured")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("simulate", help="generate a synthetic corpus with ground truth")
    p.add_argument("--config", required=True, help="scenario JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("score", help="score analysis and verdicts against synthetic ground truth")
    common(p, crawls=False)
    p.add_argument("--truth", required=True)
    p.add_argument("--list", help="filter configuration to score (default: the one in the truth file)")
    p.set_defaults(fn=cmd_score)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except SchemaViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ConfigError, InfeasibleConfig, MappingFileInvalid, CorpusMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UnreadableInput, UnwritablePath, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
