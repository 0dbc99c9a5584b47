"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 analysis failure.
"""

from __future__ import annotations

import argparse
import functools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .analyze import AnalysisOptions, analyze_app
from .ingest import IngestError, PolicySource, PolicyText
from .miner import ClusterConfig, attribute_spo, detect_sdks, detect_templates, fingerprint
from .policy import VerbLists, detect_locale, extract_claims
from .spo import BASES, FORMATS, AppFailure, UsageError, aggregate, emit_report
from .taxonomy import TaxonomyError, default_taxonomy_path, load_taxonomy

log = logging.getLogger("spoaudit")

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    taxonomy_path: str
    corpus_dir: str | None = None
    output_path: str | None = None
    format: str = "json"
    spo_basis: str = "valid-policy"
    theta1: float = 0.9
    theta2: float = 0.9
    theta_sdk: float = 0.95
    min_sdk_usage: int = 100
    parallelism: int = 1
    locale: str = "auto"
    fetch_remote_policies: bool = False
    dump_flows: bool = False

    def options(self) -> AnalysisOptions:
        return AnalysisOptions(locale=self.locale, fetch_remote_policies=self.fetch_remote_policies)

    def cluster(self) -> ClusterConfig:
        return ClusterConfig(self.theta1, self.theta2, self.theta_sdk, self.min_sdk_usage)


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1]")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _non_negative(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--taxonomy", help="taxonomy JSON (default: $SPO_TAXONOMY or the shipped file)")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--format", choices=FORMATS, default="json")
    common.add_argument("--locale", default="auto", help="policy locale: en, zh or auto")
    common.add_argument("--fetch-remote-policies", action="store_true",
                        help="download policies linked by http(s) URL")
    common.add_argument("-v", "--verbose", action="count", default=0)

    corpus_opts = argparse.ArgumentParser(add_help=False)
    corpus_opts.add_argument("corpus_dir")
    corpus_opts.add_argument("--parallelism", type=_positive, default=1)
    corpus_opts.add_argument("--spo-basis", choices=BASES, default="valid-policy")

    cluster_opts = argparse.ArgumentParser(add_help=False)
    cluster_opts.add_argument("--theta1", type=_unit_interval, default=0.9, help="route similarity threshold")
    cluster_opts.add_argument("--theta2", type=_unit_interval, default=0.9, help="content similarity threshold")
    cluster_opts.add_argument("--theta-sdk", type=_unit_interval, default=0.95)
    cluster_opts.add_argument("--min-sdk-usage", type=_non_negative, default=100)

    p = _Parser(prog="spoaudit", description="Detect privacy over-collection in mini-program packages.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", parents=[common], help="analyze one extracted package")
    a.add_argument("appdir")
    a.add_argument("--policy", help="policy text file to use instead of locating one")
    a.add_argument("--dump-flows", action="store_true", help="include per-flow evidence in JSON")
    a.add_argument("--dump-callgraph", metavar="PATH", help="write the call graph in DOT format")

    c = sub.add_parser("corpus", parents=[common, corpus_opts], help="analyze a directory of packages")
    c.add_argument("--dump-flows", action="store_true")

    sub.add_parser("mine", parents=[common, corpus_opts, cluster_opts], help="template and SDK detection")

    pol = sub.add_parser("policy", parents=[common], help="extract claims from one policy text")
    pol.add_argument("policy_file")
    return p


def _config(ns) -> RunConfig:
    tax_path = ns.taxonomy or str(default_taxonomy_path())
    return RunConfig(
        taxonomy_path=tax_path,
        corpus_dir=getattr(ns, "corpus_dir", None),
        output_path=ns.out,
        format=ns.format,
        spo_basis=getattr(ns, "spo_basis", "valid-policy"),
        theta1=getattr(ns, "theta1", 0.9),
        theta2=getattr(ns, "theta2", 0.9),
        theta_sdk=getattr(ns, "theta_sdk", 0.95),
        min_sdk_usage=getattr(ns, "min_sdk_usage", 100),
        parallelism=getattr(ns, "parallelism", 1),
        locale=ns.locale,
        fetch_remote_policies=ns.fetch_remote_policies,
        dump_flows=getattr(ns, "dump_flows", False),
    )


def _write(cfg: RunConfig, text: str) -> None:
    if cfg.output_path:
        Path(cfg.output_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


@functools.lru_cache(maxsize=4)
def _taxonomy(path: str):
    return load_taxonomy(path)


def _worker(job: tuple[str, RunConfig, bool]):
    appdir, cfg, want_fp = job
    appid = Path(appdir).name
    try:
        tax = _taxonomy(cfg.taxonomy_path)
        res = analyze_app(appdir, tax, cfg.options())
        fp = fingerprint(res.package) if want_fp else None
        if fp is not None:
            fp.raw = {}
        return "ok", res.report, fp
    except Exception as exc:  # one bad package must not sink the batch
        log.debug("analysis of %s failed", appdir, exc_info=True)
        return "fail", appid, f"{type(exc).__name__}: {exc}"


def run_corpus(cfg: RunConfig, want_fp: bool = False):
    root = Path(cfg.corpus_dir)
    if not root.is_dir():
        raise UsageError(f"{root}: not a directory")
    dirs = sorted(str(d) for d in root.iterdir() if d.is_dir() and not d.name.startswith("."))
    jobs = [(d, cfg, want_fp) for d in dirs]
    if cfg.parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = [_worker(j) for j in jobs]
    reports, fps, failures = [], [], []
    for status, a, b in results:
        if status == "ok":
            reports.append(a)
            if b is not None:
                fps.append(b)
        else:
            failures.append(AppFailure(a, b))
            log.warning("%s: %s", a, b)
    return reports, fps, failures


def cmd_analyze(ns) -> int:
    cfg = _config(ns)
    tax = load_taxonomy(cfg.taxonomy_path)
    appdir = Path(ns.appdir)
    if not appdir.is_dir():
        print(f"spoaudit: {appdir}: not a readable package directory", file=sys.stderr)
        return EXIT_USAGE
    opts = cfg.options()
    if ns.policy:
        if not Path(ns.policy).is_file():
            print(f"spoaudit: {ns.policy}: no such policy file", file=sys.stderr)
            return EXIT_USAGE
        opts.external_policy = ns.policy
    try:
        res = analyze_app(appdir, tax, opts)
    except IngestError as exc:
        print(f"spoaudit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if ns.dump_callgraph:
        Path(ns.dump_callgraph).write_text(res.graph.to_dot(), encoding="utf-8")
    _write(cfg, emit_report(None, [res.report], cfg.format, tax=tax, flows=cfg.dump_flows))
    return EXIT_OK


def cmd_corpus(ns) -> int:
    cfg = _config(ns)
    tax = load_taxonomy(cfg.taxonomy_path)
    reports, _fps, failures = run_corpus(cfg)
    if not reports:
        print("spoaudit: no loadable packages in corpus", file=sys.stderr)
        return EXIT_FAIL
    stats = aggregate(reports, tax, basis=cfg.spo_basis, failures=failures)
    _write(cfg, emit_report(stats, reports, cfg.format, tax=tax, flows=cfg.dump_flows))
    return EXIT_OK


def cmd_mine(ns) -> int:
    cfg = _config(ns)
    tax = load_taxonomy(cfg.taxonomy_path)
    reports, fps, failures = run_corpus(cfg, want_fp=True)
    if not reports:
        print("spoaudit: no loadable packages in corpus", file=sys.stderr)
        return EXIT_FAIL
    ccfg = cfg.cluster()
    templates = detect_templates(fps, ccfg)
    sdks = detect_sdks(fps, ccfg)
    attribution = attribute_spo(templates, sdks, reports)
    stats = aggregate(reports, tax, basis=cfg.spo_basis, failures=failures)
    _write(cfg, emit_report(stats, reports, cfg.format, tax=tax, templates=templates, sdks=sdks,
                            attribution=attribution))
    return EXIT_OK


def cmd_policy(ns) -> int:
    cfg = _config(ns)
    tax = load_taxonomy(cfg.taxonomy_path)
    path = Path(ns.policy_file)
    if not path.is_file():
        print(f"spoaudit: {path}: no such file", file=sys.stderr)
        return EXIT_USAGE
    text = path.read_text(encoding="utf-8", errors="replace")
    locale = detect_locale(text) if cfg.locale == "auto" else cfg.locale
    try:
        lex = tax.lexicon(locale, "policy")
    except KeyError:
        print(f"spoaudit: no lexicon for locale {locale!r}", file=sys.stderr)
        return EXIT_USAGE
    cs = extract_claims(PolicyText(PolicySource.EXTERNAL_FILE, text, bool(text.strip()), str(path)),
                        lex, VerbLists.from_taxonomy(tax, locale), locale=locale)
    if cfg.format == "csv":
        out = "item\n" + "".join(f"{i}\n" for i in sorted(cs.items))
    elif cfg.format == "text":
        out = "".join(f"{c.sentence.index}\t{c.verdict.value}\t{c.sentence.text}\n" for c in cs.candidates)
        out += f"claimed: {', '.join(sorted(cs.items)) or '-'}\n"
    else:
        out = json.dumps({
            "locale": locale,
            "s_claim": sorted(cs.items),
            "evidence": {k: v for k, v in sorted(cs.evidence.items())},
            "candidates": [
                {"index": c.sentence.index, "text": c.sentence.text,
                 "matches": [{"keyword": k, "item": i, "verdict": v.value}
                             for (k, i, _s), v in zip(c.matched, c.verdicts)]}
                for c in cs.candidates
            ],
        }, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    _write(cfg, out)
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "corpus": cmd_corpus, "mine": cmd_mine, "policy": cmd_policy}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    level = logging.WARNING - 10 * min(ns.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[ns.command](ns)
    except (UsageError, TaxonomyError, FileNotFoundError) as exc:
        print(f"spoaudit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.debug("fatal", exc_info=True)
        print(f"spoaudit: analysis failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
