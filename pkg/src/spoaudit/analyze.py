"""Single-app pipeline: ingest, both front ends, taint flows, claims, SPO."""

from __future__ import annotations

import logging
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

from .flow import TaintFlow, collect_set, find_flows, mark_sources, propagate
from .ingest import DEFAULT_MIN_POLICY_LENGTH, PolicyText, SubAppPackage, load_package, locate_policies, policy_status
from .markup import (
    MarkupError, collect_bindings, extract_uip, parse_markup, resolve_components, visible_components,
)
from .policy import ClaimSet, policy_claims
from .script import CallGraph, build_call_graph, extract_models, parse_package_scripts
from .spo import SpoReport, compute_spo
from .taxonomy import KeywordLexicon, Taxonomy

log = logging.getLogger(__name__)


@dataclass
class AnalysisOptions:
    locale: str = "auto"
    fetch_remote_policies: bool = False
    min_policy_length: int = DEFAULT_MIN_POLICY_LENGTH
    external_policy: str | None = None
    max_passes: int = 10000


@dataclass
class AppAnalysis:
    package: SubAppPackage
    report: SpoReport
    graph: CallGraph
    flows: list[TaintFlow]
    policies: list[PolicyText]
    claims: ClaimSet
    sources: list = field(default_factory=list)
    uips: list = field(default_factory=list)


def ui_lexicon(tax: Taxonomy) -> KeywordLexicon:
    """UI labels may be in any shipped locale; match all of them."""
    entries = []
    for lex in tax.keywords:
        entries.extend(tax.lexicon(lex.locale, "ui").entries)
    return KeywordLexicon("ui", tuple(entries))


def all_indicators(tax: Taxonomy) -> list[str]:
    out: list[str] = []
    for _loc, words in tax.policy_indicators:
        out.extend(words)
    return out


def fetch_url(url: str, timeout: float = 10.0) -> str | None:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:  # noqa: S310 - opt-in flag
            return resp.read().decode("utf-8", errors="replace")
    except (OSError, ValueError) as exc:
        log.warning("policy fetch failed for %s: %s", url, exc)
        return None


def analyze_package(pkg: SubAppPackage, tax: Taxonomy, opts: AnalysisOptions = AnalysisOptions()) -> AppAnalysis:
    warnings = list(pkg.warnings)
    asts, parse_errors = parse_package_scripts(pkg)
    models = extract_models(asts, pkg, parse_errors)
    warnings += models.warnings

    defs = resolve_components(pkg, warnings)
    lex = ui_lexicon(tax)
    bindings = []
    uips = []
    markup_errors: dict[str, str] = {}
    for page in pkg.pages:
        if page.logic_path in parse_errors:
            continue  # page excluded from flow analysis
        try:
            doc = parse_markup(page.render_doc)
        except MarkupError as exc:
            markup_errors[page.render_path] = str(exc)
            continue
        b, w = collect_bindings(doc, page.route)
        bindings += b
        warnings += w
        uips += extract_uip(page.route, doc, visible_components(pkg, page.route, defs), lex, warnings)
    for path, comp in pkg.components.items():
        try:
            doc = parse_markup(comp.markup)
        except MarkupError as exc:
            markup_errors[path + ".wxml"] = str(exc)
            continue
        b, _w = collect_bindings(doc, path)
        bindings += b

    graph = build_call_graph(models, asts, bindings, tax)
    sources = mark_sources(graph, models, uips, tax, bindings)
    state = propagate(graph, asts, sources, max_passes=opts.max_passes)
    flows = find_flows(state, graph, asts, tax)
    collect = collect_set(flows)

    retriever = fetch_url if opts.fetch_remote_policies else None
    policies = locate_policies(pkg, all_indicators(tax), opts.external_policy,
                               min_length=opts.min_policy_length, retriever=retriever)
    status = policy_status(policies)
    claims = policy_claims(policies, tax, opts.locale) if status == "valid" else ClaimSet()

    report = compute_spo(collect, claims.items, status, tax, claims.exact, appid=pkg.appid)
    report.flow_evidence = flows
    report.claim_evidence = {k: list(v) for k, v in claims.evidence.items()}
    report.metadata = dict(pkg.metadata)
    excluded = sorted(p.route for p in pkg.pages if p.logic_path in parse_errors)
    n_scripts = len(asts) + len(parse_errors)
    report.coverage = {
        "scripts_total": n_scripts,
        "scripts_parsed": len(asts),
        "parse_errors": dict(sorted(parse_errors.items())),
        "pages_total": len(pkg.pages),
        "pages_excluded": excluded,
        "markup_errors": dict(sorted(markup_errors.items())),
        "functions_total": sum(1 for f in models.index.funcs.values() if f.node is not None and not f.is_module),
        "functions_unreached": len(graph.unreached),
        "unresolved_calls": len(graph.unresolved_calls),
        "unresolved_bindings": len(graph.unresolved_bindings),
        "sources": len(sources),
        "fixpoint_passes": state.iterations,
    }
    report.warnings = sorted(set(warnings))
    return AppAnalysis(pkg, report, graph, flows, policies, claims, sources, uips)


def analyze_app(path: str | Path, tax: Taxonomy, opts: AnalysisOptions = AnalysisOptions()) -> AppAnalysis:
    return analyze_package(load_package(path), tax, opts)
