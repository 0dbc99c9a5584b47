"""Template and SDK detection over a corpus of sub-apps.

Similarity is token-shingle based.  Each script/markup file becomes a
multiset of k-token shingles (k=5).  Two files compare by weighted Jaccard
(sum of minimum counts over sum of maximum counts).  Two apps compare by
the size-weighted mean of per-file similarity over the union of their file
paths; a path present in only one app contributes 0 with its own weight.
Routes compare by plain Jaccard.
"""

from __future__ import annotations

import logging
import posixpath
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .ingest import SubAppPackage

log = logging.getLogger(__name__)

SHINGLE_K = 5
CONTENT_EXTS = (".js", ".wxml", ".wxs")
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class ClusterConfig:
    theta1: float = 0.9
    theta2: float = 0.9
    theta_sdk: float = 0.95
    min_sdk_usage: int = 100

    def __post_init__(self):
        for name in ("theta1", "theta2", "theta_sdk"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.min_sdk_usage < 0:
            raise ValueError("min_sdk_usage must be >= 0")


@dataclass
class AppFingerprint:
    appid: str
    rt: frozenset[str]
    ctn: dict[str, Counter]
    dev: str = ""
    raw: dict[str, str] = field(default_factory=dict, repr=False)

    def size(self, path: str) -> int:
        return sum(self.ctn[path].values()) if path in self.ctn else 0


def shingles(text: str, k: int = SHINGLE_K) -> Counter:
    toks = _TOKEN_RE.findall(text)
    if not toks:
        return Counter()
    if len(toks) < k:
        return Counter({" ".join(toks): 1})
    return Counter(" ".join(toks[i:i + k]) for i in range(len(toks) - k + 1))


def fingerprint(pkg: SubAppPackage, k: int = SHINGLE_K) -> AppFingerprint:
    ctn = {}
    raw = {}
    for path, text in sorted(pkg.files.items()):
        if path.endswith(CONTENT_EXTS):
            ctn[path] = shingles(text, k)
            raw[path] = text
    return AppFingerprint(pkg.appid, frozenset(p.route for p in pkg.pages), ctn, pkg.developer, raw)


def jaccard(a: Iterable, b: Iterable) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def multiset_jaccard(a: Counter, b: Counter) -> float:
    if not a and not b:
        return 1.0
    keys = a.keys() | b.keys()
    inter = sum(min(a[x], b[x]) for x in keys)
    union = sum(max(a[x], b[x]) for x in keys)
    return inter / union


def route_similarity(a: AppFingerprint, b: AppFingerprint) -> float:
    return jaccard(a.rt, b.rt)


def content_similarity(a: AppFingerprint, b: AppFingerprint) -> float:
    paths = a.ctn.keys() | b.ctn.keys()
    total = 0.0
    acc = 0.0
    for p in paths:
        w = max(a.size(p), b.size(p))
        total += w
        if p in a.ctn and p in b.ctn:
            acc += w * multiset_jaccard(a.ctn[p], b.ctn[p])
    if total == 0:
        return 1.0
    return acc / total


# ---------------------------------------------------------------------------
# templates

@dataclass
class TemplateCluster:
    id: str
    members: list[str]
    developers: set[str]
    representative: str

    def to_dict(self) -> dict:
        return {"id": self.id, "members": list(self.members), "developers": sorted(self.developers),
                "representative": self.representative}


def detect_templates(fps: Sequence[AppFingerprint], cfg: ClusterConfig = ClusterConfig(),
                     keep_all: bool = False) -> list[TemplateCluster]:
    """Greedy two-level clustering; apps may join several clusters."""
    ordered = sorted(fps, key=lambda f: f.appid)
    clusters: list[tuple[AppFingerprint, list[AppFingerprint]]] = []
    for s in ordered:
        added = False
        for rep, members in clusters:
            if route_similarity(s, rep) >= cfg.theta1 and content_similarity(s, rep) >= cfg.theta2:
                members.append(s)
                added = True
        if not added:
            clusters.append((s, [s]))
    out = []
    for rep, members in clusters:
        devs = {m.dev for m in members if m.dev}
        if not keep_all and (len(members) < 2 or len(devs) < 2):
            continue
        out.append(TemplateCluster("", [m.appid for m in members], devs, rep.appid))
    for i, c in enumerate(out):
        c.id = f"T{i + 1}"
    return out


def membership_counts(clusters: Sequence[TemplateCluster]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for c in clusters:
        for m in c.members:
            counts[m] = counts.get(m, 0) + 1
    return counts


# ---------------------------------------------------------------------------
# SDKs

@dataclass
class SdkCluster:
    id: str
    file_name: str
    member_files: list[tuple[str, str]]
    usage_count: int

    @property
    def directory(self) -> str:
        dirs = Counter(posixpath.dirname(p) for _a, p in self.member_files)
        return sorted(dirs.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]

    def to_dict(self) -> dict:
        return {"id": self.id, "file_name": self.file_name, "usage_count": self.usage_count,
                "member_files": [list(x) for x in self.member_files]}


@dataclass
class Sdk:
    id: str
    directory: str
    files: list[str]
    clusters: list[SdkCluster]
    usage_count: int

    @property
    def member_files(self) -> set[tuple[str, str]]:
        return {mf for c in self.clusters for mf in c.member_files}

    def to_dict(self) -> dict:
        return {"id": self.id, "directory": self.directory, "files": list(self.files),
                "usage_count": self.usage_count, "clusters": [c.to_dict() for c in self.clusters]}


def cluster_sdk_files(fps: Sequence[AppFingerprint], cfg: ClusterConfig = ClusterConfig()) -> list[SdkCluster]:
    """Same-name script files clustered by shingle similarity (complete link, first fit).

    The app entry script and page logic files are app code, never SDK files.
    """
    groups: dict[str, list[tuple[str, str, Counter]]] = {}
    for fp in sorted(fps, key=lambda f: f.appid):
        for path in sorted(fp.ctn):
            if path.endswith(".js") and path != "app.js" and path[:-3] not in fp.rt:
                groups.setdefault(posixpath.basename(path), []).append((fp.appid, path, fp.ctn[path]))
    out: list[SdkCluster] = []
    for name in sorted(groups):
        clusters: list[list[tuple[str, str, Counter]]] = []
        for entry in groups[name]:
            for cl in clusters:
                if all(multiset_jaccard(entry[2], other[2]) >= cfg.theta_sdk for other in cl):
                    cl.append(entry)
                    break
            else:
                clusters.append([entry])
        for cl in clusters:
            usage = len({a for a, _p, _c in cl})
            if usage > cfg.min_sdk_usage:
                out.append(SdkCluster("", name, [(a, p) for a, p, _c in cl], usage))
    for i, c in enumerate(out):
        c.id = f"F{i + 1}"
    return out


def detect_sdks(fps: Sequence[AppFingerprint], cfg: ClusterConfig = ClusterConfig()) -> list[Sdk]:
    """Frequently shared script files merged into SDKs by directory."""
    by_dir: dict[str, list[SdkCluster]] = {}
    for c in cluster_sdk_files(fps, cfg):
        by_dir.setdefault(c.directory, []).append(c)
    out = []
    for i, d in enumerate(sorted(by_dir)):
        cls = by_dir[d]
        apps = {a for c in cls for a, _p in c.member_files}
        out.append(Sdk(f"S{i + 1}", d, sorted(c.file_name for c in cls), cls, len(apps)))
    return out


# ---------------------------------------------------------------------------
# attribution

_UIP_KINDS = ("UipHandlerParam", "FormSubmitEvent")


def _mean(xs: list[int]) -> float | None:
    return round(sum(xs) / len(xs), 2) if xs else None


def attribute_spo(templates: Sequence[TemplateCluster], sdks: Sequence[Sdk], reports: Sequence) -> dict:
    """Template vs non-template collection/SPO means, and flows sourced in SDK files."""
    by_app = {r.appid: r for r in reports}
    in_template: set[str] = set()
    tmpl_rows = []
    for t in templates:
        rs = [by_app[m] for m in t.members if m in by_app]
        in_template.update(t.members)
        tmpl_rows.append({
            "id": t.id,
            "members": len(t.members),
            "mean_collected": _mean([len(r.s_collect) for r in rs]),
            "mean_spo": _mean([len(r.s_spo) for r in rs]),
        })
    tmpl_reports = [r for r in reports if r.appid in in_template]
    others = [r for r in reports if r.appid not in in_template]
    sdk_rows = []
    for s in sdks:
        files = s.member_files
        n_flows = 0
        n_spo = 0
        items: set[str] = set()
        for r in reports:
            for f in r.flow_evidence:
                if f.source.kind.value in _UIP_KINDS:
                    continue
                if (r.appid, f.source.location.file) in files:
                    n_flows += 1
                    items |= set(f.items)
                    if set(f.items) & r.s_spo:
                        n_spo += 1
        sdk_rows.append({"id": s.id, "directory": s.directory, "usage_count": s.usage_count,
                         "flows": n_flows, "spo_flows": n_spo, "items": sorted(items)})
    if not tmpl_rows and not sdk_rows:
        return {}
    return {
        "templates": tmpl_rows,
        "template_apps": {"apps": len(tmpl_reports),
                          "mean_collected": _mean([len(r.s_collect) for r in tmpl_reports]),
                          "mean_spo": _mean([len(r.s_spo) for r in tmpl_reports])},
        "non_template_apps": {"apps": len(others),
                              "mean_collected": _mean([len(r.s_collect) for r in others]),
                              "mean_spo": _mean([len(r.s_spo) for r in others])},
        "sdks": sdk_rows,
    }
