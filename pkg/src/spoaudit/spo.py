"""Over-collection sets, corpus statistics and report serialization."""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .taxonomy import PrivacyCategory, ProtectionLevel, Taxonomy

REPORT_SCHEMA_VERSION = 1
DEFAULT_BUCKETS = (1000, 10000, 100000)
FORMATS = ("json", "csv", "text")
BASES = ("valid-policy", "all")


class UsageError(ValueError):
    """Bad caller input (maps to exit status 1)."""


class PolicyStatus(str, enum.Enum):
    VALID = "valid"
    INVALID = "invalid"
    MISSING = "missing"

    @classmethod
    def coerce(cls, value) -> "PolicyStatus":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass
class SpoReport:
    appid: str
    s_collect: set[str]
    s_claim: set[str]
    s_spo: set[str]
    policy_status: PolicyStatus
    flow_evidence: list = field(default_factory=list)
    claim_evidence: dict[str, list[int]] = field(default_factory=dict)
    coverage: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self, flows: bool = False) -> dict:
        out = {
            "appid": self.appid,
            "policy_status": self.policy_status.value,
            "s_collect": sorted(self.s_collect),
            "s_claim": sorted(self.s_claim),
            "s_spo": sorted(self.s_spo),
            "flow_count": len(self.flow_evidence),
            "claim_evidence": {k: sorted(v) for k, v in sorted(self.claim_evidence.items())},
            "coverage": self.coverage,
            "metadata": dict(self.metadata),
            "warnings": list(self.warnings),
        }
        if flows:
            out["flows"] = [f.to_dict() if hasattr(f, "to_dict") else f for f in self.flow_evidence]
        return out


@dataclass(frozen=True)
class AppFailure:
    appid: str
    error: str


def compute_spo(collect: Iterable[str], claim: Iterable[str], status, tax: Taxonomy | None = None,
                exact: Iterable[str] = (), appid: str = "") -> SpoReport:
    """S_spo = S_collect - S_claim, with claims covering same-named items."""
    status = PolicyStatus.coerce(status)
    collect = set(collect)
    claim = set(claim) if status is PolicyStatus.VALID else set()
    covered = tax.covered_by_claims(claim, exact) if tax is not None else set(claim)
    return SpoReport(appid, collect, claim, collect - covered, status)


def spo_rate(spo: int, collected: int) -> float | None:
    """Rate in percent, or None when nothing was collected."""
    if collected <= 0:
        return None
    return 100.0 * spo / collected


def _pct(x: float | None) -> float | None:
    return None if x is None else round(x, 2)


@dataclass
class Tally:
    collected: int = 0
    spo: int = 0

    @property
    def rate(self) -> float | None:
        return spo_rate(self.spo, self.collected)

    def to_dict(self) -> dict:
        return {"collected": self.collected, "spo": self.spo, "spo_rate": _pct(self.rate)}


def bucket_label(n: int, buckets: Sequence[int]) -> str:
    edges = sorted(buckets)
    if n < edges[0]:
        return f"<{edges[0]}"
    for lo, hi in zip(edges, edges[1:]):
        if lo <= n < hi:
            return f"{lo}-{hi - 1}"
    return f">={edges[-1]}"


@dataclass
class CorpusStats:
    basis: str
    n_apps: int
    n_counted: int  # apps included under the basis
    per_item: dict[str, Tally]
    per_category: dict[str, Tally]
    per_protection: dict[str, Tally]
    unassigned: Tally
    total: Tally
    histogram: dict[int, int]
    apps_with_spo: int
    policy_status_counts: dict[str, int]
    policy_rate: float | None
    policy_rate_by_bucket: dict[str, dict]
    failures: list[AppFailure] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "basis": self.basis,
            "n_apps": self.n_apps,
            "n_counted": self.n_counted,
            "n_failed": len(self.failures),
            "failures": [{"appid": f.appid, "error": f.error} for f in self.failures],
            "total": self.total.to_dict(),
            "apps_with_spo": self.apps_with_spo,
            "apps_with_spo_rate": _pct(spo_rate(self.apps_with_spo, self.n_counted)),
            "per_category": {k: v.to_dict() for k, v in self.per_category.items()},
            "per_protection_level": {k: v.to_dict() for k, v in self.per_protection.items()},
            "unassigned_protection": self.unassigned.to_dict(),
            "spo_histogram": {str(k): v for k, v in sorted(self.histogram.items())},
            "policy_status_counts": dict(self.policy_status_counts),
            "policy_providing_rate": _pct(self.policy_rate),
            "policy_providing_rate_by_popularity": self.policy_rate_by_bucket,
        }


def aggregate(reports: Sequence[SpoReport], tax: Taxonomy, metas: Mapping[str, Mapping] | None = None,
              basis: str = "valid-policy", buckets: Sequence[int] = DEFAULT_BUCKETS,
              failures: Sequence[AppFailure] = ()) -> CorpusStats:
    """Fold per-app reports into corpus statistics.

    ``basis="valid-policy"`` counts only apps with a valid policy;
    ``basis="all"`` counts every app (apps without a valid policy
    over-collect everything they collect).
    """
    if basis not in BASES:
        raise UsageError(f"unknown spo basis {basis!r}")
    if not buckets:
        raise UsageError("at least one popularity bucket threshold is required")
    metas = metas or {}
    per_item = {i: Tally() for i in tax.item_ids}
    counted = [r for r in reports if basis == "all" or r.policy_status is PolicyStatus.VALID]
    histogram: dict[int, int] = {}
    for r in counted:
        for item in r.s_collect:
            per_item.setdefault(item, Tally()).collected += 1
        for item in r.s_spo:
            per_item.setdefault(item, Tally()).spo += 1
        histogram[len(r.s_spo)] = histogram.get(len(r.s_spo), 0) + 1

    per_category = {c.value: Tally() for c in PrivacyCategory}
    per_protection = {p.value: Tally() for p in ProtectionLevel}
    unassigned = Tally()
    total = Tally()
    for item, t in per_item.items():
        cat = tax.category_of(item).value if tax.has_item(item) else "unknown"
        slot = per_category.setdefault(cat, Tally())
        level = tax.protection_level(item) if tax.has_item(item) else None
        lslot = per_protection[level.value] if level is not None else unassigned
        for s in (slot, lslot, total):
            s.collected += t.collected
            s.spo += t.spo

    status_counts = {s.value: 0 for s in PolicyStatus}
    by_bucket: dict[str, list[int]] = {}
    edges = sorted(buckets)
    for label in [f"<{edges[0]}"] + [f"{lo}-{hi - 1}" for lo, hi in zip(edges, edges[1:])] + [f">={edges[-1]}"]:
        by_bucket[label] = [0, 0]
    for r in reports:
        status_counts[r.policy_status.value] += 1
        used = metas.get(r.appid, r.metadata).get("recently_used", 0) or 0
        b = by_bucket[bucket_label(int(used), edges)]
        b[0] += 1
        b[1] += r.policy_status is PolicyStatus.VALID
    n = len(reports)
    return CorpusStats(
        basis=basis,
        n_apps=n,
        n_counted=len(counted),
        per_item=per_item,
        per_category=per_category,
        per_protection=per_protection,
        unassigned=unassigned,
        total=total,
        histogram=histogram,
        apps_with_spo=sum(1 for r in counted if r.s_spo),
        policy_status_counts=status_counts,
        policy_rate=spo_rate(status_counts["valid"], n),
        policy_rate_by_bucket={k: {"apps": a, "with_policy": v, "rate": _pct(spo_rate(v, a))}
                               for k, (a, v) in by_bucket.items()},
        failures=sorted(failures, key=lambda f: f.appid),
    )


# ---------------------------------------------------------------------------
# serialization

def _items_table(stats: CorpusStats, tax: Taxonomy) -> list[dict]:
    rows = []
    for item, t in stats.per_item.items():
        known = tax.has_item(item)
        level = tax.protection_level(item) if known else None
        rows.append({
            "item": item,
            "name": tax.item(item).name if known else item,
            "category": tax.category_of(item).value if known else "unknown",
            "protection_level": level.value if level else None,
            **t.to_dict(),
        })
    return rows


def emit_report(stats: CorpusStats | None, reports: Sequence[SpoReport], fmt: str = "json", *,
                tax: Taxonomy | None = None, templates: Sequence = (), sdks: Sequence = (),
                attribution: Mapping | None = None, flows: bool = False) -> str:
    """Serialize a run deterministically."""
    if fmt not in FORMATS:
        raise UsageError(f"unknown format {fmt!r} (expected one of {', '.join(FORMATS)})")
    reports = sorted(reports, key=lambda r: r.appid)
    if fmt == "json":
        doc = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "corpus": stats.to_dict() if stats is not None else None,
            "apps": [r.to_dict(flows) for r in reports],
            "items": _items_table(stats, tax) if stats is not None and tax is not None else [],
            "templates": [_as_dict(t) for t in templates],
            "sdks": [_as_dict(s) for s in sdks],
        }
        if attribution is not None:
            doc["attribution"] = attribution
        return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["appid", "item", "status"])
        for r in reports:
            for status, items in (("collected", r.s_collect), ("claimed", r.s_claim), ("spo", r.s_spo)):
                for item in sorted(items):
                    w.writerow([r.appid, item, status])
        return buf.getvalue()
    return _text(stats, reports, templates, sdks)


def _as_dict(obj) -> dict:
    return obj.to_dict() if hasattr(obj, "to_dict") else dict(obj)


def _fmt_rate(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.2f}%"


def _text(stats: CorpusStats | None, reports: Sequence[SpoReport], templates, sdks) -> str:
    lines = []
    for r in reports:
        lines.append(f"{r.appid}: policy={r.policy_status.value} collect={sorted(r.s_collect)} "
                     f"claim={sorted(r.s_claim)} spo={sorted(r.s_spo)}")
    if stats is not None:
        lines.append("")
        lines.append(f"apps: {stats.n_apps} (counted under {stats.basis}: {stats.n_counted}, "
                     f"failed: {len(stats.failures)})")
        lines.append(f"{'':24}{'# collect':>10}{'# spo':>8}{'spo_rate':>10}")
        lines.append(f"{'total':24}{stats.total.collected:>10}{stats.total.spo:>8}{_fmt_rate(stats.total.rate):>10}")
        for name, t in stats.per_category.items():
            lines.append(f"{name:24}{t.collected:>10}{t.spo:>8}{_fmt_rate(t.rate):>10}")
        for name, t in stats.per_protection.items():
            lines.append(f"{name:24}{t.collected:>10}{t.spo:>8}{_fmt_rate(t.rate):>10}")
        lines.append(f"{'unassigned level':24}{stats.unassigned.collected:>10}{stats.unassigned.spo:>8}"
                     f"{_fmt_rate(stats.unassigned.rate):>10}")
        lines.append(f"policy providing rate: {_fmt_rate(stats.policy_rate)}")
        for label, b in stats.policy_rate_by_bucket.items():
            lines.append(f"  recently used {label}: {b['with_policy']}/{b['apps']} {_fmt_rate(b['rate'])}")
    if templates:
        lines.append(f"templates: {len(templates)}")
    if sdks:
        lines.append(f"sdks: {len(sdks)}")
    return "\n".join(lines) + "\n"
