"""Taint sources, propagation to a fixpoint and source-to-sink flows."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Iterable

from .interp import Program
from .script import CallGraph, FunctionId, ScriptModels, pattern_names, span
from .taxonomy import CallbackStyle, Taxonomy

log = logging.getLogger(__name__)


class SourceKind(str, enum.Enum):
    SUBAPI_CALLBACK = "SubApiCallback"
    SUBAPI_RETURN = "SubApiReturn"
    UIP_HANDLER_PARAM = "UipHandlerParam"
    FORM_SUBMIT_EVENT = "FormSubmitEvent"


@dataclass(frozen=True, order=True)
class SourceLocation:
    function: FunctionId
    binding: str
    span: tuple[int, int]
    file: str = ""


@dataclass(frozen=True, order=True)
class SourcePoint:
    kind: SourceKind
    items: frozenset[str]
    location: SourceLocation
    api: str = ""  # subAPI name or "<binding attr> on <tag>"
    fkey: tuple = field(default=(), compare=False, repr=False)
    site: tuple = field(default=(), compare=False, repr=False)  # subAPI call-site key for returns

    def __post_init__(self):
        if not self.items:
            raise ValueError("source without privacy items")


@dataclass(frozen=True, order=True)
class SinkRef:
    api: str
    span: tuple[int, int]
    file: str
    function: FunctionId
    url: str = ""


@dataclass(frozen=True)
class TaintFlow:
    source: SourcePoint
    sink: SinkRef
    items: frozenset[str]
    path: tuple[tuple[FunctionId, tuple[int, int]], ...]

    def to_dict(self) -> dict:
        loc = self.source.location
        return {
            "source": {
                "kind": self.source.kind.value,
                "api": self.source.api,
                "function": str(loc.function),
                "binding": loc.binding,
                "file": loc.file,
                "span": list(loc.span),
            },
            "sink": {
                "api": self.sink.api,
                "function": str(self.sink.function),
                "file": self.sink.file,
                "span": list(self.sink.span),
                "url": self.sink.url,
            },
            "items": sorted(self.items),
            "path": [{"function": str(f), "span": list(s)} for f, s in self.path],
        }


@dataclass
class TaintState:
    program: Program
    sources: list[SourcePoint]
    iterations: int

    def _items(self, labels) -> set[str]:
        out: set[str] = set()
        for lab in labels:
            out |= self.sources[lab].items
        return out

    @property
    def bindings(self) -> dict[tuple[FunctionId, str], set[str]]:
        funcs = self.program.funcs
        out = {}
        for loc, labels in self.program.taint.items():
            if loc[0] == "b" and loc[1] in funcs and labels:
                out[(funcs[loc[1]].fid, loc[2])] = self._items(labels)
        return out

    @property
    def page_fields(self) -> dict[tuple[str, str], set[str]]:
        out = {}
        for loc, labels in self.program.taint.items():
            if loc[0] == "p" and loc[1][0] == "data" and labels:
                out[(loc[1][1], loc[2])] = self._items(labels)
        return out

    def label_count(self) -> int:
        return sum(len(v) for v in self.program.taint.values())


def _first_param(prog: Program, fkey) -> str:
    params = prog.funcs[fkey].params
    if not params:
        return ""
    return ",".join(pattern_names(params[0])) or "<pattern>"


def mark_sources(graph: CallGraph, models: ScriptModels, uips: Iterable, tax: Taxonomy,
                 bindings: Iterable = ()) -> list[SourcePoint]:
    """Source points of one sub-app, in a stable order."""
    prog: Program = graph.program
    funcs = prog.funcs
    found: dict[tuple, SourcePoint] = {}

    def add(kind, items, fkey, binding, sp, file, api, site=()):
        sp = tuple(sp)
        key = (kind, fkey, binding, sp, site)
        if key in found:
            return
        found[key] = SourcePoint(kind, frozenset(items), SourceLocation(funcs[fkey].fid, binding, sp, file),
                                 api, fkey, site)

    for key in sorted(prog.subapi_sites, key=lambda k: (k[0], k[1])):
        site = prog.subapi_sites[key]
        mapping = tax.subapi(site.api)
        if mapping is None:
            continue
        if mapping.callback_style is CallbackStyle.SYNC_RETURN:
            add(SourceKind.SUBAPI_RETURN, mapping.items, site.fkey, site.bound_to, site.span,
                site.file, site.api, key)
            continue
        wanted = ("listener",) if mapping.callback_style is CallbackStyle.EVENT_LISTENER \
            else ("success", "complete", "listener")
        cbs = [(k, fk) for k, fk in site.callbacks if k in wanted]
        for _k, fk in cbs:
            fi = funcs[fk]
            add(SourceKind.SUBAPI_CALLBACK, mapping.items, fk, _first_param(prog, fk),
                span(fi.node), fi.file, site.api)
        if not site.callbacks and mapping.callback_style is CallbackStyle.SUCCESS_CALLBACK:
            # promise style: the call's value carries the data
            add(SourceKind.SUBAPI_RETURN, mapping.items, site.fkey, site.bound_to, site.span,
                site.file, site.api, key)

    owners = {o.route: o for o in models.owners()}
    for b in bindings:
        api = tax.open_type_subapi(b.event)
        if api is None:
            continue
        mapping = tax.subapi(api)
        o = owners.get(b.owner)
        fk = o.method_keys.get(b.handler) if o else None
        if mapping is None or fk is None:
            continue
        add(SourceKind.SUBAPI_CALLBACK, mapping.items, fk, _first_param(prog, fk),
            span(funcs[fk].node), funcs[fk].file, api)

    for u in uips:
        o = owners.get(u.page_route)
        fk = o.method_keys.get(u.handler_name) if o else None
        if fk is None:
            log.info("UIP handler %s on %s not found", u.handler_name, u.page_route)
            continue
        kind = SourceKind.FORM_SUBMIT_EVENT if u.tag == "form" else SourceKind.UIP_HANDLER_PARAM
        add(kind, u.items, fk, _first_param(prog, fk), span(funcs[fk].node), funcs[fk].file,
            f"{u.binding_attr} on <{u.tag}>")
    return sorted(found.values())


def propagate(graph: CallGraph, asts=None, sources: list[SourcePoint] = (), *,
              max_passes: int = 10000, record: bool = False) -> TaintState:
    """Seed every source with its own label and iterate to a fixpoint."""
    prog = graph.program.fork()
    sources = list(sources)
    for lab, s in enumerate(sources):
        if s.kind is SourceKind.SUBAPI_RETURN:
            prog.call_labels.setdefault(s.site, set()).add(lab)
            continue
        fi = prog.funcs[s.fkey]
        prog.seed(fi.key, [lab], s.location.span, fi.file)
        if fi.params:
            for name in pattern_names(fi.params[0]):
                prog.write(("b", fi.key, name), _labels([lab]), fi.key)
        prog.write(("b", fi.key, "arguments"), _labels([lab]), fi.key)
    iterations = prog.solve(max_passes=max_passes, record=record)
    return TaintState(prog, sources, iterations)


def _labels(labels):
    from .interp import AV
    return AV((), labels)


def _path(prog: Program, src: SourcePoint, sink_fkey, sink_span, lab) -> tuple:
    fid = lambda k: prog.funcs[k].fid  # noqa: E731
    hops = [(sink_fkey, tuple(sink_span))]
    cur = sink_fkey
    seen = {cur}
    while True:
        v = prog.via.get((cur, lab))
        if v is None or v[0] is None or v[0] in seen:
            break
        pred, sp, _file = v
        hops.append((pred, tuple(sp)))
        seen.add(pred)
        cur = pred
    hops.reverse()
    if hops[0][0] != src.fkey:
        hops.insert(0, (src.fkey, src.location.span))
    else:
        hops[0] = (src.fkey, src.location.span)
    return tuple((fid(k), s) for k, s in hops)


def find_flows(state: TaintState, graph: CallGraph | None = None, asts=None,
               tax: Taxonomy | None = None) -> list[TaintFlow]:
    """One flow per (source, sink call site) whose payload carries the source's label."""
    prog = state.program
    flows: dict[tuple, TaintFlow] = {}
    for key in sorted(prog.sink_labels, key=lambda k: (k[0], k[1])):
        site = prog.sink_sites[key]
        ref = SinkRef(site.api, site.span, site.file, prog.funcs[site.fkey].fid, site.url)
        for lab in sorted(prog.sink_labels[key]):
            src = state.sources[lab]
            k = (src, ref)
            if k in flows:
                continue
            flows[k] = TaintFlow(src, ref, src.items, _path(prog, src, site.fkey, site.span, lab))
    return sorted(flows.values(), key=lambda f: (f.sink, f.source))


def collect_set(flows: Iterable[TaintFlow]) -> set[str]:
    """S_collect: union of the items of all flows."""
    out: set[str] = set()
    for f in flows:
        out |= f.items
    return out
