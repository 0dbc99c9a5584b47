"""Render-layer front end.

A tag-soup parser for WXML-style markup, bottom-up resolution of custom
components to the native input/process components, and extraction of
user-input privacy sources together with the handler each one is bound to.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterator

from .ingest import MARKUP_EXT, SubAppPackage, resolve_component_path
from .taxonomy import KeywordLexicon, find_keywords, normalize_text

log = logging.getLogger(__name__)

INPUT_COMPONENTS = frozenset({"editor", "input", "textarea"})
PROCESS_COMPONENTS = frozenset({
    "checkbox", "checkbox-group", "picker", "picker-view", "radio", "radio-group",
    "slider", "switch", "form",
})
NATIVE_UIP = INPUT_COMPONENTS | PROCESS_COMPONENTS
INPUT_EVENTS = frozenset({"input", "confirm"})
PROCESS_EVENTS = frozenset({"change", "submit", "columnchange", "changing"})
UIP_EVENTS = INPUT_EVENTS | PROCESS_EVENTS
SUBMIT_EVENTS = frozenset({"submit"})
NATIVE_TAGS = frozenset({
    "view", "text", "image", "button", "label", "navigator", "scroll-view", "swiper",
    "swiper-item", "block", "icon", "rich-text", "progress", "map", "canvas", "video",
    "camera", "web-view", "template", "import", "include", "slot", "cover-view",
    "cover-image", "movable-area", "movable-view", "picker-view-column", "audio",
    "live-player", "live-pusher", "open-data", "ad", "page-meta", "navigation-bar",
    "root-portal", "page-container", "match-media", "wxs", "functional-page-navigator",
    "official-account", "keyboard-accessory", "share-element",
}) | NATIVE_UIP
LABEL_ATTRS = ("placeholder", "label", "title", "aria-label")
OPTION_TAGS = frozenset({"radio", "checkbox", "picker-view-column", "option"})

_BIND_RE = re.compile(r"^(?:capture-)?(?:bind|catch|mut-bind)(?::)?([A-Za-z][\w-]*)$")
VOID_TAGS = frozenset({"import", "include", "wxs-import"})


class MarkupError(ValueError):
    """Input too malformed to be repaired."""


@dataclass(eq=False)
class Element:
    tag: str
    attrs: dict[str, str]
    span: tuple[int, int]
    children: list = field(default_factory=list)  # Element | TextNode
    parent: "Element | None" = field(default=None, repr=False)

    def iter(self) -> Iterator["Element"]:
        yield self
        for c in self.children:
            if isinstance(c, Element):
                yield from c.iter()

    def text_content(self) -> str:
        parts: list[str] = []
        for c in self.children:
            parts.append(c.text if isinstance(c, TextNode) else c.text_content())
        return " ".join(p.strip() for p in parts if p.strip())

    def ancestors(self) -> Iterator["Element"]:
        node = self.parent
        while node is not None:
            yield node
            node = node.parent


@dataclass(eq=False)
class TextNode:
    text: str
    span: tuple[int, int]
    parent: Element | None = field(default=None, repr=False)


@dataclass
class MarkupDoc:
    root: Element
    repairs: list[str] = field(default_factory=list)

    def iter(self) -> Iterator[Element]:
        for c in self.root.children:
            if isinstance(c, Element):
                yield from c.iter()

    def text_nodes(self) -> list[str]:
        out: list[str] = []

        def walk(el: Element) -> None:
            for c in el.children:
                if isinstance(c, TextNode):
                    out.append(c.text)
                else:
                    walk(c)

        walk(self.root)
        return out

    def text_content(self) -> str:
        return self.root.text_content()


_TOKEN_RE = re.compile(
    r"<!--.*?-->"
    r"|</\s*(?P<close>[A-Za-z][\w:.-]*)\s*>"
    r"|<(?P<open>[A-Za-z][\w:.-]*)(?P<attrs>(?:\s+[^\s=/>]+(?:\s*=\s*(?:\"[^\"]*\"|'[^']*'|[^\s>]+))?)*)\s*(?P<self>/)?>",
    re.S,
)
_ATTR_RE = re.compile(r"([^\s=/>]+)(?:\s*=\s*(\"[^\"]*\"|'[^']*'|[^\s>]+))?")


def parse_markup(src: str) -> MarkupDoc:
    """Lenient parse; unclosed tags are closed and every repair is logged."""
    if "\x00" in src:
        raise MarkupError("binary content")
    root = Element("#document", {}, (0, len(src)))
    doc = MarkupDoc(root)
    stack = [root]
    pos = 0

    def add_text(start: int, end: int) -> None:
        text = src[start:end]
        if text.strip():
            stack[-1].children.append(TextNode(text, (start, end), stack[-1]))

    for m in _TOKEN_RE.finditer(src):
        if "<" in src[pos:m.start()]:
            bad = src.index("<", pos)
            if re.match(r"<[A-Za-z/]", src[bad:]) and ">" not in src[bad:]:
                raise MarkupError(f"unterminated tag at offset {bad}")
        add_text(pos, m.start())
        pos = m.end()
        if m.group(0).startswith("<!--"):
            continue
        if m.group("close"):
            tag = m.group("close")
            if any(el.tag == tag for el in stack[1:]):
                while stack[-1].tag != tag:
                    doc.repairs.append(f"auto-closed <{stack[-1].tag}> at offset {m.start()}")
                    stack[-1].span = (stack[-1].span[0], m.start())
                    stack.pop()
                stack[-1].span = (stack[-1].span[0], m.end())
                stack.pop()
            else:
                doc.repairs.append(f"dropped stray </{tag}> at offset {m.start()}")
            continue
        attrs: dict[str, str] = {}
        for am in _ATTR_RE.finditer(m.group("attrs") or ""):
            val = am.group(2)
            if val is not None and val[:1] in "\"'":
                val = val[1:-1]
            attrs.setdefault(am.group(1), val if val is not None else "")
        el = Element(m.group("open"), attrs, (m.start(), m.end()), parent=stack[-1])
        stack[-1].children.append(el)
        if not m.group("self") and el.tag not in VOID_TAGS:
            stack.append(el)
    tail = src[pos:]
    if re.search(r"<[A-Za-z/]", tail) and ">" not in tail[tail.index("<"):]:
        raise MarkupError("unterminated tag at end of input")
    add_text(pos, len(src))
    while len(stack) > 1:
        doc.repairs.append(f"auto-closed <{stack[-1].tag}> at end of input")
        stack[-1].span = (stack[-1].span[0], len(src))
        stack.pop()
    return doc


def binding_event(attr: str) -> str | None:
    """``bindinput`` / ``bind:input`` / ``catchinput`` -> ``input``."""
    m = _BIND_RE.match(attr)
    return m.group(1).lower() if m else None


@dataclass(frozen=True)
class Binding:
    """One event binding in a render doc."""
    owner: str  # page route or component path
    tag: str
    attr: str
    event: str
    handler: str
    span: tuple[int, int]


def collect_bindings(doc: MarkupDoc, owner: str) -> tuple[list[Binding], list[str]]:
    bindings: list[Binding] = []
    warnings: list[str] = []
    for el in doc.iter():
        for attr, val in el.attrs.items():
            event = binding_event(attr)
            if event is None:
                continue
            handler = (val or "").strip()
            if not handler or "{{" in handler:
                warnings.append(f"{owner}: <{el.tag} {attr}> has no static handler name")
                continue
            bindings.append(Binding(owner, el.tag, attr, event, handler, el.span))
    return bindings, warnings


# ---------------------------------------------------------------------------
# custom components

@dataclass(frozen=True)
class ComponentDef:
    name: str
    path: str
    level: int
    depends_on: frozenset[str]
    input_bindings: frozenset[str]
    aliases: frozenset[str] = frozenset()


def _canonical_binding(event: str) -> str:
    return "bind" + event


def _using(cfg: dict) -> dict[str, str]:
    using = cfg.get("usingComponents") or {}
    return {k: v for k, v in using.items() if isinstance(v, str)}


def component_tag_map(pkg: SubAppPackage, declaring: str, cfg: dict) -> dict[str, str]:
    """Custom tag -> component path visible from a page or component."""
    out: dict[str, str] = {}
    for scope_cfg, scope_decl in ((pkg.app_config, "app.json"), (cfg, declaring)):
        for tag, ref in _using(scope_cfg).items():
            path = resolve_component_path(ref, scope_decl, pkg.files)
            if path:
                out[tag] = path
    return out


def resolve_components(pkg: SubAppPackage, warnings: list[str] | None = None) -> list[ComponentDef]:
    """Assign levels bottom-up; drop components that never reach input/process natives."""
    warnings = warnings if warnings is not None else []
    direct: dict[str, set[str]] = {}
    deps: dict[str, set[str]] = {}
    aliases: dict[str, set[str]] = {}
    for path, comp in pkg.components.items():
        try:
            doc = parse_markup(comp.markup)
        except MarkupError as exc:
            warnings.append(f"component {path}: {exc}")
            continue
        tags = component_tag_map(pkg, path + ".json", comp.config)
        for tag, target in tags.items():
            aliases.setdefault(target, set()).add(tag)
        direct[path] = set()
        deps[path] = set()
        for el in doc.iter():
            if el.tag in NATIVE_UIP:
                for attr in el.attrs:
                    ev = binding_event(attr)
                    if ev in UIP_EVENTS:
                        direct[path].add(_canonical_binding(ev))
                if el.tag in INPUT_COMPONENTS:
                    direct[path].add("bindinput")
                elif el.tag != "form":
                    direct[path].add("bindchange")
            elif el.tag in tags:
                deps[path].add(tags[el.tag])
    for route in (p.route for p in pkg.pages):
        for tag, target in component_tag_map(pkg, route + ".json", pkg.page_config(route)).items():
            aliases.setdefault(target, set()).add(tag)

    # cycle detection
    state: dict[str, int] = {}
    cyclic: set[str] = set()

    def visit(node: str, trail: list[str]) -> None:
        state[node] = 1
        trail.append(node)
        for d in sorted(deps.get(node, ())):
            if d not in deps:
                continue
            if state.get(d) == 1:
                cyclic.update(trail[trail.index(d):])
            elif d not in state:
                visit(d, trail)
        trail.pop()
        state[node] = 2

    for node in sorted(deps):
        if node not in state:
            visit(node, [])
    for c in sorted(cyclic):
        warnings.append(f"component {c}: cyclic dependency, dropped")

    level: dict[str, int] = {}
    bindings: dict[str, set[str]] = {}
    remaining = {p for p in deps if p not in cyclic}
    changed = True
    while changed:
        changed = False
        for path in sorted(remaining):
            sub = [d for d in deps[path] if d in deps and d not in cyclic]
            if any(d in remaining for d in sub):
                continue
            uip_sub = [d for d in sub if d in level]
            if direct[path] or uip_sub:
                level[path] = 1 + max((level[d] for d in uip_sub), default=0)
                bindings[path] = set(direct[path]).union(*(bindings[d] for d in uip_sub))
            remaining.discard(path)
            changed = True
    out = []
    for path in sorted(level):
        names = sorted(aliases.get(path, ())) or [path.rsplit("/", 1)[-1]]
        out.append(ComponentDef(
            name=names[0],
            path=path,
            level=level[path],
            depends_on=frozenset(d for d in deps[path] if d in level),
            input_bindings=frozenset(bindings[path]),
            aliases=frozenset(names),
        ))
    return out


# ---------------------------------------------------------------------------
# user-input privacy sources

@dataclass(frozen=True)
class UipSource:
    page_route: str
    span: tuple[int, int]
    items: frozenset[str]
    handler_name: str
    binding_attr: str
    tag: str = ""
    matched_in: str = ""  # attribute | sibling | label | heading | option-label | option-value | form
    keywords: tuple[str, ...] = ()


def _clean(text: str) -> str:
    return re.sub(r"\{\{.*?\}\}", " ", text or "")


def _own_text(el: Element) -> str:
    return _clean(el.text_content())


def _preceding_sibling_text(el: Element) -> str:
    if el.parent is None:
        return ""
    siblings = el.parent.children
    idx = siblings.index(el)
    for sib in reversed(siblings[:idx]):
        text = _clean(sib.text if isinstance(sib, TextNode) else sib.text_content())
        if text.strip():
            return text
    return ""


def _label_contexts(el: Element) -> Iterator[tuple[str, str]]:
    """Label text candidates in the fixed search order."""
    for attr in LABEL_ATTRS:
        if attr in el.attrs:
            yield "attribute", _clean(el.attrs[attr])
    yield "sibling", _preceding_sibling_text(el)
    for anc in el.ancestors():
        if anc.tag == "label" or "label" in anc.attrs.get("class", "").split():
            texts = [
                _clean(c.text if isinstance(c, TextNode) else c.text_content())
                for c in anc.children if c is not el and not (isinstance(c, Element) and el in c.iter())
            ]
            yield "label", " ".join(texts)
            break
    for depth, anc in enumerate(el.ancestors()):
        if depth >= 2 or anc.tag == "#document":
            break
        yield "heading", _preceding_sibling_text(anc)
    if el.tag in ("picker", "radio-group", "checkbox-group", "picker-view"):
        yield "option-label", _own_text(el)
        values = [d.attrs.get("value", "") for d in el.iter() if d.tag in OPTION_TAGS]
        rng = el.attrs.get("range", "")
        if rng and "{{" not in rng:
            values.append(rng)
        yield "option-value", " ".join(values)


def _match_element(el: Element, lexicon: KeywordLexicon) -> tuple[frozenset[str], str, tuple[str, ...]]:
    for where, text in _label_contexts(el):
        if not text.strip():
            continue
        matches = find_keywords(normalize_text(text), lexicon)
        if matches:
            return frozenset(m.item for m in matches), where, tuple(m.keyword for m in matches)
    return frozenset(), "", ()


def _uip_binding(el: Element, events: frozenset[str]) -> tuple[str, str] | None:
    for attr, val in el.attrs.items():
        ev = binding_event(attr)
        if ev in events:
            return attr, (val or "").strip()
    return None


def extract_uip(
    page_route: str,
    doc: MarkupDoc,
    comps: dict[str, ComponentDef],
    lexicon: KeywordLexicon,
    warnings: list[str] | None = None,
) -> list[UipSource]:
    """UIP sources of one render doc.

    ``comps`` maps the custom tags visible on the page to their resolved
    definitions (only UIP-capable components are present).
    """
    warnings = warnings if warnings is not None else []
    out: list[UipSource] = []
    field_items: dict[int, frozenset[str]] = {}

    def is_field(el: Element) -> bool:
        return (el.tag in NATIVE_UIP and el.tag != "form") or el.tag in comps

    for el in doc.iter():
        if not is_field(el):
            continue
        items, where, kws = _match_element(el, lexicon)
        if not items:
            continue
        field_items[id(el)] = items
        events = UIP_EVENTS - SUBMIT_EVENTS
        hit = _uip_binding(el, events)
        if hit is None:
            continue
        attr, handler = hit
        if not handler or "{{" in handler:
            warnings.append(f"{page_route}: <{el.tag} {attr}> bound to an empty handler, skipped")
            continue
        out.append(UipSource(page_route, el.span, items, handler, attr, el.tag, where, kws))

    for el in doc.iter():
        if el.tag != "form":
            continue
        hit = _uip_binding(el, SUBMIT_EVENTS)
        if hit is None:
            continue
        items = frozenset().union(*(field_items.get(id(d), frozenset()) for d in el.iter()))
        if not items:
            continue
        attr, handler = hit
        if not handler or "{{" in handler:
            warnings.append(f"{page_route}: <form {attr}> bound to an empty handler, skipped")
            continue
        out.append(UipSource(page_route, el.span, items, handler, attr, "form", "form"))
    out.sort(key=lambda u: (u.span, u.handler_name))
    return out


def visible_components(pkg: SubAppPackage, route: str, defs: list[ComponentDef]) -> dict[str, ComponentDef]:
    by_path = {d.path: d for d in defs}
    tags = component_tag_map(pkg, route + ".json", pkg.page_config(route))
    return {tag: by_path[p] for tag, p in tags.items() if p in by_path}


def page_markup_paths(pkg: SubAppPackage) -> list[str]:
    return [p.route + MARKUP_EXT for p in pkg.pages]
