"""Loading extracted sub-app packages and locating their privacy policies.

Canonical extracted-package layout::

    <appid>/app.json              pages, subpackages, usingComponents
    <appid>/app.js                App({...}) registration
    <appid>/pages/<route>.{js,wxml,json}
    <appid>/<subpkg-root>/pages/<route>.{js,wxml,json}
    <appid>/meta.json             optional: developer, category, recently_used
    <appid>/policy.txt            optional: externally supplied policy text
"""

from __future__ import annotations

import enum
import json
import logging
import posixpath
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

log = logging.getLogger(__name__)

SCRIPT_EXT = ".js"
MARKUP_EXT = ".wxml"
CONFIG_EXT = ".json"
TEXT_EXTS = {".js", ".wxml", ".json", ".txt", ".md", ".html", ".htm", ".wxs"}
SIZE_EXTS = {SCRIPT_EXT, MARKUP_EXT, CONFIG_EXT}
DEFAULT_MIN_POLICY_LENGTH = 50


class IngestError(Exception):
    """Fatal package load failure."""


@dataclass(frozen=True)
class Page:
    route: str
    render_doc: str
    logic_src: str
    is_entry: bool = False
    package_root: str = ""

    @property
    def logic_path(self) -> str:
        return self.route + SCRIPT_EXT

    @property
    def render_path(self) -> str:
        return self.route + MARKUP_EXT

    @property
    def config_path(self) -> str:
        return self.route + CONFIG_EXT


@dataclass(frozen=True)
class CodePackage:
    root_path: str
    pages: tuple[Page, ...]
    config_files: Mapping[str, dict]
    byte_size: int


@dataclass(frozen=True)
class ComponentSource:
    path: str  # package-relative, without extension
    markup: str
    script: str | None
    config: dict


class PolicySource(str, enum.Enum):
    EXTERNAL_FILE = "external_file"
    IN_PACKAGE_ASSET = "in_package_asset"
    PAGE_TEXT = "page_text"


@dataclass(frozen=True)
class PolicyText:
    source: PolicySource
    text: str
    valid: bool
    origin: str = ""  # file, asset path, page route or URL


@dataclass(frozen=True)
class SubAppPackage:
    appid: str
    metadata: Mapping[str, object]
    main_pkg: CodePackage
    sub_pkgs: tuple[CodePackage, ...]
    app_config: Mapping[str, object]
    files: Mapping[str, str]
    components: Mapping[str, ComponentSource] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()
    root: str = ""

    @property
    def pages(self) -> list[Page]:
        out = list(self.main_pkg.pages)
        for sp in self.sub_pkgs:
            out.extend(sp.pages)
        return out

    @property
    def developer(self) -> str:
        return str(self.metadata.get("developer", "") or "")

    @property
    def recently_used(self) -> int:
        return int(self.metadata.get("recently_used", 0) or 0)

    def page(self, route: str) -> Page | None:
        for p in self.pages:
            if p.route == route:
                return p
        return None

    def page_config(self, route: str) -> dict:
        for pkg in (self.main_pkg, *self.sub_pkgs):
            if route in pkg.config_files:
                return pkg.config_files[route]
        return {}

    @property
    def byte_size(self) -> int:
        return self.main_pkg.byte_size + sum(p.byte_size for p in self.sub_pkgs)


def _read_json(path: Path, warnings: list[str]) -> dict:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        warnings.append(f"{path.name}: unreadable config ({exc.__class__.__name__})")
        return {}
    if not isinstance(data, dict):
        warnings.append(f"{path.name}: config is not an object")
        return {}
    return data


def _norm_route(route: str) -> str:
    return posixpath.normpath(route.strip().lstrip("/")).removesuffix(SCRIPT_EXT)


def _read_text(path: Path) -> str:
    return path.read_text(encoding="utf-8", errors="replace")


def resolve_component_path(ref: str, declaring: str, files: Mapping[str, str]) -> str | None:
    """Resolve a ``usingComponents`` value to a package path without extension."""
    if ref.startswith("plugin://"):
        return None
    if ref.startswith("/"):
        candidates = [ref.lstrip("/")]
    elif ref.startswith("."):
        candidates = [posixpath.join(posixpath.dirname(declaring), ref)]
    else:
        candidates = [
            posixpath.join(posixpath.dirname(declaring), ref),
            ref,
            posixpath.join("miniprogram_npm", ref),
        ]
    for cand in candidates:
        cand = posixpath.normpath(cand)
        for base in (cand, posixpath.join(cand, "index")):
            if base + MARKUP_EXT in files:
                return base
    return None


def load_package(directory: str | Path) -> SubAppPackage:
    """Parse one extracted sub-app directory."""
    root = Path(directory)
    if not root.is_dir():
        raise IngestError(f"{root}: not a directory")
    app_json = root / "app.json"
    if not app_json.is_file():
        raise IngestError(f"{root}: missing app.json")
    warnings: list[str] = []
    try:
        app_config = json.loads(app_json.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IngestError(f"{app_json}: invalid JSON ({exc})") from exc
    if not isinstance(app_config, dict):
        raise IngestError(f"{app_json}: expected an object")

    meta: dict = {}
    if (root / "meta.json").is_file():
        meta = _read_json(root / "meta.json", warnings)
    appid = str(meta.get("appid") or root.name)
    if not appid:
        raise IngestError(f"{root}: empty appid")

    files: dict[str, str] = {}
    sizes: dict[str, int] = {}
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(root).as_posix()
        if path.suffix in TEXT_EXTS:
            files[rel] = _read_text(path)
        if path.suffix in SIZE_EXTS:
            sizes[rel] = path.stat().st_size

    main_routes = [_norm_route(r) for r in app_config.get("pages") or []]
    sub_specs = app_config.get("subpackages") or app_config.get("subPackages") or []
    entry = app_config.get("entryPagePath")
    entry = _norm_route(entry) if entry else (main_routes[0] if main_routes else None)

    seen_routes: set[str] = set()

    def build(pkg_root: str, routes: Iterable[str]) -> CodePackage:
        pages: list[Page] = []
        configs: dict[str, dict] = {}
        for route in routes:
            full = _norm_route(posixpath.join(pkg_root, route)) if pkg_root else route
            if full in seen_routes:
                raise IngestError(f"{root}: duplicate page route {full!r}")
            seen_routes.add(full)
            js, wxml = full + SCRIPT_EXT, full + MARKUP_EXT
            if js not in files:
                warnings.append(f"page {full}: logic file missing, skipped")
                continue
            if wxml not in files:
                warnings.append(f"page {full}: render file missing")
            if full + CONFIG_EXT in files:
                configs[full] = _read_json(root / (full + CONFIG_EXT), warnings)
            pages.append(Page(full, files.get(wxml, ""), files[js], full == entry, pkg_root))
        prefix = pkg_root.rstrip("/") + "/" if pkg_root else ""
        return CodePackage(pkg_root, tuple(pages), configs, 0 if prefix == "" else
                           sum(s for p, s in sizes.items() if p.startswith(prefix)))

    sub_pkgs = []
    for sp_cfg in sub_specs:
        pkg_root = _norm_route(sp_cfg.get("root", "")) if isinstance(sp_cfg, dict) else ""
        if not pkg_root:
            warnings.append("subpackage without root ignored")
            continue
        sub_pkgs.append(build(pkg_root, [_norm_route(r) for r in sp_cfg.get("pages") or []]))
    main = build("", main_routes)
    sub_prefixes = tuple(sp.root_path.rstrip("/") + "/" for sp in sub_pkgs)
    main_size = sum(s for p, s in sizes.items() if not p.startswith(sub_prefixes))
    main = CodePackage(main.root_path, main.pages, main.config_files, main_size)

    if entry and entry not in {p.route for p in main.pages}:
        warnings.append(f"entry page {entry} not loaded from the main package")

    components = _discover_components(app_config, main, sub_pkgs, files, warnings)

    return SubAppPackage(
        appid=appid,
        metadata={
            "developer": str(meta.get("developer", "") or ""),
            "category": str(meta.get("category", "") or ""),
            "recently_used": max(0, int(meta.get("recently_used", 0) or 0)),
        },
        main_pkg=main,
        sub_pkgs=tuple(sub_pkgs),
        app_config=app_config,
        files=files,
        components=components,
        warnings=tuple(warnings),
        root=str(root),
    )


def _discover_components(app_config, main, sub_pkgs, files, warnings) -> dict[str, ComponentSource]:
    found: dict[str, ComponentSource] = {}
    queue: list[tuple[str, str, str]] = []  # (ref, declaring file, declared tag)

    def enqueue(cfg: Mapping, declaring: str) -> None:
        for tag, ref in sorted((cfg.get("usingComponents") or {}).items()):
            if isinstance(ref, str):
                queue.append((ref, declaring, tag))

    enqueue(app_config, "app.json")
    for pkg in (main, *sub_pkgs):
        for route, cfg in sorted(pkg.config_files.items()):
            enqueue(cfg, route + CONFIG_EXT)
    while queue:
        ref, declaring, tag = queue.pop(0)
        path = resolve_component_path(ref, declaring, files)
        if path is None:
            warnings.append(f"component {tag} ({ref}) declared in {declaring} not found")
            continue
        if path in found:
            continue
        cfg: dict = {}
        if path + CONFIG_EXT in files:
            try:
                cfg = json.loads(files[path + CONFIG_EXT])
            except json.JSONDecodeError:
                warnings.append(f"component {path}: unreadable config")
        found[path] = ComponentSource(path, files[path + MARKUP_EXT], files.get(path + SCRIPT_EXT), cfg)
        enqueue(cfg, path + CONFIG_EXT)
    return dict(sorted(found.items()))


# ---------------------------------------------------------------------------
# policy location

_URL_ATTRS = ("url", "data-url", "href", "src", "data-src", "data-href", "data-path", "data-link")
_ASSET_EXTS = (".txt", ".md", ".html", ".htm")


def _policy_text(text: str, source: PolicySource, origin: str, min_length: int) -> PolicyText:
    text = text.strip()
    return PolicyText(source, text, len(text) >= min_length, origin)


def locate_policies(
    pkg: SubAppPackage,
    indicators: Iterable[str],
    external: str | Path | None = None,
    *,
    min_length: int = DEFAULT_MIN_POLICY_LENGTH,
    retriever: Callable[[str], str | None] | None = None,
) -> list[PolicyText]:
    """Find policy texts statically.

    An external file (argument or ``policy.txt`` in the package dir) wins.
    Otherwise render docs are scanned for indicator phrases; an indicator in
    the page title marks the page itself as a policy page, an indicator on a
    link-like element is followed to the in-package page or text asset it
    references. Web URLs are only fetched when ``retriever`` is given.
    """
    from .markup import MarkupError, parse_markup  # local: markup imports ingest types

    if external is None and pkg.root and (Path(pkg.root) / "policy.txt").is_file():
        external = Path(pkg.root) / "policy.txt"
    if external is not None:
        text = Path(external).read_text(encoding="utf-8", errors="replace")
        return [_policy_text(text, PolicySource.EXTERNAL_FILE, str(external), min_length)]

    needles = [i.casefold() for i in indicators]

    def has_indicator(text: str) -> bool:
        t = re.sub(r"\s+", " ", text).casefold()
        return any(n in t for n in needles)

    routes = {p.route for p in pkg.pages}
    found: list[PolicyText] = []

    def add(pt: PolicyText) -> None:
        if all((pt.source, pt.text, pt.origin) != (f.source, f.text, f.origin) for f in found):
            found.append(pt)

    for page in pkg.pages:
        try:
            doc = parse_markup(page.render_doc)
        except MarkupError:
            continue
        full = doc.text_content()
        if not has_indicator(full):
            continue
        title = next((t for t in doc.text_nodes() if t.strip()), "")
        if has_indicator(title) and len(full.strip()) >= min_length:
            add(_policy_text(full, PolicySource.PAGE_TEXT, page.route, min_length))
            continue
        for el in doc.iter():
            own = el.text_content() + " " + " ".join(el.attrs.values())
            if not has_indicator(own):
                continue
            target = _link_target(el)
            if target is None:
                continue
            if re.match(r"https?://", target):
                text = retriever(target) if retriever else None
                add(_policy_text(text or "", PolicySource.EXTERNAL_FILE, target, min_length))
                continue
            path = target.split("?")[0]
            path = posixpath.normpath(path.lstrip("/") if path.startswith("/")
                                      else posixpath.join(posixpath.dirname(page.route), path))
            if path.endswith(_ASSET_EXTS):
                text = pkg.files.get(path, "")
                if path.endswith((".html", ".htm")):
                    text = re.sub(r"<[^>]+>", " ", text)
                add(_policy_text(text, PolicySource.IN_PACKAGE_ASSET, path, min_length))
            elif path in routes:
                target_page = pkg.page(path)
                try:
                    text = parse_markup(target_page.render_doc).text_content() if target_page else ""
                except MarkupError:
                    text = ""
                add(_policy_text(text, PolicySource.PAGE_TEXT, path, min_length))
            else:
                add(PolicyText(PolicySource.PAGE_TEXT, "", False, path))
    return found


def _link_target(el) -> str | None:
    node = el
    for _ in range(3):
        if node is None:
            break
        for attr in _URL_ATTRS:
            val = node.attrs.get(attr)
            if val and "{{" not in val:
                return val.strip()
        node = node.parent
    return None


def policy_status(policies: list[PolicyText]) -> str:
    if not policies:
        return "missing"
    return "valid" if any(p.valid for p in policies) else "invalid"
