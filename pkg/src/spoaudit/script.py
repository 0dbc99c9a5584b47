"""Logic-layer scripts: parsing, registration models and the call graph.

Scripts are parsed with esprima into plain ESTree dicts (``range`` on every
node).  Optional chaining and nullish coalescing are not understood by the
parser, so they are rewritten beforehand with length-preserving
substitutions; spans stay valid against the original text.
"""

from __future__ import annotations

import logging
import posixpath
import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import esprima

from .ingest import SCRIPT_EXT, SubAppPackage

log = logging.getLogger(__name__)

PAGE_LIFECYCLE = (
    "onLoad", "onShow", "onReady", "onHide", "onUnload", "onPullDownRefresh",
    "onReachBottom", "onShareAppMessage", "onShareTimeline", "onPageScroll",
    "onTabItemTap", "onResize", "onAddToFavorites", "onSaveExitState",
)
APP_LIFECYCLE = (
    "onLaunch", "onShow", "onHide", "onError", "onPageNotFound",
    "onUnhandledRejection", "onThemeChange",
)
COMPONENT_LIFECYCLE = ("created", "attached", "ready", "moved", "detached", "error")
PAGE_LIFETIMES = ("show", "hide", "resize")
# entry edges the main loader always emits for a page
LOAD_LIFECYCLE = ("onLoad", "onShow", "onReady")

_OPTCHAIN = re.compile(r"\?\.(?!\d)|\?\?")


class ScriptParseError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def _mask_strings(src: str) -> str:
    """Blank out string/template/comment bodies so rewrites skip them."""
    out = list(src)
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c in "'\"`":
            j = i + 1
            while j < n and src[j] != c:
                if src[j] == "\\":
                    j += 1
                elif c == "`" and src.startswith("${", j):
                    break  # keep interpolations visible
                j += 1
            for k in range(i + 1, min(j, n)):
                out[k] = " " if src[k] != "\n" else "\n"
            i = j + 1
        elif src.startswith("//", i):
            j = src.find("\n", i)
            j = n if j < 0 else j
            for k in range(i, j):
                out[k] = " "
            i = j
        elif src.startswith("/*", i):
            j = src.find("*/", i + 2)
            j = n if j < 0 else j + 2
            for k in range(i, j):
                out[k] = " " if src[k] != "\n" else "\n"
            i = j
        else:
            i += 1
    return "".join(out)


def preprocess(src: str) -> str:
    """Rewrite ``a?.b``/``a?.[b]``/``f?.()``/``a ?? b`` keeping every offset."""
    if "?." not in src and "??" not in src:
        return src
    masked = _mask_strings(src)
    out = list(src)
    for m in _OPTCHAIN.finditer(masked):
        i = m.start()
        if m.group() == "??":
            out[i], out[i + 1] = "|", "|"
            continue
        nxt = masked[i + 2:i + 3]
        if nxt in ("[", "("):
            out[i], out[i + 1] = " ", " "
        else:
            out[i], out[i + 1] = " ", "."
    return "".join(out)


@dataclass
class ScriptAst:
    path: str
    source: str
    root: dict  # ESTree Program

    def line_col(self, offset: int) -> tuple[int, int]:
        line = self.source.count("\n", 0, offset) + 1
        col = offset - (self.source.rfind("\n", 0, offset) + 1)
        return line, col


def parse_script(src: str, path: str = "<script>") -> ScriptAst:
    """Parse one script; raises ScriptParseError on unrecoverable syntax."""
    text = preprocess(src)
    opts = {"range": True, "tolerant": False}
    try:
        tree = esprima.parseScript(text, opts)
    except esprima.Error as first:
        try:
            tree = esprima.parseModule(text, opts)
        except esprima.Error:
            raise ScriptParseError(path, str(first)) from None
    except RecursionError:
        raise ScriptParseError(path, "nesting too deep") from None
    return ScriptAst(path, src, tree.toDict())


def parse_package_scripts(pkg: SubAppPackage) -> tuple[dict[str, ScriptAst], dict[str, str]]:
    """Parse every script file of a package; returns (asts, errors by path)."""
    asts: dict[str, ScriptAst] = {}
    errors: dict[str, str] = {}
    for path, src in sorted(pkg.files.items()):
        if not path.endswith(SCRIPT_EXT):
            continue
        try:
            asts[path] = parse_script(src, path)
        except ScriptParseError as exc:
            log.info("parse failure %s", exc)
            errors[path] = exc.message
    return asts, errors


# ---------------------------------------------------------------------------
# AST helpers

def children(node: dict) -> Iterator[dict]:
    for k, v in node.items():
        if k in ("range", "loc", "type"):
            continue
        if isinstance(v, dict) and "type" in v:
            yield v
        elif isinstance(v, list):
            for x in v:
                if isinstance(x, dict) and "type" in x:
                    yield x


def walk(node: dict) -> Iterator[dict]:
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(list(children(n))))


FUNCTION_TYPES = ("FunctionDeclaration", "FunctionExpression", "ArrowFunctionExpression")


def is_function(node: dict | None) -> bool:
    return bool(node) and node.get("type") in FUNCTION_TYPES


def prop_name(prop: dict) -> str | None:
    """Static key of an object-literal property, or None if computed."""
    key = prop.get("key")
    if key is None:
        return None
    if not prop.get("computed"):
        if key["type"] == "Identifier":
            return key["name"]
        if key["type"] == "Literal":
            return str(key["value"])
    if key["type"] == "Literal":
        return str(key["value"])
    if key["type"] == "TemplateLiteral" and not key["expressions"]:
        return "".join(q["value"]["cooked"] for q in key["quasis"])
    return None


def member_name(node: dict) -> str | None:
    """Static property name of a MemberExpression."""
    prop = node["property"]
    if not node.get("computed"):
        return prop.get("name")
    if prop["type"] == "Literal" and isinstance(prop["value"], (str, int)):
        return str(prop["value"])
    return None


def pattern_names(pat: dict | None) -> list[str]:
    if pat is None:
        return []
    t = pat["type"]
    if t == "Identifier":
        return [pat["name"]]
    if t == "ObjectPattern":
        out = []
        for p in pat["properties"]:
            out += pattern_names(p["argument"] if p["type"] == "RestElement" else p["value"])
        return out
    if t == "ArrayPattern":
        return [n for el in pat["elements"] if el for n in pattern_names(el)]
    if t == "AssignmentPattern":
        return pattern_names(pat["left"])
    if t == "RestElement":
        return pattern_names(pat["argument"])
    return []


def span(node: dict) -> tuple[int, int]:
    r = node.get("range") or (0, 0)
    return int(r[0]), int(r[1])


# ---------------------------------------------------------------------------
# function index

@dataclass(frozen=True, order=True)
class FunctionId:
    file: str
    owner: str
    name: str

    def __str__(self) -> str:
        return f"{self.file}::{self.owner}.{self.name}" if self.owner else f"{self.file}::{self.name}"


MAIN = FunctionId("<main>", "", "dummyMain")

FKey = tuple  # (file, start, end); module bodies use (file, -1, -1)


@dataclass(eq=False)
class FuncInfo:
    key: FKey
    file: str
    node: dict | None
    parent: "FuncInfo | None"
    name: str = ""
    owner: str = ""
    this_owner: str | None = None
    is_module: bool = False
    declared: set[str] = field(default_factory=set)
    line: int = 0
    col: int = 0
    fid: FunctionId = MAIN

    @property
    def is_arrow(self) -> bool:
        return bool(self.node) and self.node["type"] == "ArrowFunctionExpression"

    @property
    def params(self) -> list[dict]:
        if self.node is None or self.is_module:
            return []
        return self.node.get("params") or []

    @property
    def body(self) -> list[dict]:
        if self.node is None:
            return []
        if self.is_module:
            return self.node["body"]
        b = self.node["body"]
        if b["type"] == "BlockStatement":
            return b["body"]
        return [{"type": "ReturnStatement", "argument": b, "range": b.get("range")}]


def _declare_in(fi: FuncInfo, node: dict) -> None:
    """Record declarations of ``node``'s own body (not nested functions)."""
    stack = list(children(node)) if not fi.is_module else list(node["body"])
    if not fi.is_module:
        for p in fi.params:
            fi.declared.update(pattern_names(p))
        if node["type"] == "FunctionExpression" and node.get("id"):
            fi.declared.add(node["id"]["name"])
        stack = [node["body"]]
    while stack:
        n = stack.pop()
        t = n["type"]
        if t == "VariableDeclaration":
            for d in n["declarations"]:
                fi.declared.update(pattern_names(d["id"]))
        elif t in ("FunctionDeclaration", "ClassDeclaration"):
            if n.get("id"):
                fi.declared.add(n["id"]["name"])
            continue
        elif t == "CatchClause" and n.get("param"):
            fi.declared.update(pattern_names(n["param"]))
        elif t == "ImportDeclaration":
            for s in n["specifiers"]:
                fi.declared.add(s["local"]["name"])
            continue
        if t in FUNCTION_TYPES or t == "ClassExpression":
            continue
        stack.extend(children(n))


class FunctionIndex:
    """Every function literal and module body of a set of parsed files."""

    def __init__(self, asts: Mapping[str, ScriptAst]):
        self.asts = dict(asts)
        self.funcs: dict[FKey, FuncInfo] = {}
        self.by_node: dict[int, FuncInfo] = {}
        self.modules: dict[str, FuncInfo] = {}
        self.main = FuncInfo(("<main>", 0, 0), "<main>", None, None, "dummyMain", fid=MAIN)
        self.funcs[self.main.key] = self.main
        for path in sorted(self.asts):
            self._index_file(self.asts[path])

    def _index_file(self, ast: ScriptAst) -> None:
        mod = FuncInfo((ast.path, -1, -1), ast.path, ast.root, None, "<module>", is_module=True)
        _declare_in(mod, ast.root)
        self.funcs[mod.key] = mod
        self.modules[ast.path] = mod
        self.by_node[id(ast.root)] = mod
        # walk with a naming context: (node, enclosing func, suggested name)
        stack: list[tuple[dict, FuncInfo, str]] = [(c, mod, "") for c in reversed(ast.root["body"])]
        anon = 0
        while stack:
            node, encl, hint = stack.pop()
            t = node["type"]
            cur = encl
            if t in FUNCTION_TYPES:
                s, e = span(node)
                name = (node.get("id") or {}).get("name") or hint
                if not name:
                    anon += 1
                    name = f"<anon{anon}>"
                line, col = ast.line_col(s)
                fi = FuncInfo((ast.path, s, e), ast.path, node, encl, name, line=line, col=col)
                _declare_in(fi, node)
                self.funcs[fi.key] = fi
                self.by_node[id(node)] = fi
                cur = fi
            # name hints for direct children
            hints: dict[int, str] = {}
            if t == "Property" or t == "MethodDefinition":
                pn = prop_name(node)
                if pn is not None:
                    hints[id(node["value"])] = pn
            elif t == "VariableDeclarator" and node["id"]["type"] == "Identifier" and node.get("init"):
                hints[id(node["init"])] = node["id"]["name"]
            elif t == "AssignmentExpression":
                left = node["left"]
                if left["type"] == "Identifier":
                    hints[id(node["right"])] = left["name"]
                elif left["type"] == "MemberExpression":
                    mn = member_name(left)
                    if mn:
                        hints[id(node["right"])] = mn
            for c in reversed(list(children(node))):
                stack.append((c, cur, hints.get(id(c), "")))

    def info(self, node: dict) -> FuncInfo | None:
        return self.by_node.get(id(node))

    def assign_ids(self) -> None:
        """Derive stable FunctionIds once owners are known."""
        for fi in self.funcs.values():
            if fi is self.main:
                continue
            if not fi.owner:
                p = fi.parent
                while p is not None and not p.owner:
                    p = p.parent
                if p is not None:
                    fi.owner = p.owner
        counts: dict[tuple[str, str, str], int] = {}
        for fi in self.funcs.values():
            counts[(fi.file, fi.owner, fi.name)] = counts.get((fi.file, fi.owner, fi.name), 0) + 1
        for fi in self.funcs.values():
            if fi is self.main:
                continue
            name = fi.name
            if counts[(fi.file, fi.owner, fi.name)] > 1 and not fi.is_module:
                name = f"{name}@{fi.line}:{fi.col}"
            fi.fid = FunctionId(fi.file, fi.owner, name)

    def ordered(self) -> list[FuncInfo]:
        return sorted(self.funcs.values(), key=lambda f: (f.file, f.key[1], f.key[2]))


def resolve_module(ref: str, from_file: str, known: Mapping[str, object]) -> str | None:
    """Resolve a literal require/import path to a parsed script path."""
    if not isinstance(ref, str) or not ref:
        return None
    if ref.startswith("/"):
        bases = [ref.lstrip("/")]
    elif ref.startswith("."):
        bases = [posixpath.join(posixpath.dirname(from_file), ref)]
    else:
        bases = [posixpath.join(posixpath.dirname(from_file), ref), ref,
                 posixpath.join("miniprogram_npm", ref)]
    for b in bases:
        b = posixpath.normpath(b)
        for cand in (b, b + SCRIPT_EXT, posixpath.join(b, "index.js")):
            if cand in known:
                return cand
    return None


# ---------------------------------------------------------------------------
# registration models

@dataclass
class PageModel:
    route: str  # page route, "app", or component path
    file: str
    kind: str = "page"  # page | app | component
    lifecycle_fns: dict[str, FunctionId] = field(default_factory=dict)
    handlers: dict[str, FunctionId] = field(default_factory=dict)
    data_fields: set[str] = field(default_factory=set)
    registered: bool = True
    # internal: registration object literal and where its methods live
    obj_node: dict | None = field(default=None, repr=False)
    alias_nodes: dict[int, tuple] = field(default_factory=dict, repr=False)
    method_keys: dict[str, FKey] = field(default_factory=dict, repr=False)
    lifecycle_keys: dict[str, FKey] = field(default_factory=dict, repr=False)


AppModel = PageModel


@dataclass
class ScriptModels:
    app: PageModel | None
    pages: list[PageModel]
    components: list[PageModel]
    index: FunctionIndex
    warnings: list[str] = field(default_factory=list)
    parse_errors: dict[str, str] = field(default_factory=dict)

    @property
    def free_functions(self) -> list[FunctionId]:
        return [f.fid for f in self.index.ordered()
                if not f.owner and not f.is_module and f is not self.index.main]

    def owners(self) -> list[PageModel]:
        return ([self.app] if self.app else []) + self.pages + self.components

    def page(self, route: str) -> PageModel | None:
        for m in self.pages:
            if m.route == route:
                return m
        return None

    def __iter__(self):  # (app, pages) unpacking
        return iter((self.app, self.pages))


def _registration_calls(root: dict) -> Iterator[tuple[str, dict]]:
    for n in walk(root):
        if n["type"] != "CallExpression":
            continue
        c = n["callee"]
        if c["type"] == "Identifier" and c["name"] in ("App", "Page", "Component"):
            yield c["name"], n


def _object_arg(call: dict, mod_decls: dict[str, dict]) -> dict | None:
    if not call["arguments"]:
        return None
    a = call["arguments"][0]
    if a["type"] == "ObjectExpression":
        return a
    if a["type"] == "Identifier" and a["name"] in mod_decls:
        return mod_decls[a["name"]]
    return None


def _module_object_decls(root: dict) -> dict[str, dict]:
    out = {}
    for st in root["body"]:
        if st["type"] == "VariableDeclaration":
            for d in st["declarations"]:
                if d["id"]["type"] == "Identifier" and d.get("init") and d["init"]["type"] == "ObjectExpression":
                    out[d["id"]["name"]] = d["init"]
    return out


def _module_function_decls(root: dict) -> dict[str, dict]:
    out = {}
    for st in root["body"]:
        if st["type"] == "FunctionDeclaration" and st.get("id"):
            out[st["id"]["name"]] = st
        elif st["type"] == "VariableDeclaration":
            for d in st["declarations"]:
                if d["id"]["type"] == "Identifier" and is_function(d.get("init")):
                    out[d["id"]["name"]] = d["init"]
    return out


def extract_models(asts: Mapping[str, ScriptAst], pkg: SubAppPackage,
                   parse_errors: Mapping[str, str] | None = None) -> ScriptModels:
    """App/Page/Component registrations of a package."""
    index = FunctionIndex(asts)
    warnings: list[str] = []
    owner_of_file: dict[str, tuple[str, str]] = {"app.js": ("app", "app")}
    for p in pkg.pages:
        owner_of_file[p.logic_path] = (p.route, "page")
    for path, comp in pkg.components.items():
        if comp.script is not None:
            owner_of_file[path + SCRIPT_EXT] = (path, "component")

    app: PageModel | None = None
    pages: dict[str, PageModel] = {}
    comps: dict[str, PageModel] = {}

    for path in sorted(asts):
        ast = asts[path]
        owner, expected = owner_of_file.get(path, (path.removesuffix(SCRIPT_EXT), ""))
        objs = _module_object_decls(ast.root)
        fdecls = _module_function_decls(ast.root)
        for kind, call in _registration_calls(ast.root):
            kind = kind.lower()
            obj = _object_arg(call, objs)
            if obj is None:
                warnings.append(f"{path}: {kind.title()}() without an object literal")
                continue
            table = {"app": None, "page": pages, "component": comps}[kind]
            if kind == "app":
                if app is not None:
                    warnings.append(f"{path}: duplicate App registration ignored")
                    continue
                model_owner = "app"
            else:
                model_owner = owner if expected in (kind, "") or kind == "component" else owner
                if model_owner in table:
                    warnings.append(f"{path}: duplicate {kind.title()} registration for {model_owner}, first kept")
                    continue
            model = PageModel(model_owner, path, kind, obj_node=obj)
            _fill_model(model, obj, index, fdecls, warnings)
            if kind == "app":
                app = model
            else:
                table[model_owner] = model

    for p in pkg.pages:
        if p.route not in pages and p.logic_path in asts:
            warnings.append(f"page {p.route}: no Page registration")
            pages[p.route] = PageModel(p.route, p.logic_path, "page", registered=False)
        elif p.route not in pages:
            warnings.append(f"page {p.route}: excluded from flow analysis (parse failure)")
    index.assign_ids()
    for m in [app, *pages.values(), *comps.values()]:
        if m is None:
            continue
        m.lifecycle_fns = {k: index.funcs[v].fid for k, v in m.lifecycle_keys.items()}
        m.handlers = {k: index.funcs[v].fid for k, v in m.method_keys.items()
                      if k not in m.lifecycle_keys}
    order = {p.route: i for i, p in enumerate(pkg.pages)}
    page_list = sorted(pages.values(), key=lambda m: (order.get(m.route, len(order)), m.route))
    return ScriptModels(app, page_list, [comps[k] for k in sorted(comps)], index, warnings,
                        dict(parse_errors or {}))


def _fill_model(model: PageModel, obj: dict, index: FunctionIndex,
                fdecls: dict[str, dict], warnings: list[str]) -> None:
    owner = model.route
    lifecycle = {"app": APP_LIFECYCLE, "page": PAGE_LIFECYCLE, "component": COMPONENT_LIFECYCLE}[model.kind]
    model.alias_nodes[id(obj)] = ("owner", owner)

    def fn_of(value: dict) -> FuncInfo | None:
        if is_function(value):
            return index.info(value)
        if value["type"] == "Identifier" and value["name"] in fdecls:
            return index.info(fdecls[value["name"]])
        return None

    def take(o: dict, lifecycle_names, prefix: str = "", methods_ok: bool = True) -> None:
        for prop in o["properties"]:
            if prop["type"] != "Property":
                continue
            name = prop_name(prop)
            if name is None:
                warnings.append(f"{model.file}: unresolved computed key in {model.kind} {owner}")
                continue
            value = prop["value"]
            fi = fn_of(value)
            if fi is None:
                continue
            if not fi.owner:
                fi.owner = owner
            fi.this_owner = owner
            key = prefix + name
            if name in lifecycle_names:
                model.lifecycle_keys.setdefault(key, fi.key)
                model.method_keys.setdefault(key, fi.key)
            elif methods_ok:
                if key in model.method_keys:
                    warnings.append(f"{model.file}: duplicate handler {key} in {owner}")
                    continue
                model.method_keys[key] = fi.key

    for prop in obj["properties"]:
        if prop["type"] != "Property":
            continue
        name = prop_name(prop)
        value = prop["value"]
        if name in ("data", "globalData") and value["type"] == "ObjectExpression":
            if name == "data":
                model.alias_nodes[id(value)] = ("data", owner)
            model.data_fields.update(n for n in (prop_name(p) for p in value["properties"]
                                                  if p["type"] == "Property") if n)
        if model.kind == "component" and value["type"] == "ObjectExpression":
            if name == "methods":
                model.alias_nodes[id(value)] = ("owner", owner)
                take(value, ())
            elif name == "lifetimes":
                take(value, COMPONENT_LIFECYCLE, methods_ok=False)
            elif name == "pageLifetimes":
                take(value, PAGE_LIFETIMES, "page.", methods_ok=False)
    take(obj, lifecycle)


# ---------------------------------------------------------------------------
# call graph

EDGE_TAGS = ("call", "entry", "binding", "module", "callback", "callback_ref", "listener", "opaque")


@dataclass(frozen=True, order=True)
class CallEdge:
    caller: FunctionId
    callee: FunctionId
    span: tuple[int, int]
    tag: str = "call"
    file: str = ""  # file of the call site


@dataclass
class CallGraph:
    nodes: list[FunctionId]
    edges: list[CallEdge]
    entry: FunctionId = MAIN
    unresolved_calls: list[tuple[FunctionId, tuple[int, int], str]] = field(default_factory=list)
    unresolved_bindings: list[str] = field(default_factory=list)
    unreached: list[FunctionId] = field(default_factory=list)
    program: object = field(default=None, repr=False, compare=False)

    def successors(self, fid: FunctionId) -> list[FunctionId]:
        return sorted({e.callee for e in self.edges if e.caller == fid})

    def reachable(self) -> set[FunctionId]:
        succ: dict[FunctionId, set[FunctionId]] = {}
        for e in self.edges:
            succ.setdefault(e.caller, set()).add(e.callee)
        seen = {self.entry}
        todo = [self.entry]
        while todo:
            f = todo.pop()
            for g in succ.get(f, ()):
                if g not in seen:
                    seen.add(g)
                    todo.append(g)
        return seen

    def edges_tagged(self, *tags: str) -> list[CallEdge]:
        return [e for e in self.edges if e.tag in tags]

    def to_dot(self) -> str:
        lines = ["digraph callgraph {"]
        for n in self.nodes:
            lines.append(f'  "{n}";')
        for e in self.edges:
            lines.append(f'  "{e.caller}" -> "{e.callee}" [label="{e.tag}@{e.span[0]}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_call_graph(models: ScriptModels, asts: Mapping[str, ScriptAst] | None = None,
                     bindings=(), tax=None) -> CallGraph:
    """Lifecycle-aware call graph rooted at a synthetic main loader."""
    from .interp import Program
    from .taxonomy import load_taxonomy

    prog = Program(models, tax if tax is not None else load_taxonomy())
    prog.add_entries(bindings)
    prog.solve()
    return prog.call_graph()
