"""Flow-insensitive abstract interpreter over the parsed scripts.

One engine serves both the call graph (which functions hold which function
values, what is invoked from where) and taint propagation (which labels
reach which locations).  The abstract state maps locations to

* a set of abstract elements (functions, owners, page data, objects,
  modules, factory results, promises), and
* a set of integer taint labels (indices into the source list).

Locations are ``("b", scope, name)`` for bindings, ``("p", elem, name)``
for properties and ``("r", fkey)`` for function returns.  Everything is
monotone, so iterating all reachable function bodies until nothing changes
terminates.

Objects are tracked per allocation site.  Reading a property of a value
also yields the value's own labels (field-insensitive reads); writes go to
the named property (page-data writes therefore stay per field).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .script import (
    FUNCTION_TYPES, MAIN, CallEdge, CallGraph, FuncInfo, ScriptModels,
    children, member_name, pattern_names, prop_name, resolve_module, span, walk,
)
from .taxonomy import CallbackStyle, Taxonomy

log = logging.getLogger(__name__)

GLOBAL = "<global>"
CALLBACK_KEYS = ("success", "fail", "complete")
PROMISE_METHODS = ("then", "catch", "finally")
# containers never looked into when collecting deep taint
_OPAQUE_ELEMS = ("fn", "owner", "mod", "factory", "resolve")


class AV:
    """Abstract value: elements plus taint labels."""

    __slots__ = ("elems", "labels")

    def __init__(self, elems=(), labels=()):
        self.elems = set(elems)
        self.labels = set(labels)

    def __or__(self, other: "AV") -> "AV":
        return AV(self.elems | other.elems, self.labels | other.labels)

    def only_labels(self) -> "AV":
        return AV((), self.labels)

    def __repr__(self) -> str:
        return f"AV({sorted(map(str, self.elems))}, {sorted(self.labels)})"


def _union(avs) -> AV:
    out = AV()
    for a in avs:
        out.elems |= a.elems
        out.labels |= a.labels
    return out


@dataclass
class SubApiSite:
    api: str
    fkey: tuple
    file: str
    span: tuple[int, int]
    callbacks: list[tuple[str, tuple]] = field(default_factory=list)  # (key, callee fkey)
    literal_keys: set[str] = field(default_factory=set)  # success/fail/complete given as literals
    bound_to: str = ""  # variable receiving the return value


@dataclass
class SinkSite:
    api: str
    fkey: tuple
    file: str
    span: tuple[int, int]
    url: str = ""


class Program:
    def __init__(self, models: ScriptModels, tax: Taxonomy):
        self.models = models
        self.tax = tax
        self.index = models.index
        self.funcs = self.index.funcs
        self.vals: dict[tuple, set] = {}
        self.taint: dict[tuple, set[int]] = {}
        self.props_of: dict[tuple, set[str]] = {}
        self.writer: dict[tuple, tuple] = {}
        self.via: dict[tuple, tuple] = {}  # (fkey, label) -> (pred fkey | None, span, file)
        self.edges: set[tuple] = set()  # (caller, callee, file, span, tag)
        self.reachable: set[tuple] = {self.index.main.key}
        self.roots: list[tuple] = []
        self.subapi_sites: dict[tuple, SubApiSite] = {}
        self.sink_sites: dict[tuple, SinkSite] = {}
        self.sink_labels: dict[tuple, set[int]] = {}
        self.call_labels: dict[tuple, set[int]] = {}
        self.unresolved: dict[tuple, tuple] = {}
        self.unresolved_bindings: list[str] = []
        self.imports: dict[tuple, tuple[str, str]] = {}
        self.aliases: dict[int, tuple] = {}
        self.passes = 0
        self.history: list[int] | None = None
        self.changed = False
        for m in models.owners():
            self.aliases.update(m.alias_nodes)
        self._collect_imports()

    # -- copying -------------------------------------------------------

    def fork(self) -> "Program":
        new = Program.__new__(Program)
        new.__dict__.update(self.__dict__)
        new.vals = {k: set(v) for k, v in self.vals.items()}
        new.taint = {k: set(v) for k, v in self.taint.items()}
        new.props_of = {k: set(v) for k, v in self.props_of.items()}
        new.writer = dict(self.writer)
        new.via = dict(self.via)
        new.edges = set(self.edges)
        new.reachable = set(self.reachable)
        new.subapi_sites = {k: SubApiSite(v.api, v.fkey, v.file, v.span, list(v.callbacks),
                                          set(v.literal_keys), v.bound_to)
                            for k, v in self.subapi_sites.items()}
        new.sink_sites = dict(self.sink_sites)
        new.sink_labels = {k: set(v) for k, v in self.sink_labels.items()}
        new.call_labels = {k: set(v) for k, v in self.call_labels.items()}
        new.unresolved = dict(self.unresolved)
        new.history = None
        return new

    # -- setup ---------------------------------------------------------

    def _collect_imports(self) -> None:
        known = self.index.modules
        for path, mod in known.items():
            for st in mod.node["body"]:
                if st["type"] != "ImportDeclaration":
                    continue
                target = resolve_module(st["source"]["value"], path, known)
                if target is None:
                    continue
                for s in st["specifiers"]:
                    local = s["local"]["name"]
                    if s["type"] == "ImportDefaultSpecifier":
                        imported = "default"
                    elif s["type"] == "ImportNamespaceSpecifier":
                        imported = "*"
                    else:
                        imported = s["imported"]["name"]
                    self.imports[(mod.key, local)] = (target, imported)

    def add_entries(self, bindings=()) -> None:
        """Implicit edges from the main loader."""
        main = self.index.main.key
        m = self.models
        root_files = []
        if m.app is not None:
            root_files.append(m.app.file)
        root_files += [p.file for p in m.pages] + [c.file for c in m.components]
        for f in sorted(set(root_files)):
            mod = self.index.modules.get(f)
            if mod is not None:
                self._edge(main, mod.key, f, (0, 0), "module")
        for owner in m.owners():
            for name, key in owner.lifecycle_keys.items():
                self._edge(main, key, owner.file, (0, 0), "entry")
        by_owner = {o.route: o for o in m.owners()}
        for b in bindings:
            o = by_owner.get(b.owner)
            key = o.method_keys.get(b.handler) if o else None
            if key is None:
                self.unresolved_bindings.append(f"{b.owner}: {b.attr}={b.handler}")
                continue
            self._edge(main, key, b.owner, b.span, "binding")

    # -- state primitives ----------------------------------------------

    def _edge(self, caller, callee, file, sp, tag) -> None:
        e = (caller, callee, file, tuple(sp), tag)
        if e not in self.edges:
            self.edges.add(e)
            self.changed = True
        if callee not in self.reachable:
            self.reachable.add(callee)
            self.changed = True

    def write(self, loc: tuple, av: AV, writer: tuple) -> None:
        if loc[0] == "imp":
            return
        if loc[0] == "p":
            self.props_of.setdefault(loc[1], set()).add(loc[2])
        if av.elems:
            cur = self.vals.setdefault(loc, set())
            if not av.elems <= cur:
                cur |= av.elems
                self.changed = True
        if av.labels:
            cur = self.taint.setdefault(loc, set())
            new = av.labels - cur
            if new:
                cur |= new
                self.changed = True
                for lab in new:
                    self.writer[(loc, lab)] = writer

    def read(self, loc: tuple, ctx: "Ctx", sp=None) -> AV:
        if loc[0] == "imp":
            return self._read_import(loc, ctx, sp)
        labels = self.taint.get(loc, ())
        for lab in labels:
            k = (ctx.fk, lab)
            if k not in self.via:
                w = self.writer.get((loc, lab))
                if w is not None and w != ctx.fk:
                    self.via[k] = (w, sp or (0, 0), ctx.file)
        return AV(self.vals.get(loc, ()), labels)

    def seed(self, fk: tuple, labels, sp, file: str) -> None:
        for lab in labels:
            self.via.setdefault((fk, lab), (None, sp, file))

    # -- scopes --------------------------------------------------------

    def resolve(self, name: str, fi: FuncInfo) -> tuple:
        if name == "arguments":
            p = fi
            while p is not None and p.is_arrow:
                p = p.parent
            if p is not None and not p.is_module:
                return ("b", p.key, "arguments")
        p = fi
        while p is not None:
            if name in p.declared:
                if p.is_module and (p.key, name) in self.imports:
                    target, imported = self.imports[(p.key, name)]
                    return ("imp", target, imported)
                return ("b", p.key, name)
            p = p.parent
        return ("b", GLOBAL, name)

    def _read_import(self, loc, ctx, sp) -> AV:
        _, target, imported = loc
        mod = ("mod", target)
        if imported == "*":
            return AV({mod}) | self.read(("p", mod, "<exports>"), ctx, sp)
        if imported == "default":
            return self.read(("p", mod, "default"), ctx, sp) | self.read(("p", mod, "<exports>"), ctx, sp)
        return self.read_prop(mod, imported, ctx, sp)

    def this_av(self, fi: FuncInfo, ctx) -> AV:
        p = fi
        while p is not None and p.is_arrow:
            p = p.parent
        if p is None or p.is_module:
            return AV()
        if p.this_owner is not None:
            return AV({("owner", p.this_owner)})
        return self.read(("b", p.key, "<this>"), ctx)

    # -- properties ----------------------------------------------------

    def read_prop(self, elem: tuple, name: str | None, ctx, sp=None, _seen=None) -> AV:
        kind = elem[0]
        if kind == "owner" and name == "data":
            return AV({("data", elem[1])})
        if kind in ("factory", "resolve"):
            return AV()
        if name is None:
            names = set(self.props_of.get(elem, ())) | {"*"}
        else:
            names = {name, "*"}
        out = _union(self.read(("p", elem, n), ctx, sp) for n in sorted(names) if n != "<exports>" or name is None)
        if kind == "mod":
            _seen = _seen or set()
            _seen.add(elem)
            for x in sorted(self.vals.get(("p", elem, "<exports>"), ()), key=repr):
                if x not in _seen:
                    _seen.add(x)
                    out |= self.read_prop(x, name, ctx, sp, _seen)
        return out

    def member_of(self, av: AV, name: str | None, ctx, sp=None) -> AV:
        out = AV((), av.labels)
        for e in sorted(av.elems, key=repr):
            out |= self.read_prop(e, name, ctx, sp)
        return out

    def deep(self, av: AV, ctx, sp=None) -> set[int]:
        labels = set(av.labels)
        seen = set()
        todo = list(av.elems)
        while todo:
            e = todo.pop()
            if e in seen or e[0] in _OPAQUE_ELEMS:
                continue
            seen.add(e)
            v = self.read_prop(e, None, ctx, sp)
            labels |= v.labels
            todo.extend(v.elems)
        return labels

    # -- the fixpoint --------------------------------------------------

    def solve(self, max_passes: int = 10000, record: bool = False) -> int:
        if record:
            self.history = []
        passes = 0
        while True:
            self.changed = False
            for fk in sorted(self.reachable, key=lambda k: (str(k[0]), k[1], k[2])):
                fi = self.funcs[fk]
                if fi.node is None:
                    continue
                try:
                    Ctx(self, fi).run()
                except RecursionError:
                    log.warning("%s: expression nesting too deep, skipped", fi.fid)
            passes += 1
            if self.history is not None:
                self.history.append(sum(len(v) for v in self.taint.values()))
            if not self.changed or passes >= max_passes:
                break
        self.passes = passes
        return passes

    # -- results -------------------------------------------------------

    def call_graph(self) -> CallGraph:
        fid = lambda k: self.funcs[k].fid  # noqa: E731
        edges = sorted({CallEdge(fid(c), fid(d), sp, tag, f) for c, d, f, sp, tag in self.edges})
        nodes = sorted(fid(k) for k in self.reachable)
        unreached = sorted(f.fid for f in self.funcs.values()
                           if f.key not in self.reachable and not f.is_module and f.node is not None)
        unresolved = sorted((fid(fk), sp, text) for (file, sp), (fk, text) in self.unresolved.items())
        return CallGraph(nodes, edges, MAIN, unresolved, list(self.unresolved_bindings), unreached, self)


class Ctx:
    """Evaluation of one function body against the shared state."""

    def __init__(self, prog: Program, fi: FuncInfo):
        self.p = prog
        self.fi = fi
        self.fk = fi.key
        self.file = fi.file

    def run(self) -> None:
        self._hoist(self.fi)
        for st in self.fi.body:
            self.exec(st)

    def _hoist(self, fi: FuncInfo) -> None:
        """Bind function declarations of this body to their names."""
        stack = list(fi.body)
        while stack:
            n = stack.pop()
            t = n["type"]
            if t == "FunctionDeclaration":
                inner = self.p.index.info(n)
                if inner is not None and n.get("id"):
                    self.p.write(("b", fi.key, n["id"]["name"]), AV({("fn", inner.key)}), self.fk)
                continue
            if t in FUNCTION_TYPES or t in ("ClassExpression", "ClassDeclaration"):
                continue
            if t in ("ExportNamedDeclaration", "ExportDefaultDeclaration") and n.get("declaration"):
                stack.append(n["declaration"])
                continue
            if t.endswith("Statement") or t in ("SwitchCase", "CatchClause", "Program"):
                stack.extend(children(n))
        if not fi.is_module and fi.node.get("type") == "FunctionExpression" and fi.node.get("id"):
            self.p.write(("b", fi.key, fi.node["id"]["name"]), AV({("fn", fi.key)}), self.fk)

    # -- statements ----------------------------------------------------

    def exec(self, n: dict | None) -> None:
        if n is None:
            return
        t = n["type"]
        if t == "ExpressionStatement":
            self.ev(n["expression"])
        elif t == "VariableDeclaration":
            for d in n["declarations"]:
                if d.get("init") is not None:
                    self.bind(d["id"], self.ev(d["init"]), self.fi, span(d))
        elif t == "ReturnStatement":
            if n.get("argument") is not None:
                self.p.write(("r", self.fk), self.ev(n["argument"]), self.fk)
        elif t in ("BlockStatement", "Program"):
            for s in n["body"]:
                self.exec(s)
        elif t == "IfStatement":
            self.ev(n["test"])
            self.exec(n["consequent"])
            self.exec(n.get("alternate"))
        elif t == "ForStatement":
            init = n.get("init")
            if init is not None:
                self.exec(init) if init["type"] == "VariableDeclaration" else self.ev(init)
            if n.get("test"):
                self.ev(n["test"])
            if n.get("update"):
                self.ev(n["update"])
            self.exec(n["body"])
        elif t in ("ForInStatement", "ForOfStatement"):
            right = self.ev(n["right"])
            if t == "ForOfStatement":
                item = self.p.member_of(right, "*", self, span(n))
            else:
                item = AV((), right.labels)
            left = n["left"]
            if left["type"] == "VariableDeclaration":
                self.bind(left["declarations"][0]["id"], item, self.fi, span(n))
            else:
                self.assign(left, item, span(n))
            self.exec(n["body"])
        elif t in ("WhileStatement", "DoWhileStatement"):
            self.ev(n["test"])
            self.exec(n["body"])
        elif t == "TryStatement":
            self.exec(n["block"])
            if n.get("handler"):
                self.exec(n["handler"]["body"])
            self.exec(n.get("finalizer"))
        elif t == "SwitchStatement":
            self.ev(n["discriminant"])
            for c in n["cases"]:
                if c.get("test"):
                    self.ev(c["test"])
                for s in c["consequent"]:
                    self.exec(s)
        elif t == "LabeledStatement":
            self.exec(n["body"])
        elif t == "ThrowStatement":
            self.ev(n["argument"])
        elif t == "ExportNamedDeclaration":
            self._export_named(n)
        elif t == "ExportDefaultDeclaration":
            d = n["declaration"]
            if d["type"] == "FunctionDeclaration":
                inner = self.p.index.info(d)
                val = AV({("fn", inner.key)}) if inner else AV()
            elif d["type"] == "ClassDeclaration":
                val = AV()
            else:
                val = self.ev(d)
            self.p.write(("p", ("mod", self.file), "default"), val, self.fk)
        elif t in ("ImportDeclaration", "ExportAllDeclaration"):
            self._import_edge(n)
        elif t in ("FunctionDeclaration", "ClassDeclaration", "EmptyStatement",
                   "BreakStatement", "ContinueStatement", "DebuggerStatement"):
            pass
        else:
            self.opaque(n)

    def _export_named(self, n: dict) -> None:
        mod = ("mod", self.file)
        d = n.get("declaration")
        if d is not None:
            self.exec(d)
            names = []
            if d["type"] == "VariableDeclaration":
                for decl in d["declarations"]:
                    names += pattern_names(decl["id"])
            elif d.get("id"):
                names.append(d["id"]["name"])
            for name in names:
                self.p.write(("p", mod, name), self.p.read(self.p.resolve(name, self.fi), self), self.fk)
        if n.get("source") is not None:
            self._import_edge(n)
            target = resolve_module(n["source"]["value"], self.file, self.p.index.modules)
            for s in n.get("specifiers") or [] if target else []:
                val = self.p.read_prop(("mod", target), s["local"]["name"], self)
                self.p.write(("p", mod, s["exported"]["name"]), val, self.fk)
            return
        for s in n.get("specifiers") or []:
            val = self.p.read(self.p.resolve(s["local"]["name"], self.fi), self)
            self.p.write(("p", mod, s["exported"]["name"]), val, self.fk)

    def opaque(self, n: dict) -> AV:
        """Unsupported construct: every identifier it mentions gets the
        union of the taint it reads."""
        labels: set[int] = set()
        for c in children(n):
            if c["type"].endswith("Statement") or c["type"].endswith("Declaration"):
                self.exec(c)
            else:
                v = self.ev(c)
                labels |= self.p.deep(v, self)
        if labels:
            for x in walk(n):
                if x["type"] == "Identifier":
                    self.p.write(self.p.resolve(x["name"], self.fi), AV((), labels), self.fk)
        return AV((), labels)

    # -- binding and assignment ---------------------------------------

    def bind(self, pat: dict, av: AV, scope: FuncInfo, sp, writer=None) -> None:
        writer = writer or self.fk
        t = pat["type"]
        if t == "Identifier":
            self.p.write(self.p.resolve(pat["name"], scope), av, writer)
        elif t == "ObjectPattern":
            for prop in pat["properties"]:
                if prop["type"] == "RestElement":
                    self.bind(prop["argument"], av, scope, sp, writer)
                    continue
                name = prop_name(prop)
                if prop.get("computed") and name is None:
                    self.ev(prop["key"])
                self.bind(prop["value"], self.p.member_of(av, name, self, sp), scope, sp, writer)
        elif t == "ArrayPattern":
            item = self.p.member_of(av, "*", self, sp)
            for el in pat["elements"]:
                if el is not None:
                    self.bind(el, item, scope, sp, writer)
        elif t == "AssignmentPattern":
            self.bind(pat["left"], av | self.ev(pat["right"]), scope, sp, writer)
        elif t == "RestElement":
            self.bind(pat["argument"], av, scope, sp, writer)
        elif t == "MemberExpression":
            self.assign(pat, av, sp)

    def _module_target(self, node: dict) -> tuple | None:
        """``module.exports`` / ``exports`` at an assignment target."""
        if node["type"] == "Identifier" and node["name"] == "exports" \
                and self.p.resolve("exports", self.fi)[1] == GLOBAL:
            return ("mod", self.file)
        if node["type"] == "MemberExpression" and node["object"]["type"] == "Identifier" \
                and node["object"]["name"] == "module" and member_name(node) == "exports" \
                and self.p.resolve("module", self.fi)[1] == GLOBAL:
            return ("mod", self.file)
        return None

    def assign(self, target: dict, av: AV, sp) -> None:
        t = target["type"]
        if t == "Identifier":
            self.p.write(self.p.resolve(target["name"], self.fi), av, self.fk)
            return
        if t != "MemberExpression":
            self.bind(target, av, self.fi, sp)
            return
        name = member_name(target)
        if target.get("computed") and name is None:
            self.ev(target["property"])
        mod = self._module_target(target)
        if mod is not None:  # module.exports = ...
            self.p.write(("p", mod, "<exports>"), av, self.fk)
            return
        base_mod = self._module_target(target["object"])
        if base_mod is not None:
            self.p.write(("p", base_mod, name or "*"), av, self.fk)
            return
        obj = self.ev(target["object"])
        wrote = False
        for e in sorted(obj.elems, key=repr):
            if e[0] in ("factory", "resolve"):
                continue
            self.p.write(("p", e, name or "*"), av, self.fk)
            wrote = True
        if not wrote and av.labels:
            # unknown receiver: fall back to tainting the root binding
            root = target["object"]
            while root["type"] == "MemberExpression":
                root = root["object"]
            if root["type"] == "Identifier":
                self.p.write(self.p.resolve(root["name"], self.fi), av.only_labels(), self.fk)

    # -- expressions ---------------------------------------------------

    def ev(self, n: dict | None) -> AV:
        if n is None:
            return AV()
        t = n["type"]
        m = getattr(self, "ev_" + t, None)
        if m is not None:
            return m(n)
        return self.opaque(n)

    def ev_Identifier(self, n):
        name = n["name"]
        if name == "undefined":
            return AV()
        loc = self.p.resolve(name, self.fi)
        if loc[1] == GLOBAL and name == "exports":
            return AV({("mod", self.file)})
        return self.p.read(loc, self, span(n))

    def ev_Literal(self, n):
        return AV()

    def ev_ThisExpression(self, n):
        return self.p.this_av(self.fi, self)

    def ev_Super(self, n):
        return AV()

    def ev_MetaProperty(self, n):
        return AV()

    def ev_TemplateLiteral(self, n):
        out = AV()
        for e in n["expressions"]:
            out.labels |= self.p.deep(self.ev(e), self, span(e))
        return out

    def ev_TaggedTemplateExpression(self, n):
        self.ev(n["tag"])
        return self.ev(n["quasi"])

    def ev_ArrayExpression(self, n):
        elem = self.p.aliases.get(id(n)) or ("obj", self.file, span(n)[0])
        for el in n["elements"]:
            if el is None:
                continue
            v = self.ev(el)
            if el["type"] == "SpreadElement":
                v = self.p.member_of(v, "*", self, span(el))
            self.p.write(("p", elem, "*"), v, self.fk)
        self.p.props_of.setdefault(elem, set())
        return AV({elem})

    def ev_ObjectExpression(self, n):
        elem = self.p.aliases.get(id(n)) or ("obj", self.file, span(n)[0])
        self.p.props_of.setdefault(elem, set())
        for prop in n["properties"]:
            if prop["type"] == "SpreadElement":
                src = self.ev(prop["argument"])
                self.p.write(("p", elem, "*"), AV((), self.p.deep(src, self)), self.fk)
                for e in src.elems:
                    for k in sorted(self.p.props_of.get(e, ())):
                        self.p.write(("p", elem, k), self.p.read(("p", e, k), self), self.fk)
                continue
            name = prop_name(prop)
            if name is None:
                self.ev(prop["key"])
                name = "*"
            self.p.write(("p", elem, name), self.ev(prop["value"]), self.fk)
        return AV({elem})

    def ev_FunctionExpression(self, n):
        fi = self.p.index.info(n)
        return AV({("fn", fi.key)}) if fi else AV()

    ev_ArrowFunctionExpression = ev_FunctionExpression

    def ev_ClassExpression(self, n):
        return AV()

    def ev_UnaryExpression(self, n):
        v = self.ev(n["argument"])
        if n["operator"] in ("delete", "void"):
            return AV()
        return AV((), self.p.deep(v, self))

    def ev_UpdateExpression(self, n):
        self.ev(n["argument"])
        return AV()

    def ev_BinaryExpression(self, n):
        left, right = self.ev(n["left"]), self.ev(n["right"])
        if n["operator"] in ("==", "!=", "===", "!==", "<", ">", "<=", ">=", "instanceof", "in"):
            return AV((), left.labels | right.labels)
        return AV((), self.p.deep(left, self) | self.p.deep(right, self))

    def ev_LogicalExpression(self, n):
        return self.ev(n["left"]) | self.ev(n["right"])

    def ev_ConditionalExpression(self, n):
        self.ev(n["test"])
        return self.ev(n["consequent"]) | self.ev(n["alternate"])

    def ev_SequenceExpression(self, n):
        out = AV()
        for e in n["expressions"]:
            out = self.ev(e)
        return out

    def ev_AssignmentExpression(self, n):
        val = self.ev(n["right"])
        if n["operator"] != "=":
            val = AV(val.elems, self.p.deep(val, self) | self.p.deep(self.ev(n["left"]), self))
        self.assign(n["left"], val, span(n))
        return val

    def ev_SpreadElement(self, n):
        return self.ev(n["argument"])

    def ev_AwaitExpression(self, n):
        v = self.ev(n["argument"])
        out = AV((), v.labels)
        for e in v.elems:
            if e[0] == "prom":
                out |= self.p.read(("p", e, "<value>"), self, span(n))
            else:
                out.elems.add(e)
        return out

    def ev_YieldExpression(self, n):
        return self.ev(n.get("argument"))

    def ev_MemberExpression(self, n):
        name = member_name(n)
        if n.get("computed") and name is None:
            self.ev(n["property"])
        mod = self._module_target(n)
        if mod is not None:
            return AV({mod}) | self.p.read(("p", mod, "<exports>"), self, span(n))
        obj = n["object"]
        if obj["type"] == "Identifier" and obj["name"] == "wx" and self.p.resolve("wx", self.fi)[1] == GLOBAL:
            return AV()
        return self.p.member_of(self.ev(obj), name, self, span(n))

    def ev_NewExpression(self, n):
        callee = n["callee"]
        args = [self.ev(a) for a in n["arguments"]]
        if callee["type"] == "Identifier" and callee["name"] == "Promise" and args:
            return self._new_promise(n, args[0])
        fns = self.ev(callee)
        targets = [e for e in fns.elems if e[0] == "fn"]
        if targets:
            inst = ("obj", self.file, span(n)[0])
            self.p.props_of.setdefault(inst, set())
            for e in sorted(targets, key=repr):
                self.invoke(e[1], args, n, "call", this=AV({inst}))
            return AV({inst})
        return AV((), set().union(*(self.p.deep(a, self) for a in args)) if args else ())

    def _new_promise(self, n, executor: AV) -> AV:
        prom = ("prom", self.file, span(n)[0])
        res = ("resolve", self.file, span(n)[0])
        self.p.props_of.setdefault(prom, set())
        for e in sorted(executor.elems, key=repr):
            if e[0] == "fn":
                self.invoke(e[1], [AV({res}), AV()], n, "opaque")
        return AV({prom})

    # -- calls ---------------------------------------------------------

    def invoke(self, fkey, args: list[AV], site: dict, tag: str, this: AV | None = None) -> AV:
        fi = self.p.funcs[fkey]
        sp = span(site)
        self.p._edge(self.fk, fkey, self.file, sp, tag)
        params = fi.params
        for i, pat in enumerate(params):
            if pat["type"] == "RestElement":
                rest = _union(args[i:])
                arr = ("obj", fi.file, fi.key[1], "rest")
                self.p.write(("p", arr, "*"), rest, self.fk)
                self.bind(pat["argument"], AV({arr}), fi, sp)
                break
            if i < len(args):
                self.bind(pat, args[i], fi, sp)
        if not fi.is_arrow and args:
            self.p.write(("b", fkey, "arguments"), AV((), set().union(*(a.labels for a in args))), self.fk)
        if this is not None and this.elems:
            self.p.write(("b", fkey, "<this>"), AV(this.elems), self.fk)
        return self.p.read(("r", fkey), self, sp)

    def _subapi_of(self, callee: dict) -> tuple[str | None, AV | None, bool]:
        """(api name, receiver value, receiver-is-wx) for a member call."""
        if callee["type"] != "MemberExpression":
            return None, None, False
        name = member_name(callee)
        obj = callee["object"]
        if obj["type"] == "Identifier" and obj["name"] == "wx" and self.p.resolve("wx", self.fi)[1] == GLOBAL:
            return name, None, True
        if name is None:
            return None, None, False
        recv = self.ev(obj)
        for e in sorted(recv.elems, key=repr):
            if e[0] == "factory":
                return f"{e[1]}.{name}", recv, False
        return None, recv, False

    def ev_CallExpression(self, n):
        callee = n["callee"]
        sp = span(n)
        api, recv, is_wx = self._subapi_of(callee)
        if api is not None:
            args = [self.ev(a) for a in n["arguments"]]
            return self._subapi_call(n, api, args, is_wx)
        args = [self.ev(a) for a in n["arguments"]]
        if callee["type"] == "Identifier" and self.p.resolve(callee["name"], self.fi)[1] == GLOBAL:
            g = callee["name"]
            if g == "getApp":
                return AV({("owner", "app")})
            if g == "require":
                return self._require(n)
            if g in ("App", "Page", "Component", "Behavior", "getCurrentPages", "setTimeout",
                     "setInterval", "console"):
                for a in args:
                    self._call_fn_args(a, [], n)
                return AV()
        if callee["type"] == "Import":
            return self._require(n)

        mname = member_name(callee) if callee["type"] == "MemberExpression" else None
        if callee["type"] == "MemberExpression":
            if recv is None:
                recv = self.ev(callee["object"])
            fv = self.p.member_of(AV(recv.elems), mname, self, sp)
        else:
            fv = self.ev(callee)

        if mname == "setData" and any(e[0] == "owner" for e in recv.elems):
            self._set_data(n, recv, args)
            return AV()
        if mname in PROMISE_METHODS and any(e[0] == "prom" for e in recv.elems):
            return self._then(n, recv, args)
        if mname in ("call", "apply", "bind") and any(e[0] == "fn" for e in recv.elems):
            return self._fn_method(n, mname, recv, args)

        targets = sorted((e for e in fv.elems if e[0] == "fn"), key=repr)
        resolvers = [e for e in fv.elems if e[0] == "resolve"]
        for r in resolvers:
            prom = ("prom",) + r[1:]
            if args:
                self.p.write(("p", prom, "<value>"), args[0], self.fk)
        if targets:
            self.p.unresolved.pop((self.file, sp), None)
            this = AV(recv.elems) if recv is not None else None
            return _union(self.invoke(e[1], args, n, "call", this=this) for e in targets)
        if resolvers:
            return AV()
        # unknown callee: result carries everything the call can see
        if callee["type"] in ("Identifier", "MemberExpression") and self._looks_internal(callee, recv):
            self.p.unresolved.setdefault((self.file, sp), (self.fk, self._callee_text(callee)))
        labels = set(fv.labels)
        for a in args:
            labels |= self.p.deep(a, self, sp)
        cb_args = [AV((), labels)]
        if recv is not None:
            labels |= self.p.deep(recv, self, sp)
            cb_args = [self.p.member_of(recv, "*", self, sp) | AV((), labels)]
            if mname in ("push", "unshift", "splice", "concat", "set", "add", "assign"):
                for e in recv.elems:
                    if e[0] not in ("factory", "resolve", "fn", "mod"):
                        self.p.write(("p", e, "*"), _union(args), self.fk)
                if callee["object"]["type"] == "Identifier" and not recv.elems:
                    self.assign(callee["object"], AV((), labels), sp)
        if callee["type"] == "MemberExpression" and mname == "assign" and n["arguments"]:
            # Object.assign(target, ...sources)
            tgt = args[0]
            for e in tgt.elems:
                self.p.write(("p", e, "*"), AV((), labels), self.fk)
            if not tgt.elems and n["arguments"][0]["type"] == "Identifier":
                self.assign(n["arguments"][0], AV((), labels), sp)
        ret = AV((), labels)
        for a in args:
            ret |= self._call_fn_args(a, cb_args, n)
        return ret

    def _looks_internal(self, callee: dict, recv: AV | None) -> bool:
        if callee["type"] == "Identifier":
            return self.p.resolve(callee["name"], self.fi)[1] != GLOBAL
        obj = callee["object"]
        return obj["type"] == "ThisExpression" or bool(recv and any(e[0] in ("owner", "mod") for e in recv.elems))

    @staticmethod
    def _callee_text(callee: dict) -> str:
        if callee["type"] == "Identifier":
            return callee["name"]
        parts = []
        c = callee
        while c["type"] == "MemberExpression":
            parts.append(member_name(c) or "[]")
            c = c["object"]
        parts.append("this" if c["type"] == "ThisExpression" else c.get("name", "?"))
        return ".".join(reversed(parts))

    def _call_fn_args(self, a: AV, cb_args: list[AV], site: dict, tag: str = "opaque") -> AV:
        out = AV()
        for e in sorted(a.elems, key=repr):
            if e[0] == "fn":
                out |= self.invoke(e[1], cb_args, site, tag)
        return out

    def _fn_method(self, n, mname, recv, args) -> AV:
        fns = sorted((e for e in recv.elems if e[0] == "fn"), key=repr)
        if mname == "bind":
            return AV(fns)
        this = args[0] if args else AV()
        if mname == "call":
            rest = args[1:]
        else:
            arr = args[1] if len(args) > 1 else AV()
            item = self.p.member_of(arr, "*", self, span(n))
            rest = [item] * max(1, max((len(self.p.funcs[e[1]].params) for e in fns), default=1))
        return _union(self.invoke(e[1], rest, n, "call", this=this) for e in fns)

    def _import_edge(self, n) -> None:
        src = n.get("source")
        if not src or src.get("type") != "Literal":
            return
        target = resolve_module(src["value"], self.file, self.p.index.modules)
        if target is not None:
            self.p._edge(self.fk, self.p.index.modules[target].key, self.file, span(n), "module")

    def _require(self, n) -> AV:
        args = n["arguments"]
        if not args or args[0]["type"] != "Literal":
            return AV()
        target = resolve_module(args[0]["value"], self.file, self.p.index.modules)
        if target is None:
            return AV()
        mod = self.p.index.modules[target]
        self.p._edge(self.fk, mod.key, self.file, span(n), "module")
        m = ("mod", target)
        return AV({m}) | self.p.read(("p", m, "<exports>"), self, span(n))

    def _set_data(self, n, recv: AV, args: list[AV]) -> None:
        owners = [e[1] for e in recv.elems if e[0] == "owner"]
        arg_nodes = n["arguments"]
        for o in owners:
            data = ("data", o)
            if arg_nodes and arg_nodes[0]["type"] == "ObjectExpression":
                for prop in arg_nodes[0]["properties"]:
                    if prop["type"] != "Property":
                        self.p.write(("p", data, "*"), AV((), self.p.deep(self.ev(prop.get("argument")), self)), self.fk)
                        continue
                    key = prop_name(prop)
                    top = key.split(".")[0].split("[")[0] if key else "*"
                    self.p.write(("p", data, top), self.ev(prop["value"]), self.fk)
            elif args:
                self.p.write(("p", data, "*"), AV((), self.p.deep(args[0], self)), self.fk)
        if len(args) > 1:
            self._call_fn_args(args[1], [], n)

    def _then(self, n, recv: AV, args: list[AV]) -> AV:
        sp = span(n)
        value = AV()
        for e in recv.elems:
            if e[0] == "prom":
                value |= self.p.read(("p", e, "<value>"), self, sp)
        out_prom = ("prom", self.file, sp[0], "then")
        self.p.props_of.setdefault(out_prom, set())
        for a in args:
            ret = self._call_fn_args(a, [value], n)
            self.p.write(("p", out_prom, "<value>"), ret, self.fk)
        return AV({out_prom})

    # -- subAPIs -------------------------------------------------------

    def _subapi_call(self, n: dict, api: str, args: list[AV], is_wx: bool) -> AV:
        tax = self.p.tax
        sp = span(n)
        key = (self.file, sp)
        site = self.p.subapi_sites.get(key)
        if site is None:
            site = SubApiSite(api, self.fk, self.file, sp, bound_to=_bound_name(n, self.fi))
            self.p.subapi_sites[key] = site
        mapping = tax.subapi(api)
        short = api.rsplit(".", 1)[-1]
        listener = (mapping is not None and mapping.callback_style is CallbackStyle.EVENT_LISTENER) \
            or (short.startswith("on") and short[2:3].isupper())

        arg_nodes = n["arguments"]
        seen_fn: set = set()
        # callbacks in an options object
        if arg_nodes:
            opts_node, opts = arg_nodes[0], args[0]
            if opts_node["type"] == "ObjectExpression":
                for prop in opts_node["properties"]:
                    if prop["type"] != "Property":
                        continue
                    pname = prop_name(prop)
                    if pname not in CALLBACK_KEYS:
                        continue
                    literal = prop["value"]["type"] in FUNCTION_TYPES
                    if literal:
                        site.literal_keys.add(pname)
                    val = self.ev(prop["value"])
                    self._callbacks(site, pname, val, n, "callback" if literal else "callback_ref", seen_fn)
            else:
                for pname in CALLBACK_KEYS:
                    val = self.p.member_of(AV(opts.elems), pname, self, sp)
                    self._callbacks(site, pname, AV(val.elems), n, "callback_ref", seen_fn)
        # function arguments: listeners or opaque callbacks
        for a_node, a in zip(arg_nodes, args):
            fns = sorted((e for e in a.elems if e[0] == "fn" and e not in seen_fn), key=repr)
            for e in fns:
                if listener:
                    self._record_cb(site, "listener", e[1])
                    self.invoke(e[1], [AV()], n, "listener")
                else:
                    self.invoke(e[1], [AV()], n, "opaque")

        seeded = self.p.call_labels.get(key, set())
        if seeded:
            self.p.seed(self.fk, seeded, sp, self.file)

        sink = tax.sink(api) or (tax.sink(short) if not is_wx else None)
        if sink is not None:
            self._sink(n, key, sink, args)

        result = AV((), seeded)
        ftype = tax.factory_type(api)
        if ftype:
            result.elems.add(("factory", ftype))
        elif not listener:
            prom = ("prom", self.file, sp[0])
            self.p.props_of.setdefault(prom, set())
            if seeded:
                self.p.write(("p", prom, "<value>"), AV((), seeded), self.fk)
            result.elems.add(prom)
        return result

    def _callbacks(self, site, pname, val: AV, n, tag, seen_fn) -> None:
        for e in sorted(val.elems, key=repr):
            if e[0] != "fn":
                continue
            seen_fn.add(e)
            self._record_cb(site, pname, e[1])
            self.invoke(e[1], [AV()], n, tag)

    @staticmethod
    def _record_cb(site: SubApiSite, key: str, fkey) -> None:
        if (key, fkey) not in site.callbacks:
            site.callbacks.append((key, fkey))

    def _sink(self, n, key, sink, args: list[AV]) -> None:
        sp = span(n)
        if key not in self.p.sink_sites:
            self.p.sink_sites[key] = SinkSite(sink.name, self.fk, self.file, sp, _url_literal(n))
        labels: set[int] = set()
        if "*" in sink.payload:
            for a in args:
                labels |= self.p.deep(a, self, sp)
        elif args:
            opts = args[0]
            labels |= opts.labels
            for e in opts.elems:
                for pname in sink.payload:
                    labels |= self.p.deep(self.p.read_prop(e, pname, self, sp), self, sp)
        if labels:
            cur = self.p.sink_labels.setdefault(key, set())
            if not labels <= cur:
                cur |= labels
                self.p.changed = True


def _bound_name(n: dict, fi: FuncInfo) -> str:
    """Name of the variable a call's result is assigned to, if direct."""
    parent_decl = _find_parent(fi, n)
    if parent_decl is None:
        return ""
    if parent_decl["type"] == "VariableDeclarator":
        return ",".join(pattern_names(parent_decl["id"]))
    if parent_decl["type"] == "AssignmentExpression" and parent_decl["left"]["type"] == "Identifier":
        return parent_decl["left"]["name"]
    return ""


def _find_parent(fi: FuncInfo, target: dict) -> dict | None:
    if fi.node is None:
        return None
    for x in walk(fi.node):
        if x["type"] == "VariableDeclarator" and _unwrap(x.get("init")) is target:
            return x
        if x["type"] == "AssignmentExpression" and _unwrap(x["right"]) is target:
            return x
    return None


def _unwrap(node):
    while node is not None and node["type"] == "AwaitExpression":
        node = node["argument"]
    return node


def _url_literal(n: dict) -> str:
    args = n["arguments"]
    if not args or args[0]["type"] != "ObjectExpression":
        return ""
    for prop in args[0]["properties"]:
        if prop["type"] == "Property" and prop_name(prop) == "url":
            v = prop["value"]
            if v["type"] == "Literal" and isinstance(v["value"], str):
                return v["value"]
            if v["type"] == "TemplateLiteral" and v["quasis"]:
                return v["quasis"][0]["value"]["cooked"]
    return ""
