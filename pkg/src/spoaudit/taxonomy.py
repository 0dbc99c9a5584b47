"""Privacy taxonomy, subAPI mapping, keyword lexicons and sink list.

Everything here is loaded from a JSON file (``data/taxonomy.json`` by
default) so that the mapping can be swapped for other super-app
ecosystems without touching code.
"""

from __future__ import annotations

import enum
import json
import os
import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

SCHEMA_VERSION = 1
DEFAULT_TAXONOMY_ENV = "SPO_TAXONOMY"


class TaxonomyError(ValueError):
    """Raised when a taxonomy file violates the schema."""


class PrivacyCategory(str, enum.Enum):
    DEVICE = "device"
    PLATFORM = "platform"
    USER_INPUT = "user_input"

    @property
    def suffix(self) -> str:
        return {"device": "_d", "platform": "_p", "user_input": "_u"}[self.value]


class CallbackStyle(str, enum.Enum):
    SUCCESS_CALLBACK = "success_callback"
    SYNC_RETURN = "sync_return"
    EVENT_LISTENER = "event_listener"


class SinkKind(str, enum.Enum):
    UPLOAD = "upload"
    REQUEST = "request"


class ProtectionLevel(str, enum.Enum):
    NOT_PROTECTED = "not_protected"
    PARTIALLY_PROTECTED = "partially_protected"
    FULLY_PROTECTED = "fully_protected"


@dataclass(frozen=True)
class PrivacyItem:
    id: str
    name: str
    category: PrivacyCategory


@dataclass(frozen=True)
class SubApiMapping:
    subapi_name: str
    items: frozenset[str]
    callback_style: CallbackStyle = CallbackStyle.SUCCESS_CALLBACK
    permission_scope: str | None = None


@dataclass(frozen=True)
class KeywordEntry:
    keyword: str
    item: str
    # exact entries claim only their own category instead of every
    # item sharing the name
    exact: bool = False


@dataclass(frozen=True)
class KeywordLexicon:
    locale: str
    entries: tuple[KeywordEntry, ...]


@dataclass(frozen=True)
class SinkApi:
    name: str
    kind: SinkKind
    payload: tuple[str, ...] = ("*",)


@dataclass(frozen=True)
class KeywordMatch:
    keyword: str
    item: str
    start: int
    end: int
    exact: bool = False


def normalize_text(text: str) -> str:
    """Case-fold, unify quotes/dashes and collapse whitespace."""
    text = unicodedata.normalize("NFKC", text)
    text = text.replace("’", "'").replace("‘", "'").replace("–", "-")
    return re.sub(r"\s+", " ", text).strip().casefold()


def _is_cjk(ch: str) -> bool:
    return "　" <= ch <= "鿿" or "豈" <= ch <= "﫿"


def _word_char(ch: str) -> bool:
    return ch.isalnum() and not _is_cjk(ch)


_PLURAL_SUFFIXES = ("es", "s")


def find_keywords(text: str, lexicon: KeywordLexicon) -> list[KeywordMatch]:
    """Return non-overlapping keyword matches in ``text`` (already normalized).

    Latin keywords must sit on word boundaries (a trailing plural ``s``/``es``
    is tolerated); CJK keywords match as plain substrings. Overlaps are
    resolved leftmost-longest, so "email address" never also yields "address".
    """
    candidates: list[KeywordMatch] = []
    for entry in lexicon.entries:
        kw = normalize_text(entry.keyword)
        if not kw:
            continue
        start = text.find(kw)
        while start != -1:
            end = start + len(kw)
            ok = True
            if _word_char(kw[0]) and start > 0 and _word_char(text[start - 1]):
                ok = False
            if ok and _word_char(kw[-1]) and end < len(text) and _word_char(text[end]):
                for suf in _PLURAL_SUFFIXES:
                    tail = end + len(suf)
                    if text.startswith(suf, end) and (tail >= len(text) or not _word_char(text[tail])):
                        end = tail
                        break
                else:
                    ok = False
            if ok:
                candidates.append(KeywordMatch(entry.keyword, entry.item, start, end, entry.exact))
            start = text.find(kw, start + 1)
    candidates.sort(key=lambda m: (-(m.end - m.start), m.start, m.item))
    taken: list[KeywordMatch] = []
    for m in candidates:
        if all(m.end <= t.start or m.start >= t.end for t in taken):
            taken.append(m)
    taken.sort(key=lambda m: (m.start, m.item))
    return taken


def match_keywords(text: str, lexicon: KeywordLexicon) -> set[str]:
    """Items whose keywords occur in ``text``."""
    return {m.item for m in find_keywords(normalize_text(text), lexicon)}


@dataclass(frozen=True)
class Taxonomy:
    items: tuple[PrivacyItem, ...]
    subapis: tuple[SubApiMapping, ...]
    keywords: tuple[KeywordLexicon, ...]
    sinks: tuple[SinkApi, ...]
    protection_levels: tuple[tuple[str, ProtectionLevel], ...] = ()
    factories: tuple[tuple[str, str], ...] = ()
    open_type_events: tuple[tuple[str, str], ...] = ()
    policy_indicators: tuple[tuple[str, tuple[str, ...]], ...] = ()
    policy_verbs: tuple[tuple[str, tuple[str, ...]], ...] = ()
    negation_cues: tuple[tuple[str, tuple[str, ...]], ...] = ()
    contrast_markers: tuple[tuple[str, tuple[str, ...]], ...] = ()
    schema_version: int = SCHEMA_VERSION

    _item_index: Mapping[str, PrivacyItem] = field(default=None, compare=False, repr=False)  # type: ignore[assignment]
    _subapi_index: Mapping[str, SubApiMapping] = field(default=None, compare=False, repr=False)  # type: ignore[assignment]
    _sink_index: Mapping[str, SinkApi] = field(default=None, compare=False, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_item_index", {i.id: i for i in self.items})
        object.__setattr__(self, "_subapi_index", {m.subapi_name: m for m in self.subapis})
        object.__setattr__(self, "_sink_index", {s.name: s for s in self.sinks})

    # -- lookups -------------------------------------------------------

    def item(self, item_id: str) -> PrivacyItem:
        return self._item_index[item_id]

    def has_item(self, item_id: str) -> bool:
        return item_id in self._item_index

    @property
    def item_ids(self) -> list[str]:
        return [i.id for i in self.items]

    def items_named(self, name: str) -> set[str]:
        return {i.id for i in self.items if i.name == name}

    def category_of(self, item_id: str) -> PrivacyCategory:
        return self._item_index[item_id].category

    def subapi(self, name: str) -> SubApiMapping | None:
        """Mapping for ``name``; accepts ``wx.`` prefixes and ``*Sync`` variants."""
        name = _strip_wx(name)
        hit = self._subapi_index.get(name)
        if hit is None and name.endswith("Sync"):
            base = self._subapi_index.get(name[: -len("Sync")])
            if base is not None:
                hit = SubApiMapping(name, base.items, CallbackStyle.SYNC_RETURN, base.permission_scope)
        return hit

    def lookup_subapi(self, name: str) -> set[str]:
        hit = self.subapi(name)
        return set(hit.items) if hit else set()

    def sink(self, name: str) -> SinkApi | None:
        return self._sink_index.get(_strip_wx(name))

    def factory_type(self, name: str) -> str | None:
        return dict(self.factories).get(_strip_wx(name))

    def open_type_subapi(self, event: str) -> str | None:
        return dict(self.open_type_events).get(event.lower())

    def protection_level(self, item_id: str) -> ProtectionLevel | None:
        return dict(self.protection_levels).get(item_id)

    def lexicon(self, locale: str = "en", scope: str = "policy") -> KeywordLexicon:
        """Keyword lexicon for a locale.

        ``scope="ui"`` keeps only user-input items (used for labels in the
        render layer); ``scope="policy"`` keeps everything.
        """
        for lex in self.keywords:
            if lex.locale == locale:
                entries = lex.entries
                if scope == "ui":
                    entries = tuple(
                        e for e in entries if self.category_of(e.item) is PrivacyCategory.USER_INPUT
                    )
                return KeywordLexicon(locale, entries)
        raise KeyError(f"no keyword lexicon for locale {locale!r}")

    def _per_locale(self, table: tuple[tuple[str, tuple[str, ...]], ...], locale: str) -> tuple[str, ...]:
        return dict(table).get(locale, ())

    def indicators(self, locale: str = "en") -> tuple[str, ...]:
        return self._per_locale(self.policy_indicators, locale)

    def verbs(self, locale: str = "en") -> tuple[str, ...]:
        return self._per_locale(self.policy_verbs, locale)

    def negations(self, locale: str = "en") -> tuple[str, ...]:
        return self._per_locale(self.negation_cues, locale)

    def contrasts(self, locale: str = "en") -> tuple[str, ...]:
        return self._per_locale(self.contrast_markers, locale)

    def covered_by_claims(self, claims: Iterable[str], exact: Iterable[str] = ()) -> set[str]:
        """Every item a claim set covers: claims match all categories sharing
        the item name, except ids listed in ``exact``."""
        exact = set(exact)
        covered: set[str] = set()
        for c in claims:
            covered.add(c)
            if c not in exact and c in self._item_index:
                covered |= self.items_named(self._item_index[c].name)
        return covered

    def with_protection_levels(self, levels: Mapping[str, ProtectionLevel | str]) -> "Taxonomy":
        """Copy with protection levels replaced (overrides the shipped defaults)."""
        data = self.to_dict()
        data["protection_levels"] = [
            {"item": k, "level": ProtectionLevel(v).value} for k, v in sorted(levels.items())
        ]
        return taxonomy_from_dict(data)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "items": [{"id": i.id, "name": i.name, "category": i.category.value} for i in self.items],
            "subapi_map": [_subapi_to_dict(m) for m in self.subapis],
            "factories": dict(self.factories),
            "open_type_events": dict(self.open_type_events),
            "keywords": {
                lex.locale: [_kw_to_dict(e) for e in lex.entries] for lex in self.keywords
            },
            "sinks": [{"name": s.name, "kind": s.kind.value, "payload": list(s.payload)} for s in self.sinks],
            "protection_levels": [{"item": k, "level": v.value} for k, v in self.protection_levels],
            "policy_indicators": {k: list(v) for k, v in self.policy_indicators},
            "policy_verbs": {k: list(v) for k, v in self.policy_verbs},
            "negation_cues": {k: list(v) for k, v in self.negation_cues},
            "contrast_markers": {k: list(v) for k, v in self.contrast_markers},
        }


def _strip_wx(name: str) -> str:
    return name[3:] if name.startswith("wx.") else name


def _subapi_to_dict(m: SubApiMapping) -> dict:
    d = {"subapi": m.subapi_name, "items": sorted(m.items), "callback_style": m.callback_style.value}
    if m.permission_scope:
        d["permission_scope"] = m.permission_scope
    return d


def _kw_to_dict(e: KeywordEntry) -> dict:
    d: dict = {"keyword": e.keyword, "item": e.item}
    if e.exact:
        d["exact"] = True
    return d


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise TaxonomyError(msg)


def _enum(cls, value, where: str):
    try:
        return cls(value)
    except ValueError:
        raise TaxonomyError(f"{where}: invalid value {value!r}") from None


def _locale_table(raw, key: str) -> tuple[tuple[str, tuple[str, ...]], ...]:
    raw = raw or {}
    _require(isinstance(raw, dict), f"{key}: expected an object keyed by locale")
    out = []
    for loc in sorted(raw):
        words = raw[loc]
        _require(isinstance(words, list) and all(isinstance(w, str) and w for w in words),
                 f"{key}[{loc}]: expected a list of non-empty strings")
        out.append((loc, tuple(words)))
    return tuple(out)


def taxonomy_from_dict(data: dict) -> Taxonomy:
    """Validate a parsed taxonomy document and build the bundle."""
    _require(isinstance(data, dict), "taxonomy: top level must be an object")
    version = data.get("schema_version")
    _require(version == SCHEMA_VERSION, f"schema_version: unsupported value {version!r}")

    raw_items = data.get("items") or []
    _require(isinstance(raw_items, list), "items: expected a list")
    _require(len(raw_items) > 0, "empty taxonomy")
    items: list[PrivacyItem] = []
    seen: set[str] = set()
    for n, raw in enumerate(raw_items):
        where = f"items[{n}]"
        _require(isinstance(raw, dict) and {"id", "name", "category"} <= raw.keys(),
                 f"{where}: needs id, name and category")
        cat = _enum(PrivacyCategory, raw["category"], f"{where} ({raw['id']})")
        _require(raw["id"] not in seen, f"duplicate id {raw['id']!r}")
        _require(bool(raw["name"]), f"{where}: empty name")
        seen.add(raw["id"])
        items.append(PrivacyItem(raw["id"], raw["name"], cat))
    by_id = {i.id: i for i in items}

    subapis: list[SubApiMapping] = []
    seen_api: set[str] = set()
    for n, raw in enumerate(data.get("subapi_map") or []):
        name = raw.get("subapi", "")
        where = f"subapi_map[{n}] ({name})"
        _require(bool(name), f"{where}: missing subapi name")
        _require(name not in seen_api, f"duplicate subapi mapping {name!r}")
        seen_api.add(name)
        ids = raw.get("items") or []
        _require(len(ids) > 0, f"{where}: no items")
        names_seen: dict[str, str] = {}
        for iid in ids:
            _require(iid in by_id, f"{where}: unknown item {iid!r}")
            item = by_id[iid]
            _require(item.category is not PrivacyCategory.USER_INPUT,
                     f"{where}: subAPIs may only map to device or platform items, got {iid!r}")
            other = names_seen.get(item.name)
            _require(other is None, f"{where}: duplicate mapping category conflict ({other} vs {iid})")
            names_seen[item.name] = iid
        style = _enum(CallbackStyle, raw.get("callback_style", "success_callback"), where)
        subapis.append(SubApiMapping(name, frozenset(ids), style, raw.get("permission_scope")))

    lexicons: list[KeywordLexicon] = []
    raw_kw = data.get("keywords") or {}
    _require(isinstance(raw_kw, dict), "keywords: expected an object keyed by locale")
    for loc in sorted(raw_kw):
        entries = []
        for n, raw in enumerate(raw_kw[loc]):
            where = f"keywords[{loc}][{n}]"
            kw = (raw.get("keyword") or "").strip()
            _require(bool(kw), f"{where}: empty keyword")
            _require(raw.get("item") in by_id, f"{where} ({kw}): unknown item {raw.get('item')!r}")
            entries.append(KeywordEntry(kw, raw["item"], bool(raw.get("exact", False))))
        lexicons.append(KeywordLexicon(loc, tuple(entries)))

    sinks: list[SinkApi] = []
    for n, raw in enumerate(data.get("sinks") or []):
        where = f"sinks[{n}] ({raw.get('name')})"
        _require(bool(raw.get("name")), f"{where}: missing name")
        kind = _enum(SinkKind, raw.get("kind"), where)
        payload = tuple(raw.get("payload") or ("*",))
        _require(raw["name"] not in {s.name for s in sinks}, f"duplicate sink {raw['name']!r}")
        sinks.append(SinkApi(raw["name"], kind, payload))

    levels: dict[str, ProtectionLevel] = {}
    for n, raw in enumerate(data.get("protection_levels") or []):
        where = f"protection_levels[{n}]"
        _require(raw.get("item") in by_id, f"{where}: unknown item {raw.get('item')!r}")
        _require(raw["item"] not in levels, f"{where}: more than one level for {raw['item']!r}")
        levels[raw["item"]] = _enum(ProtectionLevel, raw.get("level"), where)

    factories = data.get("factories") or {}
    open_types = data.get("open_type_events") or {}
    for ev, api in open_types.items():
        _require(api in seen_api, f"open_type_events[{ev}]: unknown subapi {api!r}")

    return Taxonomy(
        items=tuple(items),
        subapis=tuple(subapis),
        keywords=tuple(lexicons),
        sinks=tuple(sinks),
        protection_levels=tuple(sorted(levels.items())),
        factories=tuple(sorted(factories.items())),
        open_type_events=tuple(sorted(open_types.items())),
        policy_indicators=_locale_table(data.get("policy_indicators"), "policy_indicators"),
        policy_verbs=_locale_table(data.get("policy_verbs"), "policy_verbs"),
        negation_cues=_locale_table(data.get("negation_cues"), "negation_cues"),
        contrast_markers=_locale_table(data.get("contrast_markers"), "contrast_markers"),
        schema_version=version,
    )


def default_taxonomy_path() -> Path:
    env = os.environ.get(DEFAULT_TAXONOMY_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("spoaudit") / "data" / "taxonomy.json"))


def load_taxonomy(path: str | os.PathLike | None = None) -> Taxonomy:
    """Load and validate a taxonomy file (defaults to the shipped one)."""
    path = Path(path) if path is not None else default_taxonomy_path()
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TaxonomyError(f"{path}: not valid JSON ({exc})") from exc
    return taxonomy_from_dict(data)


def dump_taxonomy(tax: Taxonomy, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(tax.to_dict(), indent=1, ensure_ascii=False), encoding="utf-8")
