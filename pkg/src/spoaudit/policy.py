"""Claimed-privacy extraction from policy text.

Sentences that mention a privacy keyword become candidates.  Each keyword
match then gets one verdict:

* ``NonCollective`` when no collection verb governs it,
* ``Negated`` when a negation cue scopes over it,
* ``Claim`` otherwise.

Scope rules are deliberately shallow.  A sentence splits into *segments*
at semicolons and contrast conjunctions, and segments split into *clauses*
at commas and colons.  The verb governing a keyword is the nearest one
before it in its segment, else the next one in its clause, else the
nearest one earlier in the sentence.  A negation cue counts if it sits in
the keyword's own clause before the keyword, or in the governing verb's
clause before the verb when that verb is in the same segment.  So in "we
do not collect your name, phone number or address" all three are negated,
while "we do not collect your address, but we collect your name" keeps
the name.

List items introduced by a lead-in sentence ending in a colon ("We collect
the following:") inherit that sentence's verb and negation.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .ingest import PolicyText
from .taxonomy import KeywordLexicon, KeywordMatch, Taxonomy, find_keywords, normalize_text

TOKEN_RE = re.compile(r"\w+(?:['’]\w+)*|[^\w\s]")
ABBREVIATIONS = {"e.g", "i.e", "etc", "mr", "mrs", "ms", "dr", "no", "inc", "ltd", "co", "vs", "st", "approx"}
_CJK_TERMINATORS = "。！？；"
_BULLET_RE = re.compile(r"^\s*(?:[-*•·●◆▪]|\(?\d{1,2}[.)、]|\(\d{1,2}\)|[a-z][.)]|[（(][一二三四五六七八九十]+[)）]|[一二三四五六七八九十]+、)\s*")
_INLINE_ENUM_RE = re.compile(r"(?<=\S)\s+(?=\(?\d{1,2}\)\s)")

DEFAULT_VERBS = ("collect", "obtain", "record", "store", "acquire", "use", "access")
DEFAULT_NEGATIONS = ("not", "never", "no", "n't", "won't", "refuse")
DEFAULT_CONTRASTS = ("but", "however", "whereas", "although", "though", "yet", "while")


class PolicyError(ValueError):
    pass


class Verdict(str, enum.Enum):
    CLAIM = "Claim"
    NEGATED = "Negated"
    NON_COLLECTIVE = "NonCollective"


@dataclass(frozen=True)
class Sentence:
    text: str
    tokens: tuple[str, ...]
    index: int
    list_item: bool = False


@dataclass(frozen=True)
class ClaimCandidate:
    sentence: Sentence
    matched: tuple[tuple[str, str, tuple[int, int]], ...]  # (keyword, item, span)
    verdicts: tuple[Verdict, ...]  # one per match

    @property
    def verdict(self) -> Verdict:
        """Sentence-level verdict: Claim if any match is claimed."""
        if Verdict.CLAIM in self.verdicts:
            return Verdict.CLAIM
        if Verdict.NEGATED in self.verdicts:
            return Verdict.NEGATED
        return Verdict.NON_COLLECTIVE


@dataclass
class ClaimSet:
    items: set[str] = field(default_factory=set)
    evidence: dict[str, list[int]] = field(default_factory=dict)
    candidates: list[ClaimCandidate] = field(default_factory=list)
    exact: set[str] = field(default_factory=set)  # items claimed only through exact entries


@dataclass(frozen=True)
class VerbLists:
    verbs: tuple[str, ...] = DEFAULT_VERBS
    negations: tuple[str, ...] = DEFAULT_NEGATIONS
    contrasts: tuple[str, ...] = DEFAULT_CONTRASTS

    @classmethod
    def from_taxonomy(cls, tax: Taxonomy, locale: str = "en") -> "VerbLists":
        return cls(tax.verbs(locale) or DEFAULT_VERBS, tax.negations(locale) or DEFAULT_NEGATIONS,
                   tax.contrasts(locale) or DEFAULT_CONTRASTS)


def _has_cjk(text: str) -> bool:
    return any("一" <= ch <= "鿿" for ch in text)


def detect_locale(text: str) -> str:
    cjk = sum(1 for ch in text if "一" <= ch <= "鿿")
    latin = sum(1 for ch in text if ch.isascii() and ch.isalpha())
    return "zh" if cjk > latin / 4 else "en"


def tokenize(text: str) -> tuple[str, ...]:
    return tuple(TOKEN_RE.findall(text))


# ---------------------------------------------------------------------------
# sentence splitting

def _split_latin(chunk: str) -> list[str]:
    out: list[str] = []
    start = 0
    for m in re.finditer(r"[.?!]+(?=\s|$)", chunk):
        end = m.end()
        if m.group() == ".":
            word = re.search(r"([\w.]+)\.$", chunk[start:end])
            if word and word.group(1).lower().rstrip(".") in ABBREVIATIONS:
                continue
        piece = chunk[start:end].strip()
        if piece:
            out.append(piece)
        start = end
    tail = chunk[start:].strip()
    if tail:
        out.append(tail)
    return out


def _split_cjk(chunk: str) -> list[str]:
    out = [p.strip() for p in re.split(r"(?<=[。！？；])", chunk)]
    return [p for p in out if p]


def split_sentences(text: str, locale: str = "en") -> list[Sentence]:
    """Rule-based sentence splitting; bullets and inline "1)" start sentences."""
    if not text or not text.strip():
        return []
    pieces: list[tuple[str, bool]] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        for part in _INLINE_ENUM_RE.split(line):
            bullet = _BULLET_RE.match(part)
            body = part[bullet.end():] if bullet else part
            if not body.strip():
                continue
            subs = _split_cjk(body) if locale == "zh" or _has_cjk(body) else []
            if not subs:
                subs = [body]
            first = True
            for sub in subs:
                for s in _split_latin(sub):
                    pieces.append((s, bool(bullet) and first))
                    first = False
    return [Sentence(t, tokenize(t), i, li) for i, (t, li) in enumerate(pieces)]


# ---------------------------------------------------------------------------
# scope helpers

def _term_regex(term: str, verb: bool = False) -> str:
    t = re.escape(normalize_text(term))
    if _has_cjk(term):
        return t
    if term == "n't":
        return r"\w+n't\b"
    if verb:
        if term.endswith("e"):
            t = re.escape(term[:-1]) + r"(?:e|es|ed|ing)"
        else:
            t = t + r"(?:s|es|ed|ing)?"
    return r"(?<![\w'])" + t + r"(?![\w'])"


def _finder(terms: Iterable[str], verb: bool = False) -> re.Pattern | None:
    terms = [t for t in terms if t]
    if not terms:
        return None
    alts = sorted({_term_regex(t, verb) for t in terms}, key=len, reverse=True)
    return re.compile("|".join(alts))


@dataclass
class _Scopes:
    text: str
    segments: list[tuple[int, int]]
    clauses: list[tuple[int, int]]
    verbs: list[tuple[int, int]]
    negs: list[tuple[int, int]]

    @staticmethod
    def _find(spans: list[tuple[int, int]], pos: int) -> int:
        for i, (s, e) in enumerate(spans):
            if s <= pos < e:
                return i
        return len(spans) - 1

    def segment(self, pos: int) -> tuple[int, int]:
        return self.segments[self._find(self.segments, pos)]

    def clause(self, pos: int) -> tuple[int, int]:
        return self.clauses[self._find(self.clauses, pos)]

    def governing_verb(self, start: int, end: int) -> tuple[int, int] | None:
        seg = self.segment(start)
        before = [v for v in self.verbs if seg[0] <= v[0] and v[1] <= start]
        if before:
            return before[-1]
        cl = self.clause(start)
        after = [v for v in self.verbs if end <= v[0] and v[1] <= cl[1]]
        if after:
            return after[0]
        earlier = [v for v in self.verbs if v[1] <= start]
        return earlier[-1] if earlier else None

    def negated(self, start: int, verb: tuple[int, int] | None) -> bool:
        cl = self.clause(start)
        if any(cl[0] <= n[0] and n[1] <= start for n in self.negs):
            return True
        if verb is None or self.segment(verb[0]) != self.segment(start):
            return False
        vcl = self.clause(verb[0])
        return any(vcl[0] <= n[0] and n[1] <= verb[0] for n in self.negs)


def _spans(text: str, cuts: list[int]) -> list[tuple[int, int]]:
    bounds = sorted({0, len(text), *cuts})
    return [(a, b) for a, b in zip(bounds, bounds[1:]) if b > a] or [(0, len(text))]


def _scopes(text: str, verb_re, neg_re, contrast_re) -> _Scopes:
    seg_cuts = [m.start() for m in re.finditer(r"[;；]", text)]
    if contrast_re is not None:
        seg_cuts += [m.start() for m in contrast_re.finditer(text)]
    clause_cuts = seg_cuts + [m.start() for m in re.finditer(r"[,，:：]", text)]
    verbs = [m.span() for m in verb_re.finditer(text)] if verb_re else []
    negs = [m.span() for m in neg_re.finditer(text)] if neg_re else []
    return _Scopes(text, _spans(text, seg_cuts), _spans(text, clause_cuts), verbs, negs)


# ---------------------------------------------------------------------------

def extract_claims(policy: PolicyText | str, lexicon: KeywordLexicon,
                   verbs: VerbLists | Sequence[str] = VerbLists(),
                   negations: Sequence[str] | None = None,
                   contrasts: Sequence[str] | None = None,
                   locale: str | None = None) -> ClaimSet:
    """S_claim of one policy text."""
    if isinstance(policy, PolicyText):
        if not policy.valid:
            raise PolicyError("no valid policy")
        text = policy.text
    else:
        text = policy
    if not isinstance(verbs, VerbLists):
        verbs = VerbLists(tuple(verbs), tuple(negations or DEFAULT_NEGATIONS),
                          tuple(contrasts or DEFAULT_CONTRASTS))
    elif negations is not None or contrasts is not None:
        verbs = VerbLists(verbs.verbs, tuple(negations or verbs.negations),
                          tuple(contrasts or verbs.contrasts))
    locale = locale or detect_locale(text)
    verb_re = _finder(verbs.verbs, verb=True)
    neg_re = _finder(verbs.negations)
    contrast_re = _finder(verbs.contrasts)

    out = ClaimSet()
    exact_only: dict[str, bool] = {}
    lead: tuple[bool, bool] | None = None  # (has verb, negated) of the list lead-in
    for sent in split_sentences(text, locale):
        norm = normalize_text(sent.text)
        sc = _scopes(norm, verb_re, neg_re, contrast_re)
        matches: list[KeywordMatch] = find_keywords(norm, lexicon)
        if not sent.list_item:
            lead = None
        verdicts = []
        for m in matches:
            verb = sc.governing_verb(m.start, m.end)
            if verb is None and sent.list_item and lead is not None and lead[0]:
                verdicts.append(Verdict.NEGATED if lead[1] or sc.negated(m.start, None) else Verdict.CLAIM)
                continue
            if verb is None:
                verdicts.append(Verdict.NON_COLLECTIVE)
            elif sc.negated(m.start, verb):
                verdicts.append(Verdict.NEGATED)
            else:
                verdicts.append(Verdict.CLAIM)
        if norm.rstrip().endswith((":", "：")) and not sent.list_item:
            v = sc.verbs[-1] if sc.verbs else None
            lead = (v is not None, v is not None and sc.negated(v[0], v))
        if not matches:
            continue
        cand = ClaimCandidate(sent, tuple((m.keyword, m.item, (m.start, m.end)) for m in matches),
                              tuple(verdicts))
        out.candidates.append(cand)
        for m, v in zip(matches, verdicts):
            if v is not Verdict.CLAIM:
                continue
            out.items.add(m.item)
            ev = out.evidence.setdefault(m.item, [])
            if sent.index not in ev:
                ev.append(sent.index)
            exact_only[m.item] = exact_only.get(m.item, True) and m.exact
    out.exact = {k for k, v in exact_only.items() if v}
    return out


def policy_claims(policies: Iterable[PolicyText], tax: Taxonomy, locale: str = "auto") -> ClaimSet:
    """Merge the claims of every valid policy text of one sub-app."""
    merged = ClaimSet()
    exact_votes: dict[str, bool] = {}
    offset = 0
    for p in policies:
        if not p.valid:
            continue
        loc = detect_locale(p.text) if locale in ("auto", "", None) else locale
        try:
            lex = tax.lexicon(loc, "policy")
        except KeyError:
            lex = tax.lexicon("en", "policy")
        cs = extract_claims(p, lex, VerbLists.from_taxonomy(tax, loc), locale=loc)
        merged.items |= cs.items
        merged.candidates += cs.candidates
        for item, idx in cs.evidence.items():
            merged.evidence.setdefault(item, []).extend(i + offset for i in idx)
            exact_votes[item] = exact_votes.get(item, True) and item in cs.exact
        offset += 1 + max((c.sentence.index for c in cs.candidates), default=0)
    merged.exact = {k for k, v in exact_votes.items() if v}
    return merged
