import json

import pytest

from oracle import FIXTURES
from spoaudit.ingest import PolicySource, PolicyText
from spoaudit.policy import (
    PolicyError, Verdict, VerbLists, detect_locale, extract_claims, policy_claims, split_sentences,
)

CASES = json.loads((FIXTURES / "policy_sentences.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="module")
def en(tax):
    return tax.lexicon("en", "policy"), VerbLists.from_taxonomy(tax, "en")


def claims(en, text):
    lex, verbs = en
    return extract_claims(text, lex, verbs, locale="en")


def test_two_sentences():
    assert [s.text for s in split_sentences("We collect A. We store B.")] == ["We collect A.", "We store B."]


def test_numbered_list():
    assert len(split_sentences("1) name 2) phone")) == 2


def test_empty_text():
    assert split_sentences("") == []


def test_abbreviation_not_split():
    assert len(split_sentences("We collect data, e.g. your name. Then more.")) == 2


def test_bullets():
    sents = split_sentences("We collect:\n- your name\n- your email")
    assert [s.list_item for s in sents] == [False, True, True]


def test_zh_split():
    assert len(split_sentences("我们收集您的姓名。我们不收集您的地址！", "zh")) == 2


def test_claim_example(en):
    assert claims(en, "We will collect your name and phone number.").items == {"name_u", "contact_u"}


def test_negated_address(en):
    cs = claims(en, "We do not collect your address.")
    assert cs.items == set()
    assert cs.candidates[0].verdict is Verdict.NEGATED


def test_contact_number_not_claim(en):
    cs = claims(en, "Please call our contact number 400-123-4567.")
    assert cs.items == set()
    assert cs.candidates[0].verdict is Verdict.NON_COLLECTIVE


def test_list_inherits_lead_in(en):
    assert claims(en, "We collect the following:\n- your name\n- your email").items == {"name_u", "contact_u"}
    assert claims(en, "We do not collect the following:\n- your name").items == set()


def test_exact_entry(en):
    cs = claims(en, "We collect your WeChat-bound phone number.")
    assert cs.items == {"contact_p"} and cs.exact == {"contact_p"}


def test_evidence_indices(en):
    cs = claims(en, "Hello. We collect your name. We store your email.")
    assert cs.evidence == {"name_u": [1], "contact_u": [2]}


def test_zh_claims(tax):
    lex = tax.lexicon("zh", "policy")
    cs = extract_claims("我们会收集您的手机号码。我们不会收集您的地址。", lex, VerbLists.from_taxonomy(tax, "zh"),
                        locale="zh")
    assert cs.items == {"contact_u"}


def test_detect_locale():
    assert detect_locale("我们收集您的信息") == "zh"
    assert detect_locale("We collect") == "en"


def test_invalid_policy_raises(en):
    lex, verbs = en
    with pytest.raises(PolicyError):
        extract_claims(PolicyText(PolicySource.PAGE_TEXT, "", False), lex, verbs)


def test_policy_claims_merges_valid_only(tax):
    ps = [PolicyText(PolicySource.PAGE_TEXT, "We collect your name.", True),
          PolicyText(PolicySource.PAGE_TEXT, "We collect your email.", False),
          PolicyText(PolicySource.EXTERNAL_FILE, "We collect your photos.", True)]
    cs = policy_claims(ps, tax, "en")
    assert cs.items == {"name_u", "photo_d"}


@pytest.mark.parametrize("case", CASES, ids=[f"s{i:02d}" for i in range(len(CASES))])
def test_labelled_sentences(en, case):
    assert claims(en, case["text"]).items == set(case["claims"])


def test_labelled_set_shape():
    assert len(CASES) == 40
    kinds = {c["kind"] for c in CASES}
    assert kinds == {"claim", "negation", "non_collective", "contrast"}
