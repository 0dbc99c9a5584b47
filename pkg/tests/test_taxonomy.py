import json

import pytest

from spoaudit.taxonomy import (
    CallbackStyle, PrivacyCategory, ProtectionLevel, SinkKind, TaxonomyError, dump_taxonomy,
    load_taxonomy, match_keywords, taxonomy_from_dict,
)


def test_shipped_counts(tax):
    assert len(tax.items) == 37
    # 113 device/platform table rows + 6 platform subAPIs; *Sync variants resolve by lookup
    assert len(tax.subapis) == 119
    assert len(tax.sinks) == 10


def test_categories_partition_items(tax):
    cats = {c: [i for i in tax.items if i.category is c] for c in PrivacyCategory}
    assert sum(len(v) for v in cats.values()) == 37
    assert all(i.id.endswith(i.category.suffix) for i in tax.items)


def test_lookup_subapi(tax):
    assert tax.lookup_subapi("getLocation") == {"location_d"}
    assert tax.lookup_subapi("wx.getClipboardData") == {"clipboard_d"}
    assert tax.lookup_subapi("closeSocket") == set()


def test_sync_variant_resolves_to_base(tax):
    m = tax.subapi("getSystemInfoSync")
    assert m.items == frozenset({"device_info_d"})
    assert m.callback_style is CallbackStyle.SYNC_RETURN
    assert tax.subapi("getClipboardDataSync").callback_style is CallbackStyle.SYNC_RETURN


def test_sinks(tax):
    assert tax.sink("wx.request").kind is SinkKind.REQUEST
    assert tax.sink("uploadFile").kind is SinkKind.UPLOAD
    assert tax.sink("setStorageSync") is None


def test_match_keywords(tax):
    lex = tax.lexicon("en", "ui")
    assert match_keywords("please enter your ID card", lex) == {"identity_u"}
    assert match_keywords("search", lex) == set()
    assert match_keywords("bank card number and cardholder", lex) == {"property_u"}


def test_leftmost_longest(tax):
    lex = tax.lexicon("en", "policy")
    assert match_keywords("your email address", lex) == {"contact_u"}
    assert match_keywords("phone numbers", lex) == {"contact_u"}
    assert match_keywords("addressing", lex) == set()


def test_zh_lexicon(tax):
    lex = tax.lexicon("zh", "policy")
    assert match_keywords("我们会收集您的地址", lex) == {"location_u"}


def test_ui_scope_has_only_user_input(tax):
    lex = tax.lexicon("en", "ui")
    assert all(tax.category_of(e.item) is PrivacyCategory.USER_INPUT for e in lex.entries)


def test_claim_covering(tax):
    assert tax.covered_by_claims({"contact_u"}) == {"contact_d", "contact_p", "contact_u"}
    assert tax.covered_by_claims({"contact_p"}, exact={"contact_p"}) == {"contact_p"}


def test_protection_levels(tax):
    assert tax.protection_level("location_d") is ProtectionLevel.PARTIALLY_PROTECTED
    over = tax.with_protection_levels({"bluetooth_d": "fully_protected"})
    assert over.protection_level("bluetooth_d") is ProtectionLevel.FULLY_PROTECTED
    assert over.protection_level("location_d") is None


def test_round_trip(tax, tmp_path):
    p = tmp_path / "t.json"
    dump_taxonomy(tax, p)
    again = load_taxonomy(p)
    assert again.to_dict() == tax.to_dict()


def test_empty_taxonomy_rejected(tax):
    d = tax.to_dict()
    d["items"] = []
    with pytest.raises(TaxonomyError, match="empty taxonomy"):
        taxonomy_from_dict(d)


def test_conflicting_mapping_rejected(tax):
    d = tax.to_dict()
    for m in d["subapi_map"]:
        if m["subapi"] == "getLocation":
            m["items"] = ["location_d", "location_p"]
    with pytest.raises(TaxonomyError, match="duplicate mapping category conflict"):
        taxonomy_from_dict(d)


def test_repeated_subapi_rejected(tax):
    d = tax.to_dict()
    d["subapi_map"].append({"subapi": "getLocation", "items": ["location_d"]})
    with pytest.raises(TaxonomyError, match="duplicate subapi"):
        taxonomy_from_dict(d)


def test_env_var_default(tax, tmp_path, monkeypatch):
    d = tax.to_dict()
    d["sinks"] = d["sinks"][:2]
    p = tmp_path / "small.json"
    p.write_text(json.dumps(d))
    monkeypatch.setenv("SPO_TAXONOMY", str(p))
    assert len(load_taxonomy().sinks) == 2
