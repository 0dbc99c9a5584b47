from collections import Counter

import pytest

from spoaudit.ingest import load_package
from spoaudit.miner import (
    AppFingerprint, ClusterConfig, attribute_spo, cluster_sdk_files, content_similarity, detect_sdks,
    detect_templates, fingerprint, jaccard, multiset_jaccard, shingles,
)
from spoaudit.spo import compute_spo

from oracle import CORPUS


def fp(appid, routes, files, dev=""):
    return AppFingerprint(appid, frozenset(routes), {p: shingles(t) for p, t in files.items()}, dev)


def test_shingles():
    assert sum(shingles("a b c d e f").values()) == 2
    assert shingles("a b") == Counter({"a b": 1})
    assert shingles("") == Counter()


def test_jaccard_basics():
    assert jaccard({1, 2}, {2, 3}) == pytest.approx(1 / 3)
    assert jaccard(set(), set()) == 1.0
    assert multiset_jaccard(Counter("aab"), Counter("ab")) == pytest.approx(2 / 3)


def test_fingerprint_of_fixture():
    pkg = load_package(CORPUS / "wx_uip_bindinput")
    f = fingerprint(pkg)
    assert f.rt == {"pages/profile/profile", "pages/privacy/privacy"}
    assert "utils/http.js" in f.ctn and "app.json" not in f.ctn


def test_twin_fixtures_differ_only_in_developer():
    a = fingerprint(load_package(CORPUS / "wx_template_a1"))
    b = fingerprint(load_package(CORPUS / "wx_template_a2"))
    assert a.rt == b.rt and a.ctn == b.ctn and a.dev != b.dev


SRC = "Page({ onLoad() { wx.request({ url: 'https://x.example.com/a', data: { k: 1 } }) } })"


def test_two_developers_one_cluster():
    apps = [fp("a", ["p/i"], {"p/i.js": SRC}, "A"), fp("b", ["p/i"], {"p/i.js": SRC}, "B")]
    (c,) = detect_templates(apps)
    assert c.members == ["a", "b"] and c.developers == {"A", "B"}


def test_same_developer_filtered():
    apps = [fp("a", ["p/i"], {"p/i.js": SRC}, "A"), fp("b", ["p/i"], {"p/i.js": SRC}, "A")]
    assert detect_templates(apps) == []
    assert len(detect_templates(apps, keep_all=True)) == 1


def test_singleton_filtered():
    assert detect_templates([fp("a", ["p/i"], {"p/i.js": SRC}, "A")]) == []


def test_route_threshold_excludes():
    routes = [f"pages/p{i}/p{i}" for i in range(19)]
    a = fp("a", routes + ["pages/x/x"], {"p.js": SRC}, "A")
    b = fp("b", routes, {"p.js": SRC}, "B")
    assert jaccard(a.rt, b.rt) == pytest.approx(0.95)
    assert len(detect_templates([a, b], ClusterConfig(theta1=0.9))) == 1
    assert detect_templates([a, b], ClusterConfig(theta1=1.0)) == []


def test_content_similarity_weighting():
    a = fp("a", [], {"x.js": SRC, "y.js": SRC + " more tokens here"})
    b = fp("b", [], {"x.js": SRC})
    assert content_similarity(a, a) == 1.0
    assert 0 < content_similarity(a, b) < 1


def test_config_validation():
    with pytest.raises(ValueError):
        ClusterConfig(theta1=0)
    with pytest.raises(ValueError):
        ClusterConfig(min_sdk_usage=-1)


def _sdk_corpus(n_users, n_total, body="function tap(e){ wx.request({ url: 'https://btn', data: e }) }"):
    out = []
    for i in range(n_total):
        files = {"pages/i/i.js": f"Page({{ id: {i}, name: 'app{i}' }})"}
        if i < n_users:
            files["vant/button.js"] = body
        out.append(fp(f"a{i:03d}", ["pages/i/i"], files, f"d{i}"))
    return out


def test_sdk_usage_101():
    (c,) = cluster_sdk_files(_sdk_corpus(101, 101), ClusterConfig(min_sdk_usage=100))
    assert c.usage_count == 101 and c.file_name == "button.js"


def test_sdk_desk_scale():
    assert len(cluster_sdk_files(_sdk_corpus(4, 6), ClusterConfig(min_sdk_usage=3))) == 1
    assert cluster_sdk_files(_sdk_corpus(3, 6), ClusterConfig(min_sdk_usage=3)) == []


def test_dissimilar_same_name_no_cluster():
    apps = [fp(f"a{i}", [], {"lib/util.js": f"function f{i}() {{ return {i} * {i} + {i} }}"}) for i in range(5)]
    assert cluster_sdk_files(apps, ClusterConfig(min_sdk_usage=1)) == []


def test_fixture_sdk():
    pkgs = [load_package(d) for d in sorted(CORPUS.iterdir())]
    (sdk,) = detect_sdks([fingerprint(p) for p in pkgs], ClusterConfig(min_sdk_usage=3))
    assert sdk.directory == "libs/tracker" and sdk.usage_count == 4
    assert sdk.files == ["env.js", "net.js", "tracker.js"]


def test_attribution_means(tax):
    reports = [compute_spo({"a_d", "b_d", "c_d"}, set(), "missing", appid=f"t{i}") for i in range(2)]
    reports += [compute_spo({"a_d"}, set(), "missing", appid=f"o{i}") for i in range(3)]
    from spoaudit.miner import TemplateCluster
    t = TemplateCluster("T1", ["t0", "t1"], {"A", "B"}, "t0")
    att = attribute_spo([t], [], reports)
    assert att["template_apps"]["mean_collected"] == 3.00
    assert att["non_template_apps"]["mean_collected"] == 1.00


def test_sdk_flow_attribution(corpus_results):
    pkgs = [r.package for r in corpus_results.values()]
    sdks = detect_sdks([fingerprint(p) for p in pkgs], ClusterConfig(min_sdk_usage=3))
    att = attribute_spo([], sdks, [r.report for r in corpus_results.values()])
    (row,) = att["sdks"]
    assert row["flows"] == 8 and row["items"] == ["device_info_d", "network_d"]


def test_no_clusters_empty_attribution():
    assert attribute_spo([], [], []) == {}
