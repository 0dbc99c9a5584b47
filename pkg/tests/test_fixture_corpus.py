import pytest

from oracle import corpus_apps, expected, observed_flows

APPS = [d.name for d in corpus_apps()]


@pytest.mark.parametrize("name", APPS)
def test_app_matches_ground_truth(name, corpus_results):
    exp = expected(next(d for d in corpus_apps() if d.name == name))
    res = corpus_results[name]
    rep = res.report
    assert observed_flows(res.flows) == exp["flows"]
    assert sorted(rep.s_collect) == exp["s_collect"]
    assert sorted(rep.s_claim) == exp["s_claim"]
    assert sorted(rep.s_spo) == exp["s_spo"]
    assert rep.policy_status.value == exp["policy_status"]
    if "pages_excluded" in exp:
        assert rep.coverage["pages_excluded"] == exp["pages_excluded"]


@pytest.mark.parametrize("name", [n for n in APPS if n.startswith("neg_")])
def test_known_limitation_is_missed(name, corpus_results):
    """Relayed and dynamic-path data escape the analysis by design."""
    exp = expected(next(d for d in corpus_apps() if d.name == name))
    missed = set(exp["known_misses"]["items"])
    assert not missed & corpus_results[name].report.s_collect


def test_corpus_shape():
    exps = [expected(d) for d in corpus_apps()]
    flows = [f for e in exps for f in e["flows"]]
    assert len(exps) >= 12 and len(flows) >= 20
    assert {f[0] for f in flows} == {"SubApiCallback", "SubApiReturn", "UipHandlerParam", "FormSubmitEvent"}
    sinks = {f[3] for f in flows}
    assert {"request", "uploadFile"} <= sinks
