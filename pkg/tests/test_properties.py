"""Property suites (headless, bounded example counts)."""

import json

from hypothesis import HealthCheck, given, settings, strategies as st

from conftest import one_page, write_app
from spoaudit.analyze import analyze_app
from spoaudit.miner import AppFingerprint, content_similarity, jaccard, multiset_jaccard, shingles
from spoaudit.spo import PolicyStatus, SpoReport, aggregate, compute_spo, emit_report

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
VARS = ["a", "b", "c", "d", "e"]

# statements: (kind, target, src1, src2)
stmt = st.tuples(st.sampled_from(["copy", "concat", "call", "const"]), st.sampled_from(VARS),
                 st.sampled_from(VARS + ["res"]), st.sampled_from(VARS + ["res"]))


def _js(stmts):
    lines = []
    for kind, x, y, z in stmts:
        if kind == "copy":
            lines.append(f"{x} = {y}")
        elif kind == "concat":
            lines.append(f"{x} = {y} + '-' + {z}")
        elif kind == "call":
            lines.append(f"{x} = ident({y})")
        else:
            lines.append(f"{x} = 1")
    body = "\n      ".join(lines)
    return f"""function ident(v) {{ return v }}
Page({{
  onLoad() {{
    wx.getLocation({{ success(res) {{
      var {', '.join(VARS)}
      {body}
    }} }})
  }}
}})
"""


def _oracle(stmts):
    """Flow-insensitive, context-insensitive reachability from res."""
    edges = {}
    for kind, x, y, z in stmts:
        if kind == "copy":
            edges.setdefault(y, set()).add(x)
        elif kind == "concat":
            edges.setdefault(y, set()).add(x)
            edges.setdefault(z, set()).add(x)
        elif kind == "call":
            edges.setdefault(y, set()).add("<ret>")
            edges.setdefault("<ret>", set()).add(x)
    seen, todo = {"res"}, ["res"]
    while todo:
        for n in edges.get(todo.pop(), ()):
            if n not in seen:
                seen.add(n)
                todo.append(n)
    return {v for v in VARS if v in seen}


def _tainted(tmp_path_factory, tax, stmts):
    d = write_app(tmp_path_factory.mktemp("p"), one_page(_js(stmts)))
    from spoaudit.flow import propagate
    res = analyze_app(d, tax)
    state = propagate(res.graph, None, res.sources)
    got = {k[1] for k, v in state.bindings.items() if k[0].name == "success" and "location_d" in v}
    return got & set(VARS), state


@SETTINGS
@given(st.lists(stmt, max_size=12))
def test_taint_matches_reachability(tmp_path_factory, tax, stmts):
    got, state = _tainted(tmp_path_factory, tax, stmts)
    assert got == _oracle(stmts)
    # each pass either adds a fact or ends the loop, so passes stay small
    assert state.iterations <= len(stmts) + 3


@SETTINGS
@given(st.lists(stmt, max_size=8), stmt)
def test_taint_monotone_in_statements(tmp_path_factory, tax, stmts, extra):
    base, _ = _tainted(tmp_path_factory, tax, stmts)
    more, _ = _tainted(tmp_path_factory, tax, stmts + [extra])
    assert base <= more


items = st.sets(st.sampled_from(["location_d", "location_u", "contact_u", "contact_p", "name_u",
                                 "bluetooth_d", "photo_d", "device_info_d"]), max_size=6)
status = st.sampled_from(list(PolicyStatus))


@settings(max_examples=200, deadline=None)
@given(items, items, status)
def test_spo_set_algebra(tax, collect, claim, st_):
    r = compute_spo(collect, claim, st_, tax)
    assert r.s_spo <= r.s_collect
    assert not r.s_spo & tax.covered_by_claims(r.s_claim)
    if st_ is not PolicyStatus.VALID:
        assert r.s_spo == r.s_collect and r.s_claim == set()
    assert compute_spo(collect, claim | collect, "valid", tax).s_spo == set()


texts = st.text(alphabet="abc (){};=.'\n", max_size=80)


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(st.sampled_from(["a.js", "b.js", "c.wxml"]), texts, max_size=3),
       st.dictionaries(st.sampled_from(["a.js", "b.js", "c.wxml"]), texts, max_size=3),
       st.frozensets(st.sampled_from(["p/a", "p/b", "p/c"])))
def test_similarity_properties(fa, fb, routes):
    a = AppFingerprint("a", routes, {p: shingles(t) for p, t in fa.items()})
    b = AppFingerprint("b", frozenset(), {p: shingles(t) for p, t in fb.items()})
    assert content_similarity(a, a) == 1.0
    assert jaccard(routes, routes) == 1.0
    for ctn in a.ctn.values():
        assert multiset_jaccard(ctn, ctn) == 1.0
    s = content_similarity(a, b)
    assert 0.0 <= s <= 1.0 and s == content_similarity(b, a)


reports = st.lists(st.tuples(items, items, status, st.integers(0, 300000)), min_size=1, max_size=8)


@settings(max_examples=100, deadline=None)
@given(reports, st.randoms(use_true_random=False))
def test_aggregation_permutation_invariant(tax, rows, rnd):
    reps = []
    for i, (c, cl, s, used) in enumerate(rows):
        r = compute_spo(c, cl, s, tax, appid=f"app{i}")
        r.metadata = {"recently_used": used}
        reps.append(r)
    shuffled = list(reps)
    rnd.shuffle(shuffled)
    for basis in ("valid-policy", "all"):
        a = aggregate(reps, tax, basis=basis).to_dict()
        b = aggregate(shuffled, tax, basis=basis).to_dict()
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_reports_byte_identical(corpus_results, tax):
    from oracle import corpus_apps
    first = [r.report for r in corpus_results.values()]
    again = [analyze_app(d, tax).report for d in corpus_apps()]
    for fmt in ("json", "csv", "text"):
        a = emit_report(aggregate(first, tax), first, fmt, tax=tax, flows=True)
        b = emit_report(aggregate(again, tax), again, fmt, tax=tax, flows=True)
        assert a == b
    assert isinstance(first[0], SpoReport)
