import json
import shutil
import subprocess
import sys

import pytest

from conftest import one_page, write_app
from oracle import CORPUS, corpus_apps, expected
from spoaudit.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_fixture(capsys):
    code, out, _ = run(["analyze", str(CORPUS / "wx_loc_request")], capsys)
    assert code == 0
    (app,) = json.loads(out)["apps"]
    assert app["s_spo"] == ["location_d"] and app["policy_status"] == "missing"


def test_analyze_missing_dir(capsys, tmp_path):
    code, _, err = run(["analyze", str(tmp_path / "nope")], capsys)
    assert code == 1 and "not a readable" in err


def test_analyze_not_a_package(capsys, tmp_path):
    code, _, _ = run(["analyze", str(tmp_path)], capsys)
    assert code == 1


def test_analyze_parse_failure_still_ok(capsys):
    code, out, _ = run(["analyze", str(CORPUS / "wx_no_flow")], capsys)
    assert code == 0
    cov = json.loads(out)["apps"][0]["coverage"]
    assert cov["pages_excluded"] == ["pages/broken/broken"]


def test_analyze_external_policy_and_dumps(capsys, tmp_path):
    pol = tmp_path / "p.txt"
    pol.write_text("Privacy Policy. We collect your location information to find stores near you.")
    dot = tmp_path / "g.dot"
    code, out, _ = run(["analyze", str(CORPUS / "wx_loc_request"), "--policy", str(pol), "--dump-flows",
                        "--dump-callgraph", str(dot)], capsys)
    assert code == 0
    app = json.loads(out)["apps"][0]
    assert app["s_spo"] == [] and app["policy_status"] == "valid"
    assert app["flows"][0]["source"]["api"] == "getLocation"
    assert dot.read_text().startswith("digraph")


def test_usage_errors(capsys):
    assert run(["analyze", str(CORPUS / "wx_loc_request"), "--format", "xml"], capsys)[0] == 1
    assert run(["mine", str(CORPUS), "--theta1", "1.5"], capsys)[0] == 1
    assert run(["corpus", str(CORPUS), "--parallelism", "0"], capsys)[0] == 1
    assert run([], capsys)[0] == 1


def test_bad_taxonomy(capsys, tmp_path):
    bad = tmp_path / "t.json"
    bad.write_text("{}")
    assert run(["analyze", str(CORPUS / "wx_loc_request"), "--taxonomy", str(bad)], capsys)[0] == 1


def test_corpus_entries(capsys):
    code, out, _ = run(["corpus", str(CORPUS)], capsys)
    doc = json.loads(out)
    assert code == 0
    assert len(doc["apps"]) == len(corpus_apps())
    assert doc["corpus"]["n_failed"] == 0


def test_corpus_with_corrupt_app(capsys, tmp_path):
    apps = [d for d in corpus_apps() if not d.name.startswith("neg_")][:11]
    for d in apps:
        shutil.copytree(d, tmp_path / d.name)
    (tmp_path / "zz_corrupt").mkdir()
    (tmp_path / "zz_corrupt" / "app.json").write_text("{not json")
    code, out, _ = run(["corpus", str(tmp_path)], capsys)
    doc = json.loads(out)
    assert code == 0
    assert len(doc["apps"]) == 11
    assert [f["appid"] for f in doc["corpus"]["failures"]] == ["zz_corrupt"]


def test_corpus_all_corrupt(capsys, tmp_path):
    (tmp_path / "x").mkdir()
    assert run(["corpus", str(tmp_path)], capsys)[0] == 2


def test_spo_basis_totals(capsys):
    exps = [expected(d) for d in corpus_apps()]
    valid = [e for e in exps if e["policy_status"] == "valid"]
    totals = {}
    for basis in ("valid-policy", "all"):
        _, out, _ = run(["corpus", str(CORPUS), "--spo-basis", basis], capsys)
        totals[basis] = json.loads(out)["corpus"]["total"]
    assert totals["valid-policy"]["collected"] == sum(len(e["s_collect"]) for e in valid)
    assert totals["valid-policy"]["spo"] == sum(len(e["s_spo"]) for e in valid)
    assert totals["all"]["collected"] == sum(len(e["s_collect"]) for e in exps)
    assert totals["all"]["spo"] == sum(len(e["s_spo"]) for e in exps)
    assert totals["all"] != totals["valid-policy"]


def test_parallel_matches_serial(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["corpus", str(CORPUS), "--out", str(a)], capsys)[0] == 0
    assert run(["corpus", str(CORPUS), "--parallelism", "3", "--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_mine_fixture(capsys):
    code, out, _ = run(["mine", str(CORPUS), "--min-sdk-usage", "3"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert [t["members"] for t in doc["templates"]] == [["wx_template_a1", "wx_template_a2"]]
    assert [s["directory"] for s in doc["sdks"]] == ["libs/tracker"]


def test_mine_theta1_excludes_near_identical_routes(capsys, tmp_path):
    routes = [f"pages/p{i}/p{i}" for i in range(20)]
    for name, dev, rs in (("a", "A", routes), ("b", "B", routes[:19])):
        files = {"app.json": {"pages": rs}, "app.js": "App({})", "meta.json": {"developer": dev}}
        for r in rs:
            files[r + ".js"] = "Page({ onLoad() { console.log('same page body for all') } })"
            files[r + ".wxml"] = "<view>same</view>"
        write_app(tmp_path / name, files)
    _, out, _ = run(["mine", str(tmp_path)], capsys)
    assert len(json.loads(out)["templates"]) == 1
    _, out, _ = run(["mine", str(tmp_path), "--theta1", "1.0"], capsys)
    assert json.loads(out)["templates"] == []


def test_policy_subcommand(capsys, tmp_path):
    p = tmp_path / "p.txt"
    p.write_text("We collect your name. We do not collect your address.")
    code, out, _ = run(["policy", str(p)], capsys)
    assert code == 0 and json.loads(out)["s_claim"] == ["name_u"]
    code, out, _ = run(["policy", str(p), "--format", "csv"], capsys)
    assert out == "item\nname_u\n"


def test_csv_and_text_formats(capsys):
    code, out, _ = run(["analyze", str(CORPUS / "wx_loc_request"), "--format", "csv"], capsys)
    assert out.splitlines() == ["appid,item,status", "wx_loc_request,location_d,collected",
                                "wx_loc_request,location_d,spo"]
    code, out, _ = run(["corpus", str(CORPUS), "--format", "text"], capsys)
    assert "policy providing rate" in out


def test_module_entry_point(tmp_path):
    d = write_app(tmp_path / "x", one_page("Page({})"))
    proc = subprocess.run([sys.executable, "-m", "spoaudit", "analyze", str(d)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["apps"][0]["s_collect"] == []
