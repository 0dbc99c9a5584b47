from conftest import one_page
from spoaudit.analyze import analyze_app
from spoaudit.flow import SourceKind, collect_set, propagate


def _run(make_app, tax, js, wxml="<view/>", **extra):
    res = analyze_app(make_app(one_page(js, wxml, **extra)), tax)
    state = propagate(res.graph, None, res.sources)
    return res, state


def _tainted(state, name):
    return {k[0].name: v for k, v in state.bindings.items() if k[1] == name}


def test_callback_source(make_app, tax):
    res, _ = _run(make_app, tax, "Page({ onLoad() { wx.getLocation({ success(res) {} }) } })")
    (s,) = res.sources
    assert s.kind is SourceKind.SUBAPI_CALLBACK
    assert s.items == {"location_d"} and s.location.binding == "res"


def test_uip_source(make_app, tax):
    res, _ = _run(make_app, tax, "Page({ onPhone(e) {} })",
                  '<input placeholder="phone number" bindinput="onPhone"/>')
    (s,) = res.sources
    assert s.kind is SourceKind.UIP_HANDLER_PARAM
    assert s.items == {"contact_u"} and s.location.binding == "e"


def test_sync_return_source(make_app, tax):
    res, state = _run(make_app, tax, "Page({ onLoad() { const info = wx.getSystemInfoSync() } })")
    (s,) = res.sources
    assert s.kind is SourceKind.SUBAPI_RETURN and s.items == {"device_info_d"}
    assert _tainted(state, "info") == {"onLoad": {"device_info_d"}}


def test_single_assignment(make_app, tax):
    _, state = _run(make_app, tax,
                    "Page({ onLoad() { wx.getLocation({ success(res) { var lat = res.latitude } }) } })")
    assert _tainted(state, "lat") == {"success": {"location_d"}}


def test_two_hop_return(make_app, tax):
    js = """function f(a) { return a }
Page({ onLoad() { wx.getLocation({ success(res) { var y = f(res.latitude) } }) } })"""
    _, state = _run(make_app, tax, js)
    assert _tainted(state, "y") == {"success": {"location_d"}}


def test_page_data_field(make_app, tax):
    js = """Page({
  onLoad() { wx.getLocation({ success: (res) => { this.setData({ addr: res.latitude }) } }) },
  later() { var a = this.data.addr; var b = this.data.other }
})"""
    _, state = _run(make_app, tax, js, '<view bindtap="later"/>')
    assert state.page_fields[("pages/index/index", "addr")] == {"location_d"}
    t = _tainted(state, "a")
    assert t == {"later": {"location_d"}}
    assert _tainted(state, "b") == {}


def test_one_flow_to_request(make_app, tax):
    js = """Page({ onLoad() { wx.getLocation({ success(res) {
  const lat = res.latitude
  wx.request({ url: 'https://x.example.com', data: { lat } })
} }) } })"""
    res, _ = _run(make_app, tax, js)
    (f,) = res.flows
    assert f.items == {"location_d"} and f.sink.api == "request"
    assert f.sink.url == "https://x.example.com"
    assert f.path[0][0].name == "success"


def test_console_only_no_flow(make_app, tax):
    res, _ = _run(make_app, tax, "Page({ onLoad() { wx.getLocation({ success(r) { console.log(r) } }) } })")
    assert res.flows == []


def test_choose_image_upload(make_app, tax):
    js = """Page({ onLoad() { wx.chooseImage({ success(r) {
  wx.uploadFile({ url: 'u', filePath: r.tempFilePaths[0], name: 'f' })
} }) } })"""
    res, _ = _run(make_app, tax, js)
    (f,) = res.flows
    assert f.items == {"photo_d"} and f.sink.api == "uploadFile"


def test_unreached_function_is_ignored(make_app, tax):
    js = "Page({ never() { wx.getLocation({ success(r) { wx.request({ data: r }) } }) } })"
    res, _ = _run(make_app, tax, js)
    assert res.flows == []


def test_non_payload_argument_ignored(make_app, tax):
    js = """Page({ onLoad() { wx.getLocation({ success(r) {
  wx.request({ url: 'https://x', method: r.latitude > 0 ? 'GET' : 'POST', success() {} })
} }) } })"""
    res, _ = _run(make_app, tax, js)
    assert res.flows == []


def test_url_payload_counts(make_app, tax):
    js = """Page({ onLoad() { wx.getLocation({ success(r) {
  wx.request({ url: 'https://x/?lat=' + r.latitude })
} }) } })"""
    res, _ = _run(make_app, tax, js)
    assert len(res.flows) == 1


def test_promise_and_await(make_app, tax):
    js = """Page({ async onLoad() {
  const r = await wx.getClipboardData()
  wx.request({ url: 'u', data: r.data })
} })"""
    res, _ = _run(make_app, tax, js)
    (f,) = res.flows
    assert f.items == {"clipboard_d"} and f.source.kind is SourceKind.SUBAPI_RETURN


def test_collect_set():
    class F:
        def __init__(self, items):
            self.items = frozenset(items)

    assert collect_set([F({"location_d"}), F({"location_d"}), F({"contact_u"})]) == {"location_d", "contact_u"}
    assert collect_set([]) == set()


def test_collect_two_items(corpus_results):
    res = corpus_results["wx_bluetooth"]
    assert len(res.flows) == 3
    assert collect_set(res.flows) == {"bluetooth_d", "device_info_d"}


def test_fixpoint_bounded(make_app, tax):
    js = """Page({ onLoad() { wx.getLocation({ success(r) {
  var a = r, b, c
  for (var i = 0; i < 3; i++) { b = a; c = b; a = c }
  wx.request({ data: c })
} }) } })"""
    res, state = _run(make_app, tax, js)
    assert len(res.flows) == 1
    assert state.iterations <= 10
