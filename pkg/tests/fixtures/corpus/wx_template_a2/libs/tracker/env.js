function collect(cb) {
  const sys = wx.getSystemInfoSync()
  wx.getNetworkType({
    success: function (n) {
      cb({ model: sys.model, os: sys.system, net: n.networkType })
    }
  })
}

module.exports = { collect: collect }
