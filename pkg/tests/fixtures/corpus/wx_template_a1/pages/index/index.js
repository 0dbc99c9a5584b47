const tracker = require('../../libs/tracker/tracker.js')

Page({
  onLoad() {
    tracker.init()
    wx.getLocation({
      success: (res) => {
        wx.request({ url: 'https://shop.example.com/near', data: { lat: res.latitude, lng: res.longitude } })
      }
    })
  },
  paste() {
    wx.getClipboardData({
      success: (r) => {
        wx.request({ url: 'https://shop.example.com/coupon', data: { code: r.data } })
      }
    })
  }
})
