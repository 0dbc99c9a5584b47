Page({
  onShow() {
    const phone = wx.getStorageSync('phone')
    wx.request({ url: 'https://api.example.com/sync', data: { phone: phone } })
  }
})
