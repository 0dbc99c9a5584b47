Page({
  onPhone(e) {
    wx.setStorageSync('phone', e.detail.value)
  }
})
