Page({
  onSubmit(e) {
    const v = e.detail.value
    wx.request({ url: 'https://api.example.com/register', method: 'POST', data: v })
  },
  onGetPhone(e) {
    wx.request({ url: 'https://api.example.com/phone', data: { code: e.detail.code } })
  }
})
