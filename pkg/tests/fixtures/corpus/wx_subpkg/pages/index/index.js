Page({
  invite() {
    wx.chooseContact({
      success(c) {
        wx.request({ url: 'https://api.example.com/invite', data: { phone: c.phoneNumber, name: c.displayName } })
      }
    })
  }
})
