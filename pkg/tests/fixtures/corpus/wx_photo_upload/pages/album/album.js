Page({
  pick() {
    wx.chooseImage({
      count: 1,
      success: (res) => {
        this.send(res.tempFilePaths[0])
      }
    })
  },
  send(p) {
    wx.uploadFile({ url: 'https://up.example.com/img', filePath: p, name: 'file' })
  },
  rec() {
    wx.startRecord({
      success(res) {
        wx.uploadFile({ url: 'https://up.example.com/voice', filePath: res.tempFilePath, name: 'voice' })
      }
    })
  }
})
