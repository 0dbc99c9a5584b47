import { send } from '../../api.js'

Page({
  onShow() {
    wx.chooseLocation({
      success: function (r) {
        send({ name: r.name, addr: r.address, lat: r.latitude })
      }
    })
  }
})
