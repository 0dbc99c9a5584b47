export function send(payload) {
  wx.request({ url: 'https://map.example.com/save', data: payload })
}
