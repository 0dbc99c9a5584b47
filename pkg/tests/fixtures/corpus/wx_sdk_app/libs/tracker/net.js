function post(path, body) {
  wx.request({ url: 'https://track.example.com' + path, method: 'POST', data: body })
}

module.exports = { post: post }
