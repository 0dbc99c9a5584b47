const tracker = require('./libs/tracker/tracker.js')

App({
  onLaunch() {
    tracker.init()
  }
})
