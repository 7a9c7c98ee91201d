#include <stdexcept>
#include <string>

#include "httplib.h"
#include "lanesurvey/imagery_cache.hpp"

namespace lanesurvey {
namespace {

class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(double timeout_s) : timeout_s_(timeout_s) {}

  HttpResponse get(const std::string& url) override {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return {0, "malformed URL", std::nullopt};
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string target = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    const auto secs = static_cast<time_t>(timeout_s_);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_follow_location(true);

    auto res = client.Get(target);
    if (!res) return {0, httplib::to_string(res.error()), std::nullopt};
    HttpResponse out{res->status, res->body, std::nullopt};
    if (res->has_header("Retry-After")) {
      try {
        out.retry_after_s = std::stod(res->get_header_value("Retry-After"));
      } catch (const std::exception&) {
        // HTTP-date form; fall back to exponential backoff
      }
    }
    return out;
  }

 private:
  double timeout_s_;
};

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(double timeout_s) {
  return std::make_unique<HttplibTransport>(timeout_s);
}

}  // namespace lanesurvey
