#include "lanesurvey/imagery_cache.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "lanesurvey/errors.hpp"

namespace lanesurvey {
namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string fmt_heading(double deg) {
  double r = std::round(deg * 10.0) / 10.0;
  if (r >= 360.0) r -= 360.0;
  return fmt::format("{:.1f}", r);
}

std::string fmt_fixed7(double v) {
  std::string s = fmt::format("{:.7f}", v);
  return s == "-0.0000000" ? "0.0000000" : s;
}

}  // namespace

void ImageRequest::validate() const {
  if (!is_valid(point)) throw DomainError("image request with invalid coordinates");
  if (width <= 0 || height <= 0 || width > kMaxImageSide || height > kMaxImageSide) {
    throw DomainError(fmt::format("image size {}x{} exceeds {}x{}", width, height, kMaxImageSide, kMaxImageSide));
  }
}

std::string cache_key(const ImageRequest& req) {
  return fmt::format("{}_{}_h{}_f{:g}_p{:g}_{}x{}", fmt_fixed7(req.point.lat), fmt_fixed7(req.point.lon),
                     fmt_heading(req.heading.degrees()), req.fov_deg, req.pitch_deg, req.width, req.height);
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kCache:
      return "cache";
    case Provenance::kNetwork:
      return "network";
    case Provenance::kFixture:
      return "fixture";
    case Provenance::kMiss:
      return "miss";
  }
  return "unknown";
}

std::vector<PriceTier> default_price_tiers() { return {{100'000, 7.00}, {500'000, 5.60}}; }

double tiered_cost_usd(std::uint64_t images, const std::vector<PriceTier>& tiers) {
  if (tiers.empty()) return 0.0;
  double cost = 0.0;
  std::uint64_t billed = 0;
  for (const PriceTier& tier : tiers) {
    if (billed >= images) break;
    const std::uint64_t upto = std::min<std::uint64_t>(images, tier.up_to_images);
    if (upto > billed) {
      cost += static_cast<double>(upto - billed) * tier.usd_per_1000 / 1000.0;
      billed = upto;
    }
  }
  if (billed < images) cost += static_cast<double>(images - billed) * tiers.back().usd_per_1000 / 1000.0;
  return cost;
}

std::optional<std::string> load_api_key(const std::optional<std::filesystem::path>& key_file) {
  auto from_file = [](const std::filesystem::path& p) -> std::optional<std::string> {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot read API key file " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    std::string key = trim(ss.str());
    if (key.empty()) throw ConfigError("API key file " + p.string() + " is empty");
    return key;
  };
  if (key_file && !key_file->empty()) return from_file(*key_file);
  if (const char* path = std::getenv("LANESURVEY_API_KEY_FILE"); path && *path) return from_file(path);
  if (const char* key = std::getenv("LANESURVEY_API_KEY"); key && *key) return trim(key);
  return std::nullopt;
}

ImageryClient::ImageryClient(ImageryConfig cfg, std::shared_ptr<HttpTransport> transport, Sleeper sleeper)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
  if (!sleeper_) {
    sleeper_ = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
  }
}

std::filesystem::path ImageryClient::cache_path(const ImageRequest& req) const {
  return cfg_.cache_dir / (cache_key(req) + ".jpg");
}

bool ImageryClient::is_cached(const ImageRequest& req) const { return std::filesystem::exists(cache_path(req)); }

std::string ImageryClient::request_url(const ImageRequest& req) const {
  return fmt::format("{}?size={}x{}&location={},{}&heading={}&fov={:g}&pitch={:g}&key={}", cfg_.endpoint,
                     req.width, req.height, fmt_fixed7(req.point.lat), fmt_fixed7(req.point.lon),
                     fmt_heading(req.heading.degrees()), req.fov_deg, req.pitch_deg, cfg_.api_key.value_or(""));
}

std::string ImageryClient::redacted_url(const ImageRequest& req) const {
  std::string url = request_url(req);
  const auto pos = url.rfind("&key=");
  if (pos != std::string::npos) url = url.substr(0, pos) + "&key=REDACTED";
  return url;
}

std::mutex& ImageryClient::key_mutex(const std::string& key) {
  return key_mutexes_[std::hash<std::string>{}(key) % key_mutexes_.size()];
}

void ImageryClient::store(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  std::ostringstream tid;
  tid << std::this_thread::get_id();
  const std::filesystem::path tmp = path.string() + ".tmp" + tid.str();
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write cache file " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into the cache: " + ec.message());
}

FetchResult ImageryClient::fetch(const ImageRequest& req) {
  req.validate();
  const std::string key = cache_key(req);
  const std::filesystem::path path = cache_path(req);
  std::lock_guard lock(key_mutex(key));

  if (std::filesystem::exists(path)) {
    ++cached_;
    return {read_bytes(path), Provenance::kCache, path};
  }

  if (cfg_.mode == ImageryMode::kOffline) {
    const std::filesystem::path fixture = cfg_.fixture_dir / (key + ".jpg");
    if (cfg_.fixture_dir.empty() || !std::filesystem::exists(fixture)) {
      throw InputError("offline fixture miss for " + key);
    }
    auto bytes = read_bytes(fixture);
    store(path, bytes);
    ++fixture_;
    return {std::move(bytes), Provenance::kFixture, path};
  }

  if (!cfg_.api_key || cfg_.api_key->empty()) throw ConfigError("network imagery mode needs an API key");
  std::call_once(transport_once_, [this] {
    if (!transport_) transport_ = make_http_transport();
  });

  const std::string url = request_url(req);
  for (int attempt = 0;; ++attempt) {
    HttpResponse resp = transport_->get(url);
    if (resp.status == 200 && !resp.body.empty()) {
      std::vector<std::uint8_t> bytes(resp.body.begin(), resp.body.end());
      store(path, bytes);
      ++sent_;
      return {std::move(bytes), Provenance::kNetwork, path};
    }
    const bool retryable = resp.status == 0 || resp.status == 429 || resp.status >= 500;
    if (!retryable || attempt >= cfg_.max_retries) {
      throw ExternalError(fmt::format("imagery request failed with HTTP {} after {} attempt(s): {}", resp.status,
                                      attempt + 1, redacted_url(req)));
    }
    const double wait = std::min(cfg_.max_retry_wait_s, resp.retry_after_s.value_or(std::pow(2.0, attempt)));
    sleeper_(wait);
  }
}

CostLedger ImageryClient::ledger() const {
  CostLedger l;
  l.requests_sent = sent_.load();
  l.requests_cached = cached_.load();
  l.requests_fixture = fixture_.load();
  l.tiers = cfg_.tiers;
  return l;
}

ImageRequest request_for(const BatchRow& row, int width, int height) {
  ImageRequest req;
  req.point = row.point;
  req.heading = row.heading;
  req.fov_deg = row.fov_deg;
  req.pitch_deg = row.pitch_deg;
  req.width = width;
  req.height = height;
  return req;
}

BatchFetchResult fetch_batch(const BatchFile& batch, ImageryClient& client, const FetchOptions& opts) {
  BatchFetchResult result;
  result.diagnostics = batch.diagnostics;

  std::vector<ImageRequest> requests;
  requests.reserve(batch.rows.size());
  for (const BatchRow& row : batch.rows) requests.push_back(request_for(row, opts.width, opts.height));

  std::vector<std::string> seen;
  for (const ImageRequest& req : requests) {
    if (!client.is_cached(req)) seen.push_back(cache_key(req));
  }
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  result.planned_requests = seen.size();
  result.estimated_cost_usd = tiered_cost_usd(result.planned_requests, client.config().tiers);
  if (opts.dry_run) {
    result.ledger = client.ledger();
    return result;
  }

  result.entries.resize(batch.rows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= requests.size()) return;
      BatchEntry& entry = result.entries[i];
      entry.row = batch.rows[i];
      try {
        FetchResult r = client.fetch(requests[i]);
        entry.image = r.path;
        entry.provenance = r.provenance;
      } catch (const std::exception& e) {
        entry.provenance = Provenance::kMiss;
        entry.error = e.what();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.concurrency, static_cast<unsigned>(requests.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  for (const BatchEntry& e : result.entries) {
    if (e.provenance == Provenance::kMiss) {
      result.diagnostics.push_back(fmt::format("point {} heading {}: {}", e.row.point_id,
                                               fmt_heading(e.row.heading.degrees()), e.error));
    }
  }
  result.ledger = client.ledger();
  return result;
}

}  // namespace lanesurvey
