#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lanesurvey/geodesy.hpp"
#include "lanesurvey/survey_plan.hpp"

namespace lanesurvey {

inline constexpr int kMaxImageSide = 640;

struct ImageRequest {
  GeoPoint point;
  Heading heading;
  double fov_deg = kDefaultFovDeg;
  double pitch_deg = kDefaultPitchDeg;
  int width = kMaxImageSide;
  int height = kMaxImageSide;

  /// Throws DomainError when the size exceeds 640x640 or the point is invalid.
  void validate() const;
};

/// Canonical request string: lat/lon at 7 dp, heading at 1 dp, fov, pitch and
/// size. Distinct rounded requests give distinct keys; the key doubles as the
/// cache file stem.
std::string cache_key(const ImageRequest& req);

enum class Provenance { kCache, kNetwork, kFixture, kMiss };
std::string_view to_string(Provenance p);

struct PriceTier {
  std::uint64_t up_to_images;  // inclusive upper bound of this tier
  double usd_per_1000;
};

/// $7.00 per 1,000 up to 100,000 images, $5.60 per 1,000 up to 500,000.
/// Volumes beyond the last tier are charged at the last tier's rate.
std::vector<PriceTier> default_price_tiers();

/// Tiered cost of `images` billable requests.
double tiered_cost_usd(std::uint64_t images, const std::vector<PriceTier>& tiers);

struct CostLedger {
  std::uint64_t requests_sent = 0;
  std::uint64_t requests_cached = 0;
  std::uint64_t requests_fixture = 0;
  std::vector<PriceTier> tiers = default_price_tiers();

  double estimated_cost_usd() const { return tiered_cost_usd(requests_sent, tiers); }
};

struct HttpResponse {
  int status = 0;
  std::string body;
  std::optional<double> retry_after_s;
};

/// Pluggable HTTP GET so tests (and offline mode) can prove no network I/O happens.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse get(const std::string& url) = 0;
};

/// cpp-httplib backed transport.
std::unique_ptr<HttpTransport> make_http_transport(double timeout_s = 30.0);

enum class ImageryMode { kNetwork, kOffline };

struct ImageryConfig {
  ImageryMode mode = ImageryMode::kOffline;
  std::string endpoint = "https://maps.googleapis.com/maps/api/streetview";
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path fixture_dir;  // offline mode: mirrors the cache layout
  std::optional<std::string> api_key;
  int max_retries = 3;
  double max_retry_wait_s = 60.0;
  std::vector<PriceTier> tiers = default_price_tiers();
};

/// Reads the API key from `key_file`, else from the file named by
/// LANESURVEY_API_KEY_FILE, else from LANESURVEY_API_KEY. Returns nullopt
/// when none is configured. The key is never logged.
std::optional<std::string> load_api_key(const std::optional<std::filesystem::path>& key_file);

struct FetchResult {
  std::vector<std::uint8_t> bytes;
  Provenance provenance = Provenance::kCache;
  std::filesystem::path path;  // cache file holding the bytes
};

class ImageryClient {
 public:
  using Sleeper = std::function<void(double seconds)>;

  explicit ImageryClient(ImageryConfig cfg, std::shared_ptr<HttpTransport> transport = nullptr,
                         Sleeper sleeper = {});

  /// Cache first, then fixture (offline) or network. Throws ConfigError when
  /// the key is missing in network mode, ExternalError on HTTP failure after
  /// retries, InputError on a fixture miss.
  FetchResult fetch(const ImageRequest& req);

  bool is_cached(const ImageRequest& req) const;
  std::filesystem::path cache_path(const ImageRequest& req) const;
  /// Request URL with the key replaced by a placeholder.
  std::string redacted_url(const ImageRequest& req) const;

  CostLedger ledger() const;
  const ImageryConfig& config() const { return cfg_; }

 private:
  std::string request_url(const ImageRequest& req) const;
  void store(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
  std::mutex& key_mutex(const std::string& key);

  ImageryConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
  std::once_flag transport_once_;
  Sleeper sleeper_;
  std::array<std::mutex, 64> key_mutexes_;
  std::atomic<std::uint64_t> sent_{0};
  std::atomic<std::uint64_t> cached_{0};
  std::atomic<std::uint64_t> fixture_{0};
};

struct BatchEntry {
  BatchRow row;
  std::optional<std::filesystem::path> image;
  Provenance provenance = Provenance::kMiss;
  std::string error;  // set for misses
};

struct FetchOptions {
  bool dry_run = false;
  unsigned concurrency = 4;
  int width = kMaxImageSide;
  int height = kMaxImageSide;
};

struct BatchFetchResult {
  std::vector<BatchEntry> entries;  // batch order; empty on dry run
  CostLedger ledger;
  std::vector<std::string> diagnostics;
  std::uint64_t planned_requests = 0;  // uncached rows
  double estimated_cost_usd = 0.0;     // tiered cost of planned_requests
};

ImageRequest request_for(const BatchRow& row, int width, int height);

/// Resolves every batch row to an image or a miss entry. Failures are
/// collected, never fatal. A dry run only counts uncached requests and prices them.
BatchFetchResult fetch_batch(const BatchFile& batch, ImageryClient& client, const FetchOptions& opts);

}  // namespace lanesurvey
