#pragma once

// IIIF Image API 2.0 request building, download planning and fetching.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imgsearch/alto.hpp"
#include "imgsearch/raster.hpp"

namespace imgsearch {

inline constexpr std::string_view kDefaultIiifScheme = "https://";
inline constexpr std::string_view kDefaultIiifPrefix = "www.nb.no/services/image/resolver/";

struct IiifRequest {
    std::string scheme = std::string(kDefaultIiifScheme);
    std::string prefix = std::string(kDefaultIiifPrefix);
    std::string identifier;
    BoundingBox region;
    std::int64_t size_width = 1;
    std::int64_t size_height = 1;
    int rotation = 0;
    std::string filename = "default.jpg";

    friend bool operator==(const IiifRequest&, const IiifRequest&) = default;
};

/// `{scheme}{prefix}{identifier}/{l},{t},{w},{h}/{w},{h}/{rotation}/{filename}`.
/// The identifier is emitted verbatim (URN colons are not percent-encoded).
/// Throws InvalidArgument if the request violates its invariants.
std::string build_iiif_url(const IiifRequest& req);

/// Inverse of build_iiif_url. Throws ParseError.
IiifRequest parse_iiif_url(std::string_view url);

/// Elements whose long/short side ratio is 50 or more are discarded.
inline constexpr double kMaxAspectRatio = 50.0;

bool aspect_ratio_ok(const BoundingBox& box);
double aspect_ratio(const BoundingBox& box);

struct SizePolicy {
    std::int64_t max_side = 512;
};

/// Request for the element region with the longer side scaled to
/// policy.max_side; the other side is floored, minimum 1. Returns nullopt when
/// the element fails the aspect-ratio rule.
std::optional<IiifRequest> plan_download(const GraphicalElementRecord& record,
                                         const SizePolicy& policy = {},
                                         std::string_view scheme = kDefaultIiifScheme,
                                         std::string_view prefix = kDefaultIiifPrefix);

/// Token bucket shared by all fetch threads.
class RateLimiter {
public:
    explicit RateLimiter(double per_second);
    /// Blocks until a request may be issued.
    void acquire();

private:
    std::mutex mutex_;
    std::chrono::steady_clock::duration interval_;
    std::chrono::steady_clock::time_point next_;
};

struct EndpointConfig {
    std::chrono::milliseconds timeout{10000};
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    double requests_per_second = 10.0;
    unsigned concurrency = 4;
};

/// Performs one GET with retries. Retryable failures (connection errors,
/// timeouts, 429/502/503/504) back off exponentially; other HTTP errors throw
/// TransportError immediately.
std::vector<std::uint8_t> fetch_bytes(const std::string& url, const EndpointConfig& cfg,
                                      RateLimiter* limiter = nullptr);

RasterImage fetch_image(const IiifRequest& req, const EndpointConfig& cfg,
                        RateLimiter* limiter = nullptr);

/// On-disk cache of fetched JPEG bytes: `{root}/{hh}/{hash}.jpg` where hash is
/// the 64-bit FNV-1a of the element id in hex and hh its first two characters.
/// `{root}/manifest.jsonl` maps element ids to files.
class ImageCache {
public:
    explicit ImageCache(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path path_for(std::string_view element_id) const;
    bool contains(std::string_view element_id) const;
    void store(std::string_view element_id, std::span<const std::uint8_t> bytes) const;
    std::vector<std::uint8_t> load_bytes(std::string_view element_id) const;
    RasterImage load(std::string_view element_id) const;

    struct Entry {
        std::string element_id;
        std::string file;  // relative to root
    };
    std::vector<Entry> read_manifest() const;
    void write_manifest(std::span<const Entry> entries) const;

private:
    std::filesystem::path root_;
};

std::string element_hash(std::string_view element_id);

struct DiscardedElement {
    std::string element_id;
    double ratio = 0.0;
};

struct FetchFailure {
    std::string element_id;
    std::string message;
    int status = 0;
};

struct FetchReport {
    std::size_t input = 0;
    std::vector<DiscardedElement> discarded;
    std::size_t fetched = 0;      // network downloads
    std::size_t cache_hits = 0;
    std::vector<FetchFailure> failures;
};

/// Plans, filters and downloads every record into the cache, then rewrites
/// the cache manifest in input order. discarded + fetched + cache_hits +
/// failures = input.
FetchReport fetch_all(std::span<const GraphicalElementRecord> records, const ImageCache& cache,
                      const EndpointConfig& cfg, const SizePolicy& policy,
                      std::string_view base_url);

/// Splits a base URL like "https://host/prefix/" into scheme and prefix.
std::pair<std::string, std::string> split_base_url(std::string_view base_url);

}  // namespace imgsearch
