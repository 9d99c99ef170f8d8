#include "imgsearch/iiif.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "imgsearch/error.hpp"
#include "imgsearch/log.hpp"
#include "imgsearch/parallel.hpp"

namespace imgsearch {

namespace {

void validate(const IiifRequest& req) {
    if (req.identifier.empty()) throw InvalidArgument("IIIF identifier is empty");
    if (req.region.left < 0 || req.region.top < 0 || req.region.width < 1 || req.region.height < 1) {
        throw InvalidArgument("IIIF region must have non-negative origin and size >= 1");
    }
    if (req.size_width < 1 || req.size_height < 1) throw InvalidArgument("IIIF size must be >= 1");
    if (req.rotation < 0 || req.rotation >= 360) throw InvalidArgument("IIIF rotation must be in [0, 360)");
    if (req.filename.empty()) throw InvalidArgument("IIIF filename is empty");
}

std::int64_t parse_int(std::string_view s, std::string_view what) {
    std::int64_t v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc{} || ptr != end || s.front() == '-' || s.front() == '+') {
        throw ParseError("bad " + std::string(what) + " in IIIF URL: '" + std::string(s) + "'");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        parts.push_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

}  // namespace

std::string build_iiif_url(const IiifRequest& req) {
    validate(req);
    std::string url;
    url.reserve(req.scheme.size() + req.prefix.size() + req.identifier.size() + 64);
    url += req.scheme;
    url += req.prefix;
    url += req.identifier;
    url += '/';
    url += std::to_string(req.region.left) + ',' + std::to_string(req.region.top) + ',' +
           std::to_string(req.region.width) + ',' + std::to_string(req.region.height);
    url += '/';
    url += std::to_string(req.size_width) + ',' + std::to_string(req.size_height);
    url += '/';
    url += std::to_string(req.rotation);
    url += '/';
    url += req.filename;
    return url;
}

std::pair<std::string, std::string> split_base_url(std::string_view base_url) {
    const auto sep = base_url.find("://");
    if (sep == std::string_view::npos) throw ParseError("URL lacks a scheme: " + std::string(base_url));
    return {std::string(base_url.substr(0, sep + 3)), std::string(base_url.substr(sep + 3))};
}

IiifRequest parse_iiif_url(std::string_view url) {
    auto [scheme, rest] = split_base_url(url);
    // The last five '/'-separated segments are identifier, region, size, rotation, filename.
    std::size_t cut = rest.size();
    std::string_view tail(rest);
    std::vector<std::string_view> segs;
    for (int i = 0; i < 5; ++i) {
        if (cut == 0) throw ParseError("IIIF URL has too few path segments");
        const auto slash = tail.rfind('/', cut - 1);
        if (slash == std::string_view::npos) throw ParseError("IIIF URL has too few path segments");
        segs.push_back(tail.substr(slash + 1, cut - slash - 1));
        cut = slash;
    }
    IiifRequest req;
    req.scheme = std::move(scheme);
    req.prefix = std::string(tail.substr(0, cut + 1));
    req.filename = std::string(segs[0]);
    req.rotation = static_cast<int>(parse_int(segs[1], "rotation"));
    const auto size = split(segs[2], ',');
    if (size.size() != 2) throw ParseError("IIIF size must be 'w,h'");
    req.size_width = parse_int(size[0], "size width");
    req.size_height = parse_int(size[1], "size height");
    const auto region = split(segs[3], ',');
    if (region.size() != 4) throw ParseError("IIIF region must be 'left,top,width,height'");
    req.region = {parse_int(region[0], "region left"), parse_int(region[1], "region top"),
                  parse_int(region[2], "region width"), parse_int(region[3], "region height")};
    req.identifier = std::string(segs[4]);
    try {
        validate(req);
    } catch (const InvalidArgument& e) {
        throw ParseError(e.what());
    }
    return req;
}

double aspect_ratio(const BoundingBox& box) {
    if (box.width < 1 || box.height < 1) throw InvalidArgument("box must be at least 1x1");
    const auto lo = std::min(box.width, box.height);
    const auto hi = std::max(box.width, box.height);
    return static_cast<double>(hi) / static_cast<double>(lo);
}

bool aspect_ratio_ok(const BoundingBox& box) {
    // Integer comparison: hi / lo < 50  <=>  hi < 50 * lo.
    if (box.width < 1 || box.height < 1) throw InvalidArgument("box must be at least 1x1");
    const auto lo = std::min(box.width, box.height);
    const auto hi = std::max(box.width, box.height);
    return hi < static_cast<std::int64_t>(kMaxAspectRatio) * lo;
}

std::optional<IiifRequest> plan_download(const GraphicalElementRecord& record, const SizePolicy& policy,
                                         std::string_view scheme, std::string_view prefix) {
    if (policy.max_side < 1) throw InvalidArgument("max_side must be >= 1");
    if (!aspect_ratio_ok(record.box)) return std::nullopt;
    IiifRequest req;
    req.scheme = std::string(scheme);
    req.prefix = std::string(prefix);
    req.identifier = record.page_urn;
    req.region = record.box;
    const auto w = record.box.width;
    const auto h = record.box.height;
    // Floor on the free side: 2195*294/2348 = 274.8 -> 274.
    if (w >= h) {
        req.size_width = policy.max_side;
        req.size_height = std::max<std::int64_t>(1, h * policy.max_side / w);
    } else {
        req.size_height = policy.max_side;
        req.size_width = std::max<std::int64_t>(1, w * policy.max_side / h);
    }
    return req;
}

RateLimiter::RateLimiter(double per_second)
    : interval_(per_second > 0
                    ? std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                          std::chrono::duration<double>(1.0 / per_second))
                    : std::chrono::steady_clock::duration::zero()),
      next_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(mutex_);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_);
        next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

namespace {

bool retryable_status(int status) {
    return status == 429 || status == 502 || status == 503 || status == 504;
}

}  // namespace

std::vector<std::uint8_t> fetch_bytes(const std::string& url, const EndpointConfig& cfg,
                                      RateLimiter* limiter) {
    auto [scheme, rest] = split_base_url(url);
    const auto slash = rest.find('/');
    const std::string host = rest.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/" : rest.substr(slash);

    httplib::Client client(scheme + host);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_follow_location(true);

    auto backoff = cfg.initial_backoff;
    const int attempts = std::max(1, cfg.max_attempts);
    for (int attempt = 1;; ++attempt) {
        if (limiter) limiter->acquire();
        auto res = client.Get(path);
        if (res && res->status < 400) {
            return std::vector<std::uint8_t>(res->body.begin(), res->body.end());
        }
        const int status = res ? res->status : 0;
        const bool retry = !res || retryable_status(status);
        const std::string what = res ? "HTTP " + std::to_string(status) + " for " + url
                                     : "request failed (" + httplib::to_string(res.error()) + ") for " + url;
        if (!retry || attempt >= attempts) throw TransportError(what, status, retry);
        log_warn("fetch attempt " + std::to_string(attempt) + " failed: " + what + "; retrying");
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

RasterImage fetch_image(const IiifRequest& req, const EndpointConfig& cfg, RateLimiter* limiter) {
    const auto bytes = fetch_bytes(build_iiif_url(req), cfg, limiter);
    return decode_image(bytes);
}

// ---------------------------------------------------------------- cache

std::string element_hash(std::string_view element_id) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : element_id) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ImageCache::ImageCache(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path ImageCache::path_for(std::string_view element_id) const {
    const std::string h = element_hash(element_id);
    return root_ / h.substr(0, 2) / (h + ".jpg");
}

bool ImageCache::contains(std::string_view element_id) const {
    return std::filesystem::is_regular_file(path_for(element_id));
}

void ImageCache::store(std::string_view element_id, std::span<const std::uint8_t> bytes) const {
    const auto path = path_for(element_id);
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("cannot write " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::vector<std::uint8_t> ImageCache::load_bytes(std::string_view element_id) const {
    const auto path = path_for(element_id);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cache miss: " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

RasterImage ImageCache::load(std::string_view element_id) const {
    return decode_image(load_bytes(element_id));
}

std::vector<ImageCache::Entry> ImageCache::read_manifest() const {
    std::vector<Entry> out;
    std::ifstream in(root_ / "manifest.jsonl");
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        out.push_back({j.at("element_id").get<std::string>(), j.at("file").get<std::string>()});
    }
    return out;
}

void ImageCache::write_manifest(std::span<const Entry> entries) const {
    std::filesystem::create_directories(root_);
    std::ofstream out(root_ / "manifest.jsonl", std::ios::trunc);
    for (const auto& e : entries) {
        nlohmann::ordered_json j;
        j["element_id"] = e.element_id;
        j["file"] = e.file;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("cannot write cache manifest");
}

FetchReport fetch_all(std::span<const GraphicalElementRecord> records, const ImageCache& cache,
                      const EndpointConfig& cfg, const SizePolicy& policy, std::string_view base_url) {
    const auto [scheme, prefix] = split_base_url(base_url);
    FetchReport report;
    report.input = records.size();

    enum class Outcome { Discarded, Hit, Fetched, Failed };
    struct Slot {
        Outcome outcome = Outcome::Failed;
        double ratio = 0;
        FetchFailure failure;
    };
    std::vector<Slot> slots(records.size());
    RateLimiter limiter(cfg.requests_per_second);

    parallel_for(records.size(), cfg.concurrency, [&](std::size_t i) {
        const auto& rec = records[i];
        auto& slot = slots[i];
        const auto req = plan_download(rec, policy, scheme, prefix);
        if (!req) {
            slot.outcome = Outcome::Discarded;
            slot.ratio = aspect_ratio(rec.box);
            return;
        }
        if (cache.contains(rec.element_id)) {
            slot.outcome = Outcome::Hit;
            return;
        }
        try {
            const auto bytes = fetch_bytes(build_iiif_url(*req), cfg, &limiter);
            decode_image(bytes);  // reject undecodable payloads before caching
            cache.store(rec.element_id, bytes);
            slot.outcome = Outcome::Fetched;
        } catch (const TransportError& e) {
            slot.failure = {rec.element_id, e.what(), e.status()};
        } catch (const DecodeError& e) {
            slot.failure = {rec.element_id, e.what(), 0};
        }
    });

    std::vector<ImageCache::Entry> manifest;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto& slot = slots[i];
        switch (slot.outcome) {
            case Outcome::Discarded:
                log_info("discarded " + records[i].element_id + " (aspect ratio " +
                         std::to_string(slot.ratio) + ")");
                report.discarded.push_back({records[i].element_id, slot.ratio});
                continue;
            case Outcome::Failed:
                report.failures.push_back(std::move(slot.failure));
                continue;
            case Outcome::Hit: ++report.cache_hits; break;
            case Outcome::Fetched: ++report.fetched; break;
        }
        const auto rel = std::filesystem::relative(cache.path_for(records[i].element_id), cache.root());
        manifest.push_back({records[i].element_id, rel.generic_string()});
    }
    cache.write_manifest(manifest);
    return report;
}

}  // namespace imgsearch
