#pragma once

// HTTP search API. SearchService holds the request logic as plain functions of
// (snapshot, request) so it can be exercised without sockets; HttpServer binds
// it to cpp-httplib.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "imgsearch/snapshot.hpp"

namespace httplib {
class Server;
}

namespace imgsearch {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path snapshot_dir;
    std::string default_model = "mock64";
    std::string iiif_base = "https://www.nb.no/services/image/resolver/";
    std::int64_t iiif_max_side = 512;
    std::string cors_origin = "*";
    std::size_t max_upload_bytes = 10 * 1024 * 1024;
    std::size_t default_k = 50;
    std::size_t max_k = 100;
    double rate_limit_rps = 0.0;  // 0 disables
    unsigned threads = 8;
};

/// Reads a JSON config file (keys as in ServiceConfig; "bind" = "host:port")
/// then applies IMGSEARCH_BIND, IMGSEARCH_SNAPSHOT, IMGSEARCH_DEFAULT_MODEL,
/// IMGSEARCH_IIIF_BASE, IMGSEARCH_CORS_ORIGIN, IMGSEARCH_RATE_LIMIT.
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& path);
void apply_env_overrides(ServiceConfig& cfg);

struct ApiResponse {
    int status = 200;
    nlohmann::ordered_json body;
};

using QueryParams = std::map<std::string, std::string>;

class SearchService {
public:
    explicit SearchService(ServiceConfig config, std::shared_ptr<const Snapshot> snapshot = nullptr);

    const ServiceConfig& config() const noexcept { return config_; }

    /// Atomic swap; in-flight requests keep the snapshot they started with.
    void set_snapshot(std::shared_ptr<const Snapshot> snapshot);
    std::shared_ptr<const Snapshot> snapshot() const;
    /// Reloads from config().snapshot_dir. On failure the old snapshot stays.
    void reload();

    ApiResponse health() const;
    ApiResponse element(const std::string& id) const;
    ApiResponse similar(const std::string& id, const QueryParams& params) const;
    ApiResponse search_text(const QueryParams& params) const;
    ApiResponse search_vector(const std::string& body, const QueryParams& params) const;
    ApiResponse search_image(const std::string& image_bytes, const QueryParams& params) const;

private:
    ServiceConfig config_;
    mutable std::mutex mutex_;
    std::shared_ptr<const Snapshot> snapshot_;
};

class HttpServer {
public:
    explicit HttpServer(SearchService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds (port 0 picks a free port) and serves on a background thread.
    int start();
    /// Blocks in the calling thread.
    void listen();
    void stop();
    int port() const noexcept { return port_; }

private:
    void install_routes();

    SearchService& service_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

/// Lenient JSON parse that maps bare NaN / Infinity / -Infinity tokens to
/// non-finite numbers' stand-in (null), so clients emitting them get a
/// validation error rather than a syntax error.
nlohmann::json parse_json_lenient(const std::string& text);

}  // namespace imgsearch
