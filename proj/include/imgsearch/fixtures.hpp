#pragma once

// Self-contained desk corpus: synthetic ALTO pages plus a local IIIF server
// that renders a deterministic picture for any region request.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace imgsearch {

struct DeskAltoOptions {
    std::size_t pages = 50;
    std::size_t elements_per_page = 4;  // illustrations per page
    std::uint64_t seed = 7;
    std::int64_t page_width = 2000;
    std::int64_t page_height = 3000;
};

/// Writes `pages` ALTO files (page_0000.xml ...) with illustrations, a caption
/// text block per illustration and a running text block. Returns the number of
/// graphical elements written.
std::size_t write_desk_alto(const std::filesystem::path& dir, const DeskAltoOptions& options = {});

/// Local IIIF image server. Any `/{prefix}/{identifier}/{region}/{w,h}/0/default.jpg`
/// returns a JPEG of size w x h rendered from a seed derived from
/// identifier + region. Identifiers containing "missing" return 404,
/// "truncated" return a cut-off JPEG, "red2x2" return a 2x2 red image.
class FixtureIiifServer {
public:
    FixtureIiifServer();
    ~FixtureIiifServer();
    FixtureIiifServer(const FixtureIiifServer&) = delete;
    FixtureIiifServer& operator=(const FixtureIiifServer&) = delete;

    /// Binds 127.0.0.1 on a free port and serves in the background.
    int start();
    void stop();
    int port() const noexcept { return port_; }
    /// Base URL to hand to the fetcher, e.g. http://127.0.0.1:PORT/iiif/
    std::string base_url() const;
    std::size_t requests() const noexcept { return requests_.load(); }

private:
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = -1;
    std::atomic<std::size_t> requests_{0};
};

/// Seed used by the fixture server for an identifier and region string.
std::uint64_t fixture_image_seed(std::string_view identifier, std::string_view region);

}  // namespace imgsearch
