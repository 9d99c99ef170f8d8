#include "imgsearch/fixtures.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "imgsearch/error.hpp"
#include "imgsearch/eval.hpp"
#include "imgsearch/iiif.hpp"
#include "imgsearch/random.hpp"
#include "imgsearch/raster.hpp"

// After the Eigen-dependent headers: resolv.h defines a `_res` macro.
#include <httplib.h>

namespace imgsearch {

namespace {

constexpr std::array<std::string_view, 24> kWords = {
    "kat",    "hund",   "hest",  "skip",    "fjell",  "kirke",   "gård",   "kart",
    "bonde",  "by",     "elv",   "skog",    "kongen", "portrett", "vinter", "sommer",
    "fiske",  "båt",    "bro",   "tabell",  "hus",    "jernbane", "blomst", "fugl"};

std::string words(Rng& rng, std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += kWords[rng.below(kWords.size())];
    }
    return out;
}

void text_block(std::ostream& out, const std::string& id, std::int64_t x, std::int64_t y, std::int64_t w,
                std::int64_t h, const std::string& text) {
    out << "      <TextBlock ID=\"" << id << "\" HPOS=\"" << x << "\" VPOS=\"" << y << "\" WIDTH=\"" << w
        << "\" HEIGHT=\"" << h << "\">\n        <TextLine HPOS=\"" << x << "\" VPOS=\"" << y << "\" WIDTH=\"" << w
        << "\" HEIGHT=\"" << h << "\">\n";
    std::istringstream ss(text);
    std::string word;
    while (ss >> word) out << "          <String CONTENT=\"" << word << "\"/>\n";
    out << "        </TextLine>\n      </TextBlock>\n";
}

}  // namespace

std::size_t write_desk_alto(const std::filesystem::path& dir, const DeskAltoOptions& opt) {
    std::filesystem::create_directories(dir);
    Rng rng(opt.seed);
    std::size_t total = 0;
    for (std::size_t p = 0; p < opt.pages; ++p) {
        char name[64];
        std::snprintf(name, sizeof name, "page_%04zu.xml", p);
        char urn[96];
        std::snprintf(urn, sizeof urn, "URN:NBN:no-nb_digibok_%010zu_%04zu", 2000000000 + p, p + 1);
        std::ofstream out(dir / name, std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir / name).string());
        out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
               "<alto xmlns=\"http://www.loc.gov/standards/alto/ns-v3#\">\n"
               "  <Description><sourceImageInformation><fileName>"
            << urn << "</fileName></sourceImageInformation></Description>\n  <Layout>\n"
            << "    <Page ID=\"" << urn << "\" WIDTH=\"" << opt.page_width << "\" HEIGHT=\"" << opt.page_height
            << "\">\n    <PrintSpace HPOS=\"0\" VPOS=\"0\" WIDTH=\"" << opt.page_width << "\" HEIGHT=\""
            << opt.page_height << "\">\n";
        text_block(out, "TB_head", 100, 50, opt.page_width - 200, 80, words(rng, 12));
        const std::int64_t slot = (opt.page_height - 200) / static_cast<std::int64_t>(std::max<std::size_t>(1, opt.elements_per_page));
        for (std::size_t e = 0; e < opt.elements_per_page; ++e) {
            const std::int64_t top = 150 + static_cast<std::int64_t>(e) * slot;
            const std::int64_t w = 300 + static_cast<std::int64_t>(rng.below(1200));
            const std::int64_t h = std::max<std::int64_t>(40, std::min<std::int64_t>(slot - 120, 150 + static_cast<std::int64_t>(rng.below(600))));
            const std::int64_t left = 100 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(std::max<std::int64_t>(1, opt.page_width - 200 - w))));
            const char* kind = rng.below(3) == 0 ? "GraphicalElement" : "Illustration";
            out << "      <" << kind << " ID=\"IL_" << e << "\" HPOS=\"" << left << "\" VPOS=\"" << top
                << "\" WIDTH=\"" << w << "\" HEIGHT=\"" << h << "\"/>\n";
            text_block(out, "TB_cap_" + std::to_string(e), left, top + h + 10, w, 40, words(rng, 5));
            ++total;
        }
        out << "    </PrintSpace>\n    </Page>\n  </Layout>\n</alto>\n";
    }
    return total;
}

std::uint64_t fixture_image_seed(std::string_view identifier, std::string_view region) {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&](std::string_view s) {
        for (const unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    feed(identifier);
    feed("/");
    feed(region);
    return mix64(h);
}

FixtureIiifServer::FixtureIiifServer() : server_(std::make_unique<httplib::Server>()) {
    server_->Get(R"(/iiif/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
        ++requests_;
        IiifRequest parsed;
        try {
            parsed = parse_iiif_url("http://fixture/iiif/" + req.matches[1].str());
        } catch (const Error& e) {
            res.status = 400;
            res.set_content(e.what(), "text/plain");
            return;
        }
        const std::string& id = parsed.identifier;
        if (id.find("missing") != std::string::npos) {
            res.status = 404;
            return;
        }
        if (id.find("red2x2") != std::string::npos) {
            RasterImage img(2, 2);
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 2; ++x) img.set(x, y, {255, 0, 0});
            const auto bytes = encode_jpeg(img);
            res.set_content(std::string(bytes.begin(), bytes.end()), "image/jpeg");
            return;
        }
        if (parsed.size_width < 1 || parsed.size_height < 1 || parsed.size_width > 4096 || parsed.size_height > 4096) {
            res.status = 400;
            return;
        }
        const auto& r = parsed.region;
        const std::string region = std::to_string(r.left) + "," + std::to_string(r.top) + "," +
                                   std::to_string(r.width) + "," + std::to_string(r.height);
        const auto img = synthetic_image(fixture_image_seed(id, region), static_cast<int>(parsed.size_width),
                                         static_cast<int>(parsed.size_height));
        auto bytes = encode_jpeg(img);
        if (id.find("truncated") != std::string::npos) bytes.resize(bytes.size() / 2);
        res.set_content(std::string(bytes.begin(), bytes.end()), "image/jpeg");
    });
}

FixtureIiifServer::~FixtureIiifServer() { stop(); }

int FixtureIiifServer::start() {
    port_ = server_->bind_to_any_port("127.0.0.1");
    if (port_ < 0) throw IoError("fixture server cannot bind");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void FixtureIiifServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

std::string FixtureIiifServer::base_url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/iiif/";
}

}  // namespace imgsearch
