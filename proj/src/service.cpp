#include "imgsearch/service.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "imgsearch/error.hpp"
#include "imgsearch/iiif.hpp"
#include "imgsearch/log.hpp"
#include "imgsearch/simd/kernels.hpp"

namespace imgsearch {

using ojson = nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

ApiResponse error_response(int status, std::string message, std::string detail = {}) {
    ojson body;
    body["code"] = status;
    body["message"] = std::move(message);
    body["detail"] = std::move(detail);
    return {status, std::move(body)};
}

std::int64_t elapsed_ms(Clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
}

void parse_bind(const std::string& bind, ServiceConfig& cfg) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw InvalidArgument("bind must be host:port, got " + bind);
    cfg.host = bind.substr(0, colon);
    try {
        std::size_t used = 0;
        cfg.port = std::stoi(bind.substr(colon + 1), &used);
        if (used != bind.size() - colon - 1 || cfg.port < 0 || cfg.port > 65535) throw std::out_of_range("port");
    } catch (const std::logic_error&) {
        throw InvalidArgument("invalid port in bind address " + bind);
    }
}

// Returns the effective k or an error message.
std::optional<std::size_t> parse_k(const QueryParams& params, const ServiceConfig& cfg, std::string& err) {
    const auto it = params.find("k");
    if (it == params.end() || it->second.empty()) return std::min(cfg.default_k, cfg.max_k);
    long long k = 0;
    try {
        std::size_t used = 0;
        k = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("k");
    } catch (const std::logic_error&) {
        err = "k must be an integer";
        return std::nullopt;
    }
    if (k < 1) {
        err = "k must be at least 1";
        return std::nullopt;
    }
    return std::min<std::size_t>(static_cast<std::size_t>(k), cfg.max_k);
}

std::string param_or(const QueryParams& params, const std::string& key, const std::string& fallback) {
    const auto it = params.find(key);
    return it == params.end() || it->second.empty() ? fallback : it->second;
}

ojson box_json(const BoundingBox& b) {
    ojson j;
    j["left"] = b.left;
    j["top"] = b.top;
    j["width"] = b.width;
    j["height"] = b.height;
    return j;
}

std::string iiif_url_for(const ServiceConfig& cfg, const std::string& page_urn, const BoundingBox& box) {
    const auto [scheme, prefix] = split_base_url(cfg.iiif_base);
    GraphicalElementRecord rec;
    rec.element_id = format_element_id(page_urn, box);
    rec.page_urn = page_urn;
    rec.box = box;
    if (auto req = plan_download(rec, SizePolicy{cfg.iiif_max_side}, scheme, prefix)) return build_iiif_url(*req);
    IiifRequest req;
    req.scheme = scheme;
    req.prefix = prefix;
    req.identifier = page_urn;
    req.region = box;
    req.size_width = box.width;
    req.size_height = box.height;
    return build_iiif_url(req);
}

// Metadata for an id: the ingested record when present, otherwise the id itself decoded.
std::optional<std::pair<std::string, BoundingBox>> locate(const Snapshot& snap, const std::string& id) {
    if (const auto* rec = snap.element(id)) return std::make_pair(rec->page_urn, rec->box);
    try {
        auto parsed = parse_element_id(id);
        return std::make_pair(std::move(parsed.page_urn), parsed.box);
    } catch (const Error&) {
        return std::nullopt;
    }
}

ojson result_json(const Snapshot& snap, const ServiceConfig& cfg, const std::string& id, double score) {
    ojson r;
    r["element_id"] = id;
    r["score"] = score;
    if (const auto loc = locate(snap, id)) {
        r["page_urn"] = loc->first;
        r["box"] = box_json(loc->second);
        try {
            r["iiif_url"] = iiif_url_for(cfg, loc->first, loc->second);
        } catch (const Error&) {
            r["iiif_url"] = nullptr;
        }
    } else {
        r["page_urn"] = nullptr;
        r["box"] = nullptr;
        r["iiif_url"] = nullptr;
    }
    if (const auto label = snap.predicted_label(id)) r["predicted_label"] = std::string(to_string(*label));
    return r;
}

ApiResponse search_response(const Snapshot& snap, const ServiceConfig& cfg, const std::string& model,
                            const std::vector<ScoredId>& hits, Clock::time_point start) {
    ojson body;
    auto results = ojson::array();
    for (const auto& h : hits) results.push_back(result_json(snap, cfg, h.element_id, h.score));
    body["results"] = std::move(results);
    body["model"] = model;
    body["took_ms"] = elapsed_ms(start);
    return {200, std::move(body)};
}

}  // namespace

nlohmann::json parse_json_lenient(const std::string& text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    bool in_string = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            cleaned += c;
            if (c == '\\' && i + 1 < text.size()) {
                cleaned += text[++i];
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
            cleaned += c;
            continue;
        }
        const std::string_view rest(text.data() + i, text.size() - i);
        bool replaced = false;
        for (std::string_view tok : {"-Infinity", "+Infinity", "Infinity", "-NaN", "NaN"}) {
            if (rest.starts_with(tok)) {
                cleaned += "null";
                i += tok.size() - 1;
                replaced = true;
                break;
            }
        }
        if (!replaced) cleaned += c;
    }
    return nlohmann::json::parse(cleaned);
}

void apply_env_overrides(ServiceConfig& cfg) {
    auto env = [](const char* name) -> std::optional<std::string> {
        const char* v = std::getenv(name);
        if (v == nullptr || *v == '\0') return std::nullopt;
        return std::string(v);
    };
    if (auto v = env("IMGSEARCH_BIND")) parse_bind(*v, cfg);
    if (auto v = env("IMGSEARCH_SNAPSHOT")) cfg.snapshot_dir = *v;
    if (auto v = env("IMGSEARCH_DEFAULT_MODEL")) cfg.default_model = *v;
    if (auto v = env("IMGSEARCH_IIIF_BASE")) cfg.iiif_base = *v;
    if (auto v = env("IMGSEARCH_CORS_ORIGIN")) cfg.cors_origin = *v;
    if (auto v = env("IMGSEARCH_RATE_LIMIT")) {
        try {
            cfg.rate_limit_rps = std::stod(*v);
        } catch (const std::logic_error&) {
            throw InvalidArgument("IMGSEARCH_RATE_LIMIT must be a number");
        }
    }
}

ServiceConfig load_service_config(const std::optional<std::filesystem::path>& path) {
    ServiceConfig cfg;
    if (path) {
        std::ifstream in(*path);
        if (!in) throw IoError("cannot open config " + path->string());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("config " + path->string() + ": " + e.what());
        }
        try {
            if (j.contains("bind")) parse_bind(j.at("bind").get<std::string>(), cfg);
            if (j.contains("host")) cfg.host = j.at("host").get<std::string>();
            if (j.contains("port")) cfg.port = j.at("port").get<int>();
            if (j.contains("snapshot_dir")) {
                std::filesystem::path p = j.at("snapshot_dir").get<std::string>();
                cfg.snapshot_dir = p.is_relative() ? path->parent_path() / p : p;
            }
            if (j.contains("default_model")) cfg.default_model = j.at("default_model").get<std::string>();
            if (j.contains("iiif_base")) cfg.iiif_base = j.at("iiif_base").get<std::string>();
            if (j.contains("iiif_max_side")) cfg.iiif_max_side = j.at("iiif_max_side").get<std::int64_t>();
            if (j.contains("cors_origin")) cfg.cors_origin = j.at("cors_origin").get<std::string>();
            if (j.contains("max_upload_bytes")) cfg.max_upload_bytes = j.at("max_upload_bytes").get<std::size_t>();
            if (j.contains("default_k")) cfg.default_k = j.at("default_k").get<std::size_t>();
            if (j.contains("max_k")) cfg.max_k = j.at("max_k").get<std::size_t>();
            if (j.contains("rate_limit_rps")) cfg.rate_limit_rps = j.at("rate_limit_rps").get<double>();
            if (j.contains("threads")) cfg.threads = j.at("threads").get<unsigned>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("config " + path->string() + ": " + e.what());
        }
    }
    apply_env_overrides(cfg);
    if (cfg.max_k == 0 || cfg.default_k == 0) throw InvalidArgument("k limits must be positive");
    return cfg;
}

SearchService::SearchService(ServiceConfig config, std::shared_ptr<const Snapshot> snapshot)
    : config_(std::move(config)), snapshot_(std::move(snapshot)) {
    if (!snapshot_) snapshot_ = std::make_shared<Snapshot>();
}

void SearchService::set_snapshot(std::shared_ptr<const Snapshot> snapshot) {
    if (!snapshot) snapshot = std::make_shared<Snapshot>();
    std::lock_guard lock(mutex_);
    snapshot_ = std::move(snapshot);
}

std::shared_ptr<const Snapshot> SearchService::snapshot() const {
    std::lock_guard lock(mutex_);
    return snapshot_;
}

void SearchService::reload() {
    if (config_.snapshot_dir.empty()) throw InvalidArgument("no snapshot directory configured");
    set_snapshot(load_snapshot(config_.snapshot_dir));
    log_info("snapshot reloaded from " + config_.snapshot_dir.string());
}

ApiResponse SearchService::health() const {
    const auto snap = snapshot();
    ojson body;
    body["status"] = "ok";
    body["elements"] = snap->elements.size();
    ojson models = ojson::array();
    for (const auto& [tag, mi] : snap->models) {
        ojson m;
        m["tag"] = tag;
        m["dim"] = mi.index.dim();
        m["size"] = mi.index.size();
        m["embeds_images"] = mi.mock_profile.has_value();
        if (mi.mock_profile) m["profile"] = std::string(to_string(*mi.mock_profile));
        const auto& p = mi.index.params();
        m["hnsw"] = {{"M", p.M},
                     {"M0", p.M0},
                     {"ef_construction", p.ef_construction},
                     {"ef_search", p.ef_search},
                     {"level_lambda", p.level_lambda},
                     {"rng_seed", p.rng_seed}};
        models.push_back(std::move(m));
    }
    body["models"] = std::move(models);
    body["default_model"] = config_.default_model;
    body["text_index"] = {{"documents", snap->text.doc_count()}, {"terms", snap->text.term_count()}};
    body["classifier"] = snap->classifier ? ojson(snap->classifier->model_tag) : ojson(nullptr);
    body["simd"] = std::string(simd::isa_name(simd::active().isa));
    body["limits"] = {{"default_k", config_.default_k},
                      {"max_k", config_.max_k},
                      {"max_upload_bytes", config_.max_upload_bytes}};
    body["assumptions"] = {{"tokenizer", std::string(kTokenizerDescription)},
                           {"weighting", std::string(kWeightingDescription)},
                           {"similarity", "cosine on L2-normalized float32 vectors"},
                           {"image_embedding", "only mock64 embeds uploads server-side; other tags take vectors"}};
    return {200, std::move(body)};
}

ApiResponse SearchService::element(const std::string& id) const {
    const auto snap = snapshot();
    const auto* rec = snap->element(id);
    if (rec == nullptr) return error_response(404, "unknown element", id);
    ojson body;
    body["element_id"] = rec->element_id;
    body["page_urn"] = rec->page_urn;
    body["box"] = box_json(rec->box);
    body["context_text"] = rec->context_text;
    try {
        body["iiif_url"] = iiif_url_for(config_, rec->page_urn, rec->box);
    } catch (const Error&) {
        body["iiif_url"] = nullptr;
    }
    ojson indexed = ojson::array();
    for (const auto& [tag, mi] : snap->models) {
        if (mi.index.find(id)) indexed.push_back(tag);
    }
    body["models"] = std::move(indexed);
    const auto label = snap->predicted_label(id);
    body["predicted_label"] = label ? ojson(std::string(to_string(*label))) : ojson(nullptr);
    return {200, std::move(body)};
}

ApiResponse SearchService::similar(const std::string& id, const QueryParams& params) const {
    const auto start = Clock::now();
    const auto snap = snapshot();
    std::string err;
    const auto k = parse_k(params, config_, err);
    if (!k) return error_response(400, "invalid k", err);
    const auto model = param_or(params, "model", config_.default_model);
    const auto it = snap->models.find(model);
    if (it == snap->models.end()) return error_response(404, "unknown model", model);
    const auto node = it->second.index.find(id);
    if (!node) return error_response(404, "unknown element", id);
    // Copy: the query span must not alias storage the search reads concurrently.
    const auto vec = it->second.index.vector(*node);
    const std::vector<float> query(vec.begin(), vec.end());
    return search_response(*snap, config_, model, it->second.index.search(query, *k), start);
}

ApiResponse SearchService::search_text(const QueryParams& params) const {
    const auto start = Clock::now();
    const auto snap = snapshot();
    std::string err;
    const auto k = parse_k(params, config_, err);
    if (!k) return error_response(400, "invalid k", err);
    const auto q = params.find("q");
    if (q == params.end() || q->second.empty()) return error_response(400, "empty query", "q is required");
    const auto hits = snap->text.search(q->second, *k);
    ojson body;
    auto results = ojson::array();
    for (const auto& h : hits) results.push_back(result_json(*snap, config_, h.element_id, h.score));
    body["results"] = std::move(results);
    body["model"] = "tfidf";
    body["took_ms"] = elapsed_ms(start);
    return {200, std::move(body)};
}

ApiResponse SearchService::search_vector(const std::string& body_text, const QueryParams& params) const {
    const auto start = Clock::now();
    const auto snap = snapshot();
    std::string err;
    const auto k = parse_k(params, config_, err);
    if (!k) return error_response(400, "invalid k", err);
    nlohmann::json req;
    try {
        req = parse_json_lenient(body_text);
    } catch (const nlohmann::json::exception& e) {
        return error_response(400, "malformed JSON", e.what());
    }
    if (!req.is_object() || !req.contains("vector") || !req.at("vector").is_array()) {
        return error_response(400, "body must be an object with a 'vector' array");
    }
    std::string model = param_or(params, "model", config_.default_model);
    if (req.contains("model")) {
        if (!req.at("model").is_string()) return error_response(400, "'model' must be a string");
        model = req.at("model").get<std::string>();
    }
    const auto it = snap->models.find(model);
    if (it == snap->models.end()) return error_response(404, "unknown model", model);
    const auto& arr = req.at("vector");
    if (arr.size() != it->second.index.dim()) {
        return error_response(422, "dimension mismatch",
                              "expected " + std::to_string(it->second.index.dim()) + ", got " +
                                  std::to_string(arr.size()));
    }
    std::vector<float> query;
    query.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_number()) return error_response(422, "non-finite or non-numeric vector component");
        const double d = v.get<double>();
        if (!std::isfinite(d) || !std::isfinite(static_cast<float>(d))) {
            return error_response(422, "non-finite or non-numeric vector component");
        }
        query.push_back(static_cast<float>(d));
    }
    try {
        normalize(query);
    } catch (const InvalidArgument& e) {
        return error_response(422, "vector cannot be normalized", e.what());
    }
    return search_response(*snap, config_, model, it->second.index.search(query, *k), start);
}

ApiResponse SearchService::search_image(const std::string& image_bytes, const QueryParams& params) const {
    const auto start = Clock::now();
    const auto snap = snapshot();
    std::string err;
    const auto k = parse_k(params, config_, err);
    if (!k) return error_response(400, "invalid k", err);
    if (image_bytes.empty()) return error_response(400, "empty upload");
    if (image_bytes.size() > config_.max_upload_bytes) {
        return error_response(400, "upload too large",
                              "limit is " + std::to_string(config_.max_upload_bytes) + " bytes");
    }
    const auto model = param_or(params, "model", config_.default_model);
    const auto it = snap->models.find(model);
    if (it == snap->models.end()) return error_response(404, "unknown model", model);
    if (!it->second.mock_profile) {
        return error_response(422, "model cannot embed images server-side",
                              "submit a vector to /search/vector for " + model);
    }
    RasterImage img;
    try {
        img = decode_image(std::span(reinterpret_cast<const std::uint8_t*>(image_bytes.data()), image_bytes.size()));
    } catch (const Error& e) {
        return error_response(400, "undecodable image", e.what());
    }
    std::vector<float> query;
    try {
        query = mock_features(img, *it->second.mock_profile);
    } catch (const Error& e) {
        return error_response(400, "image cannot be embedded", e.what());
    }
    if (query.size() != it->second.index.dim()) {
        return error_response(422, "model dimension does not match the image extractor", model);
    }
    return search_response(*snap, config_, model, it->second.index.search(query, *k), start);
}

HttpServer::HttpServer(SearchService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

HttpServer::~HttpServer() { stop(); }

namespace {

QueryParams to_params(const httplib::Request& req) {
    QueryParams out;
    for (const auto& [k, v] : req.params) out.emplace(k, v);
    return out;
}

void send(httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_content(api.body.dump(), "application/json");
}

class TokenBucket {
public:
    explicit TokenBucket(double rps) : rate_(rps), capacity_(std::max(1.0, rps)), tokens_(capacity_), last_(Clock::now()) {}
    bool try_take() {
        std::lock_guard lock(mutex_);
        const auto now = Clock::now();
        tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
        last_ = now;
        if (tokens_ < 1.0) return false;
        tokens_ -= 1.0;
        return true;
    }

private:
    std::mutex mutex_;
    double rate_;
    double capacity_;
    double tokens_;
    Clock::time_point last_;
};

}  // namespace

void HttpServer::install_routes() {
    auto& srv = *server_;
    const auto& cfg = service_.config();
    srv.set_payload_max_length(cfg.max_upload_bytes + 1024 * 1024);
    const unsigned threads = std::max(1u, cfg.threads);
    srv.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

    const std::string origin = cfg.cors_origin;
    srv.set_default_headers({{"Access-Control-Allow-Origin", origin},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});

    if (cfg.rate_limit_rps > 0) {
        auto bucket = std::make_shared<TokenBucket>(cfg.rate_limit_rps);
        srv.set_pre_routing_handler([bucket](const httplib::Request&, httplib::Response& res) {
            if (bucket->try_take()) return httplib::Server::HandlerResponse::Unhandled;
            send(res, error_response(429, "rate limit exceeded"));
            return httplib::Server::HandlerResponse::Handled;
        });
    }

    srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    srv.Get("/health", [this](const httplib::Request&, httplib::Response& res) { send(res, service_.health()); });
    srv.Get(R"(/elements/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
        send(res, service_.element(req.matches[1]));
    });
    srv.Get(R"(/similar/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
        send(res, service_.similar(req.matches[1], to_params(req)));
    });
    srv.Get("/search/text", [this](const httplib::Request& req, httplib::Response& res) {
        send(res, service_.search_text(to_params(req)));
    });
    srv.Post("/search/vector", [this](const httplib::Request& req, httplib::Response& res) {
        send(res, service_.search_vector(req.body, to_params(req)));
    });
    srv.Post("/search/image", [this](const httplib::Request& req, httplib::Response& res) {
        std::string bytes;
        if (req.is_multipart_form_data()) {
            if (req.has_file("image")) {
                bytes = req.get_file_value("image").content;
            } else if (!req.files.empty()) {
                bytes = req.files.begin()->second.content;
            }
        } else {
            bytes = req.body;
        }
        send(res, service_.search_image(bytes, to_params(req)));
    });

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "unknown error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        log_error("request failed: " + what);
        send(res, error_response(500, "internal error", what));
    });
    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        if (res.status == 413) {
            send(res, error_response(400, "upload too large"));
            return;
        }
        send(res, error_response(res.status, res.status == 404 ? "not found" : "request error"));
    });
}

int HttpServer::start() {
    const auto& cfg = service_.config();
    if (cfg.port == 0) {
        port_ = server_->bind_to_any_port(cfg.host);
    } else {
        port_ = server_->bind_to_port(cfg.host, cfg.port) ? cfg.port : -1;
    }
    if (port_ < 0) throw IoError("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void HttpServer::listen() {
    const auto& cfg = service_.config();
    if (cfg.port == 0) {
        port_ = server_->bind_to_any_port(cfg.host);
    } else {
        port_ = server_->bind_to_port(cfg.host, cfg.port) ? cfg.port : -1;
    }
    if (port_ < 0) throw IoError("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
    log_info("listening on " + cfg.host + ":" + std::to_string(port_));
    server_->listen_after_bind();
}

void HttpServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace imgsearch
