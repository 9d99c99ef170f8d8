#include "imgsearch/hnsw.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "imgsearch/embedding.hpp"
#include "imgsearch/error.hpp"
#include "imgsearch/log.hpp"
#include "imgsearch/simd/kernels.hpp"

namespace imgsearch {

namespace {
constexpr std::uint32_t kSnapshotVersion = 1;
constexpr int kMaxLevel = 31;
}  // namespace

HnswParams HnswParams::with_m(std::uint32_t m, std::uint64_t seed) {
    HnswParams p;
    p.M = m;
    p.M0 = 2 * m;
    p.level_lambda = 1.0 / std::log(static_cast<double>(m));
    p.rng_seed = seed;
    return p;
}

void HnswParams::validate() const {
    if (M < 2) throw InvalidArgument("HNSW: M must be >= 2");
    if (M0 < M) throw InvalidArgument("HNSW: M0 must be >= M");
    if (ef_construction < M) throw InvalidArgument("HNSW: ef_construction must be >= M");
    if (ef_search < 1) throw InvalidArgument("HNSW: ef_search must be >= 1");
    if (!(level_lambda > 0.0)) throw InvalidArgument("HNSW: level_lambda must be positive");
}

HnswIndex::HnswIndex(std::size_t dim, HnswParams params)
    : dim_(dim), params_(params), rng_(params.rng_seed) {
    if (dim == 0) throw InvalidArgument("HNSW: dimension must be positive");
    params_.validate();
}

float HnswIndex::similarity(std::span<const float> q, std::uint32_t node) const noexcept {
    return simd::active().dot(q.data(), data_.data() + static_cast<std::size_t>(node) * dim_, dim_);
}

std::optional<std::uint32_t> HnswIndex::entry_point() const noexcept {
    if (entry_ < 0) return std::nullopt;
    return static_cast<std::uint32_t>(entry_);
}

std::span<const std::uint32_t> HnswIndex::neighbors(std::uint32_t node, int layer) const {
    const auto& per_layer = links_.at(node);
    if (layer < 0 || layer >= static_cast<int>(per_layer.size())) return {};
    return per_layer[layer];
}

std::optional<std::uint32_t> HnswIndex::find(std::string_view element_id) const {
    const auto it = rows_.find(std::string(element_id));
    if (it == rows_.end()) return std::nullopt;
    return it->second;
}

int HnswIndex::draw_level() {
    const double u = rng_.uniform_open();
    const double level = std::floor(-std::log(u) * params_.level_lambda);
    return static_cast<int>(std::min<double>(level, kMaxLevel));
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(std::span<const float> q,
                                                          std::vector<Candidate> entry, std::size_t ef,
                                                          int layer,
                                                          std::vector<std::uint32_t>& visited,
                                                          std::uint32_t epoch) const {
    // `frontier` pops the best candidate; `found` pops the worst kept result.
    auto best_first = [this](const Candidate& a, const Candidate& b) { return better(b, a); };
    auto worst_first = [this](const Candidate& a, const Candidate& b) { return better(a, b); };
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(best_first)> frontier(best_first);
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(worst_first)> found(worst_first);

    for (const auto& c : entry) {
        if (visited[c.node] == epoch) continue;
        visited[c.node] = epoch;
        frontier.push(c);
        found.push(c);
        if (found.size() > ef) found.pop();
    }
    while (!frontier.empty()) {
        const Candidate c = frontier.top();
        if (better(found.top(), c) && found.size() >= ef) break;
        frontier.pop();
        for (std::uint32_t e : neighbors(c.node, layer)) {
            if (visited[e] == epoch) continue;
            visited[e] = epoch;
            const Candidate cand{similarity(q, e), e};
            if (found.size() < ef || better(cand, found.top())) {
                frontier.push(cand);
                found.push(cand);
                if (found.size() > ef) found.pop();
            }
        }
    }
    std::vector<Candidate> out(found.size());
    for (auto it = out.rbegin(); it != out.rend(); ++it) {
        *it = found.top();
        found.pop();
    }
    return out;  // best first
}

std::vector<std::uint32_t> HnswIndex::select_neighbors(std::span<const Candidate> sorted,
                                                       std::size_t m) const {
    // Keep a candidate only if it is closer to the base than to every
    // neighbour already kept.
    std::vector<std::uint32_t> kept;
    kept.reserve(m);
    for (const auto& c : sorted) {
        if (kept.size() >= m) break;
        bool good = true;
        for (std::uint32_t r : kept) {
            if (simd::active().dot(vector(c.node).data(), vector(r).data(), dim_) > c.sim) {
                good = false;
                break;
            }
        }
        if (good) kept.push_back(c.node);
    }
    return kept;
}

void HnswIndex::prune(std::uint32_t node, int layer) {
    auto& adj = links_[node][layer];
    const auto base = vector(node);
    std::vector<Candidate> cands;
    cands.reserve(adj.size());
    for (std::uint32_t e : adj) cands.push_back({similarity(base, e), e});
    std::sort(cands.begin(), cands.end(), [this](const Candidate& a, const Candidate& b) { return better(a, b); });
    std::vector<std::uint32_t> kept = select_neighbors(cands, max_degree(layer));

    std::vector<std::uint32_t> sorted_kept = kept;
    std::sort(sorted_kept.begin(), sorted_kept.end());
    for (std::uint32_t e : adj) {
        if (std::binary_search(sorted_kept.begin(), sorted_kept.end(), e)) continue;
        auto& back = links_[e][layer];
        back.erase(std::remove(back.begin(), back.end(), node), back.end());
    }
    adj = std::move(kept);
}

void HnswIndex::insert(std::string_view element_id, std::span<const float> vector_in) {
    if (vector_in.size() != dim_) {
        throw InvalidArgument("HNSW: dimension mismatch (expected " + std::to_string(dim_) + ", got " +
                              std::to_string(vector_in.size()) + ")");
    }
    if (rows_.contains(std::string(element_id))) {
        throw InvalidArgument("HNSW: duplicate id " + std::string(element_id));
    }
    if (ids_.size() >= UINT32_MAX) throw InvalidArgument("HNSW: index full");
    std::vector<float> v(vector_in.begin(), vector_in.end());
    normalize(v);

    const auto node = static_cast<std::uint32_t>(ids_.size());
    const int level = draw_level();
    data_.insert(data_.end(), v.begin(), v.end());
    ids_.emplace_back(element_id);
    rows_.emplace(ids_.back(), node);
    links_.emplace_back(static_cast<std::size_t>(level) + 1);
    visited_.push_back(0);

    if (entry_ < 0) {
        entry_ = node;
        max_level_ = level;
        return;
    }

    const auto q = this->vector(node);
    auto next_epoch = [this] {
        if (++epoch_ == 0) {
            std::fill(visited_.begin(), visited_.end(), 0);
            epoch_ = 1;
        }
        return epoch_;
    };

    std::vector<Candidate> eps{{similarity(q, static_cast<std::uint32_t>(entry_)),
                                static_cast<std::uint32_t>(entry_)}};
    for (int layer = max_level_; layer > level; --layer) {
        eps = search_layer(q, eps, 1, layer, visited_, next_epoch());
    }
    for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
        auto found = search_layer(q, eps, params_.ef_construction, layer, visited_, next_epoch());
        auto chosen = select_neighbors(found, params_.M);
        links_[node][layer] = chosen;
        for (std::uint32_t e : chosen) {
            auto& adj = links_[e][layer];
            adj.push_back(node);
            if (adj.size() > max_degree(layer)) prune(e, layer);
        }
        eps = std::move(found);
    }
    if (level > max_level_) {
        max_level_ = level;
        entry_ = node;
    }
}

std::vector<ScoredId> HnswIndex::search(std::span<const float> query, std::size_t k,
                                        std::optional<std::size_t> ef) const {
    if (query.size() != dim_) throw InvalidArgument("HNSW: query dimension mismatch");
    if (entry_ < 0) {
        log_warn("search on an empty HNSW index");
        return {};
    }
    if (k == 0) return {};
    const std::size_t beam = std::max<std::size_t>(ef.value_or(params_.ef_search), k);

    std::vector<std::uint32_t> visited(ids_.size(), 0);
    std::uint32_t epoch = 0;
    const auto ep = static_cast<std::uint32_t>(entry_);
    std::vector<Candidate> eps{{similarity(query, ep), ep}};
    for (int layer = max_level_; layer > 0; --layer) {
        eps = search_layer(query, eps, 1, layer, visited, ++epoch);
    }
    auto found = search_layer(query, eps, beam, 0, visited, ++epoch);
    if (found.size() > k) found.resize(k);

    std::vector<ScoredId> out;
    out.reserve(found.size());
    for (const auto& c : found) out.push_back({ids_[c.node], c.sim});
    return out;
}

// ---------------------------------------------------------------- persistence

void HnswIndex::write_binary(std::ostream& out) const {
    out.write("HNSW", 4);
    binio::put<std::uint32_t>(out, kSnapshotVersion);
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    binio::put<std::uint64_t>(out, ids_.size());
    binio::put<std::uint32_t>(out, params_.M);
    binio::put<std::uint32_t>(out, params_.M0);
    binio::put<std::uint32_t>(out, params_.ef_construction);
    binio::put<std::uint32_t>(out, params_.ef_search);
    binio::put<double>(out, params_.level_lambda);
    binio::put<std::uint64_t>(out, params_.rng_seed);
    binio::put<std::int64_t>(out, entry_);
    binio::put<std::int32_t>(out, max_level_);
    for (float f : data_) binio::put<float>(out, f);
    for (const auto& per_layer : links_) binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(per_layer.size() - 1));
    for (int layer = 0; layer <= max_level_; ++layer) {
        std::uint64_t offset = 0;
        binio::put<std::uint64_t>(out, offset);
        for (const auto& per_layer : links_) {
            if (layer < static_cast<int>(per_layer.size())) offset += per_layer[layer].size();
            binio::put<std::uint64_t>(out, offset);
        }
        for (const auto& per_layer : links_) {
            if (layer >= static_cast<int>(per_layer.size())) continue;
            for (std::uint32_t e : per_layer[layer]) binio::put<std::uint32_t>(out, e);
        }
    }
}

std::string HnswIndex::manifest_json(std::string_view model) const {
    std::ostringstream rng_state;
    rng_state << rng_.engine();
    nlohmann::ordered_json j;
    j["format"] = "imgsearch-hnsw";
    j["version"] = kSnapshotVersion;
    j["model"] = model;
    j["dim"] = dim_;
    j["count"] = ids_.size();
    j["params"] = {{"M", params_.M},
                   {"M0", params_.M0},
                   {"ef_construction", params_.ef_construction},
                   {"ef_search", params_.ef_search},
                   {"level_lambda", params_.level_lambda},
                   {"rng_seed", params_.rng_seed}};
    j["rng_state"] = rng_state.str();
    j["ids"] = ids_;
    return j.dump(1);
}

void HnswIndex::save(const std::filesystem::path& binary_path, const std::filesystem::path& manifest_path,
                     std::string_view model) const {
    const auto write_atomic = [](const std::filesystem::path& path, auto&& writer) {
        const auto tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot write " + tmp);
            writer(out);
            if (!out) throw IoError("write failed: " + tmp);
        }
        std::filesystem::rename(tmp, path);
    };
    write_atomic(binary_path, [&](std::ostream& out) { write_binary(out); });
    write_atomic(manifest_path, [&](std::ostream& out) { out << manifest_json(model) << '\n'; });
}

HnswIndex HnswIndex::read(std::istream& in, std::string_view manifest_text) {
    binio::expect_magic(in, "HNSW");
    if (binio::get<std::uint32_t>(in) != kSnapshotVersion) throw ParseError("unsupported HNSW snapshot version");
    const auto dim = binio::get<std::uint32_t>(in);
    const auto count = binio::get<std::uint64_t>(in);
    HnswParams p;
    p.M = binio::get<std::uint32_t>(in);
    p.M0 = binio::get<std::uint32_t>(in);
    p.ef_construction = binio::get<std::uint32_t>(in);
    p.ef_search = binio::get<std::uint32_t>(in);
    p.level_lambda = binio::get<double>(in);
    p.rng_seed = binio::get<std::uint64_t>(in);

    HnswIndex idx(dim, p);
    idx.entry_ = binio::get<std::int64_t>(in);
    idx.max_level_ = binio::get<std::int32_t>(in);
    idx.data_.resize(count * dim);
    for (auto& f : idx.data_) f = binio::get<float>(in);
    idx.links_.resize(count);
    for (auto& per_layer : idx.links_) per_layer.resize(static_cast<std::size_t>(binio::get<std::uint8_t>(in)) + 1);
    for (int layer = 0; layer <= idx.max_level_; ++layer) {
        std::vector<std::uint64_t> offsets(count + 1);
        for (auto& o : offsets) o = binio::get<std::uint64_t>(in);
        for (std::uint64_t n = 0; n < count; ++n) {
            const auto len = offsets[n + 1] - offsets[n];
            if (len == 0) continue;
            if (layer >= static_cast<int>(idx.links_[n].size())) throw ParseError("HNSW snapshot: adjacency above node level");
            auto& adj = idx.links_[n][layer];
            adj.resize(len);
            for (auto& e : adj) {
                e = binio::get<std::uint32_t>(in);
                if (e >= count) throw ParseError("HNSW snapshot: neighbour out of range");
            }
        }
    }

    const auto j = nlohmann::json::parse(manifest_text);
    const auto ids = j.at("ids").get<std::vector<std::string>>();
    if (ids.size() != count || j.at("dim").get<std::size_t>() != dim) {
        throw ParseError("HNSW manifest does not match binary snapshot");
    }
    idx.ids_ = ids;
    for (std::uint32_t i = 0; i < count; ++i) idx.rows_.emplace(idx.ids_[i], i);
    std::istringstream rng_state(j.at("rng_state").get<std::string>());
    rng_state >> idx.rng_.engine();
    idx.visited_.assign(count, 0);
    return idx;
}

HnswIndex HnswIndex::load(const std::filesystem::path& binary_path, const std::filesystem::path& manifest_path) {
    std::ifstream bin(binary_path, std::ios::binary);
    if (!bin) throw IoError("cannot open " + binary_path.string());
    std::ifstream man(manifest_path);
    if (!man) throw IoError("cannot open " + manifest_path.string());
    std::stringstream text;
    text << man.rdbuf();
    return read(bin, text.str());
}

// ---------------------------------------------------------------- oracle

std::vector<ScoredId> brute_force_knn(std::span<const float> rows, std::span<const std::string> ids,
                                      std::size_t dim, std::span<const float> query, std::size_t k) {
    if (query.size() != dim) throw InvalidArgument("brute_force_knn: query dimension mismatch");
    std::vector<float> scores(ids.size());
    simd::active().dot_many(query.data(), rows.data(), ids.size(), dim, scores.data());
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const auto cmp = [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b] || (scores[a] == scores[b] && ids[a] < ids[b]);
    };
    const std::size_t n = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), cmp);
    std::vector<ScoredId> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back({ids[order[i]], scores[order[i]]});
    return out;
}

std::vector<ScoredId> brute_force_knn(const VectorTable& table, std::span<const float> query, std::size_t k) {
    return brute_force_knn(table.data(), table.ids(), table.dim(), query, k);
}

double recall_at_k(std::span<const ScoredId> approx, std::span<const ScoredId> exact, std::size_t k) {
    if (k == 0) throw InvalidArgument("recall_at_k: k must be positive");
    std::set<std::string_view> truth;
    for (std::size_t i = 0; i < std::min(k, exact.size()); ++i) truth.insert(exact[i].element_id);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, approx.size()); ++i) hits += truth.count(approx[i].element_id);
    return static_cast<double>(hits) / static_cast<double>(k);
}

}  // namespace imgsearch
