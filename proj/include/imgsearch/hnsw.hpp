#pragma once

// Hierarchical navigable small-world graph over unit vectors, scored by cosine
// similarity (plain dot product on normalized rows).
//
// Ordering everywhere is (score descending, element id ascending), so results
// are reproducible across platforms that share a kernel variant. Layer
// adjacency is kept symmetric: when pruning drops the edge a->b, b also drops
// a. Deletion is not supported; rebuild instead.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "imgsearch/random.hpp"

namespace imgsearch {

class VectorTable;

struct ScoredId {
    std::string element_id;
    float score = 0.0f;

    friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

/// Descending score, ties by ascending id.
inline bool ranks_before(const ScoredId& a, const ScoredId& b) noexcept {
    return a.score > b.score || (a.score == b.score && a.element_id < b.element_id);
}

struct HnswParams {
    std::uint32_t M = 16;
    std::uint32_t M0 = 32;
    std::uint32_t ef_construction = 100;
    std::uint32_t ef_search = 128;
    double level_lambda = 1.0 / std::log(16.0);
    std::uint64_t rng_seed = 42;

    /// Defaults derived from M: M0 = 2M, level_lambda = 1/ln(M).
    static HnswParams with_m(std::uint32_t m, std::uint64_t seed = 42);

    /// Throws InvalidArgument unless M >= 2, M0 >= M, ef_construction >= M,
    /// ef_search >= 1, level_lambda > 0.
    void validate() const;
};

class HnswIndex {
public:
    explicit HnswIndex(std::size_t dim, HnswParams params = {});

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    const HnswParams& params() const noexcept { return params_; }

    /// Inserts a vector (normalized on the way in). Throws InvalidArgument on
    /// duplicate id or dimension mismatch.
    void insert(std::string_view element_id, std::span<const float> vector);

    /// Up to k results, best first. ef defaults to params().ef_search and is
    /// raised to k when smaller. An empty index yields an empty result.
    std::vector<ScoredId> search(std::span<const float> query, std::size_t k,
                                 std::optional<std::size_t> ef = std::nullopt) const;

    // Structure inspection.
    std::optional<std::uint32_t> entry_point() const noexcept;
    int max_level() const noexcept { return max_level_; }
    int level(std::uint32_t node) const { return static_cast<int>(links_[node].size()) - 1; }
    std::span<const std::uint32_t> neighbors(std::uint32_t node, int layer) const;
    const std::string& id(std::uint32_t node) const { return ids_[node]; }
    std::optional<std::uint32_t> find(std::string_view element_id) const;
    std::span<const float> vector(std::uint32_t node) const {
        return {data_.data() + static_cast<std::size_t>(node) * dim_, dim_};
    }

    /// Binary snapshot: "HNSW", u32 version, u32 dim, u64 count, params,
    /// entry point, vectors (f32 LE), levels, per-layer CSR adjacency.
    void write_binary(std::ostream& out) const;
    /// JSON manifest with the id table and RNG state.
    std::string manifest_json(std::string_view model = {}) const;

    void save(const std::filesystem::path& binary_path, const std::filesystem::path& manifest_path,
              std::string_view model = {}) const;
    static HnswIndex load(const std::filesystem::path& binary_path,
                          const std::filesystem::path& manifest_path);
    static HnswIndex read(std::istream& binary, std::string_view manifest_json);

private:
    struct Candidate {
        float sim;
        std::uint32_t node;
    };

    bool better(const Candidate& a, const Candidate& b) const noexcept {
        return a.sim > b.sim || (a.sim == b.sim && ids_[a.node] < ids_[b.node]);
    }
    float similarity(std::span<const float> q, std::uint32_t node) const noexcept;

    std::vector<Candidate> search_layer(std::span<const float> q, std::vector<Candidate> entry,
                                        std::size_t ef, int layer,
                                        std::vector<std::uint32_t>& visited_epochs,
                                        std::uint32_t epoch) const;
    std::vector<std::uint32_t> select_neighbors(std::span<const Candidate> sorted, std::size_t m) const;
    std::uint32_t max_degree(int layer) const noexcept { return layer == 0 ? params_.M0 : params_.M; }
    void prune(std::uint32_t node, int layer);
    int draw_level();

    std::size_t dim_;
    HnswParams params_;
    Rng rng_;
    std::vector<float> data_;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::uint32_t> rows_;
    std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // node -> layer -> neighbours
    std::int64_t entry_ = -1;
    int max_level_ = -1;

    // Insert-time scratch for visited marks.
    std::vector<std::uint32_t> visited_;
    std::uint32_t epoch_ = 0;
};

/// Exact top-k by cosine over a vector table, same ordering as HnswIndex.
std::vector<ScoredId> brute_force_knn(const VectorTable& table, std::span<const float> query,
                                      std::size_t k);
/// Same, over raw row-major data.
std::vector<ScoredId> brute_force_knn(std::span<const float> rows, std::span<const std::string> ids,
                                      std::size_t dim, std::span<const float> query, std::size_t k);

/// |approx[0..k) ∩ exact[0..k)| / k. Throws InvalidArgument when k == 0.
double recall_at_k(std::span<const ScoredId> approx, std::span<const ScoredId> exact, std::size_t k);

}  // namespace imgsearch
