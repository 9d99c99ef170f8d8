#pragma once

// Embedding vectors: preprocessing geometry, the built-in mock64 extractor,
// JSONL import/export and a per-model contiguous vector store.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "imgsearch/raster.hpp"

namespace imgsearch {

enum class PreprocessProfile { Squash224, Squash256, Crop224 };

std::string_view to_string(PreprocessProfile p) noexcept;
/// Accepts "squash_224", "squash_256", "crop_224". Throws InvalidArgument.
PreprocessProfile parse_profile(std::string_view name);
/// Output (width, height) of a profile.
std::pair<int, int> profile_shape(PreprocessProfile p) noexcept;

/// squash_*: bilinear resize to the target ignoring aspect ratio.
/// crop_224: bilinear resize so the short side is 224, then centre crop
/// 224x224 (odd overhang loses the extra pixel on the right/bottom).
RasterImage preprocess(const RasterImage& img, PreprocessProfile profile);

struct EmbeddingVector {
    std::string element_id;
    std::string model;
    std::vector<float> values;

    std::size_t dim() const noexcept { return values.size(); }
};

inline constexpr std::string_view kMockModel = "mock64";
inline constexpr std::size_t kMockDim = 64;

/// Expected dimension for the model tags the system knows about.
std::optional<std::size_t> known_model_dim(std::string_view model) noexcept;

/// Deterministic 64-dim image feature: 4x4 grid of mean R,G,B per cell
/// (row-major cells, 0..255 units) followed by a 16-bin luminance histogram
/// (fractions of pixels), L2-normalized.
std::vector<float> mock_features(const RasterImage& img, PreprocessProfile profile);
EmbeddingVector mock_embed(const RasterImage& img, PreprocessProfile profile,
                           std::string element_id = {});

/// Scales `v` to unit L2 norm in place; vectors already within 1e-5 of unit
/// norm are left untouched. Throws InvalidArgument for zero or non-finite vectors.
void normalize(std::span<float> v);

/// dot(a,b)/(|a||b|), clamped to [-1, 1]. Throws InvalidArgument on dim
/// mismatch or zero vectors.
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

struct ImportIssue {
    std::size_t line = 0;
    std::string element_id;
    std::string message;
};

struct ImportResult {
    std::vector<EmbeddingVector> vectors;  // normalized
    std::vector<ImportIssue> errors;
    std::size_t lines = 0;
};

/// Reads embeddings JSONL ({element_id, model, dim, vector}). Bad records are
/// collected in `errors`; if more than 1% of records are bad the whole file is
/// rejected with ParseError.
ImportResult import_embeddings(std::istream& in);
ImportResult import_embeddings(const std::filesystem::path& path);

void write_embeddings_jsonl(std::ostream& out, std::span<const EmbeddingVector> vectors);

/// Contiguous float32 rows for one model tag with an id -> row map.
class VectorTable {
public:
    VectorTable() = default;
    VectorTable(std::string model, std::size_t dim);

    const std::string& model() const noexcept { return model_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }

    /// Appends a copy of `values`, normalized. Throws on duplicate id or dim mismatch.
    std::size_t add(std::string_view element_id, std::span<const float> values);

    std::span<const float> row(std::size_t r) const noexcept {
        return {data_.data() + r * dim_, dim_};
    }
    const std::string& id(std::size_t r) const noexcept { return ids_[r]; }
    std::optional<std::size_t> find(std::string_view element_id) const;
    std::span<const float> data() const noexcept { return data_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }

    /// Packed binary form: magic "EMBT", u32 version, u32 dim, u64 count,
    /// model and ids as length-prefixed strings, then float32 LE rows.
    void save_packed(const std::filesystem::path& path) const;
    static VectorTable load_packed(const std::filesystem::path& path);

private:
    std::string model_;
    std::size_t dim_ = 0;
    std::vector<float> data_;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> rows_;
};

/// All embeddings of a collection, one table per model tag.
class EmbeddingStore {
public:
    void add(const EmbeddingVector& v);
    void add_all(std::span<const EmbeddingVector> vs) {
        for (const auto& v : vs) add(v);
    }
    const VectorTable* table(std::string_view model) const;
    std::vector<std::string> models() const;

private:
    std::map<std::string, VectorTable, std::less<>> tables_;
};

}  // namespace imgsearch
