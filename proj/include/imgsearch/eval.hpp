#pragma once

// Exact-image-retrieval evaluation: degrade each target image, query the
// index with the degraded version and record where the target ranks.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imgsearch/classifier.hpp"
#include "imgsearch/embedding.hpp"
#include "imgsearch/hnsw.hpp"
#include "imgsearch/raster.hpp"
#include "imgsearch/random.hpp"

namespace imgsearch {

struct TransformParams {
    double crop_left = 0, crop_right = 0, crop_top = 0, crop_bottom = 0;  // fractions
    double rotation_deg = 0;
    double scale_w = 1, scale_h = 1;

    friend bool operator==(const TransformParams&, const TransformParams&) = default;
};

/// Upper/lower bounds of the uniform draws. Defaults are the full ranges:
/// crops in [0, 0.15] per side, rotation in [-10, 10] degrees, scale factors
/// in [0.8, 1.2] per axis.
struct TransformRanges {
    double crop_max = 0.15;
    double rotation_max_deg = 10.0;
    double scale_min = 0.8;
    double scale_max = 1.2;

    static TransformRanges identity() { return {0.0, 0.0, 1.0, 1.0}; }
    /// Throws InvalidArgument if a range is outside the supported bounds.
    void validate() const;
};

/// Seven independent uniform draws in fixed order: crop L, R, T, B; rotation; scale w, h.
TransformParams sample_transform(Rng& rng, const TransformRanges& ranges = {});

/// Crop (margins floored), rotate about the centre onto an expanded white
/// canvas (bilinear; positive angles turn counter-clockwise), then scale
/// each axis (bilinear). Zero parameters give back the input unchanged.
/// Throws InvalidArgument if any stage would leave less than one pixel.
RasterImage transform_image(const RasterImage& img, const TransformParams& params);
RasterImage rotate_image(const RasterImage& img, double degrees, Rgb fill = {255, 255, 255});

inline constexpr std::array<int, 4> kTopN = {1, 5, 10, 50};

struct TopNRow {
    std::string model;
    std::size_t n_targets = 0;
    std::array<std::size_t, kTopN.size()> counts{};

    double percent(std::size_t i) const {
        return n_targets ? 100.0 * static_cast<double>(counts[i]) / static_cast<double>(n_targets) : 0.0;
    }
};

/// Counts queries whose target appears within the first N results for each N in kTopN.
TopNRow top_n_accuracy(std::span<const std::vector<std::string>> ranked, std::span<const std::string> targets,
                       std::string model = {});
/// Same from 1-based ranks (0 = not retrieved).
TopNRow top_n_from_ranks(std::span<const std::size_t> ranks, std::string model = {});

/// Target rule: elements labelled Illustration or photograph, Map or Mathematical chart.
bool is_retrieval_target(Label label) noexcept;
std::vector<std::string> select_targets(std::span<const LabeledExample> labels);

struct CorpusItem {
    std::string element_id;
    std::optional<RasterImage> image;  // nullopt: missing on disk
};

struct ExtractorSpec {
    std::string name;  // report row label
    PreprocessProfile profile = PreprocessProfile::Squash256;
};

struct EvalConfig {
    std::uint64_t seed = 0;
    TransformRanges ranges;
    std::size_t k = 50;
    HnswParams hnsw;
    std::vector<ExtractorSpec> extractors = {{"mock64", PreprocessProfile::Squash256}};
    /// Restrict queries to these ids (all corpus items when empty).
    std::vector<std::string> targets;
    unsigned jobs = 1;
};

struct QueryOutcome {
    std::string element_id;
    TransformParams transform;
    std::size_t rank = 0;  // 1-based, 0 = not in top k
};

struct ModelEvalResult {
    TopNRow row;
    std::vector<QueryOutcome> queries;
};

struct RetrievalEvalReport {
    std::uint64_t seed = 0;
    TransformRanges ranges;
    HnswParams hnsw;
    std::size_t k = 50;
    std::size_t skipped_missing = 0;
    std::vector<ModelEvalResult> models;
};

/// Index every available corpus image per extractor, then run each target as
/// a degraded query. Per-query RNG streams come from (seed, query index), so
/// results do not depend on `jobs`.
RetrievalEvalReport run_retrieval_eval(std::span<const CorpusItem> corpus, const EvalConfig& config);

std::string eval_report_json(const RetrievalEvalReport& report);
/// Aligned text table: rows per model, "count (pct %)" per Top-N column.
std::string eval_report_table(const RetrievalEvalReport& report);

/// Deterministic synthetic picture (background gradient plus coloured
/// rectangles and ellipses), used for the desk corpus and fixture servers.
RasterImage synthetic_image(std::uint64_t seed, int width, int height);
std::vector<CorpusItem> synthetic_corpus(std::size_t count, std::uint64_t seed);

}  // namespace imgsearch
