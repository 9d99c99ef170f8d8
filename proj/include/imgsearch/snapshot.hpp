#pragma once

// A served collection: element metadata, one HNSW index per embedding model,
// the context-text index and optionally a classifier. Snapshots are immutable
// once loaded; the service swaps whole snapshots.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "imgsearch/alto.hpp"
#include "imgsearch/classifier.hpp"
#include "imgsearch/embedding.hpp"
#include "imgsearch/hnsw.hpp"
#include "imgsearch/text_index.hpp"

namespace imgsearch {

struct ModelIndex {
    std::string tag;
    std::optional<PreprocessProfile> mock_profile;  // set when the server can embed images for this tag
    HnswIndex index;
};

struct Snapshot {
    std::vector<GraphicalElementRecord> elements;
    std::unordered_map<std::string, std::size_t> element_rows;
    std::map<std::string, ModelIndex, std::less<>> models;
    InvertedIndex text;
    std::optional<LogRegModel> classifier;
    std::unordered_map<std::string, Label> predicted_labels;

    const GraphicalElementRecord* element(std::string_view id) const;
    std::optional<Label> predicted_label(std::string_view id) const;
};

struct SnapshotBuildOptions {
    HnswParams hnsw;
    PreprocessProfile mock_profile = PreprocessProfile::Squash256;
    std::optional<std::filesystem::path> classifier_model;
};

/// Builds indices from elements and embeddings and writes them below `dir`:
/// snapshot.json, elements.jsonl, text.postings + text.manifest.json,
/// {model}.hnsw + {model}.manifest.json per model tag, classifier.json.
void build_snapshot(std::span<const GraphicalElementRecord> elements, std::span<const EmbeddingVector> embeddings,
                    const SnapshotBuildOptions& options, const std::filesystem::path& dir);

std::shared_ptr<const Snapshot> load_snapshot(const std::filesystem::path& dir);

/// Assembles an in-memory snapshot (used by tests and the builder).
std::shared_ptr<Snapshot> make_snapshot(std::span<const GraphicalElementRecord> elements,
                                        std::span<const EmbeddingVector> embeddings, const HnswParams& hnsw,
                                        PreprocessProfile mock_profile,
                                        std::optional<LogRegModel> classifier = std::nullopt);

}  // namespace imgsearch
