#include "imgsearch/snapshot.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "imgsearch/error.hpp"

namespace imgsearch {

const GraphicalElementRecord* Snapshot::element(std::string_view id) const {
    const auto it = element_rows.find(std::string(id));
    return it == element_rows.end() ? nullptr : &elements[it->second];
}

std::optional<Label> Snapshot::predicted_label(std::string_view id) const {
    const auto it = predicted_labels.find(std::string(id));
    if (it == predicted_labels.end()) return std::nullopt;
    return it->second;
}

namespace {

void attach_classifier(Snapshot& snap, LogRegModel model) {
    const auto it = snap.models.find(model.model_tag);
    if (it != snap.models.end()) {
        const HnswIndex& idx = it->second.index;
        if (idx.dim() == model.dim()) {
            for (std::uint32_t n = 0; n < idx.size(); ++n) {
                snap.predicted_labels.emplace(idx.id(n), predict(model, idx.vector(n)).label);
            }
        }
    }
    snap.classifier = std::move(model);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::shared_ptr<Snapshot> make_snapshot(std::span<const GraphicalElementRecord> elements,
                                        std::span<const EmbeddingVector> embeddings, const HnswParams& hnsw,
                                        PreprocessProfile mock_profile, std::optional<LogRegModel> classifier) {
    auto snap = std::make_shared<Snapshot>();
    snap->elements.assign(elements.begin(), elements.end());
    for (std::size_t i = 0; i < snap->elements.size(); ++i) {
        if (!snap->element_rows.emplace(snap->elements[i].element_id, i).second) {
            throw InvalidArgument("duplicate element id in snapshot: " + snap->elements[i].element_id);
        }
        snap->text.index_document(snap->elements[i].element_id, tokenize(snap->elements[i].context_text));
    }
    for (const auto& v : embeddings) {
        auto it = snap->models.find(v.model);
        if (it == snap->models.end()) {
            std::optional<PreprocessProfile> profile;
            if (v.model == kMockModel) profile = mock_profile;
            it = snap->models.emplace(v.model, ModelIndex{v.model, profile, HnswIndex(v.values.size(), hnsw)}).first;
        }
        it->second.index.insert(v.element_id, v.values);
    }
    if (classifier) attach_classifier(*snap, std::move(*classifier));
    return snap;
}

void build_snapshot(std::span<const GraphicalElementRecord> elements, std::span<const EmbeddingVector> embeddings,
                    const SnapshotBuildOptions& options, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::optional<LogRegModel> classifier;
    if (options.classifier_model) classifier = load_model(*options.classifier_model);
    const auto snap = make_snapshot(elements, embeddings, options.hnsw, options.mock_profile, classifier);

    fs::create_directories(dir);
    {
        std::ofstream out(dir / "elements.jsonl", std::ios::trunc);
        write_elements_jsonl(out, snap->elements);
        if (!out) throw IoError("cannot write elements.jsonl");
    }
    snap->text.save(dir / "text.postings", dir / "text.manifest.json");

    nlohmann::ordered_json manifest;
    manifest["format"] = "imgsearch-snapshot";
    manifest["version"] = 1;
    manifest["elements"] = "elements.jsonl";
    manifest["text"] = {{"postings", "text.postings"}, {"manifest", "text.manifest.json"}};
    auto models = nlohmann::ordered_json::array();
    for (const auto& [tag, mi] : snap->models) {
        const std::string bin = tag + ".hnsw";
        const std::string man = tag + ".manifest.json";
        mi.index.save(dir / bin, dir / man, tag);
        nlohmann::ordered_json m;
        m["tag"] = tag;
        m["hnsw"] = bin;
        m["manifest"] = man;
        if (mi.mock_profile) m["profile"] = std::string(to_string(*mi.mock_profile));
        models.push_back(std::move(m));
    }
    manifest["models"] = std::move(models);
    if (snap->classifier) {
        save_model(*snap->classifier, dir / "classifier.json");
        manifest["classifier"] = "classifier.json";
    }
    std::ofstream out(dir / "snapshot.json", std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("cannot write snapshot.json");
}

std::shared_ptr<const Snapshot> load_snapshot(const std::filesystem::path& dir) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(slurp(dir / "snapshot.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("snapshot.json: ") + e.what());
    }
    auto snap = std::make_shared<Snapshot>();
    snap->elements = read_elements_jsonl(dir / manifest.at("elements").get<std::string>());
    for (std::size_t i = 0; i < snap->elements.size(); ++i) snap->element_rows.emplace(snap->elements[i].element_id, i);
    const auto& text = manifest.at("text");
    snap->text = InvertedIndex::load(dir / text.at("postings").get<std::string>(),
                                     dir / text.at("manifest").get<std::string>());
    for (const auto& m : manifest.at("models")) {
        const auto tag = m.at("tag").get<std::string>();
        std::optional<PreprocessProfile> profile;
        if (m.contains("profile")) profile = parse_profile(m.at("profile").get<std::string>());
        snap->models.emplace(tag, ModelIndex{tag, profile,
                                             HnswIndex::load(dir / m.at("hnsw").get<std::string>(),
                                                             dir / m.at("manifest").get<std::string>())});
    }
    if (manifest.contains("classifier")) {
        attach_classifier(*snap, load_model(dir / manifest.at("classifier").get<std::string>()));
    }
    return snap;
}

}  // namespace imgsearch
