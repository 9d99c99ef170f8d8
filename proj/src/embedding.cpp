#include "imgsearch/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "imgsearch/error.hpp"
#include "imgsearch/simd/kernels.hpp"

namespace imgsearch {

std::string_view to_string(PreprocessProfile p) noexcept {
    switch (p) {
        case PreprocessProfile::Squash224: return "squash_224";
        case PreprocessProfile::Squash256: return "squash_256";
        case PreprocessProfile::Crop224: return "crop_224";
    }
    return "?";
}

PreprocessProfile parse_profile(std::string_view name) {
    for (auto p : {PreprocessProfile::Squash224, PreprocessProfile::Squash256, PreprocessProfile::Crop224}) {
        if (name == to_string(p)) return p;
    }
    throw InvalidArgument("unknown preprocess profile: " + std::string(name));
}

std::pair<int, int> profile_shape(PreprocessProfile p) noexcept {
    return p == PreprocessProfile::Squash256 ? std::pair{256, 256} : std::pair{224, 224};
}

RasterImage preprocess(const RasterImage& img, PreprocessProfile profile) {
    if (img.empty()) throw InvalidArgument("preprocess: empty image");
    const auto [tw, th] = profile_shape(profile);
    if (profile != PreprocessProfile::Crop224) return resize_bilinear(img, tw, th);

    const int w = img.width();
    const int h = img.height();
    int rw, rh;
    if (w <= h) {
        rw = 224;
        rh = std::max(224, static_cast<int>(std::lround(static_cast<double>(h) * 224.0 / w)));
    } else {
        rh = 224;
        rw = std::max(224, static_cast<int>(std::lround(static_cast<double>(w) * 224.0 / h)));
    }
    const RasterImage resized = resize_bilinear(img, rw, rh);
    return crop(resized, (rw - 224) / 2, (rh - 224) / 2, 224, 224);
}

std::optional<std::size_t> known_model_dim(std::string_view model) noexcept {
    if (model == "vit" || model == "siglip") return 768;
    if (model == "clip") return 512;
    if (model == kMockModel) return kMockDim;
    return std::nullopt;
}

std::vector<float> mock_features(const RasterImage& img, PreprocessProfile profile) {
    const RasterImage p = preprocess(img, profile);
    const int w = p.width();
    const int h = p.height();
    std::vector<double> feat(64, 0.0);

    for (int cy = 0; cy < 4; ++cy) {
        const int y0 = cy * h / 4, y1 = (cy + 1) * h / 4;
        for (int cx = 0; cx < 4; ++cx) {
            const int x0 = cx * w / 4, x1 = (cx + 1) * w / 4;
            double sum[3] = {0, 0, 0};
            for (int y = y0; y < y1; ++y) {
                const std::uint8_t* row = p.row(y);
                for (int x = x0; x < x1; ++x) {
                    sum[0] += row[x * 3];
                    sum[1] += row[x * 3 + 1];
                    sum[2] += row[x * 3 + 2];
                }
            }
            const double n = static_cast<double>(y1 - y0) * (x1 - x0);
            for (int c = 0; c < 3; ++c) feat[(cy * 4 + cx) * 3 + c] = sum[c] / n;
        }
    }

    const double total = static_cast<double>(w) * h;
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* row = p.row(y);
        for (int x = 0; x < w; ++x) {
            // luma·1000 in integers so grey levels on a bin edge land exactly.
            const int luma_milli = 299 * row[x * 3] + 587 * row[x * 3 + 1] + 114 * row[x * 3 + 2];
            const int bin = std::min(luma_milli / 16000, 15);
            feat[48 + bin] += 1.0;
        }
    }
    for (int b = 0; b < 16; ++b) feat[48 + b] /= total;

    double norm = 0.0;
    for (double v : feat) norm += v * v;
    norm = std::sqrt(norm);
    std::vector<float> out(64);
    for (int i = 0; i < 64; ++i) out[i] = static_cast<float>(feat[i] / norm);
    return out;
}

EmbeddingVector mock_embed(const RasterImage& img, PreprocessProfile profile, std::string element_id) {
    return {std::move(element_id), std::string(kMockModel), mock_features(img, profile)};
}

void normalize(std::span<float> v) {
    double ss = 0.0;
    for (float x : v) {
        if (!std::isfinite(x)) throw InvalidArgument("vector contains a non-finite value");
        ss += static_cast<double>(x) * x;
    }
    if (ss == 0.0) throw InvalidArgument("cannot normalize a zero vector");
    const double norm = std::sqrt(ss);
    // Within the unit-norm tolerance: leave the bits alone so normalize is exactly idempotent.
    if (std::abs(norm - 1.0) <= 1e-5) return;
    simd::scale(v, static_cast<float>(1.0 / norm));
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw InvalidArgument("cosine_similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw InvalidArgument("cosine_similarity: zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine_similarity(std::span<const float>(a.values), std::span<const float>(b.values));
}

// ---------------------------------------------------------------- JSONL

ImportResult import_embeddings(std::istream& in) {
    ImportResult result;
    std::map<std::string, std::size_t, std::less<>> model_dims;
    std::set<std::pair<std::string, std::string>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++result.lines;
        std::string element_id;
        try {
            const auto j = nlohmann::json::parse(line);
            element_id = j.at("element_id").get<std::string>();
            EmbeddingVector v;
            v.element_id = element_id;
            v.model = j.at("model").get<std::string>();
            const auto dim = j.at("dim").get<std::int64_t>();
            const auto& arr = j.at("vector");
            if (!arr.is_array()) throw InvalidArgument("vector must be an array");
            if (dim <= 0 || static_cast<std::size_t>(dim) != arr.size()) {
                throw InvalidArgument("dim " + std::to_string(dim) + " does not match vector length " +
                                      std::to_string(arr.size()));
            }
            if (const auto known = known_model_dim(v.model); known && *known != static_cast<std::size_t>(dim)) {
                throw InvalidArgument("model " + v.model + " requires dim " + std::to_string(*known));
            }
            if (auto it = model_dims.find(v.model); it != model_dims.end() && it->second != static_cast<std::size_t>(dim)) {
                throw InvalidArgument("dim inconsistent with earlier records of model " + v.model);
            }
            v.values.reserve(arr.size());
            for (const auto& x : arr) {
                if (!x.is_number()) throw InvalidArgument("vector entries must be numbers");
                const double d = x.get<double>();
                if (!std::isfinite(d) || !std::isfinite(static_cast<float>(d))) {
                    throw InvalidArgument("non-finite vector value");
                }
                v.values.push_back(static_cast<float>(d));
            }
            normalize(v.values);
            if (!seen.emplace(v.model, v.element_id).second) {
                throw InvalidArgument("duplicate element_id for model " + v.model);
            }
            model_dims.emplace(v.model, static_cast<std::size_t>(dim));
            result.vectors.push_back(std::move(v));
        } catch (const nlohmann::json::exception& e) {
            result.errors.push_back({line_no, element_id, std::string("malformed record: ") + e.what()});
        } catch (const InvalidArgument& e) {
            result.errors.push_back({line_no, element_id, e.what()});
        }
    }
    // More than 1% bad records rejects the file.
    if (result.errors.size() * 100 > result.lines) {
        throw ParseError("embeddings file rejected: " + std::to_string(result.errors.size()) + " of " +
                         std::to_string(result.lines) + " records invalid (first: line " +
                         std::to_string(result.errors.front().line) + ": " + result.errors.front().message + ")");
    }
    return result;
}

ImportResult import_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return import_embeddings(in);
}

void write_embeddings_jsonl(std::ostream& out, std::span<const EmbeddingVector> vectors) {
    for (const auto& v : vectors) {
        nlohmann::ordered_json j;
        j["element_id"] = v.element_id;
        j["model"] = v.model;
        j["dim"] = v.values.size();
        j["vector"] = v.values;
        out << j.dump() << '\n';
    }
}

// ---------------------------------------------------------------- store

VectorTable::VectorTable(std::string model, std::size_t dim) : model_(std::move(model)), dim_(dim) {
    if (dim == 0) throw InvalidArgument("vector table dimension must be positive");
}

std::size_t VectorTable::add(std::string_view element_id, std::span<const float> values) {
    if (values.size() != dim_) {
        throw InvalidArgument("dimension mismatch: expected " + std::to_string(dim_) + ", got " +
                              std::to_string(values.size()));
    }
    if (rows_.contains(std::string(element_id))) {
        throw InvalidArgument("duplicate element id: " + std::string(element_id));
    }
    std::vector<float> copy(values.begin(), values.end());
    normalize(copy);
    const std::size_t r = ids_.size();
    data_.insert(data_.end(), copy.begin(), copy.end());
    ids_.emplace_back(element_id);
    rows_.emplace(ids_.back(), r);
    return r;
}

std::optional<std::size_t> VectorTable::find(std::string_view element_id) const {
    const auto it = rows_.find(std::string(element_id));
    if (it == rows_.end()) return std::nullopt;
    return it->second;
}

void VectorTable::save_packed(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write("EMBT", 4);
    binio::put<std::uint32_t>(out, 1);
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    binio::put<std::uint64_t>(out, ids_.size());
    binio::put_string(out, model_);
    for (const auto& id : ids_) binio::put_string(out, id);
    for (float f : data_) binio::put<float>(out, f);
    if (!out) throw IoError("write failed: " + path.string());
}

VectorTable VectorTable::load_packed(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    binio::expect_magic(in, "EMBT");
    if (binio::get<std::uint32_t>(in) != 1) throw ParseError("unsupported packed embedding version");
    const auto dim = binio::get<std::uint32_t>(in);
    const auto count = binio::get<std::uint64_t>(in);
    VectorTable t(binio::get_string(in), dim);
    t.ids_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        t.ids_.push_back(binio::get_string(in));
        t.rows_.emplace(t.ids_.back(), i);
    }
    t.data_.resize(count * dim);
    for (auto& f : t.data_) f = binio::get<float>(in);
    return t;
}

void EmbeddingStore::add(const EmbeddingVector& v) {
    auto it = tables_.find(v.model);
    if (it == tables_.end()) it = tables_.emplace(v.model, VectorTable(v.model, v.values.size())).first;
    it->second.add(v.element_id, v.values);
}

const VectorTable* EmbeddingStore::table(std::string_view model) const {
    const auto it = tables_.find(model);
    return it == tables_.end() ? nullptr : &it->second;
}

std::vector<std::string> EmbeddingStore::models() const {
    std::vector<std::string> out;
    for (const auto& [m, _] : tables_) out.push_back(m);
    return out;
}

}  // namespace imgsearch
