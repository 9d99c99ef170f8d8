#include "imgsearch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "imgsearch/error.hpp"
#include "imgsearch/parallel.hpp"

namespace imgsearch {

void TransformRanges::validate() const {
    if (crop_max < 0.0 || crop_max >= 0.5) throw InvalidArgument("crop_max must be in [0, 0.5)");
    if (rotation_max_deg < 0.0 || rotation_max_deg > 180.0) throw InvalidArgument("rotation_max_deg must be in [0, 180]");
    if (!(scale_min > 0.0) || scale_max < scale_min) throw InvalidArgument("scale range must satisfy 0 < min <= max");
}

TransformParams sample_transform(Rng& rng, const TransformRanges& r) {
    TransformParams p;
    p.crop_left = rng.uniform(0.0, r.crop_max);
    p.crop_right = rng.uniform(0.0, r.crop_max);
    p.crop_top = rng.uniform(0.0, r.crop_max);
    p.crop_bottom = rng.uniform(0.0, r.crop_max);
    p.rotation_deg = rng.uniform(-r.rotation_max_deg, r.rotation_max_deg);
    p.scale_w = rng.uniform(r.scale_min, r.scale_max);
    p.scale_h = rng.uniform(r.scale_min, r.scale_max);
    return p;
}

RasterImage rotate_image(const RasterImage& img, double degrees, Rgb fill) {
    if (degrees == 0.0) return img;
    const double theta = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const int w = img.width();
    const int h = img.height();
    const int out_w = std::max(1, static_cast<int>(std::ceil(std::abs(w * c) + std::abs(h * s) - 1e-9)));
    const int out_h = std::max(1, static_cast<int>(std::ceil(std::abs(w * s) + std::abs(h * c) - 1e-9)));
    RasterImage out(out_w, out_h, fill);

    const double cx_out = out_w / 2.0, cy_out = out_h / 2.0;
    const double cx_in = w / 2.0, cy_in = h / 2.0;
    const std::uint8_t fill_c[3] = {fill.r, fill.g, fill.b};
    auto sample = [&](int x, int y, int ch) -> double {
        if (x < 0 || y < 0 || x >= w || y >= h) return fill_c[ch];
        return img.row(y)[x * 3 + ch];
    };
    for (int y = 0; y < out_h; ++y) {
        std::uint8_t* dst = out.row(y);
        for (int x = 0; x < out_w; ++x) {
            // Inverse map: with y pointing down, counter-clockwise on screen.
            const double dx = x + 0.5 - cx_out;
            const double dy = y + 0.5 - cy_out;
            const double sx = c * dx - s * dy + cx_in - 0.5;
            const double sy = s * dx + c * dy + cy_in - 0.5;
            if (sx <= -1.0 || sy <= -1.0 || sx >= w || sy >= h) continue;  // fully outside: fill
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            for (int ch = 0; ch < 3; ++ch) {
                const double top = sample(x0, y0, ch) * (1 - fx) + sample(x0 + 1, y0, ch) * fx;
                const double bot = sample(x0, y0 + 1, ch) * (1 - fx) + sample(x0 + 1, y0 + 1, ch) * fx;
                dst[x * 3 + ch] = static_cast<std::uint8_t>(std::clamp(std::lround(top * (1 - fy) + bot * fy), 0L, 255L));
            }
        }
    }
    return out;
}

RasterImage transform_image(const RasterImage& img, const TransformParams& p) {
    if (img.empty()) throw InvalidArgument("transform_image: empty image");
    const int w = img.width();
    const int h = img.height();
    const int l = static_cast<int>(std::floor(p.crop_left * w));
    const int r = static_cast<int>(std::floor(p.crop_right * w));
    const int t = static_cast<int>(std::floor(p.crop_top * h));
    const int b = static_cast<int>(std::floor(p.crop_bottom * h));
    if (w - l - r < 1 || h - t - b < 1) throw InvalidArgument("transform_image: crop leaves no pixels");

    RasterImage out = (l || r || t || b) ? crop(img, l, t, w - l - r, h - t - b) : img;
    out = rotate_image(out, p.rotation_deg);
    const int sw = static_cast<int>(std::lround(out.width() * p.scale_w));
    const int sh = static_cast<int>(std::lround(out.height() * p.scale_h));
    if (sw < 1 || sh < 1) throw InvalidArgument("transform_image: scaling leaves no pixels");
    return resize_bilinear(out, sw, sh);
}

TopNRow top_n_from_ranks(std::span<const std::size_t> ranks, std::string model) {
    TopNRow row;
    row.model = std::move(model);
    row.n_targets = ranks.size();
    for (std::size_t rank : ranks) {
        if (rank == 0) continue;
        for (std::size_t i = 0; i < kTopN.size(); ++i) {
            if (rank <= static_cast<std::size_t>(kTopN[i])) ++row.counts[i];
        }
    }
    return row;
}

TopNRow top_n_accuracy(std::span<const std::vector<std::string>> ranked, std::span<const std::string> targets,
                       std::string model) {
    if (ranked.size() != targets.size()) throw InvalidArgument("top_n_accuracy: one result list per target");
    std::vector<std::size_t> ranks(targets.size(), 0);
    for (std::size_t q = 0; q < targets.size(); ++q) {
        const auto& list = ranked[q];
        const auto it = std::find(list.begin(), list.end(), targets[q]);
        if (it != list.end()) ranks[q] = static_cast<std::size_t>(it - list.begin()) + 1;
    }
    return top_n_from_ranks(ranks, std::move(model));
}

bool is_retrieval_target(Label label) noexcept {
    return label == Label::IllustrationOrPhotograph || label == Label::Map || label == Label::MathematicalChart;
}

std::vector<std::string> select_targets(std::span<const LabeledExample> labels) {
    std::vector<std::string> out;
    for (const auto& ex : labels) {
        if (is_retrieval_target(ex.label)) out.push_back(ex.element_id);
    }
    return out;
}

RetrievalEvalReport run_retrieval_eval(std::span<const CorpusItem> corpus, const EvalConfig& cfg) {
    cfg.ranges.validate();
    RetrievalEvalReport report;
    report.seed = cfg.seed;
    report.ranges = cfg.ranges;
    report.hnsw = cfg.hnsw;
    report.k = cfg.k;

    std::vector<const CorpusItem*> queries;
    if (cfg.targets.empty()) {
        for (const auto& item : corpus) queries.push_back(&item);
    } else {
        std::unordered_map<std::string_view, const CorpusItem*> by_id;
        for (const auto& item : corpus) by_id.emplace(item.element_id, &item);
        for (const auto& id : cfg.targets) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) {
                ++report.skipped_missing;
            } else {
                queries.push_back(it->second);
            }
        }
    }
    std::vector<const CorpusItem*> present;
    for (const auto* q : queries) {
        if (q->image) {
            present.push_back(q);
        } else {
            ++report.skipped_missing;
        }
    }

    for (const auto& ex : cfg.extractors) {
        HnswIndex index(kMockDim, cfg.hnsw);
        std::vector<std::vector<float>> base(corpus.size());
        parallel_for(corpus.size(), cfg.jobs, [&](std::size_t i) {
            if (corpus[i].image) base[i] = mock_features(*corpus[i].image, ex.profile);
        });
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            if (corpus[i].image) index.insert(corpus[i].element_id, base[i]);
        }

        ModelEvalResult result;
        result.queries.resize(present.size());
        parallel_for(present.size(), cfg.jobs, [&](std::size_t q) {
            Rng rng(derive_seed(cfg.seed, q));
            QueryOutcome& out = result.queries[q];
            out.element_id = present[q]->element_id;
            out.transform = sample_transform(rng, cfg.ranges);
            const RasterImage degraded = transform_image(*present[q]->image, out.transform);
            const auto hits = index.search(mock_features(degraded, ex.profile), cfg.k);
            for (std::size_t r = 0; r < hits.size(); ++r) {
                if (hits[r].element_id == out.element_id) {
                    out.rank = r + 1;
                    break;
                }
            }
        });
        std::vector<std::size_t> ranks;
        for (const auto& q : result.queries) ranks.push_back(q.rank);
        result.row = top_n_from_ranks(ranks, ex.name);
        report.models.push_back(std::move(result));
    }
    return report;
}

std::string eval_report_json(const RetrievalEvalReport& r) {
    nlohmann::ordered_json j;
    j["seed"] = r.seed;
    j["transforms"] = {{"crop_max", r.ranges.crop_max},
                       {"rotation_max_deg", r.ranges.rotation_max_deg},
                       {"scale_min", r.ranges.scale_min},
                       {"scale_max", r.ranges.scale_max},
                       {"order", "crop, rotate, scale"}};
    j["index"] = {{"type", "hnsw"},
                  {"metric", "cosine"},
                  {"M", r.hnsw.M},
                  {"M0", r.hnsw.M0},
                  {"ef_construction", r.hnsw.ef_construction},
                  {"ef_search", r.hnsw.ef_search},
                  {"rng_seed", r.hnsw.rng_seed},
                  {"note", "index parameters are assumed defaults"}};
    j["k"] = r.k;
    j["skipped_missing"] = r.skipped_missing;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& m : r.models) {
        nlohmann::ordered_json row;
        row["model"] = m.row.model;
        row["n_targets"] = m.row.n_targets;
        for (std::size_t i = 0; i < kTopN.size(); ++i) {
            row["top" + std::to_string(kTopN[i])] = {{"count", m.row.counts[i]}, {"percent", m.row.percent(i)}};
        }
        auto queries = nlohmann::ordered_json::array();
        for (const auto& q : m.queries) {
            queries.push_back({{"element_id", q.element_id},
                               {"rank", q.rank},
                               {"transform",
                                {q.transform.crop_left, q.transform.crop_right, q.transform.crop_top,
                                 q.transform.crop_bottom, q.transform.rotation_deg, q.transform.scale_w,
                                 q.transform.scale_h}}});
        }
        row["queries"] = std::move(queries);
        rows.push_back(std::move(row));
    }
    j["results"] = std::move(rows);
    return j.dump(2);
}

std::string eval_report_table(const RetrievalEvalReport& r) {
    std::ostringstream out;
    auto cell = [](std::size_t count, double pct) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%zu (%ld %%)", count, std::lround(pct));
        return std::string(buf);
    };
    std::size_t name_w = 8;
    for (const auto& m : r.models) name_w = std::max(name_w, m.row.model.size());
    char line[256];
    std::snprintf(line, sizeof line, "%-*s  %14s  %14s  %14s  %14s\n", static_cast<int>(name_w), "Accuracy", "Top 1",
                  "Top 5", "Top 10", "Top 50");
    out << line;
    std::snprintf(line, sizeof line, "%-*s\n", static_cast<int>(name_w), "Model");
    out << line;
    for (const auto& m : r.models) {
        std::snprintf(line, sizeof line, "%-*s", static_cast<int>(name_w), m.row.model.c_str());
        out << line;
        for (std::size_t i = 0; i < kTopN.size(); ++i) {
            std::snprintf(line, sizeof line, "  %14s", cell(m.row.counts[i], m.row.percent(i)).c_str());
            out << line;
        }
        out << '\n';
    }
    std::snprintf(line, sizeof line, "(n = %zu targets per model, seed %llu)\n",
                  r.models.empty() ? std::size_t{0} : r.models.front().row.n_targets,
                  static_cast<unsigned long long>(r.seed));
    out << line;
    return out.str();
}

RasterImage synthetic_image(std::uint64_t seed, int width, int height) {
    Rng rng(seed);
    auto colour = [&] {
        return Rgb{static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
                   static_cast<std::uint8_t>(rng.below(256))};
    };
    const Rgb a = colour();
    const Rgb b = colour();
    const bool vertical = rng.below(2) == 1;
    RasterImage img(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double t = vertical ? static_cast<double>(y) / std::max(1, height - 1)
                                      : static_cast<double>(x) / std::max(1, width - 1);
            img.set(x, y, {static_cast<std::uint8_t>(std::lround(a.r + (b.r - a.r) * t)),
                           static_cast<std::uint8_t>(std::lround(a.g + (b.g - a.g) * t)),
                           static_cast<std::uint8_t>(std::lround(a.b + (b.b - a.b) * t))});
        }
    }
    const int shapes = 3 + static_cast<int>(rng.below(5));
    for (int s = 0; s < shapes; ++s) {
        const Rgb c = colour();
        const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(width)));
        const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(height)));
        const int sw = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, width / 2))));
        const int sh = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, height / 2))));
        const bool ellipse = rng.below(2) == 1;
        for (int y = y0; y < std::min(height, y0 + sh); ++y) {
            for (int x = x0; x < std::min(width, x0 + sw); ++x) {
                if (ellipse) {
                    const double nx = (x - x0 - sw / 2.0) / (sw / 2.0);
                    const double ny = (y - y0 - sh / 2.0) / (sh / 2.0);
                    if (nx * nx + ny * ny > 1.0) continue;
                }
                img.set(x, y, c);
            }
        }
    }
    return img;
}

std::vector<CorpusItem> synthetic_corpus(std::size_t count, std::uint64_t seed) {
    std::vector<CorpusItem> corpus;
    corpus.reserve(count);
    Rng sizes(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const int w = 160 + static_cast<int>(sizes.below(161));
        const int h = 160 + static_cast<int>(sizes.below(161));
        char urn[64];
        std::snprintf(urn, sizeof urn, "URN:NBN:no-synthetic_%04zu", i);
        corpus.push_back({std::string(urn) + ":0,0," + std::to_string(w) + "," + std::to_string(h),
                          synthetic_image(derive_seed(seed, i + 1), w, h)});
    }
    return corpus;
}

}  // namespace imgsearch
