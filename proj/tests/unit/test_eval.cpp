#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "imgsearch/error.hpp"
#include "imgsearch/eval.hpp"
#include "support/gen.hpp"

using namespace imgsearch;

TEST_CASE("sample_transform ranges and statistics") {
    Rng rng(1);
    const TransformRanges full;
    std::array<double, 7> sum{};
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const auto t = sample_transform(rng, full);
        const std::array<double, 7> v = {t.crop_left, t.crop_right, t.crop_top, t.crop_bottom,
                                         t.rotation_deg, t.scale_w, t.scale_h};
        for (int j = 0; j < 4; ++j) CHECK((v[j] >= 0 && v[j] <= 0.15));
        CHECK((t.rotation_deg >= -10 && t.rotation_deg <= 10));
        CHECK((t.scale_w >= 0.8 && t.scale_w <= 1.2));
        CHECK((t.scale_h >= 0.8 && t.scale_h <= 1.2));
        for (int j = 0; j < 7; ++j) sum[j] += v[j];
    }
    // Uniform on [a,b]: sd of the mean = (b-a)/sqrt(12 n).
    const std::array<std::pair<double, double>, 7> range = {
        {{0, 0.15}, {0, 0.15}, {0, 0.15}, {0, 0.15}, {-10, 10}, {0.8, 1.2}, {0.8, 1.2}}};
    for (int j = 0; j < 7; ++j) {
        const auto [a, b] = range[j];
        const double sigma = (b - a) / std::sqrt(12.0 * n);
        CHECK(std::abs(sum[j] / n - (a + b) / 2) <= 3 * sigma);
    }

    Rng a(5), b(5);
    for (int i = 0; i < 50; ++i) CHECK(sample_transform(a) == sample_transform(b));

    Rng r(2);
    const auto id = sample_transform(r, TransformRanges::identity());
    CHECK(id == TransformParams{});

    CHECK_THROWS_AS((TransformRanges{0.6, 0, 1, 1}.validate()), InvalidArgument);
    CHECK_THROWS_AS((TransformRanges{0, 0, 1.2, 0.9}.validate()), InvalidArgument);
}

TEST_CASE("transform_image examples") {
    const RasterImage img = synthetic_image(3, 100, 80);
    CHECK(transform_image(img, {}) == img);

    TransformParams lr;
    lr.crop_left = lr.crop_right = 0.15;
    const auto cropped = transform_image(img, lr);
    CHECK(cropped.width() == 70);
    CHECK(cropped.height() == 80);
    CHECK(cropped.at(0, 0) == img.at(15, 0));

    TransformParams tb;
    tb.crop_top = 0.1;
    tb.crop_bottom = 0.149;
    CHECK(transform_image(img, tb).height() == 80 - 8 - 11);

    TransformParams rot;
    rot.rotation_deg = 10;
    const RasterImage white(64, 48, Rgb{255, 255, 255});
    const auto rw = transform_image(white, rot);
    CHECK(rw.width() > 64);
    CHECK(rw.height() > 48);
    for (int y = 0; y < rw.height(); ++y)
        for (int x = 0; x < rw.width(); ++x) REQUIRE(rw.at(x, y) == Rgb{255, 255, 255});

    TransformParams sc;
    sc.scale_w = 1.2;
    sc.scale_h = 0.8;
    const auto s = transform_image(img, sc);
    CHECK(s.width() == 120);
    CHECK(s.height() == 64);

    CHECK_THROWS_AS(transform_image(RasterImage(1, 1, Rgb{}), TransformParams{0, 0, 0, 0, 0, 0.1, 1}), InvalidArgument);
}

TEST_CASE("rotation turns counter-clockwise") {
    // Dark dot right of centre moves up for a positive angle.
    RasterImage img(41, 41, Rgb{255, 255, 255});
    for (int y = 19; y <= 21; ++y)
        for (int x = 33; x <= 35; ++x) img.set(x, y, Rgb{0, 0, 0});
    const auto r = rotate_image(img, 90.0);
    const int cx = r.width() / 2, cy = r.height() / 2;
    CHECK(r.at(cx, cy - 14).r < 50);
    CHECK(r.at(cx, cy + 14).r > 200);
}

TEST_CASE("top-N accuracy") {
    std::vector<std::vector<std::string>> ranked;
    std::vector<std::string> targets;
    for (int q = 0; q < 20; ++q) {
        std::vector<std::string> list;
        for (int r = 0; r < 50; ++r) list.push_back("x" + std::to_string(q) + "_" + std::to_string(r));
        targets.push_back(list[0]);
        ranked.push_back(list);
    }
    auto row = top_n_accuracy(ranked, targets, "m");
    for (auto c : row.counts) CHECK(c == 20);
    CHECK(row.percent(0) == 100.0);

    for (std::size_t q = 0; q < targets.size(); ++q) targets[q] = ranked[q][5];  // rank 6
    row = top_n_accuracy(ranked, targets);
    CHECK(row.counts == std::array<std::size_t, 4>{0, 0, 20, 20});

    targets[0] = "absent";
    row = top_n_accuracy(ranked, targets);
    CHECK(row.counts[3] == 19);

    const std::vector<std::size_t> ranks = {1, 2, 5, 6, 10, 11, 50, 51, 0};
    const auto fr = top_n_from_ranks(ranks);
    CHECK(fr.n_targets == 9);
    CHECK(fr.counts == std::array<std::size_t, 4>{1, 3, 5, 7});

    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        std::vector<std::size_t> rs(1 + rng.below(100));
        for (auto& v : rs) v = rng.below(70);
        const auto x = top_n_from_ranks(rs);
        for (std::size_t i = 1; i < x.counts.size(); ++i) CHECK(x.counts[i - 1] <= x.counts[i]);
        CHECK(x.counts.back() <= x.n_targets);
    }
}

TEST_CASE("target selection") {
    std::vector<LabeledExample> labels;
    auto add = [&](Label l, int count) {
        for (int i = 0; i < count; ++i) labels.push_back({std::string(to_string(l)) + std::to_string(i), l});
    };
    add(Label::IllustrationOrPhotograph, 592);
    add(Label::Map, 44);
    add(Label::MathematicalChart, 48);
    add(Label::BlankPage, 349);
    add(Label::SegmentationAnomaly, 524);
    add(Label::MusicalNotation, 20);
    add(Label::GraphicalElement, 423);
    CHECK(labels.size() == 2000);
    CHECK(select_targets(labels).size() == 684);
    CHECK(is_retrieval_target(Label::Map));
    CHECK_FALSE(is_retrieval_target(Label::GraphicalElement));
}

TEST_CASE("synthetic corpus is deterministic and distinct") {
    const auto a = synthetic_corpus(30, 8), b = synthetic_corpus(30, 8);
    REQUIRE(a.size() == 30);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].element_id == b[i].element_id);
        CHECK(*a[i].image == *b[i].image);
        if (i) CHECK_FALSE(*a[i].image == *a[i - 1].image);
    }
}

TEST_CASE("identity transforms give perfect self-retrieval") {
    const auto corpus = synthetic_corpus(60, 9);
    EvalConfig cfg;
    cfg.seed = 1;
    cfg.ranges = TransformRanges::identity();
    const auto r = run_retrieval_eval(corpus, cfg);
    REQUIRE(r.models.size() == 1);
    CHECK(r.models[0].row.n_targets == 60);
    for (auto c : r.models[0].row.counts) CHECK(c == 60);
}

TEST_CASE("ranks match the brute-force oracle at full ef") {
    const auto corpus = synthetic_corpus(80, 10);
    EvalConfig cfg;
    cfg.seed = 2;
    cfg.hnsw.ef_search = 80;
    const auto r = run_retrieval_eval(corpus, cfg);
    VectorTable table("mock64", kMockDim);
    for (const auto& item : corpus) {
        auto v = mock_features(*item.image, PreprocessProfile::Squash256);
        normalize(v);
        table.add(item.element_id, v);
    }
    for (std::size_t q = 0; q < corpus.size(); ++q) {
        const auto& out = r.models[0].queries[q];
        auto qv = mock_features(transform_image(*corpus[q].image, out.transform), PreprocessProfile::Squash256);
        normalize(qv);
        const auto exact = brute_force_knn(table, qv, cfg.k);
        std::size_t rank = 0;
        for (std::size_t i = 0; i < exact.size(); ++i)
            if (exact[i].element_id == out.element_id) rank = i + 1;
        CHECK(out.rank == rank);
    }
}

TEST_CASE("reports are deterministic and independent of jobs") {
    auto corpus = synthetic_corpus(40, 11);
    corpus[3].image.reset();
    EvalConfig cfg;
    cfg.seed = 3;
    cfg.extractors = {{"squash", PreprocessProfile::Squash256}, {"crop", PreprocessProfile::Crop224}};
    cfg.targets = {corpus[0].element_id, corpus[3].element_id, "nope", corpus[7].element_id};
    const auto r1 = run_retrieval_eval(corpus, cfg);
    cfg.jobs = 4;
    const auto r4 = run_retrieval_eval(corpus, cfg);
    CHECK(eval_report_json(r1) == eval_report_json(r4));
    CHECK(eval_report_table(r1) == eval_report_table(r4));
    CHECK(r1.skipped_missing == 2);
    CHECK(r1.models.size() == 2);
    CHECK(r1.models[0].row.n_targets == 2);
    cfg.seed = 4;
    CHECK(eval_report_json(run_retrieval_eval(corpus, cfg)) != eval_report_json(r1));

    const auto j = nlohmann::json::parse(eval_report_json(r1));
    CHECK(j["seed"] == 3);
    const auto table = eval_report_table(r1);
    CHECK(table.find("squash") != std::string::npos);
    CHECK(table.find("Top 10") != std::string::npos);
}
