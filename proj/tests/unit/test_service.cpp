#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "imgsearch/error.hpp"
#include "imgsearch/eval.hpp"
#include "imgsearch/iiif.hpp"
#include "imgsearch/raster.hpp"
#include "imgsearch/service.hpp"
#include "imgsearch/text_index.hpp"
#include "support/gen.hpp"

// After the Eigen-dependent headers: resolv.h defines _res.
#include <httplib.h>

using namespace imgsearch;
using nlohmann::json;

namespace {

constexpr std::size_t kElements = 40;

struct Fixture {
    std::vector<GraphicalElementRecord> records;
    std::vector<RasterImage> images;
    std::vector<EmbeddingVector> embeddings;
    std::shared_ptr<Snapshot> snapshot;
};

const char* kWords[] = {"hus", "båt", "fjell", "skog", "hest", "by", "kirke", "bro"};

Fixture make_fixture(bool with_classifier = true) {
    Fixture f;
    Rng rng(3);
    for (std::size_t i = 0; i < kElements; ++i) {
        GraphicalElementRecord r;
        r.page_urn = "URN:NBN:no-nb_digibok_2000000" + std::to_string(100 + i / 4) + "_0001";
        r.box = {static_cast<std::int64_t>(100 + 10 * i), 200, 400 + static_cast<std::int64_t>(i), 300};
        r.element_id = format_element_id(r.page_urn, r.box);
        r.context_text = std::string(kWords[i % 8]) + " " + kWords[(i * 3 + 1) % 8];
        if (i == 7) r.context_text += " en kat på taket";
        f.records.push_back(r);
        f.images.push_back(synthetic_image(1000 + i, 120 + static_cast<int>(i), 90));
        auto e = mock_embed(f.images.back(), PreprocessProfile::Squash256, r.element_id);
        f.embeddings.push_back(e);
        EmbeddingVector other{r.element_id, "siglip", testgen::unit_vector(rng, 8)};
        f.embeddings.push_back(other);
    }
    std::optional<LogRegModel> clf;
    if (with_classifier) {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(kElements), static_cast<Eigen::Index>(kMockDim));
        std::vector<Label> y;
        for (std::size_t i = 0; i < kElements; ++i) {
            const auto& v = f.embeddings[2 * i].values;
            for (std::size_t j = 0; j < v.size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
            y.push_back(i % 2 ? Label::Map : Label::IllustrationOrPhotograph);
        }
        clf = fit_logreg(x, y, 1.0, {}, "mock64").model;
    }
    f.snapshot = make_snapshot(f.records, f.embeddings, HnswParams{}, PreprocessProfile::Squash256, clf);
    return f;
}

ServiceConfig test_config() {
    ServiceConfig cfg;
    cfg.port = 0;
    cfg.iiif_base = "https://images.example.org/iiif/";
    return cfg;
}

std::string jpeg_string(const RasterImage& img) {
    const auto bytes = encode_jpeg(img, 95);
    return {bytes.begin(), bytes.end()};
}

std::string vector_body(std::span<const float> v, const std::string& model = "mock64") {
    json j;
    j["model"] = model;
    j["vector"] = std::vector<float>(v.begin(), v.end());
    return j.dump();
}

void check_error_shape(const ApiResponse& r, int status) {
    CHECK(r.status == status);
    CHECK(r.body["code"] == status);
    CHECK(r.body["message"].is_string());
    CHECK(r.body.contains("detail"));
}

json strip_timing(json body) {
    body.erase("took_ms");
    return body;
}

}  // namespace

TEST_CASE("similar by id") {
    const auto f = make_fixture();
    const SearchService svc(test_config(), f.snapshot);
    for (const auto& rec : f.records) {
        const auto r = svc.similar(rec.element_id, {});
        REQUIRE(r.status == 200);
        CHECK(r.body["results"][0]["element_id"] == rec.element_id);
        CHECK(r.body["results"][0]["score"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(r.body["model"] == "mock64");
        CHECK(r.body["took_ms"].is_number_integer());
    }
    const auto one = svc.similar(f.records[3].element_id, {{"k", "1"}});
    REQUIRE(one.body["results"].size() == 1);
    CHECK(one.body["results"][0]["element_id"] == f.records[3].element_id);

    const auto sig = svc.similar(f.records[3].element_id, {{"model", "siglip"}, {"k", "5"}});
    CHECK(sig.body["results"].size() == 5);
    CHECK(sig.body["results"][0]["element_id"] == f.records[3].element_id);

    check_error_shape(svc.similar("URN:nope_1_2_3_4", {}), 404);
    check_error_shape(svc.similar(f.records[0].element_id, {{"model", "vit"}}), 404);
}

TEST_CASE("k handling") {
    const auto f = make_fixture();
    auto cfg = test_config();
    cfg.max_k = 10;
    const SearchService svc(cfg, f.snapshot);
    const auto& id = f.records[0].element_id;
    CHECK(svc.similar(id, {{"k", "5"}}).body["results"].size() == 5);
    CHECK(svc.similar(id, {{"k", "500"}}).body["results"].size() == 10);
    CHECK(svc.similar(id, {}).body["results"].size() == 10);
    for (const char* bad : {"0", "-3", "abc", "5x", "1.5"}) check_error_shape(svc.similar(id, {{"k", bad}}), 400);
}

TEST_CASE("results are sorted and carry metadata") {
    const auto f = make_fixture();
    const SearchService svc(test_config(), f.snapshot);
    const auto r = svc.similar(f.records[5].element_id, {{"k", "20"}});
    const auto& results = r.body["results"];
    for (std::size_t i = 1; i < results.size(); ++i)
        CHECK(results[i - 1]["score"].get<double>() >= results[i]["score"].get<double>());
    for (const auto& res : results) {
        const std::string id = res["element_id"];
        const auto* rec = f.snapshot->element(id);
        REQUIRE(rec != nullptr);
        CHECK(res["page_urn"] == rec->page_urn);
        CHECK(res["box"]["left"] == rec->box.left);
        CHECK(res["box"]["height"] == rec->box.height);
        const auto req = parse_iiif_url(res["iiif_url"].get<std::string>());
        CHECK(build_iiif_url(req) == res["iiif_url"].get<std::string>());
        CHECK(req.identifier == rec->page_urn);
        CHECK(req.region == rec->box);
        CHECK(res["predicted_label"].is_string());
    }
}

TEST_CASE("vector search") {
    const auto f = make_fixture();
    const SearchService svc(test_config(), f.snapshot);
    for (std::size_t i = 0; i < kElements; i += 7) {
        const auto r = svc.search_vector(vector_body(f.embeddings[2 * i].values), {});
        REQUIRE(r.status == 200);
        CHECK(r.body["results"][0]["element_id"] == f.records[i].element_id);
        CHECK(r.body["results"][0]["score"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    }
    // Unnormalized copy still lands on itself.
    std::vector<float> scaled = f.embeddings[4].values;
    for (auto& x : scaled) x *= 7.5f;
    CHECK(svc.search_vector(vector_body(scaled), {}).body["results"][0]["element_id"] == f.records[2].element_id);
    // Model via query parameter when the body omits it.
    json body;
    body["vector"] = f.embeddings[3].values;
    const auto viaq = svc.search_vector(body.dump(), {{"model", "siglip"}, {"k", "3"}});
    CHECK(viaq.status == 200);
    CHECK(viaq.body["model"] == "siglip");
    CHECK(viaq.body["results"].size() == 3);

    std::string nan_body = R"({"model":"mock64","vector":[NaN)";
    for (std::size_t i = 1; i < kMockDim; ++i) nan_body += ",0.1";
    nan_body += "]}";
    check_error_shape(svc.search_vector(nan_body, {}), 422);
    std::string inf_body = R"({"model":"mock64","vector":[-Infinity)";
    for (std::size_t i = 1; i < kMockDim; ++i) inf_body += ",0.1";
    inf_body += "]}";
    check_error_shape(svc.search_vector(inf_body, {}), 422);
    check_error_shape(svc.search_vector(vector_body(std::vector<float>(kMockDim, 0.0f)), {}), 422);
    check_error_shape(svc.search_vector(vector_body(std::vector<float>(3, 1.0f)), {}), 422);
    check_error_shape(svc.search_vector(vector_body(std::vector<float>(8, 1.0f), "clip"), {}), 404);
    check_error_shape(svc.search_vector("{not json", {}), 400);
    check_error_shape(svc.search_vector(R"({"vector": 5})", {}), 400);
    check_error_shape(svc.search_vector(R"(["a"])", {}), 400);
    std::string str_body = R"({"vector":["x")";
    for (std::size_t i = 1; i < kMockDim; ++i) str_body += ",0.1";
    str_body += "]}";
    check_error_shape(svc.search_vector(str_body, {}), 422);
}

TEST_CASE("lenient JSON only rewrites bare tokens") {
    const auto j = parse_json_lenient(R"({"a":[NaN, Infinity, -Infinity, 1], "s":"NaN \"Infinity\""})");
    CHECK(j["a"][0].is_null());
    CHECK(j["a"][2].is_null());
    CHECK(j["a"][3] == 1);
    CHECK(j["s"] == "NaN \"Infinity\"");
    CHECK_THROWS(parse_json_lenient("{"));
}

TEST_CASE("image search") {
    const auto f = make_fixture();
    const SearchService svc(test_config(), f.snapshot);
    for (std::size_t i = 0; i < kElements; i += 5) {
        const auto r = svc.search_image(jpeg_string(f.images[i]), {});
        REQUIRE(r.status == 200);
        CHECK(r.body["results"][0]["element_id"] == f.records[i].element_id);
    }
    CHECK(svc.search_image(jpeg_string(f.images[0]), {{"k", "5"}}).body["results"].size() <= 5);
    check_error_shape(svc.search_image("", {}), 400);
    check_error_shape(svc.search_image("definitely not an image", {}), 400);
    check_error_shape(svc.search_image(jpeg_string(f.images[0]), {{"model", "siglip"}}), 422);
    check_error_shape(svc.search_image(jpeg_string(f.images[0]), {{"model", "vit"}}), 404);

    auto small = test_config();
    small.max_upload_bytes = 100;
    const SearchService tight(small, f.snapshot);
    check_error_shape(tight.search_image(jpeg_string(f.images[0]), {}), 400);
}

TEST_CASE("text search") {
    const auto f = make_fixture();
    const SearchService svc(test_config(), f.snapshot);
    const auto r = svc.search_text({{"q", "kat"}});
    REQUIRE(r.status == 200);
    REQUIRE(r.body["results"].size() == 1);
    CHECK(r.body["results"][0]["element_id"] == f.records[7].element_id);
    CHECK(r.body["model"] == "tfidf");

    CHECK(svc.search_text({{"q", "elefant"}}).body["results"].empty());
    check_error_shape(svc.search_text({}), 400);
    check_error_shape(svc.search_text({{"q", ""}}), 400);

    // Scores equal an independently built index over the same contexts.
    InvertedIndex oracle;
    for (const auto& rec : f.records) oracle.index_document(rec.element_id, tokenize(rec.context_text));
    const auto hits = oracle.search("hest skog kat", 50);
    const auto got = svc.search_text({{"q", "hest skog kat"}}).body["results"];
    REQUIRE(got.size() == hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(got[i]["element_id"] == hits[i].element_id);
        CHECK(got[i]["score"].get<double>() == hits[i].score);
    }
}

TEST_CASE("element metadata and health") {
    const auto f = make_fixture();
    const SearchService svc(test_config(), f.snapshot);
    const auto& rec = f.records[9];
    const auto r = svc.element(rec.element_id);
    REQUIRE(r.status == 200);
    CHECK(r.body["box"]["left"] == rec.box.left);
    CHECK(r.body["box"]["top"] == rec.box.top);
    CHECK(r.body["box"]["width"] == rec.box.width);
    CHECK(r.body["box"]["height"] == rec.box.height);
    CHECK(r.body["page_urn"] == rec.page_urn);
    CHECK(r.body["context_text"] == rec.context_text);
    CHECK(r.body["models"] == json::array({"mock64", "siglip"}));
    CHECK(r.body["predicted_label"] == std::string(to_string(Label::Map)));
    check_error_shape(svc.element("missing"), 404);

    const auto h = svc.health();
    CHECK(h.body["elements"] == kElements);
    CHECK(h.body["models"].size() == 2);
    CHECK(h.body["models"][0]["hnsw"]["M"] == 16);
    CHECK(h.body["text_index"]["documents"] == kElements);
    CHECK(h.body["assumptions"].contains("tokenizer"));

    const SearchService empty(test_config());
    const auto eh = empty.health();
    CHECK(eh.status == 200);
    CHECK(eh.body["elements"] == 0);
    CHECK(eh.body["models"].empty());
    CHECK(eh.body["text_index"]["documents"] == 0);
    check_error_shape(empty.similar("x", {}), 404);
}

TEST_CASE("responses are pure functions of snapshot and request") {
    const auto f = make_fixture();
    const SearchService svc(test_config(), f.snapshot);
    const auto& id = f.records[11].element_id;
    CHECK(strip_timing(svc.similar(id, {{"k", "12"}}).body) == strip_timing(svc.similar(id, {{"k", "12"}}).body));
    CHECK(strip_timing(svc.search_text({{"q", "hus bro"}}).body) == strip_timing(svc.search_text({{"q", "hus bro"}}).body));
    const auto img = jpeg_string(f.images[2]);
    CHECK(strip_timing(svc.search_image(img, {}).body) == strip_timing(svc.search_image(img, {}).body));
}

TEST_CASE("snapshot persistence round trip feeds the same answers") {
    const auto f = make_fixture();
    testgen::TempDir dir("svc");
    testgen::TempDir work("svcw");
    const auto model = *f.snapshot->classifier;
    save_model(model, work / "clf.json");
    SnapshotBuildOptions opt;
    opt.classifier_model = work / "clf.json";
    build_snapshot(f.records, f.embeddings, opt, dir.path());
    const auto loaded = load_snapshot(dir.path());
    CHECK(loaded->elements == f.records);
    CHECK(loaded->models.size() == 2);
    CHECK(loaded->models.at("mock64").mock_profile == PreprocessProfile::Squash256);
    CHECK_FALSE(loaded->models.at("siglip").mock_profile.has_value());

    const SearchService a(test_config(), f.snapshot), b(test_config(), loaded);
    for (std::size_t i = 0; i < kElements; i += 9) {
        const auto& id = f.records[i].element_id;
        CHECK(strip_timing(a.similar(id, {}).body) == strip_timing(b.similar(id, {}).body));
    }
    CHECK(strip_timing(a.search_text({{"q", "kat"}}).body) == strip_timing(b.search_text({{"q", "kat"}}).body));

    // Reload swaps snapshots; a bad directory keeps the old one.
    auto cfg = test_config();
    cfg.snapshot_dir = dir.path();
    SearchService svc(cfg);
    CHECK(svc.health().body["elements"] == 0);
    svc.reload();
    CHECK(svc.health().body["elements"] == kElements);
    auto bad = cfg;
    bad.snapshot_dir = work / "missing";
    SearchService svc2(bad, loaded);
    CHECK_THROWS(svc2.reload());
    CHECK(svc2.health().body["elements"] == kElements);
}

TEST_CASE("config file and environment overrides") {
    testgen::TempDir dir("cfg");
    {
        std::ofstream out(dir / "svc.json");
        out << R"({"bind": "0.0.0.0:9123", "snapshot_dir": "snap", "default_model": "siglip",
                  "max_k": 20, "rate_limit_rps": 5, "cors_origin": "http://ui.local"})";
    }
    ::unsetenv("IMGSEARCH_BIND");
    ::unsetenv("IMGSEARCH_DEFAULT_MODEL");
    auto cfg = load_service_config(dir / "svc.json");
    CHECK(cfg.host == "0.0.0.0");
    CHECK(cfg.port == 9123);
    CHECK(cfg.snapshot_dir == dir / "snap");
    CHECK(cfg.default_model == "siglip");
    CHECK(cfg.max_k == 20);
    CHECK(cfg.rate_limit_rps == 5);
    CHECK(cfg.cors_origin == "http://ui.local");

    ::setenv("IMGSEARCH_BIND", "127.0.0.1:7000", 1);
    ::setenv("IMGSEARCH_DEFAULT_MODEL", "clip", 1);
    cfg = load_service_config(dir / "svc.json");
    CHECK(cfg.port == 7000);
    CHECK(cfg.default_model == "clip");
    ::setenv("IMGSEARCH_BIND", "nonsense", 1);
    CHECK_THROWS_AS(load_service_config(std::nullopt), InvalidArgument);
    ::unsetenv("IMGSEARCH_BIND");
    ::unsetenv("IMGSEARCH_DEFAULT_MODEL");

    CHECK(load_service_config(std::nullopt).port == 8080);
    CHECK_THROWS_AS(load_service_config(dir / "absent.json"), IoError);
    {
        std::ofstream out(dir / "bad.json");
        out << R"({"port": "eighty"})";
    }
    CHECK_THROWS_AS(load_service_config(dir / "bad.json"), ParseError);
}

TEST_CASE("HTTP over a socket") {
    const auto f = make_fixture();
    auto cfg = test_config();
    cfg.threads = 4;
    SearchService svc(cfg, f.snapshot);
    HttpServer server(svc);
    const int port = server.start();
    REQUIRE(port > 0);
    httplib::Client cli("127.0.0.1", port);

    auto res = cli.Get("/health");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
    CHECK(json::parse(res->body)["elements"] == kElements);

    const auto& id = f.records[4].element_id;
    res = cli.Get("/similar/" + httplib::detail::encode_url(id) + "?k=3");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto body = json::parse(res->body);
    CHECK(body["results"].size() == 3);
    CHECK(body["results"][0]["element_id"] == id);

    res = cli.Get("/elements/" + httplib::detail::encode_url(id));
    REQUIRE(res);
    CHECK(json::parse(res->body)["element_id"] == id);

    res = cli.Get("/search/text?q=kat");
    REQUIRE(res);
    CHECK(json::parse(res->body)["results"][0]["element_id"] == f.records[7].element_id);

    res = cli.Post("/search/vector?k=2", vector_body(f.embeddings[10].values), "application/json");
    REQUIRE(res);
    body = json::parse(res->body);
    CHECK(body["results"].size() == 2);
    CHECK(body["results"][0]["element_id"] == f.records[5].element_id);

    httplib::MultipartFormDataItems items = {{"image", jpeg_string(f.images[6]), "query.jpg", "image/jpeg"}};
    res = cli.Post("/search/image?k=4", items);
    REQUIRE(res);
    CHECK(res->status == 200);
    body = json::parse(res->body);
    CHECK(body["results"].size() == 4);
    CHECK(body["results"][0]["element_id"] == f.records[6].element_id);

    res = cli.Post("/search/image", std::string{}, "image/jpeg");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["code"] == 400);

    res = cli.Get("/no/such/route");
    REQUIRE(res);
    CHECK(res->status == 404);
    CHECK(json::parse(res->body)["code"] == 404);

    res = cli.Options("/search/vector");
    REQUIRE(res);
    CHECK(res->status == 204);
    CHECK_FALSE(res->get_header_value("Access-Control-Allow-Methods").empty());

    server.stop();
}

TEST_CASE("rate limit answers 429") {
    const auto f = make_fixture(false);
    auto cfg = test_config();
    cfg.rate_limit_rps = 2;
    SearchService svc(cfg, f.snapshot);
    HttpServer server(svc);
    const int port = server.start();
    httplib::Client cli("127.0.0.1", port);
    int limited = 0;
    for (int i = 0; i < 10; ++i) {
        const auto res = cli.Get("/health");
        REQUIRE(res);
        if (res->status == 429) {
            ++limited;
            CHECK(json::parse(res->body)["code"] == 429);
        }
    }
    CHECK(limited >= 5);
    server.stop();
}
