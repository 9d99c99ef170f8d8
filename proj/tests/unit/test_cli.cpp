#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "imgsearch/alto.hpp"
#include "imgsearch/cli.hpp"
#include "imgsearch/embedding.hpp"
#include "imgsearch/fixtures.hpp"
#include "support/alto_pages.hpp"
#include "support/cvdata.hpp"
#include "support/gen.hpp"

using namespace imgsearch;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::filesystem::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary) << s;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::string urn(int page) { return "URN:NBN:no-nb_digibok_2000000001_" + std::to_string(1000 + page); }

}  // namespace

TEST_CASE("usage errors") {
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({"ingest", "--out", "x"}).code == kExitUsage);
    CHECK(run({"ingest", "--alto-dir", "a", "--out", "b", "--jobs", "0"}).code == kExitUsage);
    const auto help = run({"--help"});
    CHECK(help.code == kExitOk);
    CHECK(help.out.find("ingest") != std::string::npos);
}

TEST_CASE("ingest") {
    testgen::TempDir dir("cli_ingest");
    std::filesystem::create_directories(dir / "alto" / "vol1");
    using testgen::alto_graphic, testgen::alto_text_block, testgen::alto_page;
    spit(dir / "alto" / "p1.xml", alto_page(alto_text_block("en kat") + alto_graphic(100, 100, 800, 600), urn(1)));
    spit(dir / "alto" / "p2.xml",
         alto_page(alto_graphic(100, 100, 500, 500, "Illustration") + alto_text_block("hus") + alto_graphic(900, 900, 300, 200), urn(2)));
    spit(dir / "alto" / "vol1" / "p3.xml", alto_page(alto_text_block("skog") + alto_graphic(50, 60, 700, 700), urn(3)));

    SUBCASE("three pages, four elements") {
        const auto r = run({"ingest", "--alto-dir", (dir / "alto").string(), "--out", (dir / "el.jsonl").string()});
        CHECK(r.code == kExitOk);
        CHECK(r.out.find("pages 3\n") != std::string::npos);
        CHECK(r.out.find("elements 4\n") != std::string::npos);
        const auto text = slurp(dir / "el.jsonl");
        CHECK(line_count(text) == 4);
        const auto recs = read_elements_jsonl(dir / "el.jsonl");
        REQUIRE(recs.size() == 4);
        for (const auto& rec : recs) CHECK(parse_element_id(rec.element_id).box == rec.box);
        // Same output regardless of worker count.
        run({"ingest", "--alto-dir", (dir / "alto").string(), "--out", (dir / "el4.jsonl").string(), "--jobs", "4"});
        CHECK(slurp(dir / "el4.jsonl") == text);
    }
    SUBCASE("malformed file is tallied; strict turns it into a data error") {
        spit(dir / "alto" / "broken.xml", "<alto><Layout><Page");
        auto r = run({"ingest", "--alto-dir", (dir / "alto").string(), "--out", (dir / "el.jsonl").string()});
        CHECK(r.code == kExitOk);
        CHECK(r.out.find("file_errors 1\n") != std::string::npos);
        CHECK(r.err.find("broken.xml") != std::string::npos);
        CHECK(line_count(slurp(dir / "el.jsonl")) == 4);
        r = run({"ingest", "--alto-dir", (dir / "alto").string(), "--out", (dir / "el.jsonl").string(), "--strict"});
        CHECK(r.code == kExitData);
    }
    SUBCASE("empty directory") {
        std::filesystem::create_directories(dir / "empty");
        const auto r = run({"ingest", "--alto-dir", (dir / "empty").string(), "--out", (dir / "none.jsonl").string()});
        CHECK(r.code == kExitOk);
        CHECK(r.out.find("elements 0\n") != std::string::npos);
        CHECK(slurp(dir / "none.jsonl").empty());
    }
    SUBCASE("missing directory is an io error") {
        CHECK(run({"ingest", "--alto-dir", (dir / "nope").string(), "--out", (dir / "x.jsonl").string()}).code == kExitIo);
    }
}

TEST_CASE("fetch, embed, index and classify against the fixture server") {
    testgen::TempDir dir("cli_fetch");
    std::vector<GraphicalElementRecord> recs;
    for (int i = 0; i < 6; ++i) {
        GraphicalElementRecord r;
        r.page_urn = urn(i);
        r.box = {100, 100, 400 + 10 * i, 300};
        r.context_text = i == 2 ? "en kat" : "hus";
        recs.push_back(r);
    }
    GraphicalElementRecord thin;
    thin.page_urn = urn(9);
    thin.box = {0, 0, 6000, 100};  // ratio 60
    recs.push_back(thin);
    for (auto& r : recs) r.element_id = format_element_id(r.page_urn, r.box);
    {
        std::ofstream out(dir / "el.jsonl");
        write_elements_jsonl(out, recs);
    }

    FixtureIiifServer server;
    server.start();
    const std::vector<std::string> fetch = {"fetch", "--elements", (dir / "el.jsonl").string(), "--cache",
                                            (dir / "cache").string(), "--endpoint", server.base_url(), "--rps", "1000",
                                            "--backoff-ms", "0"};
    auto r = run(fetch);
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("input 7\nkept 6\ndiscarded 1\nfetched 6\ncache_hits 0\nfailures 0\n") != std::string::npos);
    const auto before = server.requests();
    CHECK(before == 6);
    r = run(fetch);
    CHECK(r.out.find("fetched 0\ncache_hits 6\n") != std::string::npos);
    CHECK(server.requests() == before);

    r = run({"embed", "--cache", (dir / "cache").string(), "--out", (dir / "emb.jsonl").string()});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("embedded 6\n") != std::string::npos);
    const auto imported = import_embeddings(dir / "emb.jsonl");
    CHECK(imported.vectors.size() == 6);
    CHECK(imported.errors.empty());
    CHECK(run({"embed", "--cache", (dir / "cache").string(), "--model", "siglip", "--out", (dir / "x.jsonl").string()}).code == kExitData);

    r = run({"index", "--embeddings", (dir / "emb.jsonl").string(), "--text", (dir / "el.jsonl").string(), "--out-dir",
             (dir / "snap").string()});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("model mock64 6\n") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "snap" / "snapshot.json"));

    // A model that always answers Blank page drops everything.
    LogRegModel blank;
    blank.active.fill(true);
    blank.weights = Eigen::MatrixXd::Zero(kNumLabels, static_cast<Eigen::Index>(kMockDim));
    blank.bias = Eigen::VectorXd::Zero(kNumLabels);
    blank.bias(code(Label::BlankPage)) = 3;
    blank.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kMockDim));
    blank.scale = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(kMockDim));
    blank.model_tag = "mock64";
    save_model(blank, dir / "blank.json");
    r = run({"classify", "--model", (dir / "blank.json").string(), "--embeddings", (dir / "emb.jsonl").string(),
             "--elements", (dir / "el.jsonl").string(), "--out", (dir / "kept.jsonl").string()});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("Blank page\t6\t1") != std::string::npos);
    CHECK(r.out.find("kept 0\n") != std::string::npos);
    CHECK(slurp(dir / "kept.jsonl").empty());
    server.stop();

    // Server gone: a cold cache now fails to fetch.
    auto cold = fetch;
    cold[4] = (dir / "cold").string();
    cold.insert(cold.end(), {"--attempts", "1", "--timeout-ms", "500"});
    r = run(cold);
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("failures 6\n") != std::string::npos);
    cold.push_back("--strict");
    CHECK(run(cold).code == kExitIo);
}

TEST_CASE("train selects the signal-bearing embedding") {
    testgen::TempDir dir("cli_train");
    const auto ds = testgen::signal_dataset(31, 12, 8, "omega", {"alpha"});
    std::vector<EmbeddingVector> vecs;
    nlohmann::json labels_lines;
    std::string labels;
    for (const auto& [tag, x] : ds.features) {
        for (std::size_t i = 0; i < ds.ids.size(); ++i) {
            EmbeddingVector v{ds.ids[i], tag, {}};
            for (Eigen::Index j = 0; j < x.cols(); ++j) v.values.push_back(static_cast<float>(x(static_cast<Eigen::Index>(i), j)));
            vecs.push_back(v);
        }
    }
    for (std::size_t i = 0; i < ds.ids.size(); ++i) {
        labels += nlohmann::json{{"element_id", ds.ids[i]}, {"label", to_string(ds.labels[i])}}.dump() + "\n";
    }
    labels += R"({"element_id": "no-vectors", "label": "Map"})" "\n";
    spit(dir / "labels.jsonl", labels);
    {
        std::ofstream out(dir / "emb.jsonl");
        write_embeddings_jsonl(out, vecs);
    }
    const std::vector<std::string> args = {"train", "--labels", (dir / "labels.jsonl").string(), "--embeddings",
                                           (dir / "emb.jsonl").string(), "--report", (dir / "cv.json").string(),
                                           "--model-out", (dir / "model.json").string(), "--outer", "4", "--inner",
                                           "3", "--seed", "5"};
    const auto r = run(args);
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("consensus omega") != std::string::npos);
    CHECK(r.err.find("skipped 1") != std::string::npos);
    CHECK(load_model(dir / "model.json").model_tag == "omega");
    const auto first = slurp(dir / "cv.json");
    run(args);
    CHECK(slurp(dir / "cv.json") == first);
    CHECK(nlohmann::json::parse(first)["folds"].size() == 4);
}

TEST_CASE("eval is byte-identical across runs and worker counts") {
    testgen::TempDir dir("cli_eval");
    spit(dir / "eval.json", R"({"seed": 17, "transforms": "full", "k": 50,
        "corpus": {"synthetic": {"count": 40, "seed": 3}}})");
    auto args = [&](const std::string& tag, const std::string& jobs) {
        return std::vector<std::string>{"eval", "--config", (dir / "eval.json").string(), "--report",
                                        (dir / ("r" + tag + ".json")).string(), "--table",
                                        (dir / ("t" + tag + ".txt")).string(), "--jobs", jobs};
    };
    CHECK(run(args("a", "1")).code == kExitOk);
    CHECK(run(args("b", "1")).code == kExitOk);
    CHECK(run(args("c", "3")).code == kExitOk);
    CHECK(slurp(dir / "ra.json") == slurp(dir / "rb.json"));
    CHECK(slurp(dir / "ra.json") == slurp(dir / "rc.json"));
    CHECK(slurp(dir / "ta.txt") == slurp(dir / "tc.txt"));

    const auto reseeded = run({"eval", "--config", (dir / "eval.json").string(), "--seed", "18"});
    CHECK(reseeded.code == kExitOk);
    CHECK(reseeded.out != slurp(dir / "ta.txt"));

    spit(dir / "noseed.json", R"({"corpus": {"synthetic": {"count": 5}}})");
    CHECK(run({"eval", "--config", (dir / "noseed.json").string()}).code == kExitData);
    spit(dir / "bad.json", R"({"seed": 1, "transforms": "wild", "corpus": {"synthetic": {}}})");
    CHECK(run({"eval", "--config", (dir / "bad.json").string()}).code == kExitData);
    CHECK(run({"eval", "--config", (dir / "absent.json").string()}).code == kExitIo);
}

TEST_CASE("desk corpus") {
    testgen::TempDir dir("cli_desk");
    const auto r = run({"desk-corpus", "--out", dir.path().string(), "--pages", "3", "--per-page", "2"});
    CHECK(r.code == kExitOk);
    CHECK(r.out == "elements 6\n");
    const auto ing = run({"ingest", "--alto-dir", dir.path().string(), "--out", (dir / "el.jsonl").string()});
    CHECK(ing.out.find("elements 6\n") != std::string::npos);
}
