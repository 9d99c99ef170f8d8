#include "imgsearch/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "imgsearch/alto.hpp"
#include "imgsearch/classifier.hpp"
#include "imgsearch/embedding.hpp"
#include "imgsearch/error.hpp"
#include "imgsearch/eval.hpp"
#include "imgsearch/fixtures.hpp"
#include "imgsearch/iiif.hpp"
#include "imgsearch/log.hpp"
#include "imgsearch/parallel.hpp"
#include "imgsearch/service.hpp"
#include "imgsearch/snapshot.hpp"

namespace imgsearch {

namespace fs = std::filesystem;

namespace {

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<EmbeddingVector> load_embedding_files(const std::vector<fs::path>& paths, std::ostream& err) {
    std::vector<EmbeddingVector> all;
    for (const auto& p : paths) {
        auto res = import_embeddings(p);
        for (const auto& e : res.errors) {
            err << p.string() << ":" << e.line << ": " << e.message << '\n';
        }
        std::move(res.vectors.begin(), res.vectors.end(), std::back_inserter(all));
    }
    return all;
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
    fs::path alto_dir;
    fs::path out;
    bool strict = false;
    unsigned jobs = 1;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out, std::ostream& err) {
    if (!fs::is_directory(a.alto_dir)) throw IoError("not a directory: " + a.alto_dir.string());
    const auto res = ingest_directory(a.alto_dir, a.jobs);
    std::ostringstream lines;
    write_elements_jsonl(lines, res.records);
    write_text_file(a.out, lines.str());
    for (const auto& e : res.file_errors) err << e << '\n';
    const std::size_t errors = res.file_errors.size() + res.block_errors;
    out << "pages " << res.pages << "\nelements " << res.records.size() << "\nfile_errors "
        << res.file_errors.size() << "\nblock_errors " << res.block_errors << "\nunknown_blocks "
        << res.unknown_blocks << '\n';
    return a.strict && errors > 0 ? kExitData : kExitOk;
}

// ---- fetch ----------------------------------------------------------------

struct FetchArgs {
    fs::path elements;
    fs::path cache;
    std::string endpoint = std::string(kDefaultIiifScheme) + std::string(kDefaultIiifPrefix);
    std::int64_t max_side = 512;
    unsigned jobs = 4;
    double rps = 10.0;
    int timeout_ms = 10000;
    int attempts = 3;
    int backoff_ms = 500;
    bool strict = false;
};

int cmd_fetch(const FetchArgs& a, std::ostream& out, std::ostream& err) {
    const auto records = read_elements_jsonl(a.elements);
    EndpointConfig cfg;
    cfg.timeout = std::chrono::milliseconds(a.timeout_ms);
    cfg.max_attempts = a.attempts;
    cfg.initial_backoff = std::chrono::milliseconds(a.backoff_ms);
    cfg.requests_per_second = a.rps;
    cfg.concurrency = a.jobs;
    const ImageCache cache(a.cache);
    const auto rep = fetch_all(records, cache, cfg, SizePolicy{a.max_side}, a.endpoint);
    for (const auto& f : rep.failures) {
        err << f.element_id << ": " << f.message;
        if (f.status) err << " (HTTP " << f.status << ")";
        err << '\n';
    }
    const std::size_t kept = rep.input - rep.discarded.size();
    out << "input " << rep.input << "\nkept " << kept << "\ndiscarded " << rep.discarded.size() << "\nfetched "
        << rep.fetched << "\ncache_hits " << rep.cache_hits << "\nfailures " << rep.failures.size() << '\n';
    return a.strict && !rep.failures.empty() ? kExitIo : kExitOk;
}

// ---- embed ----------------------------------------------------------------

struct EmbedArgs {
    fs::path cache;
    std::string model = std::string(kMockModel);
    std::string profile = "squash_256";
    fs::path out;
    unsigned jobs = 1;
};

int cmd_embed(const EmbedArgs& a, std::ostream& out, std::ostream& err) {
    if (a.model != kMockModel) {
        throw InvalidArgument("only mock64 embeds locally; import vectors for '" + a.model + "' instead");
    }
    const auto profile = parse_profile(a.profile);
    const ImageCache cache(a.cache);
    const auto entries = cache.read_manifest();
    std::vector<std::optional<EmbeddingVector>> slots(entries.size());
    std::vector<std::string> problems(entries.size());
    parallel_for(entries.size(), a.jobs, [&](std::size_t i) {
        try {
            slots[i] = mock_embed(cache.load(entries[i].element_id), profile, entries[i].element_id);
        } catch (const Error& e) {
            problems[i] = e.what();
        }
    });
    std::vector<EmbeddingVector> vectors;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) {
            vectors.push_back(std::move(*slots[i]));
        } else {
            ++failed;
            err << entries[i].element_id << ": " << problems[i] << '\n';
        }
    }
    std::ostringstream lines;
    write_embeddings_jsonl(lines, vectors);
    write_text_file(a.out, lines.str());
    out << "embedded " << vectors.size() << "\nfailed " << failed << '\n';
    return kExitOk;
}

// ---- index ----------------------------------------------------------------

struct IndexArgs {
    std::vector<fs::path> embeddings;
    fs::path text;
    fs::path out_dir;
    std::uint32_t m = 16;
    std::uint32_t ef_construction = 100;
    std::uint32_t ef_search = 128;
    std::uint64_t seed = 42;
    std::string mock_profile = "squash_256";
    std::optional<fs::path> classifier;
};

int cmd_index(const IndexArgs& a, std::ostream& out, std::ostream& err) {
    const auto elements = a.text.empty() ? std::vector<GraphicalElementRecord>{} : read_elements_jsonl(a.text);
    const auto vectors = load_embedding_files(a.embeddings, err);
    SnapshotBuildOptions opt;
    opt.hnsw = HnswParams::with_m(a.m, a.seed);
    opt.hnsw.ef_construction = a.ef_construction;
    opt.hnsw.ef_search = a.ef_search;
    opt.hnsw.validate();
    opt.mock_profile = parse_profile(a.mock_profile);
    opt.classifier_model = a.classifier;
    build_snapshot(elements, vectors, opt, a.out_dir);
    const auto snap = load_snapshot(a.out_dir);
    out << "elements " << snap->elements.size() << '\n';
    for (const auto& [tag, mi] : snap->models) out << "model " << tag << " " << mi.index.size() << '\n';
    out << "text_documents " << snap->text.doc_count() << "\ntext_terms " << snap->text.term_count() << '\n';
    return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    fs::path labels;
    std::vector<fs::path> embeddings;
    fs::path report;
    std::optional<fs::path> model_out;
    std::uint64_t seed = 0;
    int outer = 20;
    int inner = 10;
    unsigned jobs = 1;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    const auto labels = read_labels_jsonl(a.labels);
    EmbeddingStore store;
    store.add_all(load_embedding_files(a.embeddings, err));
    const auto tags = store.models();
    if (tags.empty()) throw InvalidArgument("no embeddings given");

    CvDataset data;
    std::size_t missing = 0;
    for (const auto& ex : labels) {
        const bool everywhere = std::all_of(tags.begin(), tags.end(), [&](const std::string& t) {
            return store.table(t)->find(ex.element_id).has_value();
        });
        if (!everywhere) {
            ++missing;
            continue;
        }
        data.ids.push_back(ex.element_id);
        data.labels.push_back(ex.label);
    }
    if (missing) err << "skipped " << missing << " labelled ids without an embedding for every model\n";
    for (const auto& t : tags) {
        const auto* table = store.table(t);
        Eigen::MatrixXd m(static_cast<Eigen::Index>(data.ids.size()), static_cast<Eigen::Index>(table->dim()));
        for (std::size_t i = 0; i < data.ids.size(); ++i) {
            const auto row = table->row(*table->find(data.ids[i]));
            for (std::size_t j = 0; j < row.size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
        }
        data.features.emplace(t, std::move(m));
    }

    NestedCvConfig cfg;
    cfg.outer_folds = a.outer;
    cfg.inner_folds = a.inner;
    cfg.seed = a.seed;
    cfg.jobs = a.jobs;
    const auto report = nested_cv(data, cfg);
    write_text_file(a.report, cv_report_json(report));

    for (const auto& f : report.folds) {
        out << "fold " << f.fold << " model " << f.selected_model << " C " << f.selected_C << " f1 " << f.validation_f1
            << '\n';
    }
    const auto [tag, c] = report.consensus();
    out << "mean_f1 " << report.mean_f1 << "\nstd_f1 " << report.std_f1 << "\nconsensus " << tag << " C " << c
        << '\n';
    if (a.model_out) {
        auto fit = fit_logreg(data.features.at(tag), data.labels, c, cfg.fit, tag);
        save_model(fit.model, *a.model_out);
        out << "model_out " << a.model_out->string() << '\n';
    }
    return kExitOk;
}

// ---- classify -------------------------------------------------------------

struct ClassifyArgs {
    fs::path model;
    std::vector<fs::path> embeddings;
    fs::path elements;
    std::optional<fs::path> out;
};

int cmd_classify(const ClassifyArgs& a, std::ostream& out, std::ostream& err) {
    const auto model = load_model(a.model);
    EmbeddingStore store;
    store.add_all(load_embedding_files(a.embeddings, err));
    const auto* table = store.table(model.model_tag);
    if (table == nullptr) throw InvalidArgument("no embeddings for model tag '" + model.model_tag + "'");
    const auto dist = estimate_distribution(model, *table);
    for (const auto l : kAllLabels) {
        out << to_string(l) << '\t' << dist.counts[code(l)] << '\t' << dist.fractions[code(l)] << '\n';
    }
    if (a.out) {
        const auto records = read_elements_jsonl(a.elements);
        std::vector<GraphicalElementRecord> present;
        std::size_t unembedded = 0;
        for (const auto& r : records) {
            if (table->find(r.element_id)) {
                present.push_back(r);
            } else {
                ++unembedded;
            }
        }
        const auto res = filter_anomalies(present, model, *table);
        std::ostringstream lines;
        write_elements_jsonl(lines, res.kept);
        write_text_file(*a.out, lines.str());
        out << "kept " << res.kept_count << "\ndropped " << res.dropped_count << "\nunembedded " << unembedded << '\n';
    }
    return kExitOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
    fs::path config;
    std::optional<fs::path> report;
    std::optional<fs::path> table;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
};

TransformRanges ranges_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        if (name == "identity") return TransformRanges::identity();
        if (name == "full") return TransformRanges{};
        if (name == "mild") return TransformRanges{0.05, 0.0, 1.0, 1.0};
        throw InvalidArgument("unknown transform preset '" + name + "'");
    }
    TransformRanges r;
    r.crop_max = j.value("crop_max", r.crop_max);
    r.rotation_max_deg = j.value("rotation_max_deg", r.rotation_max_deg);
    r.scale_min = j.value("scale_min", r.scale_min);
    r.scale_max = j.value("scale_max", r.scale_max);
    return r;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
    std::ifstream in(a.config);
    if (!in) throw IoError("cannot open " + a.config.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(a.config.string() + ": " + e.what());
    }
    const fs::path base = a.config.parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_relative() ? base / p : fs::path(p); };

    EvalConfig cfg;
    try {
        if (!a.seed && !j.contains("seed")) throw InvalidArgument("a seed is required (config 'seed' or --seed)");
        cfg.seed = a.seed ? *a.seed : j.at("seed").get<std::uint64_t>();
        if (j.contains("transforms")) cfg.ranges = ranges_from_json(j.at("transforms"));
        cfg.ranges.validate();
        cfg.k = j.value("k", cfg.k);
        if (j.contains("hnsw")) {
            const auto& h = j.at("hnsw");
            cfg.hnsw = HnswParams::with_m(h.value("M", 16u), h.value("seed", std::uint64_t{42}));
            cfg.hnsw.ef_construction = h.value("ef_construction", cfg.hnsw.ef_construction);
            cfg.hnsw.ef_search = h.value("ef_search", cfg.hnsw.ef_search);
        }
        if (j.contains("extractors")) {
            cfg.extractors.clear();
            for (const auto& e : j.at("extractors")) {
                cfg.extractors.push_back({e.at("name").get<std::string>(), parse_profile(e.at("profile").get<std::string>())});
            }
        }
        cfg.jobs = a.jobs ? *a.jobs : j.value("jobs", 1u);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(a.config.string() + ": " + e.what());
    }

    std::vector<CorpusItem> corpus;
    const auto& c = j.at("corpus");
    if (c.contains("synthetic")) {
        const auto& s = c.at("synthetic");
        corpus = synthetic_corpus(s.value("count", std::size_t{200}), s.value("seed", std::uint64_t{1}));
    } else {
        const ImageCache cache(resolve(c.at("cache").get<std::string>()));
        for (const auto& e : cache.read_manifest()) {
            CorpusItem item{e.element_id, std::nullopt};
            try {
                item.image = cache.load(e.element_id);
            } catch (const Error&) {
            }
            corpus.push_back(std::move(item));
        }
    }
    if (c.contains("labels")) cfg.targets = select_targets(read_labels_jsonl(resolve(c.at("labels").get<std::string>())));

    const auto report = run_retrieval_eval(corpus, cfg);
    const auto table = eval_report_table(report);
    if (a.report) write_text_file(*a.report, eval_report_json(report));
    if (a.table) write_text_file(*a.table, table);
    out << table;
    return kExitOk;
}

// ---- serve ----------------------------------------------------------------

std::atomic<int> g_signal{0};

extern "C" void on_signal(int sig) { g_signal.store(sig); }

struct ServeArgs {
    std::optional<fs::path> config;
    std::optional<fs::path> snapshot;
    std::optional<std::string> bind;
};

int cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream&) {
    auto cfg = load_service_config(a.config);
    if (a.snapshot) cfg.snapshot_dir = *a.snapshot;
    if (a.bind) {
        const auto colon = a.bind->rfind(':');
        if (colon == std::string::npos) throw InvalidArgument("--bind must be host:port");
        cfg.host = a.bind->substr(0, colon);
        cfg.port = std::stoi(a.bind->substr(colon + 1));
    }
    std::shared_ptr<const Snapshot> snap;
    if (!cfg.snapshot_dir.empty()) snap = load_snapshot(cfg.snapshot_dir);
    SearchService service(cfg, snap);
    HttpServer server(service);
    g_signal = 0;
    std::signal(SIGHUP, on_signal);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const int port = server.start();
    out << "listening " << cfg.host << ":" << port << std::endl;
    for (;;) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        const int sig = g_signal.exchange(0);
        if (sig == SIGHUP) {
            try {
                service.reload();
            } catch (const std::exception& e) {
                log_error(std::string("reload failed, keeping previous snapshot: ") + e.what());
            }
        } else if (sig == SIGINT || sig == SIGTERM) {
            break;
        }
    }
    server.stop();
    return kExitOk;
}

// ---- fixtures -------------------------------------------------------------

int cmd_desk_corpus(const fs::path& dir, const DeskAltoOptions& opt, std::ostream& out) {
    out << "elements " << write_desk_alto(dir, opt) << '\n';
    return kExitOk;
}

int cmd_fixture_server(std::ostream& out) {
    FixtureIiifServer server;
    server.start();
    out << server.base_url() << std::endl;
    g_signal = 0;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (g_signal.load() == 0) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Image search over digitised collections", "imgsearch"};
    app.require_subcommand(1);
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "debug|info|warn|error");

    IngestArgs ingest;
    auto* s_ingest = app.add_subcommand("ingest", "Extract graphical elements from ALTO pages");
    s_ingest->add_option("--alto-dir", ingest.alto_dir)->required();
    s_ingest->add_option("--out", ingest.out)->required();
    s_ingest->add_flag("--strict", ingest.strict, "Exit nonzero on any parse error");
    s_ingest->add_option("--jobs", ingest.jobs)->check(CLI::PositiveNumber);

    FetchArgs fetch;
    auto* s_fetch = app.add_subcommand("fetch", "Download element images through IIIF");
    s_fetch->add_option("--elements", fetch.elements)->required();
    s_fetch->add_option("--cache", fetch.cache)->required();
    s_fetch->add_option("--endpoint", fetch.endpoint, "IIIF base URL ending in '/'");
    s_fetch->add_option("--max-side", fetch.max_side)->check(CLI::PositiveNumber);
    s_fetch->add_option("--jobs", fetch.jobs)->check(CLI::PositiveNumber);
    s_fetch->add_option("--rps", fetch.rps)->check(CLI::PositiveNumber);
    s_fetch->add_option("--timeout-ms", fetch.timeout_ms)->check(CLI::PositiveNumber);
    s_fetch->add_option("--attempts", fetch.attempts)->check(CLI::PositiveNumber);
    s_fetch->add_option("--backoff-ms", fetch.backoff_ms)->check(CLI::NonNegativeNumber);
    s_fetch->add_flag("--strict", fetch.strict, "Exit nonzero if any download failed");

    EmbedArgs embed;
    auto* s_embed = app.add_subcommand("embed", "Compute embeddings for cached images");
    s_embed->add_option("--cache", embed.cache)->required();
    s_embed->add_option("--model", embed.model);
    s_embed->add_option("--profile", embed.profile, "squash_224|squash_256|crop_224");
    s_embed->add_option("--out", embed.out)->required();
    s_embed->add_option("--jobs", embed.jobs)->check(CLI::PositiveNumber);

    IndexArgs index;
    std::string classifier_path;
    auto* s_index = app.add_subcommand("index", "Build a search snapshot");
    s_index->add_option("--embeddings", index.embeddings)->required();
    s_index->add_option("--text", index.text, "elements.jsonl with context text");
    s_index->add_option("--out-dir", index.out_dir)->required();
    s_index->add_option("--M", index.m)->check(CLI::Range(2u, 1024u));
    s_index->add_option("--ef-construction", index.ef_construction)->check(CLI::PositiveNumber);
    s_index->add_option("--ef-search", index.ef_search)->check(CLI::PositiveNumber);
    s_index->add_option("--seed", index.seed);
    s_index->add_option("--mock-profile", index.mock_profile);
    s_index->add_option("--classifier", classifier_path, "Trained model JSON for predicted labels");

    TrainArgs train;
    std::string model_out;
    auto* s_train = app.add_subcommand("train", "Nested cross-validation and final classifier fit");
    s_train->add_option("--labels", train.labels)->required();
    s_train->add_option("--embeddings", train.embeddings)->required();
    s_train->add_option("--report", train.report)->required();
    s_train->add_option("--model-out", model_out);
    s_train->add_option("--seed", train.seed);
    s_train->add_option("--outer", train.outer)->check(CLI::Range(2, 1000));
    s_train->add_option("--inner", train.inner)->check(CLI::Range(2, 1000));
    s_train->add_option("--jobs", train.jobs)->check(CLI::PositiveNumber);

    ClassifyArgs classify;
    std::string classify_out;
    auto* s_classify = app.add_subcommand("classify", "Estimate the class distribution and filter anomalies");
    s_classify->add_option("--model", classify.model)->required();
    s_classify->add_option("--embeddings", classify.embeddings)->required();
    s_classify->add_option("--elements", classify.elements);
    s_classify->add_option("--out", classify_out, "Filtered elements.jsonl (needs --elements)");

    EvalArgs eval;
    std::string eval_report, eval_table;
    std::uint64_t eval_seed = 0;
    unsigned eval_jobs = 1;
    auto* s_eval = app.add_subcommand("eval", "Exact-image retrieval evaluation");
    s_eval->add_option("--config", eval.config)->required();
    s_eval->add_option("--report", eval_report);
    s_eval->add_option("--table", eval_table);
    auto* eval_seed_opt = s_eval->add_option("--seed", eval_seed);
    auto* eval_jobs_opt = s_eval->add_option("--jobs", eval_jobs)->check(CLI::PositiveNumber);

    ServeArgs serve;
    std::string serve_config, serve_snapshot, serve_bind;
    auto* s_serve = app.add_subcommand("serve", "Run the HTTP search API");
    s_serve->add_option("--config", serve_config);
    s_serve->add_option("--snapshot", serve_snapshot);
    s_serve->add_option("--bind", serve_bind, "host:port");

    fs::path desk_dir;
    DeskAltoOptions desk;
    auto* s_desk = app.add_subcommand("desk-corpus", "Write synthetic ALTO pages");
    s_desk->add_option("--out", desk_dir)->required();
    s_desk->add_option("--pages", desk.pages);
    s_desk->add_option("--per-page", desk.elements_per_page);
    s_desk->add_option("--seed", desk.seed);

    auto* s_fixture = app.add_subcommand("fixture-server", "Serve synthetic images over IIIF on a free port");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (log_level == "debug") set_log_level(LogLevel::Debug);
        else if (log_level == "info") set_log_level(LogLevel::Info);
        else if (log_level == "error") set_log_level(LogLevel::Error);
        else set_log_level(LogLevel::Warn);

        if (*s_ingest) return cmd_ingest(ingest, out, err);
        if (*s_fetch) return cmd_fetch(fetch, out, err);
        if (*s_embed) return cmd_embed(embed, out, err);
        if (*s_index) {
            if (!classifier_path.empty()) index.classifier = classifier_path;
            return cmd_index(index, out, err);
        }
        if (*s_train) {
            if (!model_out.empty()) train.model_out = model_out;
            return cmd_train(train, out, err);
        }
        if (*s_classify) {
            if (!classify_out.empty()) {
                if (classify.elements.empty()) throw InvalidArgument("--out needs --elements");
                classify.out = classify_out;
            }
            return cmd_classify(classify, out, err);
        }
        if (*s_eval) {
            if (!eval_report.empty()) eval.report = eval_report;
            if (!eval_table.empty()) eval.table = eval_table;
            if (eval_seed_opt->count()) eval.seed = eval_seed;
            if (eval_jobs_opt->count()) eval.jobs = eval_jobs;
            return cmd_eval(eval, out, err);
        }
        if (*s_serve) {
            if (!serve_config.empty()) serve.config = serve_config;
            if (!serve_snapshot.empty()) serve.snapshot = serve_snapshot;
            if (!serve_bind.empty()) serve.bind = serve_bind;
            return cmd_serve(serve, out, err);
        }
        if (*s_desk) return cmd_desk_corpus(desk_dir, desk, out);
        if (*s_fixture) return cmd_fixture_server(out);
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const TransportError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace imgsearch
