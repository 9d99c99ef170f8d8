#include "imgsearch/text_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "imgsearch/error.hpp"

namespace imgsearch {

namespace {
constexpr std::uint32_t kPostingsVersion = 1;
}

void InvertedIndex::index_document(std::string_view element_id, const std::vector<std::string>& tokens) {
    if (doc_rows_.contains(std::string(element_id))) {
        throw InvalidArgument("text index: duplicate id " + std::string(element_id));
    }
    const auto doc = static_cast<std::uint32_t>(doc_ids_.size());
    doc_ids_.emplace_back(element_id);
    doc_rows_.emplace(doc_ids_.back(), doc);

    std::map<std::string_view, std::uint32_t> tf;
    for (const auto& t : tokens) {
        if (!t.empty()) ++tf[t];
    }
    for (const auto& [term, count] : tf) {
        auto it = postings_.find(term);
        if (it == postings_.end()) it = postings_.emplace(std::string(term), std::vector<Posting>{}).first;
        it->second.push_back({doc, count});
    }
}

std::size_t InvertedIndex::doc_freq(std::string_view term) const {
    const auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

bool InvertedIndex::contains(std::string_view element_id) const {
    return doc_rows_.contains(std::string(element_id));
}

std::optional<std::uint32_t> InvertedIndex::term_freq(std::string_view element_id, std::string_view term) const {
    const auto row = doc_rows_.find(std::string(element_id));
    const auto it = postings_.find(term);
    if (row == doc_rows_.end() || it == postings_.end()) return std::nullopt;
    for (const auto& p : it->second) {
        if (p.doc == row->second) return p.tf;
    }
    return std::nullopt;
}

double InvertedIndex::idf(std::string_view term) const {
    const double n = static_cast<double>(doc_ids_.size());
    const double df = static_cast<double>(doc_freq(term));
    return std::log((n + 1.0) / (df + 1.0)) + 1.0;
}

std::vector<TextHit> InvertedIndex::search(std::string_view query, std::size_t k) const {
    std::map<std::string, std::uint32_t> query_tf;
    for (auto& t : tokenize(query)) ++query_tf[std::move(t)];
    if (query_tf.empty() || k == 0) return {};

    std::vector<double> acc(doc_ids_.size(), 0.0);
    std::vector<std::uint32_t> touched;
    // Terms in sorted order so accumulation order is fixed.
    for (const auto& [term, qtf] : query_tf) {
        const auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const double idf_t = idf(term);
        const double wq = qtf * idf_t;
        for (const auto& p : it->second) {
            if (acc[p.doc] == 0.0) touched.push_back(p.doc);
            acc[p.doc] += wq * (p.tf * idf_t);
        }
    }

    std::vector<TextHit> hits;
    hits.reserve(touched.size());
    for (std::uint32_t d : touched) {
        if (acc[d] > 0.0) hits.push_back({doc_ids_[d], acc[d]});
    }
    const auto cmp = [](const TextHit& a, const TextHit& b) {
        return a.score > b.score || (a.score == b.score && a.element_id < b.element_id);
    };
    const std::size_t n = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), cmp);
    hits.resize(n);
    return hits;
}

void InvertedIndex::write_postings(std::ostream& out) const {
    out.write("TIDX", 4);
    binio::put<std::uint32_t>(out, kPostingsVersion);
    binio::put<std::uint64_t>(out, doc_ids_.size());
    binio::put<std::uint64_t>(out, postings_.size());
    for (const auto& [term, list] : postings_) {
        binio::put_varint(out, term.size());
        out.write(term.data(), static_cast<std::streamsize>(term.size()));
        binio::put_varint(out, list.size());
        std::uint32_t prev = 0;
        for (const auto& p : list) {
            binio::put_varint(out, p.doc - prev);
            binio::put_varint(out, p.tf);
            prev = p.doc;
        }
    }
}

std::string InvertedIndex::manifest_json() const {
    nlohmann::ordered_json j;
    j["format"] = "imgsearch-text";
    j["version"] = kPostingsVersion;
    j["doc_count"] = doc_ids_.size();
    j["term_count"] = postings_.size();
    j["tokenizer"] = kTokenizerDescription;
    j["weighting"] = kWeightingDescription;
    j["ids"] = doc_ids_;
    return j.dump(1);
}

void InvertedIndex::save(const std::filesystem::path& postings_path, const std::filesystem::path& manifest_path) const {
    {
        std::ofstream out(postings_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + postings_path.string());
        write_postings(out);
    }
    std::ofstream man(manifest_path, std::ios::trunc);
    if (!man) throw IoError("cannot write " + manifest_path.string());
    man << manifest_json() << '\n';
}

InvertedIndex InvertedIndex::read(std::istream& in, std::string_view manifest_text) {
    binio::expect_magic(in, "TIDX");
    if (binio::get<std::uint32_t>(in) != kPostingsVersion) throw ParseError("unsupported postings version");
    const auto n_docs = binio::get<std::uint64_t>(in);
    const auto n_terms = binio::get<std::uint64_t>(in);

    InvertedIndex idx;
    const auto j = nlohmann::json::parse(manifest_text);
    idx.doc_ids_ = j.at("ids").get<std::vector<std::string>>();
    if (idx.doc_ids_.size() != n_docs) throw ParseError("text manifest does not match postings file");
    for (std::uint32_t d = 0; d < n_docs; ++d) idx.doc_rows_.emplace(idx.doc_ids_[d], d);

    for (std::uint64_t t = 0; t < n_terms; ++t) {
        const auto len = binio::get_varint(in);
        std::string term(len, '\0');
        if (len && !in.read(term.data(), static_cast<std::streamsize>(len))) throw ParseError("truncated postings");
        const auto df = binio::get_varint(in);
        std::vector<Posting> list;
        list.reserve(df);
        std::uint64_t doc = 0;
        for (std::uint64_t i = 0; i < df; ++i) {
            doc += binio::get_varint(in);
            const auto tf = binio::get_varint(in);
            if (doc >= n_docs) throw ParseError("postings reference unknown document");
            list.push_back({static_cast<std::uint32_t>(doc), static_cast<std::uint32_t>(tf)});
        }
        idx.postings_.emplace(std::move(term), std::move(list));
    }
    return idx;
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& postings_path, const std::filesystem::path& manifest_path) {
    std::ifstream in(postings_path, std::ios::binary);
    if (!in) throw IoError("cannot open " + postings_path.string());
    std::ifstream man(manifest_path);
    if (!man) throw IoError("cannot open " + manifest_path.string());
    std::stringstream text;
    text << man.rdbuf();
    return read(in, text.str());
}

}  // namespace imgsearch
