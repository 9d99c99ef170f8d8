#pragma once

// Inverted index over element context text with TF-IDF weighting and
// dot-product ranking.
//
//   w(t) = tf(t) * (ln((N + 1) / (df(t) + 1)) + 1)
//   score(q, d) = sum over distinct query terms t of w_q(t) * w_d(t)
//
// Raw term frequencies on both sides, no stemming, no stopwords.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace imgsearch {

/// Splits on non-alphanumeric code points and applies simple case folding
/// (Latin, Greek, Cyrillic). Invalid UTF-8 bytes act as separators.
std::vector<std::string> tokenize(std::string_view text);

/// Simple case folding of one code point.
char32_t fold_case(char32_t cp) noexcept;
bool is_word_codepoint(char32_t cp) noexcept;

struct TextHit {
    std::string element_id;
    double score = 0.0;

    friend bool operator==(const TextHit&, const TextHit&) = default;
};

class InvertedIndex {
public:
    struct Posting {
        std::uint32_t doc;
        std::uint32_t tf;
        friend bool operator==(const Posting&, const Posting&) = default;
    };

    /// Throws InvalidArgument on duplicate id. A document with no tokens still
    /// counts towards N.
    void index_document(std::string_view element_id, const std::vector<std::string>& tokens);

    std::size_t doc_count() const noexcept { return doc_ids_.size(); }
    std::size_t term_count() const noexcept { return postings_.size(); }
    std::size_t doc_freq(std::string_view term) const;
    std::optional<std::uint32_t> term_freq(std::string_view element_id, std::string_view term) const;
    double idf(std::string_view term) const;
    const std::string& doc_id(std::uint32_t doc) const { return doc_ids_[doc]; }
    bool contains(std::string_view element_id) const;

    /// Top-k documents with positive score, descending score then ascending id.
    std::vector<TextHit> search(std::string_view query, std::size_t k) const;

    /// Postings snapshot (term-sorted, delta-encoded doc numbers, varint tf)
    /// plus a JSON manifest carrying the doc-number -> element id table.
    void write_postings(std::ostream& out) const;
    std::string manifest_json() const;
    void save(const std::filesystem::path& postings_path, const std::filesystem::path& manifest_path) const;
    static InvertedIndex read(std::istream& postings, std::string_view manifest_json);
    static InvertedIndex load(const std::filesystem::path& postings_path,
                              const std::filesystem::path& manifest_path);

    const std::map<std::string, std::vector<Posting>, std::less<>>& postings() const noexcept {
        return postings_;
    }

private:
    std::vector<std::string> doc_ids_;
    std::unordered_map<std::string, std::uint32_t> doc_rows_;
    std::map<std::string, std::vector<Posting>, std::less<>> postings_;
};

/// Assumptions surfaced in service metadata.
inline constexpr std::string_view kTokenizerDescription =
    "split on non-alphanumeric Unicode code points; simple case folding; no stemming; no stopwords";
inline constexpr std::string_view kWeightingDescription =
    "raw tf on query and document; idf = ln((N+1)/(df+1)) + 1; dot-product scoring";

}  // namespace imgsearch
