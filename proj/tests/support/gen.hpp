#pragma once

// Hand-rolled generators and scratch directories for property tests.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "imgsearch/random.hpp"

namespace testgen {

inline std::vector<float> gaussian_vector(imgsearch::Rng& rng, std::size_t dim) {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

inline std::vector<float> unit_vector(imgsearch::Rng& rng, std::size_t dim) {
    for (;;) {
        auto v = gaussian_vector(rng, dim);
        double s = 0;
        for (float x : v) s += double(x) * x;
        if (s < 1e-12) continue;
        const double inv = 1.0 / std::sqrt(s);
        for (auto& x : v) x = static_cast<float>(x * inv);
        return v;
    }
}

/// n unit vectors packed row-major.
inline std::vector<float> unit_rows(std::uint64_t seed, std::size_t n, std::size_t dim) {
    imgsearch::Rng rng(seed);
    std::vector<float> out;
    out.reserve(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto v = unit_vector(rng, dim);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

inline std::string id_for(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "e%06zu", i);
    return buf;
}

inline std::vector<std::string> words_from(imgsearch::Rng& rng, std::size_t vocab, std::size_t count) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back("w" + std::to_string(rng.below(vocab)));
    return out;
}

/// Scratch directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("imgsearch_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

}  // namespace testgen
