#include "imgsearch/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "imgsearch/embedding.hpp"
#include "imgsearch/error.hpp"
#include "imgsearch/log.hpp"
#include "imgsearch/parallel.hpp"
#include "imgsearch/random.hpp"

namespace imgsearch {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string_view to_string(Label label) noexcept {
    switch (label) {
        case Label::BlankPage: return "Blank page";
        case Label::SegmentationAnomaly: return "Segmentation anomaly";
        case Label::IllustrationOrPhotograph: return "Illustration or photograph";
        case Label::MusicalNotation: return "Musical notation";
        case Label::Map: return "Map";
        case Label::MathematicalChart: return "Mathematical chart";
        case Label::GraphicalElement: return "Graphical element";
    }
    return "?";
}

Label parse_label(std::string_view text) {
    for (Label l : kAllLabels) {
        if (text == to_string(l)) return l;
    }
    throw ParseError("unknown label: '" + std::string(text) + "'");
}

std::vector<double> complexity_grid() {
    std::vector<double> grid(10);
    for (int k = 0; k < 10; ++k) grid[k] = std::pow(10.0, -4.0 + 8.0 * k / 9.0);
    grid.front() = 1e-4;  // pow is exact here on common libms; pin the endpoints regardless
    grid.back() = 1e4;
    return grid;
}

// ---------------------------------------------------------------- objective

LogRegObjective::LogRegObjective(const Eigen::MatrixXd& z, std::span<const int> class_index, int n_classes,
                                 double c)
    : z_(z), y_(class_index.begin(), class_index.end()), k_(n_classes), c_(c) {
    if (static_cast<std::size_t>(z.rows()) != y_.size()) throw InvalidArgument("objective: row/label count mismatch");
    if (!(c > 0.0)) throw InvalidArgument("complexity C must be positive");
}

std::size_t LogRegObjective::n_params() const noexcept {
    return static_cast<std::size_t>(k_) * static_cast<std::size_t>(z_.cols() + 1);
}

Eigen::MatrixXd LogRegObjective::logits(const Eigen::VectorXd& theta) const {
    const auto d = z_.cols();
    Eigen::Map<const RowMatrix> w(theta.data(), k_, d);
    Eigen::Map<const Eigen::VectorXd> b(theta.data() + k_ * d, k_);
    Eigen::MatrixXd l = z_ * w.transpose();
    l.rowwise() += b.transpose();
    return l;
}

double LogRegObjective::data_loss(const Eigen::VectorXd& theta) const {
    const Eigen::MatrixXd l = logits(theta);
    double nll = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        const double m = l.row(i).maxCoeff();
        const double lse = m + std::log((l.row(i).array() - m).exp().sum());
        nll += lse - l(i, y_[i]);
    }
    return nll;
}

double LogRegObjective::value(const Eigen::VectorXd& theta) const {
    const auto d = z_.cols();
    Eigen::Map<const Eigen::VectorXd> w(theta.data(), k_ * d);
    return data_loss(theta) + w.squaredNorm() / (2.0 * c_);
}

double LogRegObjective::value_and_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
    const auto d = z_.cols();
    Eigen::MatrixXd p = logits(theta);
    double nll = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double m = p.row(i).maxCoeff();
        const double lse = m + std::log((p.row(i).array() - m).exp().sum());
        nll += lse - p(i, y_[i]);
        p.row(i).array() = (p.row(i).array() - lse).exp();
        p(i, y_[i]) -= 1.0;  // p now holds softmax - onehot
    }
    Eigen::Map<const RowMatrix> w(theta.data(), k_, d);
    grad.resize(static_cast<Eigen::Index>(n_params()));
    Eigen::Map<RowMatrix> gw(grad.data(), k_, d);
    gw = p.transpose() * z_ + w / c_;
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + k_ * d, k_);
    gb = p.colwise().sum().transpose();
    return nll + w.squaredNorm() / (2.0 * c_);
}

// ---------------------------------------------------------------- fitting

namespace {

struct Standardizer {
    Eigen::VectorXd mean, scale;
};

Standardizer fit_standardizer(const Eigen::MatrixXd& x) {
    Standardizer s;
    s.mean = x.colwise().mean().transpose();
    s.scale.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double var = (x.col(j).array() - s.mean(j)).square().mean();
        const double sd = std::sqrt(var);
        s.scale(j) = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

Eigen::MatrixXd apply_standardizer(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean,
                                   const Eigen::VectorXd& scale) {
    Eigen::MatrixXd z = x.rowwise() - mean.transpose();
    z.array().rowwise() /= scale.transpose().array();
    return z;
}

}  // namespace

FitResult fit_logreg(const Eigen::MatrixXd& X, std::span<const Label> y, double C, const FitOptions& options,
                     std::string model_tag) {
    if (!(C > 0.0) || !std::isfinite(C)) throw InvalidArgument("complexity C must be positive and finite");
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw InvalidArgument("fit_logreg: row/label count mismatch");
    if (y.empty()) throw InvalidArgument("fit_logreg: no training data");
    if (!X.allFinite()) throw InvalidArgument("fit_logreg: non-finite feature value");

    const auto d = X.cols();
    FitResult result;
    LogRegModel& model = result.model;
    model.model_tag = std::move(model_tag);
    model.C = C;
    for (Label l : y) model.active[code(l)] = true;
    model.weights = Eigen::MatrixXd::Zero(kNumLabels, d);
    model.bias = Eigen::VectorXd::Zero(kNumLabels);
    const Standardizer st = fit_standardizer(X);
    model.mean = st.mean;
    model.scale = st.scale;

    std::vector<int> active_codes;
    for (int c = 0; c < kNumLabels; ++c) {
        if (model.active[c]) active_codes.push_back(c);
    }
    const int k = static_cast<int>(active_codes.size());
    if (k == 1) return result;  // constant predictor

    std::array<int, kNumLabels> slot{};
    for (int i = 0; i < k; ++i) slot[active_codes[i]] = i;
    std::vector<int> yi(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) yi[i] = slot[code(y[i])];

    const Eigen::MatrixXd z = apply_standardizer(X, st.mean, st.scale);
    const LogRegObjective objective(z, yi, k, C);
    const auto n_params = static_cast<Eigen::Index>(objective.n_params());

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_params);
    Eigen::VectorXd g;
    double f = objective.value_and_gradient(x, g);
    if (options.record_history) result.history.push_back(f);

    std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;  // (s, y) pairs
    int it = 0;
    for (; it < options.max_iterations; ++it) {
        if (g.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) break;

        // Two-loop recursion.
        Eigen::VectorXd q = g;
        std::vector<double> alpha(memory.size());
        for (std::size_t m = memory.size(); m-- > 0;) {
            const auto& [s, yv] = memory[m];
            alpha[m] = s.dot(q) / yv.dot(s);
            q -= alpha[m] * yv;
        }
        if (!memory.empty()) {
            const auto& [s, yv] = memory.back();
            q *= s.dot(yv) / yv.squaredNorm();
        } else {
            q /= std::max(1.0, g.lpNorm<Eigen::Infinity>());
        }
        for (std::size_t m = 0; m < memory.size(); ++m) {
            const auto& [s, yv] = memory[m];
            const double beta = yv.dot(q) / yv.dot(s);
            q += (alpha[m] - beta) * s;
        }
        Eigen::VectorXd dir = -q;
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            memory.clear();
            dir = -g / std::max(1.0, g.lpNorm<Eigen::Infinity>());
            slope = g.dot(dir);
        }

        // Armijo backtracking.
        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd x_new, g_new;
        double f_new = f;
        for (int bt = 0; bt < 60; ++bt) {
            x_new = x + t * dir;
            f_new = objective.value_and_gradient(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted || !(f_new < f)) break;  // no further progress representable

        Eigen::VectorXd s = x_new - x;
        Eigen::VectorXd yv = g_new - g;
        if (s.dot(yv) > 1e-12 * s.squaredNorm()) {
            memory.emplace_back(std::move(s), std::move(yv));
            if (static_cast<int>(memory.size()) > options.lbfgs_memory) memory.pop_front();
        }
        x = std::move(x_new);
        g = std::move(g_new);
        f = f_new;
        if (options.record_history) result.history.push_back(f);
    }

    result.iterations = it;
    result.objective = f;
    result.gradient_max_norm = g.lpNorm<Eigen::Infinity>();
    result.data_loss = objective.data_loss(x);
    Eigen::Map<const RowMatrix> w(x.data(), k, d);
    for (int i = 0; i < k; ++i) {
        model.weights.row(active_codes[i]) = w.row(i);
        model.bias(active_codes[i]) = x(k * d + i);
    }
    return result;
}

Prediction predict(const LogRegModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (static_cast<std::size_t>(x.size()) != model.dim()) throw InvalidArgument("predict: dimension mismatch");
    const Eigen::VectorXd z = (x - model.mean).cwiseQuotient(model.scale);
    const Eigen::VectorXd logits = model.weights * z + model.bias;

    Prediction p{};
    double m = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < kNumLabels; ++c) {
        if (model.active[c]) m = std::max(m, logits(c));
    }
    double sum = 0.0;
    for (int c = 0; c < kNumLabels; ++c) {
        p.probabilities[c] = model.active[c] ? std::exp(logits(c) - m) : 0.0;
        sum += p.probabilities[c];
    }
    int best = -1;
    for (int c = 0; c < kNumLabels; ++c) {
        p.probabilities[c] /= sum;
        if (model.active[c] && (best < 0 || p.probabilities[c] > p.probabilities[best])) best = c;
    }
    p.label = static_cast<Label>(best);
    return p;
}

Prediction predict(const LogRegModel& model, std::span<const float> x) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) v(static_cast<Eigen::Index>(i)) = x[i];
    return predict(model, v);
}

// ---------------------------------------------------------------- metrics

ConfusionMatrix confusion_matrix(std::span<const Label> predictions, std::span<const Label> truths) {
    if (predictions.size() != truths.size()) throw InvalidArgument("confusion_matrix: length mismatch");
    ConfusionMatrix m{};
    for (std::size_t i = 0; i < predictions.size(); ++i) ++m[code(predictions[i])][code(truths[i])];
    return m;
}

double micro_f1(std::span<const Label> predictions, std::span<const Label> truths) {
    if (predictions.empty() || predictions.size() != truths.size()) {
        throw InvalidArgument("micro_f1: inputs must be non-empty and of equal length");
    }
    const ConfusionMatrix m = confusion_matrix(predictions, truths);
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (int c = 0; c < kNumLabels; ++c) {
        std::int64_t row = 0, col = 0;
        for (int o = 0; o < kNumLabels; ++o) {
            row += m[c][o];
            col += m[o][c];
        }
        tp += m[c][c];
        fp += row - m[c][c];
        fn += col - m[c][c];
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

// ---------------------------------------------------------------- nested CV

std::vector<int> stratified_folds(std::span<const Label> labels, int k, std::uint64_t seed) {
    if (k < 2) throw InvalidArgument("stratified_folds: need at least 2 folds");
    Rng rng(seed);
    std::vector<int> fold(labels.size(), 0);
    std::size_t offset = 0;
    for (Label l : kAllLabels) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == l) members.push_back(i);
        }
        rng.shuffle(members.begin(), members.end());
        for (std::size_t j = 0; j < members.size(); ++j) {
            fold[members[j]] = static_cast<int>((offset + j) % static_cast<std::size_t>(k));
        }
        offset += members.size();
    }
    return fold;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

std::vector<Label> take_labels(std::span<const Label> y, std::span<const std::size_t> rows) {
    std::vector<Label> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(y[r]);
    return out;
}

std::vector<Label> predict_rows(const LogRegModel& model, const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
    std::vector<Label> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(predict(model, Eigen::VectorXd(x.row(static_cast<Eigen::Index>(r)).transpose())).label);
    return out;
}

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

CvReport nested_cv(const CvDataset& data, const NestedCvConfig& cfg) {
    const std::size_t n = data.labels.size();
    if (n == 0) throw InvalidArgument("nested_cv: empty dataset");
    if (data.features.empty()) throw InvalidArgument("nested_cv: no embedding models");
    for (const auto& [tag, x] : data.features) {
        if (static_cast<std::size_t>(x.rows()) != n) throw InvalidArgument("nested_cv: feature rows for " + tag + " do not match labels");
    }
    if (cfg.grid.empty()) throw InvalidArgument("nested_cv: empty complexity grid");

    CvReport report;
    report.seed = cfg.seed;
    report.outer_folds = cfg.outer_folds;
    report.inner_folds = cfg.inner_folds;
    report.grid = cfg.grid;
    for (const auto& [tag, _] : data.features) report.models.push_back(tag);
    report.folds.resize(static_cast<std::size_t>(cfg.outer_folds));
    report.predictions.assign(n, Label::BlankPage);

    const std::vector<int> outer = stratified_folds(data.labels, cfg.outer_folds, derive_seed(cfg.seed, 0));
    std::vector<std::vector<Label>> fold_predictions(static_cast<std::size_t>(cfg.outer_folds));

    parallel_for(static_cast<std::size_t>(cfg.outer_folds), cfg.jobs, [&](std::size_t f) {
        OuterFoldResult& res = report.folds[f];
        res.fold = static_cast<int>(f);
        std::vector<std::size_t> train;
        for (std::size_t i = 0; i < n; ++i) {
            (outer[i] == static_cast<int>(f) ? res.validation : train).push_back(i);
        }
        const std::vector<Label> train_labels = take_labels(data.labels, train);
        std::array<bool, kNumLabels> present{};
        for (Label l : train_labels) present[code(l)] = true;
        for (std::size_t i : res.validation) {
            if (!present[code(data.labels[i])]) {
                res.warnings.push_back("class '" + std::string(to_string(data.labels[i])) +
                                       "' absent from outer training set; unpredictable in this fold");
                present[code(data.labels[i])] = true;  // warn once per class
            }
        }

        // Inner split over the outer-training portion (positions into `train`).
        const std::vector<int> inner = stratified_folds(train_labels, cfg.inner_folds, derive_seed(cfg.seed, 1000 + f));
        std::vector<std::vector<std::size_t>> inner_val(static_cast<std::size_t>(cfg.inner_folds));
        std::vector<std::vector<std::size_t>> inner_train(static_cast<std::size_t>(cfg.inner_folds));
        for (std::size_t p = 0; p < train.size(); ++p) {
            for (int j = 0; j < cfg.inner_folds; ++j) {
                (inner[p] == j ? inner_val[j] : inner_train[j]).push_back(train[p]);
            }
        }
        res.inner_validation = inner_val;

        // Candidate order: C ascending, then tag alphabetical; strict
        // improvement wins, so ties keep the smaller C / earlier tag.
        double best_f1 = -1.0;
        for (double c : cfg.grid) {
            for (const auto& [tag, x] : data.features) {
                std::vector<double> scores;
                for (int j = 0; j < cfg.inner_folds; ++j) {
                    if (inner_val[j].empty() || inner_train[j].empty()) continue;
                    const auto fit = fit_logreg(take_rows(x, inner_train[j]), take_labels(data.labels, inner_train[j]), c, cfg.fit, tag);
                    const auto pred = predict_rows(fit.model, x, inner_val[j]);
                    scores.push_back(micro_f1(pred, take_labels(data.labels, inner_val[j])));
                }
                if (scores.empty()) continue;
                const double m = mean_of(scores);
                if (m > best_f1) {
                    best_f1 = m;
                    res.selected_model = tag;
                    res.selected_C = c;
                }
            }
        }
        res.inner_f1 = best_f1;

        const Eigen::MatrixXd& x = data.features.at(res.selected_model);
        const auto fit = fit_logreg(take_rows(x, train), train_labels, res.selected_C, cfg.fit, res.selected_model);
        fold_predictions[f] = predict_rows(fit.model, x, res.validation);
        res.validation_f1 = res.validation.empty()
                                ? 0.0
                                : micro_f1(fold_predictions[f], take_labels(data.labels, res.validation));
    });

    std::vector<double> f1s;
    for (std::size_t f = 0; f < report.folds.size(); ++f) {
        const auto& res = report.folds[f];
        for (const auto& w : res.warnings) log_warn("outer fold " + std::to_string(f) + ": " + w);
        for (std::size_t j = 0; j < res.validation.size(); ++j) report.predictions[res.validation[j]] = fold_predictions[f][j];
        if (!res.validation.empty()) f1s.push_back(res.validation_f1);
    }
    report.confusion = confusion_matrix(report.predictions, data.labels);
    report.mean_f1 = mean_of(f1s);
    double ss = 0.0;
    for (double v : f1s) ss += (v - report.mean_f1) * (v - report.mean_f1);
    report.std_f1 = f1s.size() > 1 ? std::sqrt(ss / static_cast<double>(f1s.size() - 1)) : 0.0;
    return report;
}

std::pair<std::string, double> CvReport::consensus() const {
    std::map<std::pair<double, std::string>, int> counts;
    for (const auto& f : folds) ++counts[{f.selected_C, f.selected_model}];
    std::pair<double, std::string> best{};
    int best_count = -1;
    for (const auto& [key, count] : counts) {  // ordered by C then tag
        if (count > best_count) {
            best_count = count;
            best = key;
        }
    }
    return {best.second, best.first};
}

std::string cv_report_json(const CvReport& r) {
    nlohmann::ordered_json j;
    j["seed"] = r.seed;
    j["outer_folds"] = r.outer_folds;
    j["inner_folds"] = r.inner_folds;
    j["grid"] = r.grid;
    j["models"] = r.models;
    std::vector<std::string> labels;
    for (Label l : kAllLabels) labels.emplace_back(to_string(l));
    j["labels"] = labels;
    j["mean_f1"] = r.mean_f1;
    j["std_f1"] = r.std_f1;
    auto folds = nlohmann::ordered_json::array();
    for (const auto& f : r.folds) {
        nlohmann::ordered_json fj;
        fj["fold"] = f.fold;
        fj["selected_model"] = f.selected_model;
        fj["selected_C"] = f.selected_C;
        fj["inner_f1"] = f.inner_f1;
        fj["validation_f1"] = f.validation_f1;
        fj["n_validation"] = f.validation.size();
        fj["warnings"] = f.warnings;
        folds.push_back(std::move(fj));
    }
    j["folds"] = std::move(folds);
    auto matrix = nlohmann::ordered_json::array();
    for (const auto& row : r.confusion) matrix.push_back(row);
    j["confusion_matrix"] = {{"orientation", "rows = predicted, columns = true"}, {"counts", matrix}};
    const auto [tag, c] = r.consensus();
    j["consensus"] = {{"model", tag}, {"C", c}};
    return j.dump(2);
}

// ---------------------------------------------------------------- collection ops

ClassDistribution estimate_distribution(std::span<const Label> predicted) {
    ClassDistribution d;
    for (Label l : predicted) ++d.counts[code(l)];
    d.total = static_cast<std::int64_t>(predicted.size());
    for (int c = 0; c < kNumLabels; ++c) {
        d.fractions[c] = d.total ? static_cast<double>(d.counts[c]) / static_cast<double>(d.total) : 0.0;
    }
    return d;
}

ClassDistribution estimate_distribution(const LogRegModel& model, const VectorTable& embeddings) {
    std::vector<Label> predicted;
    predicted.reserve(embeddings.size());
    for (std::size_t r = 0; r < embeddings.size(); ++r) predicted.push_back(predict(model, embeddings.row(r)).label);
    return estimate_distribution(predicted);
}

FilterResult filter_anomalies(std::span<const GraphicalElementRecord> records, std::span<const Label> predicted,
                              std::span<const Label> drop) {
    if (records.size() != predicted.size()) throw InvalidArgument("filter_anomalies: one prediction per record required");
    std::array<bool, kNumLabels> dropped{};
    for (Label l : drop) dropped[code(l)] = true;
    FilterResult r;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (dropped[code(predicted[i])]) {
            ++r.dropped_count;
            ++r.dropped_by_label[code(predicted[i])];
        } else {
            r.kept.push_back(records[i]);
        }
    }
    r.kept_count = r.kept.size();
    r.dropped_fraction = records.empty() ? 0.0 : static_cast<double>(r.dropped_count) / static_cast<double>(records.size());
    return r;
}

FilterResult filter_anomalies(std::span<const GraphicalElementRecord> records, const LogRegModel& model,
                              const VectorTable& embeddings, std::span<const Label> drop) {
    std::vector<Label> predicted;
    predicted.reserve(records.size());
    for (const auto& rec : records) {
        const auto row = embeddings.find(rec.element_id);
        if (!row) throw InvalidArgument("no embedding for " + rec.element_id);
        predicted.push_back(predict(model, embeddings.row(*row)).label);
    }
    return filter_anomalies(records, predicted, drop);
}

// ---------------------------------------------------------------- persistence

std::string model_json(const LogRegModel& m) {
    nlohmann::ordered_json j;
    j["format"] = "imgsearch-logreg";
    j["model_tag"] = m.model_tag;
    j["C"] = m.C;
    j["dim"] = m.dim();
    std::vector<std::string> active;
    for (Label l : kAllLabels) {
        if (m.active[code(l)]) active.emplace_back(to_string(l));
    }
    j["active_labels"] = active;
    auto rows = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < m.weights.rows(); ++c) {
        std::vector<double> row(static_cast<std::size_t>(m.weights.cols()));
        for (Eigen::Index k = 0; k < m.weights.cols(); ++k) row[static_cast<std::size_t>(k)] = m.weights(c, k);
        rows.push_back(row);
    }
    j["weights"] = rows;
    j["bias"] = std::vector<double>(m.bias.data(), m.bias.data() + m.bias.size());
    j["mean"] = std::vector<double>(m.mean.data(), m.mean.data() + m.mean.size());
    j["scale"] = std::vector<double>(m.scale.data(), m.scale.data() + m.scale.size());
    return j.dump();
}

LogRegModel model_from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        LogRegModel m;
        m.model_tag = j.at("model_tag").get<std::string>();
        m.C = j.at("C").get<double>();
        const auto dim = j.at("dim").get<Eigen::Index>();
        for (const auto& name : j.at("active_labels")) m.active[code(parse_label(name.get<std::string>()))] = true;
        m.weights.resize(kNumLabels, dim);
        const auto& rows = j.at("weights");
        if (rows.size() != kNumLabels) throw ParseError("model weights must have 7 rows");
        for (int c = 0; c < kNumLabels; ++c) {
            const auto row = rows[c].get<std::vector<double>>();
            if (static_cast<Eigen::Index>(row.size()) != dim) throw ParseError("model weight row has wrong length");
            for (Eigen::Index k = 0; k < dim; ++k) m.weights(c, k) = row[static_cast<std::size_t>(k)];
        }
        auto vec = [&](const char* key, Eigen::Index len) {
            const auto v = j.at(key).get<std::vector<double>>();
            if (static_cast<Eigen::Index>(v.size()) != len) throw ParseError(std::string("model field has wrong length: ") + key);
            return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), len));
        };
        m.bias = vec("bias", kNumLabels);
        m.mean = vec("mean", dim);
        m.scale = vec("scale", dim);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const LogRegModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << model_json(model) << '\n';
}

LogRegModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream text;
    text << in.rdbuf();
    return model_from_json(text.str());
}

std::vector<LabeledExample> read_labels_jsonl(std::istream& in) {
    std::vector<LabeledExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({j.at("element_id").get<std::string>(), parse_label(j.at("label").get<std::string>())});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("labels line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<LabeledExample> read_labels_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_labels_jsonl(in);
}

}  // namespace imgsearch
