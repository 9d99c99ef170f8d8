#pragma once

// Multinomial ridge logistic regression over embedding vectors, nested
// cross-validation over (embedding model, complexity C), and the
// collection-level operations built on a fitted model.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "imgsearch/alto.hpp"

namespace imgsearch {

class VectorTable;

enum class Label : int {
    BlankPage = 0,
    SegmentationAnomaly = 1,
    IllustrationOrPhotograph = 2,
    MusicalNotation = 3,
    Map = 4,
    MathematicalChart = 5,
    GraphicalElement = 6,
};

inline constexpr int kNumLabels = 7;
inline constexpr std::array<Label, kNumLabels> kAllLabels = {
    Label::BlankPage,       Label::SegmentationAnomaly, Label::IllustrationOrPhotograph,
    Label::MusicalNotation, Label::Map,                 Label::MathematicalChart,
    Label::GraphicalElement};

/// Display strings used in label files, e.g. "Blank page".
std::string_view to_string(Label label) noexcept;
/// Throws ParseError for unknown strings.
Label parse_label(std::string_view text);
inline int code(Label l) noexcept { return static_cast<int>(l); }

using ConfusionMatrix = std::array<std::array<std::int64_t, kNumLabels>, kNumLabels>;  // [predicted][true]

/// Ten log-spaced values 10^(-4 + 8k/9), k = 0..9.
std::vector<double> complexity_grid();

struct FitOptions {
    int max_iterations = 1000;
    double gradient_tolerance = 1e-6;  // on the max-norm of the gradient
    int lbfgs_memory = 10;
    bool record_history = false;
};

/// Penalized multinomial negative log-likelihood on standardized features,
///   f(W, b) = sum_i NLL(softmax(W z_i + b), y_i) + ||W||_F^2 / (2C),
/// over the active classes only. Parameters are packed as [W row-major | b].
class LogRegObjective {
public:
    LogRegObjective(const Eigen::MatrixXd& z, std::span<const int> class_index, int n_classes, double c);

    std::size_t n_params() const noexcept;
    double value(const Eigen::VectorXd& theta) const;
    double value_and_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const;
    /// Sum of NLL terms only.
    double data_loss(const Eigen::VectorXd& theta) const;

private:
    Eigen::MatrixXd logits(const Eigen::VectorXd& theta) const;

    const Eigen::MatrixXd& z_;
    std::vector<int> y_;
    int k_;
    double c_;
};

struct LogRegModel {
    std::string model_tag;
    double C = 1.0;
    std::array<bool, kNumLabels> active{};  // classes seen in training
    Eigen::MatrixXd weights;                 // kNumLabels x dim, zero rows for inactive classes
    Eigen::VectorXd bias;                    // kNumLabels
    Eigen::VectorXd mean;                    // standardization, dim
    Eigen::VectorXd scale;                   // dim

    std::size_t dim() const noexcept { return static_cast<std::size_t>(weights.cols()); }
};

struct FitResult {
    LogRegModel model;
    int iterations = 0;
    double objective = 0.0;
    double gradient_max_norm = 0.0;
    double data_loss = 0.0;
    std::vector<double> history;  // objective per iteration when requested
};

/// Fits from zero initialization with L-BFGS and Armijo backtracking until
/// the gradient max-norm reaches tolerance or max_iterations. Features are
/// standardized with statistics from X. A single class yields the constant
/// predictor. Throws InvalidArgument on non-finite features or C <= 0.
FitResult fit_logreg(const Eigen::MatrixXd& X, std::span<const Label> y, double C,
                     const FitOptions& options = {}, std::string model_tag = {});

struct Prediction {
    Label label;
    std::array<double, kNumLabels> probabilities;
};

Prediction predict(const LogRegModel& model, std::span<const float> x);
Prediction predict(const LogRegModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Micro-averaged F1 (equals accuracy for single-label multiclass data).
/// Throws InvalidArgument on empty or unequal inputs.
double micro_f1(std::span<const Label> predictions, std::span<const Label> truths);
ConfusionMatrix confusion_matrix(std::span<const Label> predictions, std::span<const Label> truths);

/// Labelled examples with one feature matrix (n x dim) per embedding model tag.
struct CvDataset {
    std::vector<std::string> ids;
    std::vector<Label> labels;
    std::map<std::string, Eigen::MatrixXd> features;
};

/// Fold index (0..k-1) per example; classes are shuffled and dealt round-robin.
std::vector<int> stratified_folds(std::span<const Label> labels, int k, std::uint64_t seed);

struct NestedCvConfig {
    int outer_folds = 20;
    int inner_folds = 10;
    std::uint64_t seed = 0;
    std::vector<double> grid = complexity_grid();
    FitOptions fit;
    unsigned jobs = 1;
};

struct OuterFoldResult {
    int fold = 0;
    std::string selected_model;
    double selected_C = 0.0;
    double inner_f1 = 0.0;
    double validation_f1 = 0.0;
    std::vector<std::size_t> validation;                 // outer validation indices
    std::vector<std::vector<std::size_t>> inner_validation;  // per inner fold, dataset indices
    std::vector<std::string> warnings;
};

struct CvReport {
    std::uint64_t seed = 0;
    int outer_folds = 0;
    int inner_folds = 0;
    std::vector<double> grid;
    std::vector<std::string> models;
    std::vector<OuterFoldResult> folds;
    std::vector<Label> predictions;  // pooled outer-fold predictions, dataset order
    ConfusionMatrix confusion{};
    double mean_f1 = 0.0;
    double std_f1 = 0.0;  // sample standard deviation over outer folds

    /// Most frequently selected (model, C); ties follow the selection rule.
    std::pair<std::string, double> consensus() const;
};

CvReport nested_cv(const CvDataset& data, const NestedCvConfig& config);

std::string cv_report_json(const CvReport& report);

struct ClassDistribution {
    std::array<std::int64_t, kNumLabels> counts{};
    std::array<double, kNumLabels> fractions{};
    std::int64_t total = 0;
};

ClassDistribution estimate_distribution(std::span<const Label> predicted);
ClassDistribution estimate_distribution(const LogRegModel& model, const VectorTable& embeddings);

struct FilterResult {
    std::vector<GraphicalElementRecord> kept;
    std::size_t kept_count = 0;
    std::size_t dropped_count = 0;
    double dropped_fraction = 0.0;
    std::array<std::int64_t, kNumLabels> dropped_by_label{};
};

inline const std::vector<Label> kDefaultDropLabels = {Label::BlankPage, Label::SegmentationAnomaly};

/// Drops records whose predicted label is in `drop`. `predicted` is parallel to `records`.
FilterResult filter_anomalies(std::span<const GraphicalElementRecord> records,
                              std::span<const Label> predicted,
                              std::span<const Label> drop = kDefaultDropLabels);
/// Classifies each record's embedding first. Throws InvalidArgument if a
/// record has no embedding.
FilterResult filter_anomalies(std::span<const GraphicalElementRecord> records, const LogRegModel& model,
                              const VectorTable& embeddings,
                              std::span<const Label> drop = kDefaultDropLabels);

std::string model_json(const LogRegModel& model);
LogRegModel model_from_json(std::string_view json);
void save_model(const LogRegModel& model, const std::filesystem::path& path);
LogRegModel load_model(const std::filesystem::path& path);

struct LabeledExample {
    std::string element_id;
    Label label;
};

/// Labels JSONL: {"element_id": ..., "label": "Blank page"}.
std::vector<LabeledExample> read_labels_jsonl(const std::filesystem::path& path);
std::vector<LabeledExample> read_labels_jsonl(std::istream& in);

}  // namespace imgsearch
