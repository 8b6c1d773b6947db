#ifndef LABGRADE_METRICS_HPP_
#define LABGRADE_METRICS_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "labgrade/corpus.hpp"
#include "labgrade/errors.hpp"

namespace labgrade {

/// Sum of one report's dimension scores; throws IncompleteReport when a
/// rubric dimension is missing.
int total_score(const Rubric& rubric, const std::map<std::string, int>& scores_by_dimension);

template <typename DerivedA, typename DerivedB>
void require_same_length(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    throw ValidationError("length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  if (a.size() == 0) throw ValidationError("metric needs at least one item");
}

template <typename DerivedA, typename DerivedB>
double mse(const Eigen::MatrixBase<DerivedA>& predictions, const Eigen::MatrixBase<DerivedB>& truths) {
  require_same_length(predictions, truths);
  return (predictions.template cast<double>() - truths.template cast<double>()).squaredNorm() /
         static_cast<double>(predictions.size());
}

enum class WeightedAccuracyReading {
  // mean of 1 - |g - y| / max_distance
  normalized_error,
  // mean of (1 - |g - y|) / max_distance, as the formula is typeset
  literal,
};

template <typename DerivedA, typename DerivedB>
double weighted_accuracy(const Eigen::MatrixBase<DerivedA>& predictions, const Eigen::MatrixBase<DerivedB>& truths,
                         double max_distance,
                         WeightedAccuracyReading reading = WeightedAccuracyReading::normalized_error) {
  require_same_length(predictions, truths);
  if (!(max_distance > 0)) throw ValidationError("max_distance must be positive");
  const Eigen::ArrayXd distance =
      (predictions.template cast<double>() - truths.template cast<double>()).array().abs();
  if (distance.maxCoeff() > max_distance) {
    throw ValidationError("absolute error " + std::to_string(distance.maxCoeff()) + " exceeds max distance " +
                          std::to_string(max_distance));
  }
  if (reading == WeightedAccuracyReading::literal) return ((1.0 - distance) / max_distance).mean();
  return (1.0 - distance / max_distance).mean();
}

/// Krippendorff's alpha with squared-difference distance. `ratings` is
/// raters x items; NaN marks a missing rating. Items with fewer than two
/// ratings are not pairable. Zero expected disagreement yields 1.
double krippendorff_alpha_interval(const Eigen::MatrixXd& ratings);

/// MASI distance: 1 - Jaccard * monotonicity (1 equal, 2/3 subset,
/// 1/3 overlap, 0 disjoint). Two empty sets are at distance 0.
double masi_distance(const std::set<int>& a, const std::set<int>& b);

/// Krippendorff's alpha over set-valued annotations with MASI distance.
/// `units[u][r]` is rater r's set for item u, or nullopt.
double krippendorff_alpha_sets(const std::vector<std::vector<std::optional<std::set<int>>>>& units);

/// Agreement of sentence selections: items are (report, dimension) pairs,
/// raters are rater ids. Throws ValidationError with fewer than two raters.
double masi_alpha(std::span<const SentenceSelection> selections);

/// Average ranks (1-based) with ties sharing the mean of their positions.
Eigen::VectorXd average_ranks(const Eigen::VectorXd& values);

/// Spearman rho with average-rank ties; nullopt when either side is constant.
std::optional<double> spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct SpearmanSummary {
  double mean = 0;
  double sd = 0;  // population standard deviation across reports
  int used = 0;
  int skipped = 0;
};

/// Spearman between each report's predicted and true dimension vectors,
/// summarised across reports. Throws UndefinedMetric when every report is
/// skipped.
SpearmanSummary per_dimension_spearman(std::span<const Eigen::VectorXd> predictions,
                                       std::span<const Eigen::VectorXd> truths);

struct BinaryMetrics {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Micro-averaged metrics with the non-zero class as positive. Precision or
/// recall with an empty denominator is 0.
BinaryMetrics verifier_binary_metrics(const std::vector<bool>& decisions, const std::vector<bool>& labels);

/// Accuracy of always predicting the more frequent label.
double majority_baseline(const std::vector<bool>& labels);

struct Interval {
  double low = 0;
  double high = 0;
};

/// Percentile bootstrap over `n_units` resampled with replacement.
/// `metric` receives the resampled unit indices.
Interval bootstrap_ci(const std::function<double(std::span<const std::size_t>)>& metric, std::size_t n_units,
                      int n_resamples, std::uint64_t seed, double level = 0.95);

// ---------------------------------------------------------------------------
// Evaluation report

struct PredictionEntry {
  std::string report_id;
  std::string dimension_id;
  int predicted = 0;
  int truth = 0;
  // Verifier gate for this pair (or predicted > 0 when no verifier ran).
  bool decision = false;
};

struct PredictionSet {
  Rubric rubric;
  std::vector<PredictionEntry> entries;

  /// Each (report, dimension) once, values within dimension bounds.
  void validate() const;
};

struct DimensionVerifierRow {
  std::string dimension_id;
  double majority_baseline = 0;
  BinaryMetrics metrics;
};

struct EvaluationReport {
  int n_reports = 0;
  double total_mse = 0;
  double total_alpha_interval = 0;
  double total_weighted_acc = 0;
  double dimension_weighted_acc = 0;
  double per_dim_spearman_mean = 0;
  double per_dim_spearman_sd = 0;
  int spearman_skipped = 0;
  double per_dim_alpha_mean = 0;
  double verifier_accuracy = 0;
  double verifier_precision = 0;
  double verifier_recall = 0;
  double verifier_f1 = 0;
  double verifier_majority_baseline = 0;
  std::vector<DimensionVerifierRow> verifier_by_dimension;
  std::map<std::string, Interval> confidence_intervals;
};

struct EvaluationOptions {
  int bootstrap_resamples = 0;  // 0 disables confidence intervals
  std::uint64_t seed = 1;
  WeightedAccuracyReading reading = WeightedAccuracyReading::normalized_error;
};

EvaluationReport evaluate_predictions(const PredictionSet& predictions, const EvaluationOptions& options = {});

/// Flat JSON document (confidence intervals as <metric>_ci_low/high keys,
/// per-dimension verifier rows as an array).
std::string to_json(const EvaluationReport& report);

/// report_id,dimension_id,predicted,truth rows with a header.
std::string predictions_csv(const PredictionSet& predictions);

}  // namespace labgrade

#endif  // LABGRADE_METRICS_HPP_
