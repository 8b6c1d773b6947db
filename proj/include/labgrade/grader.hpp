#ifndef LABGRADE_GRADER_HPP_
#define LABGRADE_GRADER_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "labgrade/corpus.hpp"
#include "labgrade/encoder.hpp"
#include "labgrade/errors.hpp"
#include "labgrade/training.hpp"
#include "labgrade/verifier.hpp"

namespace labgrade {

inline constexpr int kScoreClasses = 6;

template <typename Scalar>
using ClassVector = Eigen::Matrix<Scalar, kScoreClasses, 1>;

/// Numerically stable softmax.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Derived::RowsAtCompileTime, 1> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar top = logits.maxCoeff();
  Eigen::Matrix<Scalar, Derived::RowsAtCompileTime, 1> e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

/// Ordinal log loss: -sum_i log(1 - p_i) |y - i|^alpha, with p_i clamped
/// to at most 1 - 1e-7.
template <typename Derived>
typename Derived::Scalar oll_loss(const Eigen::MatrixBase<Derived>& probs, int label, typename Derived::Scalar alpha) {
  using Scalar = typename Derived::Scalar;
  Scalar loss = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const Scalar distance = std::abs(static_cast<Scalar>(label - i));
    if (distance == 0) continue;
    const Scalar p = std::min(probs(i), Scalar(1 - kProbabilityClamp));
    loss -= std::log(1 - p) * std::pow(distance, alpha);
  }
  return loss;
}

/// d oll_loss / d p_i.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Derived::RowsAtCompileTime, 1> oll_gradient(
    const Eigen::MatrixBase<Derived>& probs, int label, typename Derived::Scalar alpha) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Derived::RowsAtCompileTime, 1> g(probs.size());
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const Scalar distance = std::abs(static_cast<Scalar>(label - i));
    g(i) = (distance == 0 || probs(i) > Scalar(1 - kProbabilityClamp)) ? Scalar(0)
                                                                         : std::pow(distance, alpha) / (1 - probs(i));
  }
  return g;
}

/// -log p_y with p_y clamped to [1e-7, 1 - 1e-7].
template <typename Derived>
typename Derived::Scalar ce_loss(const Eigen::MatrixBase<Derived>& probs, int label) {
  using Scalar = typename Derived::Scalar;
  return -std::log(std::clamp(probs(label), Scalar(kProbabilityClamp), Scalar(1 - kProbabilityClamp)));
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Derived::RowsAtCompileTime, 1> ce_gradient(const Eigen::MatrixBase<Derived>& probs,
                                                                                   int label) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Derived::RowsAtCompileTime, 1> g = Eigen::Matrix<Scalar, Derived::RowsAtCompileTime, 1>::Zero(probs.size());
  const Scalar p = probs(label);
  if (p >= Scalar(kProbabilityClamp) && p <= Scalar(1 - kProbabilityClamp)) g(label) = -1 / p;
  return g;
}

/// Pull a gradient on softmax outputs back to the logits.
template <typename DerivedP, typename DerivedG>
Eigen::Matrix<typename DerivedP::Scalar, DerivedP::RowsAtCompileTime, 1> softmax_backward(
    const Eigen::MatrixBase<DerivedP>& probs, const Eigen::MatrixBase<DerivedG>& grad_probs) {
  const auto inner = grad_probs.dot(probs);
  return (probs.array() * (grad_probs.array() - inner)).matrix();
}

struct ScoreDistribution {
  ClassVector<double> probs = ClassVector<double>::Constant(1.0 / kScoreClasses);

  /// Most probable score; ties resolve to the lower score.
  int argmax() const;
  /// argmax restricted to [0, max_score].
  int argmax(int max_score) const;
};

enum class GraderLoss { oll, ce };
enum class HeadKind { shared, per_dimension };
enum class RelevantAggregation { mean_embedding, concat_text };

std::string_view to_string(GraderLoss loss);
std::string_view to_string(HeadKind head);
std::string_view to_string(RelevantAggregation aggregation);
GraderLoss parse_grader_loss(std::string_view text);
HeadKind parse_head(std::string_view text);
RelevantAggregation parse_relevant_aggregation(std::string_view text);

struct GraderConfig {
  double alpha = 1.5;
  GraderLoss loss = GraderLoss::oll;
  HeadKind head = HeadKind::shared;
  ReportStrategy report_strategy = ReportStrategy::truncate;
  int window_stride = 0;
  RelevantAggregation relevant = RelevantAggregation::mean_embedding;
  // Feature slots after the dimension embedding. At least one must be on.
  bool use_report = true;
  bool use_relevant = true;

  int slots() const { return 1 + (use_report ? 1 : 0) + (use_relevant ? 1 : 0); }
  bool operator==(const GraderConfig&) const = default;
};

/// The prediction layer phi: logits = weight * features + bias.
struct LinearHead {
  Eigen::MatrixXd weight;  // kScoreClasses x input
  Eigen::VectorXd bias;    // kScoreClasses

  static LinearHead zeros(Eigen::Index input);
  Eigen::Index parameter_count() const { return weight.size() + bias.size(); }
};

ScoreDistribution grade(const LinearHead& head, const Eigen::VectorXd& features);

/// Concatenates [dimension; report; relevant] (fixed order) and applies the head.
ScoreDistribution grade(const Embedding& dimension, const Embedding& report, const Embedding& relevant,
                        const LinearHead& head);

class GraderModel {
 public:
  GraderModel(EncoderHandle query_encoder, EncoderHandle report_encoder, GraderConfig config,
              std::vector<std::string> dimension_ids, std::vector<LinearHead> heads);

  /// Fresh model: identity projections, small random head weights.
  static GraderModel initial(std::shared_ptr<const TextEncoder> provider, const GraderConfig& config,
                             const Rubric& rubric, std::uint64_t seed);

  const GraderConfig& config() const { return config_; }
  const EncoderHandle& query_encoder() const { return query_; }
  const EncoderHandle& report_encoder() const { return report_; }
  const std::vector<LinearHead>& heads() const { return heads_; }
  const std::vector<std::string>& dimension_ids() const { return dimension_ids_; }
  Eigen::Index input_size() const { return config_.slots() * report_.embedding_dim(); }

  /// Head used for a dimension; throws UnknownDimension for per-dimension
  /// heads when the id was not seen at construction.
  const LinearHead& head_for(std::string_view dimension_id) const;
  std::size_t head_index(std::string_view dimension_id) const;

  /// Provider-level embedding of the relevant sentences.
  Embedding relevant_base(const Report& report, std::span<const int> positions) const;

  ScoreDistribution grade(const Report& report, const RubricDimension& dimension,
                          std::span<const int> relevant_positions) const;

 private:
  EncoderHandle query_;
  EncoderHandle report_;
  GraderConfig config_;
  std::vector<std::string> dimension_ids_;
  std::vector<LinearHead> heads_;
};

/// How the grader obtains relevant sentences during training.
using SentenceSelector = std::function<std::vector<int>(const Report&, std::size_t dimension_index)>;

struct GraderTraining {
  GraderModel model;
  TrainingLog log;
};

/// Minimises mean OLL (or CE) over every (report, dimension) pair of the
/// training split; keeps the epoch with the lowest validation loss.
GraderTraining train_grader(const Corpus& corpus, const GraderModel& initial, const SentenceSelector& selector,
                            const OptimizerConfig& optimizer);

/// Mean configured loss over a split.
double grader_loss(const GraderModel& model, const Corpus& corpus, Split split, const SentenceSelector& selector);

}  // namespace labgrade

#endif  // LABGRADE_GRADER_HPP_
