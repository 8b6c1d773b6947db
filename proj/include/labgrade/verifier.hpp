#ifndef LABGRADE_VERIFIER_HPP_
#define LABGRADE_VERIFIER_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "labgrade/corpus.hpp"
#include "labgrade/encoder.hpp"
#include "labgrade/errors.hpp"
#include "labgrade/training.hpp"

namespace labgrade {

// ---------------------------------------------------------------------------
// Scoring primitives

/// q.s / max(|q| |s|, epsilon).
template <typename DerivedQ, typename DerivedS>
typename DerivedQ::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedS>& s,
                                            typename DerivedQ::Scalar epsilon = 1e-8) {
  if (q.size() != s.size()) throw DimensionMismatch(q.size(), s.size());
  return q.dot(s) / std::max(q.norm() * s.norm(), epsilon);
}

/// Gradients of cosine_similarity with respect to q and s.
template <typename Scalar>
std::pair<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> cosine_similarity_gradient(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& q, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& s,
    Scalar epsilon = 1e-8) {
  const Scalar nq = q.norm();
  const Scalar ns = s.norm();
  const Scalar denom = nq * ns;
  if (denom <= epsilon) return {s / epsilon, q / epsilon};
  const Scalar c = q.dot(s) / denom;
  return {s / denom - c * q / (nq * nq), q / denom - c * s / (ns * ns)};
}

inline constexpr double kRelevanceScale = 10.0;
inline constexpr double kRelevanceCenter = 0.5;

/// Logistic map of the mean top-k similarity D: 1 / (1 + exp(-10 (D - 0.5))).
template <typename Scalar>
Scalar relevance_probability(Scalar mean_similarity) {
  return Scalar(1) / (Scalar(1) + std::exp(-Scalar(kRelevanceScale) * (mean_similarity - Scalar(kRelevanceCenter))));
}

inline constexpr double kProbabilityClamp = 1e-7;

/// -[w y log p + (1 - y) log(1 - p)], p clamped to [1e-7, 1 - 1e-7].
template <typename Scalar>
Scalar weighted_bce_loss(Scalar probability, int label, Scalar positive_weight) {
  const Scalar p = std::clamp(probability, Scalar(kProbabilityClamp), Scalar(1 - kProbabilityClamp));
  return label ? -positive_weight * std::log(p) : -std::log(1 - p);
}

/// d weighted_bce_loss / d probability (zero where the clamp is active).
template <typename Scalar>
Scalar weighted_bce_gradient(Scalar probability, int label, Scalar positive_weight) {
  if (probability < Scalar(kProbabilityClamp) || probability > Scalar(1 - kProbabilityClamp)) return 0;
  return label ? -positive_weight / probability : Scalar(1) / (1 - probability);
}

// ---------------------------------------------------------------------------
// Verifier

struct SimilarityScore {
  int sentence_position = 0;
  double value = 0;

  bool operator==(const SimilarityScore&) const = default;
};

struct VerifierConfig {
  int k = 3;
  double threshold = 0.5;
  double epsilon = 1e-8;

  bool operator==(const VerifierConfig&) const = default;
};

struct VerifierOutput {
  double probability = 0;
  std::vector<SimilarityScore> top_k;
  bool decision = false;
};

struct VerifierEncoders {
  EncoderHandle query;
  EncoderHandle passage;
};

/// The min(k, rows) best rows of `sentences` by cosine with `query`,
/// descending; ties go to the lower position.
std::vector<SimilarityScore> rank_top_k(const Embedding& query, const Eigen::MatrixXd& sentences, int k,
                                        double epsilon = 1e-8);

std::vector<SimilarityScore> select_top_k(const Report& report, const RubricDimension& dimension,
                                          const VerifierEncoders& encoders, const VerifierConfig& config);

/// Mean of the selected similarities pushed through relevance_probability.
double relevance_probability(std::span<const SimilarityScore> top_k);

VerifierOutput verify(const Report& report, const RubricDimension& dimension, const VerifierEncoders& encoders,
                      const VerifierConfig& config);

struct VerifierModel {
  VerifierEncoders encoders;
  VerifierConfig config;
  // Positive-class weight per rubric dimension, in rubric order.
  std::vector<double> positive_weights;

  VerifierOutput verify(const Report& report, const RubricDimension& dimension) const {
    return labgrade::verify(report, dimension, encoders, config);
  }
};

/// N_neg / N_pos per dimension over the training split, clamped to
/// [1e-3, 1e3]. Degenerate dimensions get weight 1 and a warning.
std::vector<double> positive_class_weights(const Corpus& corpus, std::vector<std::string>* warnings = nullptr);

struct VerifierTraining {
  VerifierModel model;
  TrainingLog log;
};

/// Fits both projection heads on the binary (score > 0) label with weighted
/// BCE, keeping the parameters of the epoch with the lowest validation loss.
VerifierTraining train_verifier(const Corpus& corpus, const VerifierEncoders& initial, const VerifierConfig& config,
                                const OptimizerConfig& optimizer);

/// Mean weighted BCE of `model` over the (report, dimension) pairs of a split.
double verifier_loss(const VerifierModel& model, const Corpus& corpus, Split split);

}  // namespace labgrade

#endif  // LABGRADE_VERIFIER_HPP_
