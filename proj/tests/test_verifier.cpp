#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "labgrade/verifier.hpp"
#include "oracles.hpp"

using namespace labgrade;

TEST(Cosine, KnownValues) {
  EXPECT_NEAR(cosine_similarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1)), 0.70711, 1e-5);
  EXPECT_NEAR(cosine_similarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(-3, 0)), -1.0, 1e-12);
  EXPECT_EQ(cosine_similarity(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)), 0.0);
  EXPECT_THROW(cosine_similarity(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(2)), DimensionMismatch);
}

TEST(Cosine, MatchesOracleAndStaysBounded) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd a(5), b(5);
    for (int i = 0; i < 5; ++i) a(i) = n(rng), b(i) = n(rng);
    const double c = cosine_similarity(a, b);
    EXPECT_NEAR(c, oracle::cosine({a.data(), a.data() + 5}, {b.data(), b.data() + 5}), 1e-12);
    EXPECT_LE(std::abs(c), 1.0 + 1e-12);
  }
}

TEST(Cosine, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  const double h = 1e-6;
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd q(4), s(4);
    for (int i = 0; i < 4; ++i) q(i) = n(rng), s(i) = n(rng);
    const auto [gq, gs] = cosine_similarity_gradient(q, s);
    for (int i = 0; i < 4; ++i) {
      Eigen::VectorXd qp = q, qm = q;
      qp(i) += h;
      qm(i) -= h;
      EXPECT_NEAR(gq(i), (cosine_similarity(qp, s) - cosine_similarity(qm, s)) / (2 * h), 1e-7);
      Eigen::VectorXd sp = s, sm = s;
      sp(i) += h;
      sm(i) -= h;
      EXPECT_NEAR(gs(i), (cosine_similarity(q, sp) - cosine_similarity(q, sm)) / (2 * h), 1e-7);
    }
  }
}

TEST(RelevanceProbability, KnownValues) {
  EXPECT_NEAR(relevance_probability(0.6), 0.73106, 1e-5);
  EXPECT_NEAR(relevance_probability(1.0), 0.99331, 1e-5);
  EXPECT_DOUBLE_EQ(relevance_probability(0.5), 0.5);
}

TEST(RelevanceProbability, MonotoneOnGrid) {
  double previous = -1;
  for (int i = 0; i < 100; ++i) {
    const double d = -1.0 + 2.0 * i / 99.0;
    const double p = relevance_probability(d);
    EXPECT_GT(p, previous);
    EXPECT_NEAR(p, oracle::logistic_relevance(d), 1e-15);
    previous = p;
  }
}

TEST(RelevanceProbability, AveragesSelectedScores) {
  const std::vector<SimilarityScore> top = {{0, 0.9}, {3, 0.5}, {1, 0.4}};
  EXPECT_NEAR(relevance_probability(std::span<const SimilarityScore>(top)), relevance_probability(0.6), 1e-15);
}

TEST(WeightedBce, KnownValuesAndClamp) {
  EXPECT_NEAR(weighted_bce_loss(0.5, 1, 1.0), 0.69315, 1e-5);
  EXPECT_NEAR(weighted_bce_loss(0.5, 0, 1.0), 0.69315, 1e-5);
  EXPECT_NEAR(weighted_bce_loss(0.5, 1, 3.0), 3 * 0.693147, 1e-5);
  EXPECT_NEAR(weighted_bce_loss(0.0, 1, 1.0), -std::log(1e-7), 1e-9);
  EXPECT_TRUE(std::isfinite(weighted_bce_loss(1.0, 0, 1.0)));
  for (double p : {0.01, 0.2, 0.7, 0.99}) {
    EXPECT_NEAR(weighted_bce_loss(p, 1, 2.5), oracle::weighted_bce(p, 1, 2.5), 1e-12);
    EXPECT_NEAR(weighted_bce_loss(p, 0, 2.5), oracle::weighted_bce(p, 0, 2.5), 1e-12);
  }
}

TEST(WeightedBce, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.02, 0.98), w(0.1, 5);
  const double h = 1e-6;
  for (int t = 0; t < 25; ++t) {
    const double p = u(rng), pw = w(rng);
    for (int y : {0, 1}) {
      const double numeric = (weighted_bce_loss(p + h, y, pw) - weighted_bce_loss(p - h, y, pw)) / (2 * h);
      const double analytic = weighted_bce_gradient(p, y, pw);
      EXPECT_LT(std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-12), 1e-4);
    }
  }
}

TEST(TopK, OrdersByScoreWithLowerPositionOnTies) {
  Eigen::MatrixXd sentences(5, 2);
  sentences << 1, 0,  //
      0, 1,           //
      1, 0,           //
      1, 1,           //
      -1, 0;
  const auto top = rank_top_k(Eigen::Vector2d(1, 0), sentences, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].sentence_position, 0);
  EXPECT_EQ(top[1].sentence_position, 2);
  EXPECT_EQ(top[2].sentence_position, 3);
  EXPECT_EQ(rank_top_k(Eigen::Vector2d(1, 0), sentences, 20).size(), 5u);
}

TEST(PositiveWeights, RatioPerDimension) {
  Corpus c = testing_support::desk_corpus(60, 4);
  std::vector<std::string> warnings;
  const auto w = positive_class_weights(c, &warnings);
  ASSERT_EQ(w.size(), 7u);
  const auto scores = c.score_index();
  for (std::size_t m = 0; m < 7; ++m) {
    double pos = 0, neg = 0;
    for (const Report* r : c.reports_in(Split::train)) (scores.at({r->id, c.rubric.dimensions[m].id}) > 0 ? pos : neg) += 1;
    if (pos > 0 && neg > 0) {
      EXPECT_NEAR(w[m], std::clamp(neg / pos, 1e-3, 1e3), 1e-12);
    } else {
      EXPECT_EQ(w[m], 1.0);
    }
  }
  for (auto& s : c.scores) {
    if (s.dimension_id == "d2") s.score = 3;
  }
  warnings.clear();
  EXPECT_EQ(positive_class_weights(c, &warnings)[1], 1.0);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Verifier, DecisionFollowsThreshold) {
  auto p = std::make_shared<const HashingEncoder>(64, 64);
  const VerifierEncoders enc{EncoderHandle(p, Side::query), EncoderHandle(p, Side::passage)};
  const Report r = make_report("r", "Our hypothesis predicts a longer period. The clamp was metal.", Split::test, "a");
  const RubricDimension dim{"d1", 1, "hypothesis predicts period", 5, DimensionMode::scored};
  const VerifierOutput out = verify(r, dim, enc, VerifierConfig{1, 0.5, 1e-8});
  ASSERT_EQ(out.top_k.size(), 1u);
  EXPECT_EQ(out.top_k[0].sentence_position, 0);
  EXPECT_EQ(out.decision, out.probability > 0.5);
  EXPECT_FALSE(verify(r, dim, enc, VerifierConfig{1, 0.9999999, 1e-8}).decision);
}

TEST(Verifier, ValidationLossDecreasesEarly) {
  const Corpus c = testing_support::desk_corpus(200, 7);
  auto p = std::make_shared<const HashingEncoder>(128, 128);
  const VerifierEncoders initial{EncoderHandle(p, Side::query), EncoderHandle(p, Side::passage)};
  OptimizerConfig opt;
  opt.epochs = 3;
  opt.seed = 7;
  const VerifierTraining t = train_verifier(c, initial, VerifierConfig{}, opt);
  ASSERT_EQ(t.log.epochs.size(), 3u);
  EXPECT_LT(t.log.epochs[1].val_loss, t.log.epochs[0].val_loss);
  EXPECT_LT(t.log.epochs[2].val_loss, t.log.epochs[1].val_loss);
  EXPECT_NEAR(verifier_loss(t.model, c, Split::val), t.log.best_val_loss, 1e-9);
}
