#include "labgrade/verifier.hpp"

#include <array>
#include <map>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

namespace labgrade {

std::vector<SimilarityScore> rank_top_k(const Embedding& query, const Eigen::MatrixXd& sentences, int k,
                                        double epsilon) {
  if (sentences.cols() != query.size()) throw DimensionMismatch(query.size(), sentences.cols());
  std::vector<SimilarityScore> all;
  all.reserve(static_cast<std::size_t>(sentences.rows()));
  for (Eigen::Index i = 0; i < sentences.rows(); ++i) {
    all.push_back({static_cast<int>(i), cosine_similarity(query, sentences.row(i).transpose(), epsilon)});
  }
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                    [](const SimilarityScore& a, const SimilarityScore& b) {
                      return a.value != b.value ? a.value > b.value : a.sentence_position < b.sentence_position;
                    });
  all.resize(n);
  return all;
}

std::vector<SimilarityScore> select_top_k(const Report& report, const RubricDimension& dimension,
                                          const VerifierEncoders& encoders, const VerifierConfig& config) {
  if (report.sentences.empty()) throw ValidationError("report '" + report.id + "' has no sentences");
  if (config.k < 1) throw ConfigError("k must be at least 1");
  const Embedding q = encode(encoders.query, dimension.query_text);
  const Eigen::MatrixXd sentences =
      embed_sentences(encoders.passage.provider(), report) * encoders.passage.projection().transpose();
  return rank_top_k(q, sentences, config.k, config.epsilon);
}

double relevance_probability(std::span<const SimilarityScore> top_k) {
  if (top_k.empty()) throw ValidationError("relevance probability needs at least one similarity");
  double sum = 0;
  for (const auto& s : top_k) sum += s.value;
  return relevance_probability(sum / static_cast<double>(top_k.size()));
}

VerifierOutput verify(const Report& report, const RubricDimension& dimension, const VerifierEncoders& encoders,
                      const VerifierConfig& config) {
  VerifierOutput out;
  out.top_k = select_top_k(report, dimension, encoders, config);
  out.probability = relevance_probability(std::span<const SimilarityScore>(out.top_k));
  out.decision = out.probability > config.threshold;
  return out;
}

std::vector<double> positive_class_weights(const Corpus& corpus, std::vector<std::string>* warnings) {
  const auto scores = corpus.score_index();
  std::vector<double> weights;
  for (const auto& dim : corpus.rubric.dimensions) {
    long pos = 0, neg = 0;
    for (const Report* r : corpus.reports_in(Split::train)) {
      auto it = scores.find({r->id, dim.id});
      if (it == scores.end()) continue;
      (it->second > 0 ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0) {
      const std::string msg = "dimension '" + dim.id + "' has " + (pos == 0 ? "no positive" : "no negative") +
                              " training examples; positive weighting disabled";
      spdlog::warn("{}", msg);
      if (warnings) warnings->push_back(msg);
      weights.push_back(1.0);
      continue;
    }
    weights.push_back(std::clamp(static_cast<double>(neg) / static_cast<double>(pos), 1e-3, 1e3));
  }
  return weights;
}

namespace {

struct Pair {
  std::size_t report;  // index into the encoded report list
  std::size_t dimension;
  int label;
};

struct EncodedSplit {
  std::vector<Eigen::MatrixXd> sentences;  // provider embeddings, one matrix per report
  std::vector<Pair> pairs;
};

EncodedSplit encode_split(const Corpus& corpus, Split split, const TextEncoder& provider,
                          const std::map<std::pair<std::string, std::string>, int>& scores) {
  EncodedSplit out;
  for (const Report* r : corpus.reports_in(split)) {
    const std::size_t index = out.sentences.size();
    out.sentences.push_back(embed_sentences(provider, *r));
    for (std::size_t m = 0; m < corpus.rubric.size(); ++m) {
      auto it = scores.find({r->id, corpus.rubric.dimensions[m].id});
      if (it == scores.end()) {
        throw ValidationError("report '" + r->id + "' has no score for dimension '" + corpus.rubric.dimensions[m].id + "'");
      }
      out.pairs.push_back({index, m, it->second > 0 ? 1 : 0});
    }
  }
  return out;
}

class VerifierObjective {
 public:
  VerifierObjective(std::vector<Embedding> queries, const VerifierConfig& config, std::vector<double> weights)
      : queries_(std::move(queries)), config_(config), weights_(std::move(weights)) {}

  // Loss of one pair; accumulates parameter gradients when grads != nullptr.
  double pair(const Eigen::MatrixXd& pq, const Eigen::MatrixXd& ps, const Eigen::MatrixXd& base_sentences,
              const Pair& p, Eigen::MatrixXd* grad_q, Eigen::MatrixXd* grad_s) const {
    const Embedding& hq = queries_[p.dimension];
    const Embedding u = pq * hq;
    const Eigen::MatrixXd v = base_sentences * ps.transpose();
    const auto top = rank_top_k(u, v, config_.k, config_.epsilon);
    double mean = 0;
    for (const auto& s : top) mean += s.value;
    mean /= static_cast<double>(top.size());
    const double prob = relevance_probability(mean);
    const double w = weights_[p.dimension];
    const double loss = weighted_bce_loss(prob, p.label, w);
    if (grad_q) {
      const double d_mean = weighted_bce_gradient(prob, p.label, w) * kRelevanceScale * prob * (1 - prob);
      const double coef = d_mean / static_cast<double>(top.size());
      Embedding gu = Embedding::Zero(u.size());
      for (const auto& s : top) {
        const Embedding vi = v.row(s.sentence_position).transpose();
        auto [du, dv] = cosine_similarity_gradient<double>(u, vi, config_.epsilon);
        gu += coef * du;
        grad_s->noalias() += (coef * dv) * base_sentences.row(s.sentence_position);
      }
      grad_q->noalias() += gu * hq.transpose();
    }
    return loss;
  }

  double mean_loss(const Eigen::MatrixXd& pq, const Eigen::MatrixXd& ps, const EncodedSplit& split) const {
    if (split.pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0;
    for (const auto& p : split.pairs) total += pair(pq, ps, split.sentences[p.report], p, nullptr, nullptr);
    return total / static_cast<double>(split.pairs.size());
  }

 private:
  std::vector<Embedding> queries_;
  VerifierConfig config_;
  std::vector<double> weights_;
};

std::vector<Embedding> embed_queries(const Rubric& rubric, const TextEncoder& provider) {
  std::vector<Embedding> out;
  for (const auto& d : rubric.dimensions) out.push_back(provider.embed(d.query_text));
  return out;
}

}  // namespace

double verifier_loss(const VerifierModel& model, const Corpus& corpus, Split split) {
  const auto scores = corpus.score_index();
  const EncodedSplit data = encode_split(corpus, split, model.encoders.passage.provider(), scores);
  VerifierObjective objective(embed_queries(corpus.rubric, model.encoders.query.provider()), model.config,
                              model.positive_weights);
  return objective.mean_loss(model.encoders.query.projection(), model.encoders.passage.projection(), data);
}

VerifierTraining train_verifier(const Corpus& corpus, const VerifierEncoders& initial, const VerifierConfig& config,
                                const OptimizerConfig& optimizer) {
  if (config.k < 1) throw ConfigError("k must be at least 1");
  if (optimizer.batch_size < 1 || optimizer.epochs < 0 || !(optimizer.learning_rate > 0)) {
    throw ConfigError("invalid optimizer settings");
  }
  TrainingLog log;

  const auto scores = corpus.score_index();
  const auto weights = positive_class_weights(corpus, &log.warnings);
  const EncodedSplit train = encode_split(corpus, Split::train, initial.passage.provider(), scores);
  const EncodedSplit val = encode_split(corpus, Split::val, initial.passage.provider(), scores);
  if (train.pairs.empty()) throw ValidationError("no training reports");
  if (val.pairs.empty()) {
    log.warnings.push_back("no validation reports; model selection uses training loss");
    spdlog::warn("{}", log.warnings.back());
  }

  VerifierObjective objective(embed_queries(corpus.rubric, initial.query.provider()), config, weights);
  Eigen::MatrixXd pq = initial.query.projection();
  Eigen::MatrixXd ps = initial.passage.projection();
  Eigen::MatrixXd best_q = pq, best_s = ps;
  auto selection_loss = [&] { return objective.mean_loss(pq, ps, val.pairs.empty() ? train : val); };
  log.best_val_loss = selection_loss();

  Adam<double> adam(optimizer.learning_rate);
  std::mt19937_64 rng(optimizer.seed);
  std::vector<std::size_t> order(train.pairs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= optimizer.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(optimizer.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(optimizer.batch_size));
      std::vector<Eigen::MatrixXd> grads = {Eigen::MatrixXd::Zero(pq.rows(), pq.cols()),
                                            Eigen::MatrixXd::Zero(ps.rows(), ps.cols())};
      for (std::size_t i = start; i < end; ++i) {
        const Pair& p = train.pairs[order[i]];
        epoch_loss += objective.pair(pq, ps, train.sentences[p.report], p, &grads[0], &grads[1]);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) g *= scale;
      std::array<Eigen::MatrixXd*, 2> params = {&pq, &ps};
      adam.step(params, grads);
    }
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(order.size()), 0};
    rec.val_loss = selection_loss();
    log.epochs.push_back(rec);
    if (std::isfinite(rec.val_loss) && !(rec.val_loss >= log.best_val_loss)) {
      log.best_val_loss = rec.val_loss;
      log.best_epoch = epoch;
      best_q = pq;
      best_s = ps;
    }
  }

  VerifierModel model{VerifierEncoders{EncoderHandle(initial.query.shared_provider(), Side::query, best_q),
                                       EncoderHandle(initial.passage.shared_provider(), Side::passage, best_s)},
                      config, weights};
  return VerifierTraining{std::move(model), std::move(log)};
}

}  // namespace labgrade
