#include "labgrade/grader.hpp"

#include <array>
#include <map>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

namespace labgrade {

std::string_view to_string(GraderLoss loss) { return loss == GraderLoss::oll ? "oll" : "ce"; }
std::string_view to_string(HeadKind head) { return head == HeadKind::shared ? "shared" : "per_dimension"; }
std::string_view to_string(RelevantAggregation aggregation) {
  return aggregation == RelevantAggregation::mean_embedding ? "mean_embedding" : "concat_text";
}

GraderLoss parse_grader_loss(std::string_view text) {
  if (text == "oll") return GraderLoss::oll;
  if (text == "ce") return GraderLoss::ce;
  throw ConfigError("unknown grader loss '" + std::string(text) + "'");
}

HeadKind parse_head(std::string_view text) {
  if (text == "shared") return HeadKind::shared;
  if (text == "per_dimension") return HeadKind::per_dimension;
  throw ConfigError("unknown head kind '" + std::string(text) + "'");
}

RelevantAggregation parse_relevant_aggregation(std::string_view text) {
  if (text == "mean_embedding") return RelevantAggregation::mean_embedding;
  if (text == "concat_text") return RelevantAggregation::concat_text;
  throw ConfigError("unknown relevant-sentence aggregation '" + std::string(text) + "'");
}

int ScoreDistribution::argmax() const { return argmax(kScoreClasses - 1); }

int ScoreDistribution::argmax(int max_score) const {
  int best = 0;
  for (int i = 1; i <= std::min(max_score, kScoreClasses - 1); ++i) {
    if (probs(i) > probs(best)) best = i;
  }
  return best;
}

LinearHead LinearHead::zeros(Eigen::Index input) {
  return LinearHead{Eigen::MatrixXd::Zero(kScoreClasses, input), Eigen::VectorXd::Zero(kScoreClasses)};
}

ScoreDistribution grade(const LinearHead& head, const Eigen::VectorXd& features) {
  if (head.weight.cols() != features.size()) throw DimensionMismatch(head.weight.cols(), features.size());
  const ClassVector<double> logits = head.weight * features + head.bias;
  return ScoreDistribution{softmax(logits)};
}

ScoreDistribution grade(const Embedding& dimension, const Embedding& report, const Embedding& relevant,
                        const LinearHead& head) {
  if (report.size() != dimension.size()) throw DimensionMismatch(dimension.size(), report.size());
  if (relevant.size() != dimension.size()) throw DimensionMismatch(dimension.size(), relevant.size());
  Eigen::VectorXd features(3 * dimension.size());
  features << dimension, report, relevant;
  return grade(head, features);
}

// ---------------------------------------------------------------------------
// GraderModel

GraderModel::GraderModel(EncoderHandle query_encoder, EncoderHandle report_encoder, GraderConfig config,
                         std::vector<std::string> dimension_ids, std::vector<LinearHead> heads)
    : query_(std::move(query_encoder)),
      report_(std::move(report_encoder)),
      config_(config),
      dimension_ids_(std::move(dimension_ids)),
      heads_(std::move(heads)) {
  if (!config_.use_report && !config_.use_relevant) throw ConfigError("grader needs the report or relevant sentences");
  if (!(config_.alpha > 0)) throw ConfigError("alpha must be positive");
  if (query_.embedding_dim() != report_.embedding_dim()) {
    throw DimensionMismatch(query_.embedding_dim(), report_.embedding_dim());
  }
  const std::size_t expected = config_.head == HeadKind::shared ? 1 : dimension_ids_.size();
  if (heads_.size() != expected || expected == 0) {
    throw ConfigError("grader expects " + std::to_string(expected) + " heads, got " + std::to_string(heads_.size()));
  }
  for (const auto& h : heads_) {
    if (h.weight.rows() != kScoreClasses || h.bias.size() != kScoreClasses) throw DimensionMismatch(kScoreClasses, h.weight.rows());
    if (h.weight.cols() != input_size()) throw DimensionMismatch(input_size(), h.weight.cols());
  }
}

GraderModel GraderModel::initial(std::shared_ptr<const TextEncoder> provider, const GraderConfig& config,
                                 const Rubric& rubric, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& d : rubric.dimensions) ids.push_back(d.id);
  const std::size_t n_heads = config.head == HeadKind::shared ? 1 : ids.size();
  const Eigen::Index input = config.slots() * provider->dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  std::vector<LinearHead> heads;
  for (std::size_t h = 0; h < n_heads; ++h) {
    LinearHead head = LinearHead::zeros(input);
    for (Eigen::Index c = 0; c < head.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < head.weight.rows(); ++r) head.weight(r, c) = normal(rng);
    }
    heads.push_back(std::move(head));
  }
  return GraderModel(EncoderHandle(provider, Side::query), EncoderHandle(provider, Side::passage), config,
                     std::move(ids), std::move(heads));
}

std::size_t GraderModel::head_index(std::string_view dimension_id) const {
  if (config_.head == HeadKind::shared) return 0;
  for (std::size_t i = 0; i < dimension_ids_.size(); ++i) {
    if (dimension_ids_[i] == dimension_id) return i;
  }
  throw UnknownDimension(std::string(dimension_id));
}

const LinearHead& GraderModel::head_for(std::string_view dimension_id) const { return heads_[head_index(dimension_id)]; }

namespace {

Embedding relevant_embedding(const TextEncoder& provider, const Report& report, std::span<const int> positions,
                             RelevantAggregation aggregation) {
  if (positions.empty()) throw ValidationError("grader needs at least one relevant sentence");
  for (int p : positions) {
    if (p < 0 || p >= static_cast<int>(report.sentences.size())) {
      throw ValidationError("relevant position " + std::to_string(p) + " outside report '" + report.id + "'");
    }
  }
  if (aggregation == RelevantAggregation::mean_embedding) {
    Embedding sum = Embedding::Zero(provider.dim());
    for (int p : positions) sum += provider.embed(report.sentences[p].text);
    return sum / static_cast<double>(positions.size());
  }
  std::vector<int> ordered(positions.begin(), positions.end());
  std::sort(ordered.begin(), ordered.end());
  std::string text;
  for (int p : ordered) {
    if (!text.empty()) text += ' ';
    text += report.sentences[p].text;
  }
  return provider.embed(text);
}

}  // namespace

Embedding GraderModel::relevant_base(const Report& report, std::span<const int> positions) const {
  return relevant_embedding(report_.provider(), report, positions, config_.relevant);
}

ScoreDistribution GraderModel::grade(const Report& report, const RubricDimension& dimension,
                                     std::span<const int> relevant_positions) const {
  const LinearHead& head = head_for(dimension.id);
  const Eigen::Index d = report_.embedding_dim();
  Eigen::VectorXd features(input_size());
  Eigen::Index offset = 0;
  features.segment(offset, d) = encode(query_, dimension.query_text);
  offset += d;
  if (config_.use_report) {
    features.segment(offset, d) = encode_report(report_, report, config_.report_strategy, config_.window_stride);
    offset += d;
  }
  if (config_.use_relevant) features.segment(offset, d) = report_.project(relevant_base(report, relevant_positions));
  return labgrade::grade(head, features);
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct GraderExample {
  std::size_t dimension;
  std::size_t head;
  std::size_t report;  // index into report embeddings
  Embedding relevant;  // provider-level; empty when unused
  int label;
};

struct GraderData {
  std::vector<Embedding> queries;  // provider-level, per dimension
  std::vector<Embedding> reports;  // provider-level, per report
  std::vector<GraderExample> examples;
};

GraderData prepare(const Corpus& corpus, Split split, const GraderModel& model, const SentenceSelector& selector) {
  const auto scores = corpus.score_index();
  const auto& provider = model.report_encoder().provider();
  const auto& config = model.config();
  GraderData data;
  for (const auto& d : corpus.rubric.dimensions) data.queries.push_back(model.query_encoder().provider().embed(d.query_text));
  for (const Report* r : corpus.reports_in(split)) {
    const std::size_t index = data.reports.size();
    data.reports.push_back(config.use_report ? embed_report(provider, *r, config.report_strategy, config.window_stride)
                                             : Embedding());
    for (std::size_t m = 0; m < corpus.rubric.size(); ++m) {
      const auto& dim = corpus.rubric.dimensions[m];
      auto it = scores.find({r->id, dim.id});
      if (it == scores.end()) throw ValidationError("report '" + r->id + "' has no score for dimension '" + dim.id + "'");
      GraderExample ex{m, model.head_index(dim.id), index, Embedding(), it->second};
      if (config.use_relevant) {
        const auto positions = selector(*r, m);
        ex.relevant = model.relevant_base(*r, positions);
      }
      data.examples.push_back(std::move(ex));
    }
  }
  return data;
}

// Parameters laid out as [Q, R, W_0, b_0, W_1, b_1, ...].
struct Parameters {
  std::vector<Eigen::MatrixXd> blocks;

  explicit Parameters(const GraderModel& model) {
    blocks.push_back(model.query_encoder().projection());
    blocks.push_back(model.report_encoder().projection());
    for (const auto& h : model.heads()) {
      blocks.push_back(h.weight);
      blocks.push_back(Eigen::MatrixXd(h.bias));
    }
  }

  const Eigen::MatrixXd& query() const { return blocks[0]; }
  const Eigen::MatrixXd& report() const { return blocks[1]; }
  const Eigen::MatrixXd& weight(std::size_t h) const { return blocks[2 + 2 * h]; }
  const Eigen::MatrixXd& bias(std::size_t h) const { return blocks[3 + 2 * h]; }
};

class GraderObjective {
 public:
  explicit GraderObjective(const GraderConfig& config) : config_(config) {}

  double example(const Parameters& params, const GraderData& data, const GraderExample& ex,
                 std::vector<Eigen::MatrixXd>* grads) const {
    const Eigen::MatrixXd& q = params.query();
    const Eigen::MatrixXd& r = params.report();
    const Eigen::Index d = r.rows();
    Eigen::VectorXd x(config_.slots() * d);
    Eigen::Index offset = 0;
    const Embedding& hq = data.queries[ex.dimension];
    x.segment(offset, d) = q * hq;
    offset += d;
    const Embedding* hr = config_.use_report ? &data.reports[ex.report] : nullptr;
    if (hr) {
      x.segment(offset, d) = r * *hr;
      offset += d;
    }
    if (config_.use_relevant) x.segment(offset, d) = r * ex.relevant;

    const Eigen::MatrixXd& w = params.weight(ex.head);
    const ClassVector<double> logits = w * x + params.bias(ex.head);
    const ClassVector<double> p = softmax(logits);
    const bool oll = config_.loss == GraderLoss::oll;
    const double loss = oll ? oll_loss(p, ex.label, config_.alpha) : ce_loss(p, ex.label);
    if (grads) {
      const ClassVector<double> dp = oll ? oll_gradient(p, ex.label, config_.alpha) : ce_gradient(p, ex.label);
      const ClassVector<double> dz = softmax_backward(p, dp);
      auto& gw = (*grads)[2 + 2 * ex.head];
      gw.noalias() += dz * x.transpose();
      (*grads)[3 + 2 * ex.head] += dz;
      const Eigen::VectorXd dx = w.transpose() * dz;
      offset = 0;
      (*grads)[0].noalias() += dx.segment(0, d) * hq.transpose();
      offset += d;
      if (hr) {
        (*grads)[1].noalias() += dx.segment(offset, d) * hr->transpose();
        offset += d;
      }
      if (config_.use_relevant) (*grads)[1].noalias() += dx.segment(offset, d) * ex.relevant.transpose();
    }
    return loss;
  }

  double mean_loss(const Parameters& params, const GraderData& data) const {
    if (data.examples.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0;
    for (const auto& ex : data.examples) total += example(params, data, ex, nullptr);
    return total / static_cast<double>(data.examples.size());
  }

 private:
  GraderConfig config_;
};

GraderModel rebuild(const GraderModel& like, const Parameters& params) {
  std::vector<LinearHead> heads;
  for (std::size_t h = 0; h < like.heads().size(); ++h) {
    heads.push_back(LinearHead{params.weight(h), Eigen::VectorXd(params.bias(h))});
  }
  return GraderModel(EncoderHandle(like.query_encoder().shared_provider(), Side::query, params.query()),
                     EncoderHandle(like.report_encoder().shared_provider(), Side::passage, params.report()),
                     like.config(), like.dimension_ids(), std::move(heads));
}

}  // namespace

double grader_loss(const GraderModel& model, const Corpus& corpus, Split split, const SentenceSelector& selector) {
  const GraderData data = prepare(corpus, split, model, selector);
  return GraderObjective(model.config()).mean_loss(Parameters(model), data);
}

GraderTraining train_grader(const Corpus& corpus, const GraderModel& initial, const SentenceSelector& selector,
                            const OptimizerConfig& optimizer) {
  if (optimizer.batch_size < 1 || optimizer.epochs < 0 || !(optimizer.learning_rate > 0)) {
    throw ConfigError("invalid optimizer settings");
  }
  TrainingLog log;
  const GraderData train = prepare(corpus, Split::train, initial, selector);
  const GraderData val = prepare(corpus, Split::val, initial, selector);
  if (train.examples.empty()) throw ValidationError("no training reports");
  if (val.examples.empty()) {
    log.warnings.push_back("no validation reports; model selection uses training loss");
    spdlog::warn("{}", log.warnings.back());
  }
  const GraderObjective objective(initial.config());
  Parameters params(initial);
  Parameters best = params;
  auto selection_loss = [&] { return objective.mean_loss(params, val.examples.empty() ? train : val); };
  log.best_val_loss = selection_loss();

  Adam<double> adam(optimizer.learning_rate);
  std::vector<Eigen::MatrixXd*> pointers;
  for (auto& b : params.blocks) pointers.push_back(&b);
  std::mt19937_64 rng(optimizer.seed);
  std::vector<std::size_t> order(train.examples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= optimizer.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(optimizer.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(optimizer.batch_size));
      std::vector<Eigen::MatrixXd> grads;
      for (const auto& b : params.blocks) grads.push_back(Eigen::MatrixXd::Zero(b.rows(), b.cols()));
      for (std::size_t i = start; i < end; ++i) epoch_loss += objective.example(params, train, train.examples[order[i]], &grads);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) g *= scale;
      adam.step(pointers, grads);
    }
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(order.size()), selection_loss()};
    log.epochs.push_back(rec);
    if (std::isfinite(rec.val_loss) && !(rec.val_loss >= log.best_val_loss)) {
      log.best_val_loss = rec.val_loss;
      log.best_epoch = epoch;
      best = params;
    }
  }
  return GraderTraining{rebuild(initial, best), std::move(log)};
}

}  // namespace labgrade
