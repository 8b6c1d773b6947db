#include "labgrade/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

namespace labgrade {

int total_score(const Rubric& rubric, const std::map<std::string, int>& scores_by_dimension) {
  int total = 0;
  for (const auto& d : rubric.dimensions) {
    auto it = scores_by_dimension.find(d.id);
    if (it == scores_by_dimension.end()) throw IncompleteReport("no score for dimension '" + d.id + "'");
    total += it->second;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Agreement

double krippendorff_alpha_interval(const Eigen::MatrixXd& ratings) {
  // Centre on the mean of all present values; alpha is shift invariant and
  // this keeps the sums of squares well conditioned.
  double shift = 0;
  long present = 0;
  for (Eigen::Index i = 0; i < ratings.size(); ++i) {
    const double v = ratings.data()[i];
    if (!std::isnan(v)) {
      shift += v;
      ++present;
    }
  }
  if (present > 0) shift /= static_cast<double>(present);

  double n = 0, sum = 0, sum_sq = 0, observed = 0;
  for (Eigen::Index u = 0; u < ratings.cols(); ++u) {
    double m = 0, s = 0, s2 = 0;
    for (Eigen::Index r = 0; r < ratings.rows(); ++r) {
      const double v = ratings(r, u);
      if (std::isnan(v)) continue;
      const double c = v - shift;
      m += 1;
      s += c;
      s2 += c * c;
    }
    if (m < 2) continue;
    observed += 2 * (m * s2 - s * s) / (m - 1);
    n += m;
    sum += s;
    sum_sq += s2;
  }
  if (n < 2) throw ValidationError("alpha needs at least one item rated by two raters");
  const double d_o = observed / n;
  const double d_e = 2 * (n * sum_sq - sum * sum) / (n * (n - 1));
  if (d_e <= 0) return 1.0;
  return 1.0 - d_o / d_e;
}

double masi_distance(const std::set<int>& a, const std::set<int>& b) {
  if (a == b) return 0.0;
  std::vector<int> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  if (common.empty()) return 1.0;
  const double jaccard = static_cast<double>(common.size()) / static_cast<double>(a.size() + b.size() - common.size());
  const bool nested = common.size() == a.size() || common.size() == b.size();
  const double monotonicity = nested ? 2.0 / 3.0 : 1.0 / 3.0;
  return 1.0 - jaccard * monotonicity;
}

double krippendorff_alpha_sets(const std::vector<std::vector<std::optional<std::set<int>>>>& units) {
  // Coincidence matrix over the distinct set values.
  std::vector<std::set<int>> values;
  auto value_index = [&](const std::set<int>& v) {
    auto it = std::find(values.begin(), values.end(), v);
    if (it != values.end()) return static_cast<std::size_t>(it - values.begin());
    values.push_back(v);
    return values.size() - 1;
  };
  std::vector<std::vector<std::size_t>> coded;
  for (const auto& unit : units) {
    std::vector<std::size_t> present;
    for (const auto& v : unit) {
      if (v) present.push_back(value_index(*v));
    }
    if (present.size() >= 2) coded.push_back(std::move(present));
  }
  if (coded.empty()) throw ValidationError("alpha needs at least one item annotated by two raters");

  const std::size_t c = values.size();
  Eigen::MatrixXd coincidence = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
  for (const auto& unit : coded) {
    const double weight = 1.0 / static_cast<double>(unit.size() - 1);
    for (std::size_t i = 0; i < unit.size(); ++i) {
      for (std::size_t j = 0; j < unit.size(); ++j) {
        if (i != j) coincidence(static_cast<Eigen::Index>(unit[i]), static_cast<Eigen::Index>(unit[j])) += weight;
      }
    }
  }
  Eigen::MatrixXd delta(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) delta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = masi_distance(values[i], values[j]);
  }
  const Eigen::VectorXd marginals = coincidence.rowwise().sum();
  const double n = marginals.sum();
  const double d_o = coincidence.cwiseProduct(delta).sum() / n;
  const double d_e = (marginals * marginals.transpose()).cwiseProduct(delta).sum() / (n * (n - 1));
  if (d_e <= 0) return 1.0;
  return 1.0 - d_o / d_e;
}

double masi_alpha(std::span<const SentenceSelection> selections) {
  std::vector<std::string> raters;
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::set<int>>> items;
  for (const auto& s : selections) {
    if (std::find(raters.begin(), raters.end(), s.rater_id) == raters.end()) raters.push_back(s.rater_id);
    auto& item = items[{s.report_id, s.dimension_id}];
    if (!item.emplace(s.rater_id, s.positions).second) {
      throw ValidationError("rater '" + s.rater_id + "' has two selections for report '" + s.report_id +
                            "' dimension '" + s.dimension_id + "'");
    }
  }
  if (raters.size() < 2) throw ValidationError("agreement needs at least two raters");
  std::vector<std::vector<std::optional<std::set<int>>>> units;
  for (const auto& [key, by_rater] : items) {
    std::vector<std::optional<std::set<int>>> unit;
    for (const auto& r : raters) {
      auto it = by_rater.find(r);
      unit.push_back(it == by_rater.end() ? std::nullopt : std::optional<std::set<int>>(it->second));
    }
    units.push_back(std::move(unit));
  }
  return krippendorff_alpha_sets(units);
}

// ---------------------------------------------------------------------------
// Rank correlation

Eigen::VectorXd average_ranks(const Eigen::VectorXd& values) {
  const auto n = static_cast<std::size_t>(values.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values(a) < values(b); });
  Eigen::VectorXd ranks(values.size());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values(order[j + 1]) == values(order[i])) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks(order[t]) = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ValidationError("spearman inputs differ in length");
  if (a.size() < 2) return std::nullopt;
  const Eigen::VectorXd ra = average_ranks(a);
  const Eigen::VectorXd rb = average_ranks(b);
  const Eigen::VectorXd ca = ra.array() - ra.mean();
  const Eigen::VectorXd cb = rb.array() - rb.mean();
  const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  if (denom == 0) return std::nullopt;
  return std::clamp(ca.dot(cb) / denom, -1.0, 1.0);
}

SpearmanSummary per_dimension_spearman(std::span<const Eigen::VectorXd> predictions,
                                       std::span<const Eigen::VectorXd> truths) {
  if (predictions.size() != truths.size()) throw ValidationError("prediction and truth report counts differ");
  SpearmanSummary out;
  std::vector<double> values;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto rho = spearman(predictions[i], truths[i]);
    if (!rho) {
      ++out.skipped;
      continue;
    }
    values.push_back(*rho);
  }
  if (values.empty()) throw UndefinedMetric("spearman undefined: every report has a constant score vector");
  if (out.skipped > 0) spdlog::debug("spearman skipped {} report(s) with constant score vectors", out.skipped);
  out.used = static_cast<int>(values.size());
  const Eigen::Map<const Eigen::VectorXd> v(values.data(), static_cast<Eigen::Index>(values.size()));
  out.mean = v.mean();
  out.sd = std::sqrt((v.array() - out.mean).square().mean());
  return out;
}

// ---------------------------------------------------------------------------
// Binary decisions

BinaryMetrics verifier_binary_metrics(const std::vector<bool>& decisions, const std::vector<bool>& labels) {
  if (decisions.size() != labels.size()) throw ValidationError("decision and label counts differ");
  if (decisions.empty()) throw ValidationError("binary metrics need at least one item");
  BinaryMetrics m;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i]) {
      (labels[i] ? m.tp : m.fp) += 1;
    } else {
      (labels[i] ? m.fn : m.tn) += 1;
    }
  }
  const auto total = static_cast<double>(decisions.size());
  m.accuracy = static_cast<double>(m.tp + m.tn) / total;
  m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

double majority_baseline(const std::vector<bool>& labels) {
  if (labels.empty()) throw ValidationError("majority baseline needs labels");
  const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const auto n = static_cast<double>(labels.size());
  return std::max(positives, n - positives) / n;
}

// ---------------------------------------------------------------------------
// Bootstrap

Interval bootstrap_ci(const std::function<double(std::span<const std::size_t>)>& metric, std::size_t n_units,
                      int n_resamples, std::uint64_t seed, double level) {
  if (n_resamples < 100) throw ValidationError("bootstrap needs at least 100 resamples");
  if (n_units == 0) throw ValidationError("bootstrap needs at least one unit");
  if (!(level > 0 && level < 1)) throw ValidationError("confidence level must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n_units - 1);
  std::vector<std::size_t> sample(n_units);
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(n_resamples));
  for (int b = 0; b < n_resamples; ++b) {
    for (auto& s : sample) s = pick(rng);
    const double value = metric(sample);
    if (std::isfinite(value)) stats.push_back(value);
  }
  if (stats.empty()) throw UndefinedMetric("bootstrap produced no finite statistics");
  std::sort(stats.begin(), stats.end());
  auto quantile = [&](double q) {
    const double h = q * static_cast<double>(stats.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, stats.size() - 1);
    return stats[lo] + (h - static_cast<double>(lo)) * (stats[hi] - stats[lo]);
  };
  const double tail = (1 - level) / 2;
  return Interval{quantile(tail), quantile(1 - tail)};
}

// ---------------------------------------------------------------------------
// Evaluation report

void PredictionSet::validate() const {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& e : entries) {
    const auto dim = rubric.find(e.dimension_id);
    if (!dim) throw UnknownDimension(e.dimension_id);
    const int max_score = rubric.dimensions[*dim].max_score;
    if (e.predicted < 0 || e.predicted > max_score || e.truth < 0 || e.truth > max_score) {
      throw ValidationError("prediction for report '" + e.report_id + "' dimension '" + e.dimension_id + "' out of range");
    }
    if (!seen.insert({e.report_id, e.dimension_id}).second) {
      throw ValidationError("duplicate prediction for report '" + e.report_id + "' dimension '" + e.dimension_id + "'");
    }
  }
}

namespace {

struct ReportRows {
  std::vector<std::string> ids;
  // [report][dimension]
  std::vector<Eigen::VectorXd> predicted, truth;
  Eigen::VectorXd predicted_total, truth_total;
};

ReportRows by_report(const PredictionSet& set) {
  ReportRows rows;
  std::map<std::string, std::size_t> index;
  std::vector<std::map<std::string, int>> pred, truth;
  for (const auto& e : set.entries) {
    auto [it, fresh] = index.emplace(e.report_id, rows.ids.size());
    if (fresh) {
      rows.ids.push_back(e.report_id);
      pred.emplace_back();
      truth.emplace_back();
    }
    pred[it->second][e.dimension_id] = e.predicted;
    truth[it->second][e.dimension_id] = e.truth;
  }
  const auto n = static_cast<Eigen::Index>(rows.ids.size());
  const auto d = static_cast<Eigen::Index>(set.rubric.size());
  rows.predicted_total.resize(n);
  rows.truth_total.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    try {
      rows.predicted_total(r) = total_score(set.rubric, pred[r]);
      rows.truth_total(r) = total_score(set.rubric, truth[r]);
    } catch (const IncompleteReport& e) {
      throw IncompleteReport("report '" + rows.ids[r] + "': " + e.what());
    }
    Eigen::VectorXd p(d), t(d);
    for (Eigen::Index m = 0; m < d; ++m) {
      p(m) = pred[r].at(set.rubric.dimensions[m].id);
      t(m) = truth[r].at(set.rubric.dimensions[m].id);
    }
    rows.predicted.push_back(std::move(p));
    rows.truth.push_back(std::move(t));
  }
  return rows;
}

double pair_alpha(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::MatrixXd m(2, a.size());
  m.row(0) = a.transpose();
  m.row(1) = b.transpose();
  return krippendorff_alpha_interval(m);
}

}  // namespace

EvaluationReport evaluate_predictions(const PredictionSet& set, const EvaluationOptions& options) {
  set.validate();
  if (set.entries.empty()) throw ValidationError("no predictions to evaluate");
  const ReportRows rows = by_report(set);
  const double total_max = set.rubric.total_max();
  const double dim_max = set.rubric.dimensions.front().max_score;

  EvaluationReport out;
  out.n_reports = static_cast<int>(rows.ids.size());
  out.total_mse = mse(rows.predicted_total, rows.truth_total);
  out.total_alpha_interval = pair_alpha(rows.predicted_total, rows.truth_total);
  out.total_weighted_acc = weighted_accuracy(rows.predicted_total, rows.truth_total, total_max, options.reading);

  Eigen::VectorXd all_pred(static_cast<Eigen::Index>(set.entries.size())), all_truth(all_pred.size());
  for (std::size_t i = 0; i < set.entries.size(); ++i) {
    all_pred(static_cast<Eigen::Index>(i)) = set.entries[i].predicted;
    all_truth(static_cast<Eigen::Index>(i)) = set.entries[i].truth;
  }
  out.dimension_weighted_acc = weighted_accuracy(all_pred, all_truth, dim_max, options.reading);

  try {
    const auto rho = per_dimension_spearman(rows.predicted, rows.truth);
    out.per_dim_spearman_mean = rho.mean;
    out.per_dim_spearman_sd = rho.sd;
    out.spearman_skipped = rho.skipped;
  } catch (const UndefinedMetric&) {
    out.per_dim_spearman_mean = std::numeric_limits<double>::quiet_NaN();
    out.per_dim_spearman_sd = std::numeric_limits<double>::quiet_NaN();
    out.spearman_skipped = out.n_reports;
  }

  double alpha_sum = 0;
  for (std::size_t m = 0; m < set.rubric.size(); ++m) {
    Eigen::VectorXd p(out.n_reports), t(out.n_reports);
    for (int r = 0; r < out.n_reports; ++r) {
      p(r) = rows.predicted[r](static_cast<Eigen::Index>(m));
      t(r) = rows.truth[r](static_cast<Eigen::Index>(m));
    }
    alpha_sum += out.n_reports >= 1 ? pair_alpha(p, t) : 1.0;
  }
  out.per_dim_alpha_mean = alpha_sum / static_cast<double>(set.rubric.size());

  std::vector<bool> decisions, labels;
  std::map<std::string, std::pair<std::vector<bool>, std::vector<bool>>> per_dim;
  for (const auto& e : set.entries) {
    decisions.push_back(e.decision);
    labels.push_back(e.truth > 0);
    per_dim[e.dimension_id].first.push_back(e.decision);
    per_dim[e.dimension_id].second.push_back(e.truth > 0);
  }
  const BinaryMetrics overall = verifier_binary_metrics(decisions, labels);
  out.verifier_accuracy = overall.accuracy;
  out.verifier_precision = overall.precision;
  out.verifier_recall = overall.recall;
  out.verifier_f1 = overall.f1;
  out.verifier_majority_baseline = majority_baseline(labels);
  for (const auto& d : set.rubric.dimensions) {
    auto it = per_dim.find(d.id);
    if (it == per_dim.end()) continue;
    out.verifier_by_dimension.push_back(DimensionVerifierRow{
        d.id, majority_baseline(it->second.second), verifier_binary_metrics(it->second.first, it->second.second)});
  }

  if (options.bootstrap_resamples > 0) {
    auto resampled = [&](std::span<const std::size_t> idx, auto&& fn) {
      Eigen::VectorXd p(static_cast<Eigen::Index>(idx.size())), t(p.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        p(static_cast<Eigen::Index>(i)) = rows.predicted_total(static_cast<Eigen::Index>(idx[i]));
        t(static_cast<Eigen::Index>(i)) = rows.truth_total(static_cast<Eigen::Index>(idx[i]));
      }
      return fn(p, t);
    };
    const auto n = rows.ids.size();
    out.confidence_intervals["total_mse"] = bootstrap_ci(
        [&](auto idx) { return resampled(idx, [](const auto& p, const auto& t) { return mse(p, t); }); }, n,
        options.bootstrap_resamples, options.seed);
    out.confidence_intervals["total_alpha_interval"] = bootstrap_ci(
        [&](auto idx) { return resampled(idx, [](const auto& p, const auto& t) { return pair_alpha(p, t); }); }, n,
        options.bootstrap_resamples, options.seed);
    out.confidence_intervals["total_weighted_acc"] = bootstrap_ci(
        [&](auto idx) {
          return resampled(idx, [&](const auto& p, const auto& t) {
            return weighted_accuracy(p, t, total_max, options.reading);
          });
        },
        n, options.bootstrap_resamples, options.seed);
  }
  return out;
}

namespace {

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json binary_json(const BinaryMetrics& m) {
  return {{"accuracy", number(m.accuracy)}, {"precision", number(m.precision)}, {"recall", number(m.recall)},
          {"f1", number(m.f1)},             {"tp", m.tp},                       {"fp", m.fp},
          {"fn", m.fn},                     {"tn", m.tn}};
}

}  // namespace

std::string to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["n_reports"] = r.n_reports;
  j["total_mse"] = number(r.total_mse);
  j["total_alpha_interval"] = number(r.total_alpha_interval);
  j["total_weighted_acc"] = number(r.total_weighted_acc);
  j["dimension_weighted_acc"] = number(r.dimension_weighted_acc);
  j["per_dim_spearman_mean"] = number(r.per_dim_spearman_mean);
  j["per_dim_spearman_sd"] = number(r.per_dim_spearman_sd);
  j["spearman_skipped_reports"] = r.spearman_skipped;
  j["per_dim_alpha_mean"] = number(r.per_dim_alpha_mean);
  j["verifier_accuracy"] = number(r.verifier_accuracy);
  j["verifier_precision"] = number(r.verifier_precision);
  j["verifier_recall"] = number(r.verifier_recall);
  j["verifier_f1"] = number(r.verifier_f1);
  j["verifier_majority_baseline"] = number(r.verifier_majority_baseline);
  for (const auto& [name, ci] : r.confidence_intervals) {
    j[name + "_ci_low"] = number(ci.low);
    j[name + "_ci_high"] = number(ci.high);
  }
  auto rows = nlohmann::json::array();
  for (const auto& row : r.verifier_by_dimension) {
    auto entry = binary_json(row.metrics);
    entry["dimension"] = row.dimension_id;
    entry["majority_baseline"] = number(row.majority_baseline);
    rows.push_back(std::move(entry));
  }
  j["verifier_by_dimension"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string predictions_csv(const PredictionSet& set) {
  std::ostringstream out;
  out << "report_id,dimension_id,predicted,truth\n";
  for (const auto& e : set.entries) out << e.report_id << ',' << e.dimension_id << ',' << e.predicted << ',' << e.truth << '\n';
  return out.str();
}

}  // namespace labgrade
