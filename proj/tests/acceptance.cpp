// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "labgrade/pipeline.hpp"
#include "oracles.hpp"

using namespace labgrade;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool condition, const std::string& what) {
    if (!condition) {
      if (ok) detail << "failed: ";
      detail << what << "; ";
      ok = false;
    }
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream s;
    s << what << " = " << got << " (want " << want << " +- " << tol << ")";
    expect(std::abs(got - want) <= tol, s.str());
  }
};

int failures = 0;

void report(const std::string& name, const Check& c, const std::string& summary) {
  if (!c.ok) ++failures;
  std::printf("%s %s: %s%s\n", c.ok ? "PASS" : "FAIL", name.c_str(), summary.c_str(),
              c.ok ? "" : (" | " + c.detail.str()).c_str());
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------

void formula_oracles() {
  const auto start = Clock::now();
  Check c;
  c.near(cosine_similarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1)), 0.70711, 1e-5, "cosine");
  c.near(relevance_probability(0.6), 0.73106, 1e-5, "relevance(0.6)");
  c.near(relevance_probability(1.0), 0.99331, 1e-5, "relevance(1.0)");
  c.near(weighted_bce_loss(0.5, 1, 1.0), 0.69315, 1e-5, "bce(0.5)");
  const ClassVector<double> u = ClassVector<double>::Constant(1.0 / 6);
  c.near(oll_loss(u, 0, 1.0), 2.73483, 1e-4, "oll uniform alpha 1");
  c.near(oll_loss(u, 0, 2.0), 10.0277, 1e-3, "oll uniform alpha 2");
  for (int y = 0; y < 6; ++y) c.near(ce_loss(u, y), 1.79176, 1e-5, "ce uniform");
  Eigen::VectorXd p(1), t(1);
  p << 30;
  t << 35;
  c.near(weighted_accuracy(p, t, 35), 0.85714, 1e-5, "weighted accuracy");
  Rubric rubric{"r", {}};
  std::map<std::string, int> scores;
  const int values[] = {1, 2, 3, 4, 5, 0, 1};
  for (int m = 1; m <= 7; ++m) {
    rubric.dimensions.push_back({"d" + std::to_string(m), m, "q", 5, DimensionMode::scored});
    scores["d" + std::to_string(m)] = values[m - 1];
  }
  c.expect(total_score(rubric, scores) == 16, "total");
  c.near(mse(Eigen::Vector2d(1, 3), Eigen::Vector2d(2, 5)), 2.5, 1e-12, "mse");
  c.near(masi_distance({1, 2}, {1}), 2.0 / 3, 1e-12, "masi");
  std::vector<bool> pred, gold;
  auto add = [&](bool a, bool b, int n) {
    for (int i = 0; i < n; ++i) pred.push_back(a), gold.push_back(b);
  };
  add(true, true, 2);
  add(true, false, 1);
  add(false, true, 1);
  add(false, false, 6);
  const auto bm = verifier_binary_metrics(pred, gold);
  c.near(bm.precision, 2.0 / 3, 1e-12, "precision");
  c.near(bm.recall, 2.0 / 3, 1e-12, "recall");
  c.near(bm.f1, 2.0 / 3, 1e-12, "f1");
  c.near(bm.accuracy, 0.8, 1e-12, "accuracy");
  const double elapsed = seconds_since(start);
  c.expect(elapsed < 10, "took " + std::to_string(elapsed) + " s");
  report("formula-oracles", c, "frozen values within tolerance in " + std::to_string(elapsed) + " s");
}

void gradient_checks() {
  Check c;
  std::mt19937_64 rng(101);
  std::normal_distribution<double> normal(0, 1);
  const double h = 1e-6;
  int oll_points = 0, bce_points = 0;
  double worst = 0;
  for (int t = 0; t < 10; ++t) {
    ClassVector<double> z;
    for (int i = 0; i < 6; ++i) z(i) = normal(rng);
    const int y = static_cast<int>(rng() % 6);
    const double alpha = 1.0 + 0.5 * static_cast<double>(rng() % 5);
    const ClassVector<double> g = softmax_backward(softmax(z), oll_gradient(softmax(z), y, alpha));
    for (int i = 0; i < 6; ++i) {
      ClassVector<double> zp = z, zm = z;
      zp(i) += h;
      zm(i) -= h;
      const double numeric = (oll_loss(softmax(zp), y, alpha) - oll_loss(softmax(zm), y, alpha)) / (2 * h);
      const double rel = std::abs(g(i) - numeric) / std::max(std::abs(numeric), 1e-6);
      worst = std::max(worst, rel);
      ++oll_points;
    }
  }
  std::uniform_real_distribution<double> prob(0.02, 0.98), weight(0.05, 20);
  for (int t = 0; t < 15; ++t) {
    const double p = prob(rng), w = weight(rng);
    for (int y : {0, 1}) {
      const double numeric = (weighted_bce_loss(p + h, y, w) - weighted_bce_loss(p - h, y, w)) / (2 * h);
      const double rel = std::abs(weighted_bce_gradient(p, y, w) - numeric) / std::max(std::abs(numeric), 1e-6);
      worst = std::max(worst, rel);
      ++bce_points;
    }
  }
  c.expect(oll_points >= 20 && bce_points >= 20, "too few points");
  c.expect(worst < 1e-4, "max relative error " + std::to_string(worst));
  std::ostringstream s;
  s << oll_points << " OLL and " << bce_points << " BCE points, max relative error " << worst;
  report("gradient-checks", c, s.str());
}

void metric_oracles() {
  const auto start = Clock::now();
  Check c;
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> raters(2, 4), items(5, 30), score(0, 5), pos(0, 6), set_size(0, 3);
  std::bernoulli_distribution missing(0.15), coin(0.45);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const int nr = raters(rng), ni = items(rng);
    Eigen::MatrixXd m(nr, ni);
    std::vector<std::vector<std::optional<double>>> units(ni);
    std::vector<std::vector<std::optional<std::set<int>>>> set_units(ni);
    for (int i = 0; i < ni; ++i) {
      for (int r = 0; r < nr; ++r) {
        const bool gap = missing(rng);
        m(r, i) = gap ? std::nan("") : score(rng);
        units[i].push_back(gap ? std::nullopt : std::optional<double>(m(r, i)));
        if (missing(rng)) {
          set_units[i].push_back(std::nullopt);
        } else {
          std::set<int> s;
          for (int k = set_size(rng); k > 0; --k) s.insert(pos(rng));
          set_units[i].push_back(s);
        }
      }
    }
    worst = std::max(worst, std::abs(krippendorff_alpha_interval(m) - oracle::alpha_pairwise(units, oracle::squared)));
    worst = std::max(worst, std::abs(krippendorff_alpha_sets(set_units) - oracle::alpha_pairwise(set_units, oracle::masi)));

    Eigen::VectorXd a(ni), b(ni);
    for (int i = 0; i < ni; ++i) a(i) = score(rng), b(i) = score(rng);
    const auto rho = spearman(a, b);
    const auto want = oracle::spearman({a.data(), a.data() + ni}, {b.data(), b.data() + ni});
    c.expect(rho.has_value() == want.has_value(), "spearman definedness");
    if (rho && want) worst = std::max(worst, std::abs(*rho - *want));

    std::vector<bool> pred, gold;
    for (int i = 0; i < ni; ++i) pred.push_back(coin(rng)), gold.push_back(coin(rng));
    const auto got = verifier_binary_metrics(pred, gold);
    const auto ref = oracle::micro_prf(pred, gold);
    for (double d : {got.precision - ref.precision, got.recall - ref.recall, got.f1 - ref.f1, got.accuracy - ref.accuracy}) {
      worst = std::max(worst, std::abs(d));
    }
  }
  const double elapsed = seconds_since(start);
  c.expect(worst <= 1e-9, "max deviation " + std::to_string(worst));
  c.expect(elapsed < 60, "took " + std::to_string(elapsed) + " s");
  std::ostringstream s;
  s << "100 instances each, max deviation " << worst << ", " << elapsed << " s";
  report("metric-oracles", c, s.str());
}

void invariants(const Checkpoint& ck, const Corpus& corpus) {
  Check c;
  double previous = -1;
  for (int i = 0; i < 100; ++i) {
    const double p = relevance_probability(-1.0 + 2.0 * i / 99);
    c.expect(p > previous, "probability not monotone");
    previous = p;
  }

  std::mt19937_64 rng(303);
  std::normal_distribution<double> normal(0, 3);
  std::uniform_real_distribution<double> peak(0.3, 0.95);
  for (int t = 0; t < 100; ++t) {
    ClassVector<double> z;
    for (int i = 0; i < 6; ++i) z(i) = normal(rng);
    const auto p = softmax(z);
    const int y = static_cast<int>(rng() % 6);
    c.expect(oll_loss(p, y, 1.0) < oll_loss(p, y, 2.0) && oll_loss(p, y, 2.0) < oll_loss(p, y, 3.0), "oll alpha monotone");
    const double mass = peak(rng);
    double last = -1;
    for (int j = y; j < 6; ++j) {
      ClassVector<double> q = ClassVector<double>::Constant((1 - mass) / 5);
      q(j) = mass;
      const double loss = oll_loss(q, y, 1.5);
      c.expect(loss > last, "oll distance sensitivity");
      last = loss;
    }
  }

  for (int t = 0; t < 1000; ++t) {
    ClassVector<double> z;
    for (int i = 0; i < 6; ++i) z(i) = 10 * normal(rng);
    const auto p = softmax(z);
    c.expect(std::abs(p.sum() - 1) < 1e-12 && p.minCoeff() >= 0, "softmax normalization");
  }

  std::uniform_int_distribution<int> score(0, 5);
  for (int t = 0; t < 50; ++t) {
    Eigen::MatrixXd m(3, 20);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = score(rng);
    const double a = 0.25 + t, b = 7.0 - t;
    c.expect(std::abs(krippendorff_alpha_interval(m) - krippendorff_alpha_interval((a * m.array() + b).matrix())) < 1e-9,
             "alpha affine invariance");
  }

  int assessed = 0;
  for (const Report* r : corpus.reports_in(Split::test)) {
    const AssessedReport out = assess(ck, *r);
    int sum = 0;
    for (const auto& d : out.per_dimension) sum += d.score;
    c.expect(out.total == sum, "total != sum for " + r->id);
    ++assessed;
  }
  report("invariants", c,
         "monotone probability, OLL alpha/distance (100), normalization (1000), affine alpha, totals on " +
             std::to_string(assessed) + " assessed reports");
}

void desk_scale(const Checkpoint& ck, const Corpus& corpus, double train_seconds) {
  Check c;
  const EvaluationReport e = evaluate(ck, corpus, Split::test);
  c.expect(corpus.reports_in(Split::train).size() == 200 && corpus.reports_in(Split::val).size() == 25 &&
               corpus.reports_in(Split::test).size() == 25 && corpus.rubric.size() == 7,
           "corpus shape");
  c.expect(train_seconds < 600, "training took " + std::to_string(train_seconds) + " s");
  c.expect(e.total_weighted_acc >= 0.80, "weighted accuracy " + std::to_string(e.total_weighted_acc));
  c.expect(e.per_dim_spearman_mean >= 0.5, "spearman " + std::to_string(e.per_dim_spearman_mean));
  std::ostringstream s;
  s << "train " << train_seconds << " s, test weighted accuracy " << e.total_weighted_acc << ", mean Spearman "
    << e.per_dim_spearman_mean << ", total MSE " << e.total_mse;
  report("desk-scale", c, s.str());
}

void ablation_directions(const Corpus& corpus) {
  Check c;
  double full = 0, ce = 0, random = 0;
  std::ostringstream s;
  for (std::uint64_t seed : {1, 2, 3}) {
    RunConfig base;
    base.seed = seed;
    const double a = evaluate(train_pipeline(corpus, base), corpus, Split::test).total_mse;
    const double b = run_ablation(corpus, base, Ablation::cross_entropy).total_mse;
    const double r = run_ablation(corpus, base, Ablation::random_verifier).total_mse;
    s << "seed " << seed << " [full " << a << ", ce " << b << ", random " << r << "] ";
    full += a / 3;
    ce += b / 3;
    random += r / 3;
  }
  c.expect(full <= ce, "full MSE above cross-entropy MSE");
  c.expect(full <= random, "full MSE above random-verifier MSE");
  s << "means: full " << full << ", ce " << ce << ", random " << random;
  report("ablation-directions", c, s.str());
}

void determinism(const Corpus& corpus, const std::string& first_json) {
  Check c;
  RunConfig config;
  config.seed = 7;
  const std::string second = to_json(evaluate(train_pipeline(corpus, config), corpus, Split::test));
  c.expect(first_json == second, "metrics JSON differs between runs");
  report("determinism", c, "two runs produced " + std::to_string(first_json.size()) + "-byte identical metrics JSON");
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  formula_oracles();
  gradient_checks();
  metric_oracles();

  SyntheticOptions options;
  options.seed = 7;
  options.n_reports = 250;
  options.n_dims = 7;
  const Corpus corpus = generate_synthetic_corpus(options);
  RunConfig config;
  config.seed = 7;
  const auto start = Clock::now();
  const Checkpoint ck = train_pipeline(corpus, config);
  const double train_seconds = seconds_since(start);

  invariants(ck, corpus);
  desk_scale(ck, corpus, train_seconds);
  ablation_directions(corpus);
  determinism(corpus, to_json(evaluate(ck, corpus, Split::test)));

  std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
