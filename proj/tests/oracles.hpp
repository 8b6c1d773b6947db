// Brute-force reference implementations used only by the tests. They follow
// the textbook definitions directly and share no code with the library.
#ifndef LABGRADE_TESTS_ORACLES_HPP_
#define LABGRADE_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <vector>

namespace oracle {

inline double cosine(const std::vector<double>& a, const std::vector<double>& b, double eps = 1e-8) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::max(std::sqrt(na) * std::sqrt(nb), eps);
}

inline double logistic_relevance(double d) { return 1.0 / (1.0 + std::exp(-10.0 * (d - 0.5))); }

inline double weighted_bce(double p, int y, double w) {
  p = std::min(std::max(p, 1e-7), 1 - 1e-7);
  return -(w * y * std::log(p) + (1 - y) * std::log(1 - p));
}

inline double oll(const std::vector<double>& p, int y, double alpha) {
  double loss = 0;
  for (int i = 0; i < static_cast<int>(p.size()); ++i) {
    const double q = std::min(p[i], 1 - 1e-7);
    loss += -std::log(1 - q) * std::pow(std::abs(y - i), alpha);
  }
  return loss;
}

// Krippendorff's alpha from its pairwise definition. ratings[r][u], NaN = missing.
template <typename Distance, typename Value>
double alpha_pairwise(const std::vector<std::vector<std::optional<Value>>>& units, Distance delta) {
  double n = 0, observed = 0;
  std::vector<Value> pooled;
  for (const auto& unit : units) {
    std::vector<Value> values;
    for (const auto& v : unit) {
      if (v) values.push_back(*v);
    }
    if (values.size() < 2) continue;
    const double m = static_cast<double>(values.size());
    double sum = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      for (std::size_t j = 0; j < values.size(); ++j) {
        if (i != j) sum += delta(values[i], values[j]);
      }
    }
    observed += sum / (m - 1);
    n += m;
    pooled.insert(pooled.end(), values.begin(), values.end());
  }
  double expected = 0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    for (std::size_t j = 0; j < pooled.size(); ++j) {
      if (i != j) expected += delta(pooled[i], pooled[j]);
    }
  }
  const double d_o = observed / n;
  const double d_e = expected / (n * (n - 1));
  if (d_e == 0) return 1.0;
  return 1.0 - d_o / d_e;
}

inline double squared(double a, double b) { return (a - b) * (a - b); }

inline double masi(const std::set<int>& a, const std::set<int>& b) {
  if (a.empty() && b.empty()) return 0.0;
  int inter = 0;
  for (int x : a) inter += b.count(x) ? 1 : 0;
  const int uni = static_cast<int>(a.size() + b.size()) - inter;
  double m;
  if (a == b) {
    m = 1.0;
  } else if (std::includes(a.begin(), a.end(), b.begin(), b.end()) || std::includes(b.begin(), b.end(), a.begin(), a.end())) {
    m = 2.0 / 3.0;
  } else if (inter > 0) {
    m = 1.0 / 3.0;
  } else {
    m = 0.0;
  }
  return 1.0 - (static_cast<double>(inter) / uni) * m;
}

// Rank of each value: 1 + (# strictly smaller) + (# ties - 1) / 2.
inline std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : x) {
      if (y < x[i]) less += 1;
      if (y == x[i]) equal += 1;
    }
    r[i] = less + (equal + 1) / 2.0;
  }
  return r;
}

inline std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

struct Prf {
  double precision, recall, f1, accuracy;
};

inline Prf micro_prf(const std::vector<bool>& pred, const std::vector<bool>& gold) {
  double tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    tp += pred[i] && gold[i];
    fp += pred[i] && !gold[i];
    fn += !pred[i] && gold[i];
    correct += pred[i] == gold[i];
  }
  const double p = tp + fp > 0 ? tp / (tp + fp) : 0;
  const double r = tp + fn > 0 ? tp / (tp + fn) : 0;
  return {p, r, p + r > 0 ? 2 * p * r / (p + r) : 0, correct / static_cast<double>(pred.size())};
}

}  // namespace oracle

#endif  // LABGRADE_TESTS_ORACLES_HPP_
