#pragma once

// Independent reference implementations used by unit and acceptance tests.
// None of these call into the library's numeric code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fuess/domain.hpp"

namespace oracle {

struct Hit {
  std::size_t index;
  double distance;
};

// Full scan, full sort by (distance, index).
inline std::vector<Hit> brute_force_top_k(const std::vector<std::vector<double>>& items,
                                          const std::vector<double>& query, std::size_t k) {
  std::vector<Hit> all;
  all.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    long double s = 0.0L;
    for (std::size_t j = 0; j < query.size(); ++j) {
      const long double d = static_cast<long double>(items[i][j]) - query[j];
      s += d * d;
    }
    all.push_back({i, static_cast<double>(std::sqrt(s))});
  }
  std::sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

// One pass over (y, p) pairs; R² via the streaming identity
// SST = Σy² − (Σy)²/n evaluated in long double.
struct StreamingMetrics {
  std::size_t n = 0;
  long double abs_sum = 0, sq_sum = 0, y_sum = 0, y_sq_sum = 0, smape_sum = 0;

  void add(double y, double p) {
    const long double e = static_cast<long double>(y) - p;
    ++n;
    abs_sum += std::fabs(e);
    sq_sum += e * e;
    y_sum += y;
    y_sq_sum += static_cast<long double>(y) * y;
    const long double den = (std::fabs(static_cast<long double>(y)) + std::fabs(static_cast<long double>(p))) / 2;
    smape_sum += den == 0 ? 0 : std::fabs(e) / den;
  }
  double mae() const { return static_cast<double>(abs_sum / n); }
  double rmse() const { return static_cast<double>(std::sqrt(sq_sum / n)); }
  double r2() const {
    const long double sst = y_sq_sum - y_sum * y_sum / n;
    return static_cast<double>(1 - sq_sum / sst);
  }
  double smape() const { return static_cast<double>(100 * smape_sum / n); }
};

// Inverse-distance weighted kNN over all demonstrations, written from the
// textual definition: z-score each test variable with the population mean
// and std of the demonstrations' present readings, MISSING → 0, std 0 → 0,
// weights 1/(1e-9 + d).
inline double weighted_knn(const std::vector<fuess::Sample>& demos, const fuess::Sample& test,
                           double eps = 1e-9) {
  const auto names = test.names();
  std::vector<double> mean(names.size(), 0.0), sd(names.size(), 0.0);
  for (std::size_t j = 0; j < names.size(); ++j) {
    std::vector<double> xs;
    for (const auto& d : demos) {
      const auto* v = d.find(names[j]);
      if (v && *v) xs.push_back(**v);
    }
    if (xs.empty()) continue;
    double m = 0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double ss = 0;
    for (double x : xs) ss += (x - m) * (x - m);
    mean[j] = m;
    sd[j] = std::sqrt(ss / static_cast<double>(xs.size()));
  }
  auto z = [&](const fuess::Sample& s, std::size_t j) {
    const auto* v = s.find(names[j]);
    if (!v || !*v || sd[j] == 0.0) return 0.0;
    return (**v - mean[j]) / sd[j];
  };
  double num = 0, den = 0;
  for (const auto& d : demos) {
    double s = 0;
    for (std::size_t j = 0; j < names.size(); ++j) {
      const double diff = z(test, j) - z(d, j);
      s += diff * diff;
    }
    const double w = 1.0 / (eps + std::sqrt(s));
    num += w * *d.label;
    den += w;
  }
  return num / den;
}

// Double loop over unordered pairs.
inline double ascs(const std::vector<std::vector<std::string>>& sets, std::size_t m) {
  double total = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t j = i + 1; j < sets.size(); ++j) {
      std::size_t common = 0;
      for (const auto& a : sets[i]) {
        if (std::find(sets[j].begin(), sets[j].end(), a) != sets[j].end()) ++common;
      }
      total += static_cast<double>(common) / static_cast<double>(m);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

inline std::size_t count_substr(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + needle.size())) ++n;
  return n;
}

}  // namespace oracle
