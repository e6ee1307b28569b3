#include "fuess/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "fuess/baselines.hpp"
#include "fuess/error.hpp"
#include "fuess/random.hpp"

namespace fuess {

namespace {

using Column = std::vector<double>;

Column column(const Eigen::MatrixXd& x, Eigen::Index j) {
  Column c(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) c[static_cast<std::size_t>(i)] = x(i, j);
  return c;
}

bool is_constant(const Column& c) {
  return std::all_of(c.begin(), c.end(), [&](double v) { return v == c.front(); });
}

double pearson(const Column& a, const Column& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// Average ranks (1-based) with ties sharing their mean rank.
Column average_ranks(const Column& c) {
  std::vector<std::size_t> idx(c.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return c[a] < c[b]; });
  Column ranks(c.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && c[idx[j + 1]] == c[idx[i]]) ++j;
    const double r = (static_cast<double>(i + j) / 2.0) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// Equal-frequency bin index per value; equal values share the bin of their
// first (lowest) rank.
std::vector<std::size_t> quantile_bins(const Column& c, std::size_t bins) {
  const std::size_t n = c.size();
  bins = std::max<std::size_t>(1, std::min(bins, n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return c[a] < c[b]; });
  std::vector<std::size_t> out(n);
  std::size_t first_rank = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (r == 0 || c[idx[r]] != c[idx[r - 1]]) first_rank = r;
    out[idx[r]] = first_rank * bins / n;
  }
  return out;
}

double fisher_score(const Column& x, const std::vector<std::size_t>& label_bin, std::size_t bins) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  std::vector<double> count(bins, 0.0), sum(bins, 0.0), sq(bins, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    count[label_bin[i]] += 1.0;
    sum[label_bin[i]] += x[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto b = label_bin[i];
    const double d = x[i] - sum[b] / count[b];
    sq[b] += d * d;
  }
  double between = 0.0, within = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0.0) continue;
    const double mb = sum[b] / count[b];
    between += count[b] * (mb - mean) * (mb - mean);
    within += sq[b];
  }
  if (within <= 0.0) return between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return between / within;
}

double mutual_information(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                          std::size_t bins) {
  const double n = static_cast<double>(a.size());
  std::vector<double> joint(bins * bins, 0.0), pa(bins, 0.0), pb(bins, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[a[i] * bins + b[i]] += 1.0 / n;
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
  }
  double mi = 0.0;
  for (std::size_t i = 0; i < bins; ++i) {
    for (std::size_t j = 0; j < bins; ++j) {
      const double p = joint[i * bins + j];
      if (p > 0.0) mi += p * std::log(p / (pa[i] * pb[j]));
    }
  }
  return mi;
}

// Columns ordered by descending score, ties by column order.
std::vector<std::size_t> order_by_score(const std::vector<double>& score) {
  std::vector<std::size_t> idx(score.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return score[a] > score[b]; });
  return idx;
}

std::vector<std::size_t> rfe_order(const Eigen::MatrixXd& x, std::span<const double> y,
                                   const std::vector<bool>& constant) {
  const auto n = x.rows();
  std::vector<std::size_t> remaining;
  for (std::size_t j = 0; j < constant.size(); ++j) {
    if (!constant[j]) remaining.push_back(j);
  }
  Eigen::MatrixXd z = x;
  for (auto j : remaining) {
    const auto col = static_cast<Eigen::Index>(j);
    const double mean = z.col(col).mean();
    const double sd = std::sqrt((z.col(col).array() - mean).square().sum() / static_cast<double>(n));
    z.col(col) = (z.col(col).array() - mean) / sd;
  }
  Eigen::VectorXd yc = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  yc.array() -= yc.mean();

  std::vector<std::size_t> eliminated;
  while (remaining.size() > 1) {
    std::vector<Eigen::Index> cols(remaining.begin(), remaining.end());
    const Eigen::VectorXd coef = solve_least_squares(z(Eigen::all, cols), yc);
    // Among equal magnitudes the later column goes first.
    std::size_t drop = 0;
    for (std::size_t k = 1; k < remaining.size(); ++k) {
      if (std::abs(coef(static_cast<Eigen::Index>(k))) <= std::abs(coef(static_cast<Eigen::Index>(drop)))) {
        drop = k;
      }
    }
    eliminated.push_back(remaining[drop]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(drop));
  }
  std::vector<std::size_t> order(remaining);
  order.insert(order.end(), eliminated.rbegin(), eliminated.rend());
  for (std::size_t j = 0; j < constant.size(); ++j) {
    if (constant[j]) order.push_back(j);
  }
  return order;
}

}  // namespace

std::string to_string(RankMethod method) {
  switch (method) {
    case RankMethod::Pearson:
      return "pearson";
    case RankMethod::Spearman:
      return "spearman";
    case RankMethod::Fisher:
      return "fisher";
    case RankMethod::MutualInformation:
      return "mi";
    case RankMethod::Rfe:
      return "rfe";
    case RankMethod::Random:
      return "random";
  }
  return "pearson";
}

RankMethod parse_rank_method(std::string_view text) {
  for (auto m : {RankMethod::Pearson, RankMethod::Spearman, RankMethod::Fisher,
                 RankMethod::MutualInformation, RankMethod::Rfe, RankMethod::Random}) {
    if (to_string(m) == text) return m;
  }
  throw Error(Errc::InvalidArgument, "unknown ranking method '" + std::string(text) + "'",
              std::string(text));
}

std::vector<std::string> rank_features(RankMethod method, std::span<const std::string> names,
                                       const Eigen::MatrixXd& x, std::span<const double> y,
                                       const RankOptions& options) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto m = static_cast<std::size_t>(x.cols());
  if (names.size() != m || y.size() != n) {
    throw Error(Errc::InvalidArgument, "names, columns and labels do not line up");
  }
  if (n < 2) throw Error(Errc::TooFewSamples, "feature ranking needs at least two samples");
  if (!x.allFinite() || !std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(Errc::InvalidArgument, "feature ranking input must be finite");
  }

  std::vector<std::size_t> order;
  if (method == RankMethod::Random) {
    order.resize(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(options.seed);
    rng.shuffle(order);
  } else {
    std::vector<bool> constant(m);
    for (std::size_t j = 0; j < m; ++j) {
      constant[j] = is_constant(column(x, static_cast<Eigen::Index>(j)));
      if (constant[j]) spdlog::warn("feature '{}' is constant and ranks last", names[j]);
    }
    const Column label(y.begin(), y.end());
    if (method == RankMethod::Rfe) {
      order = rfe_order(x, y, constant);
    } else {
      std::vector<double> score(m, 0.0);
      const Column label_ranks = method == RankMethod::Spearman ? average_ranks(label) : Column{};
      const auto fisher_bins = std::max<std::size_t>(1, std::min(options.fisher_bins, n));
      const auto label_bins = method == RankMethod::Fisher ? quantile_bins(label, fisher_bins)
                                                           : std::vector<std::size_t>{};
      const auto mi_bins = std::max<std::size_t>(1, std::min(options.mi_bins, n));
      const auto label_mi_bins = method == RankMethod::MutualInformation ? quantile_bins(label, mi_bins)
                                                                         : std::vector<std::size_t>{};
      for (std::size_t j = 0; j < m; ++j) {
        if (constant[j]) continue;
        const auto c = column(x, static_cast<Eigen::Index>(j));
        switch (method) {
          case RankMethod::Pearson:
            score[j] = std::abs(pearson(c, label));
            break;
          case RankMethod::Spearman:
            score[j] = std::abs(pearson(average_ranks(c), label_ranks));
            break;
          case RankMethod::Fisher:
            score[j] = fisher_score(c, label_bins, fisher_bins);
            break;
          case RankMethod::MutualInformation:
            score[j] = mutual_information(quantile_bins(c, mi_bins), label_mi_bins, mi_bins);
            break;
          default:
            break;
        }
      }
      order = order_by_score(score);
      std::stable_partition(order.begin(), order.end(), [&](auto j) { return !constant[j]; });
    }
  }
  std::vector<std::string> out;
  for (auto j : order) out.push_back(names[j]);
  return out;
}

std::vector<std::string> rank_features(RankMethod method, const Dataset& data,
                                       const RankOptions& options) {
  const auto names = data.variable_names();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.samples.size()),
                    static_cast<Eigen::Index>(names.size()));
  std::vector<double> y;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    if (!s.label) throw Error(Errc::MissingLabel, "unlabelled sample", {}, static_cast<std::int64_t>(i));
    y.push_back(*s.label);
    for (std::size_t j = 0; j < names.size(); ++j) {
      const auto* v = s.find(names[j]);
      if (!v || !*v) {
        throw Error(Errc::InvalidArgument, "feature ranking needs complete samples", names[j],
                    static_cast<std::int64_t>(i));
      }
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = **v;
    }
  }
  return rank_features(method, names, x, y, options);
}

}  // namespace fuess
