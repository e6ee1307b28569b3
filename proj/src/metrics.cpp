#include "fuess/metrics.hpp"

#include <cmath>
#include <string>

#include "fuess/error.hpp"

namespace fuess {

namespace {

void check(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(y_true.size()) + " targets vs " +
                                          std::to_string(y_pred.size()) + " predictions");
  }
  if (y_true.empty()) throw Error(Errc::EmptyInput, "no values to score");
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (!std::isfinite(y_true[i]) || !std::isfinite(y_pred[i])) {
      throw Error(Errc::InvalidArgument, "non-finite value at index " + std::to_string(i), {},
                  static_cast<std::int64_t>(i));
    }
  }
}

}  // namespace

double mean_absolute_error(std::span<const double> y_true, std::span<const double> y_pred) {
  check(y_true, y_pred);
  double sum = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) sum += std::abs(y_true[i] - y_pred[i]);
  return sum / static_cast<double>(y_true.size());
}

double root_mean_squared_error(std::span<const double> y_true, std::span<const double> y_pred) {
  check(y_true, y_pred);
  double sum = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double e = y_true[i] - y_pred[i];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(y_true.size()));
}

double r_squared(std::span<const double> y_true, std::span<const double> y_pred) {
  check(y_true, y_pred);
  double mean = 0.0;
  for (double y : y_true) mean += y;
  mean /= static_cast<double>(y_true.size());
  double sse = 0.0;
  double sst = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    sse += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    sst += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (sst == 0.0) throw Error(Errc::DegenerateR2, "R² is undefined for a constant target");
  return 1.0 - sse / sst;
}

double smape(std::span<const double> y_true, std::span<const double> y_pred) {
  check(y_true, y_pred);
  double sum = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double denom = (std::abs(y_true[i]) + std::abs(y_pred[i])) / 2.0;
    if (denom > 0.0) sum += std::abs(y_true[i] - y_pred[i]) / denom;
  }
  return 100.0 * sum / static_cast<double>(y_true.size());
}

std::optional<double> mape(std::span<const double> y_true, std::span<const double> y_pred) {
  check(y_true, y_pred);
  double sum = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] == 0.0) return std::nullopt;
    sum += std::abs((y_true[i] - y_pred[i]) / y_true[i]);
  }
  return 100.0 * sum / static_cast<double>(y_true.size());
}

Metrics compute_metrics(std::span<const double> y_true, std::span<const double> y_pred) {
  Metrics m;
  m.n = y_true.size();
  m.r2 = r_squared(y_true, y_pred);
  m.mae = mean_absolute_error(y_true, y_pred);
  m.rmse = root_mean_squared_error(y_true, y_pred);
  m.smape = smape(y_true, y_pred);
  m.mape = mape(y_true, y_pred);
  return m;
}

}  // namespace fuess
