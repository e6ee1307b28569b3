#pragma once

#include <cstddef>
#include <optional>
#include <span>

namespace fuess {

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
  double smape = 0.0;  // percent, in [0, 200]
  /// Plain mean absolute percentage error; absent when some y_true is 0.
  std::optional<double> mape;
  std::size_t n = 0;
};

/// MAE, RMSE, R² (1 - SSE/SST about mean(y_true)) and SMAPE with the pair
/// term 0 when both values are 0. Throws EmptyInput, LengthMismatch,
/// InvalidArgument (non-finite value) or DegenerateR2 (constant y_true).
Metrics compute_metrics(std::span<const double> y_true, std::span<const double> y_pred);

double mean_absolute_error(std::span<const double> y_true, std::span<const double> y_pred);
double root_mean_squared_error(std::span<const double> y_true, std::span<const double> y_pred);
double r_squared(std::span<const double> y_true, std::span<const double> y_pred);
double smape(std::span<const double> y_true, std::span<const double> y_pred);
std::optional<double> mape(std::span<const double> y_true, std::span<const double> y_pred);

}  // namespace fuess
