#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fuess/domain.hpp"

namespace fuess {

/// Least-squares solution of A x ≈ b. A rank-deficient A falls back to ridge
/// with lambda 1e-8 and sets `*ridge_used`.
Eigen::VectorXd solve_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                    bool* ridge_used = nullptr);

enum class BaselineKind { Lr, Knn, Pcr, Mlp };

std::string to_string(BaselineKind kind);
BaselineKind parse_baseline_kind(std::string_view text);

/// Default grid per kind: KNN k {1,3,5,7,9}; PCR p {1..min(m, n-1)};
/// MLP hidden width {8,16,32}; LR has a single empty entry.
std::vector<std::size_t> default_grid(BaselineKind kind, std::size_t n_train, std::size_t n_features);

struct MlpSettings {
  std::size_t epochs = 2000;
  double step = 0.01;
};

/// One model with a fixed hyperparameter. Inputs and the target are z-scored
/// with statistics frozen by fit(); predictions come back in target units.
class BaselineModel {
 public:
  BaselineModel(BaselineKind kind, std::size_t hyper, MlpSettings mlp = {}, std::uint64_t seed = 0);

  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  bool fitted() const { return fitted_; }
  BaselineKind kind() const { return kind_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& x) const;

  BaselineKind kind_;
  std::size_t hyper_;
  MlpSettings mlp_;
  std::uint64_t seed_;
  bool fitted_ = false;
  std::vector<std::string> warnings_;

  Eigen::RowVectorXd x_mean_, x_scale_;
  double y_mean_ = 0.0, y_scale_ = 1.0;

  Eigen::VectorXd coef_;        // LR: [b0, w]; PCR: [b0, w on scores]
  Eigen::MatrixXd components_;  // PCR loadings (m x p)
  Eigen::MatrixXd train_x_;     // KNN, normalized
  Eigen::VectorXd train_y_;
  Eigen::MatrixXd w1_;          // MLP
  Eigen::VectorXd b1_, w2_;
  double b2_ = 0.0;
};

struct BaselineOptions {
  std::optional<std::vector<std::size_t>> grid;  // unset: default_grid
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  MlpSettings mlp;
};

struct BaselineResult {
  std::vector<double> predictions;
  std::size_t hyperparameter = 0;
  double cv_mae = 0.0;  // NaN when no cross-validation was possible
  std::vector<std::string> warnings;
};

/// Grid search by mean cross-validated MAE (ties keep the earlier entry),
/// refit on all of `train`, predict `test`. Folds come from a seeded shuffle
/// dealt round-robin; fewer rows than folds means leave-one-out.
BaselineResult run_baseline(BaselineKind kind, const Eigen::MatrixXd& x_train,
                            std::span<const double> y_train, const Eigen::MatrixXd& x_test,
                            const BaselineOptions& options = {});

/// Sample form: `names` pick the feature columns. Missing readings are
/// replaced by the training mean of that variable.
BaselineResult run_baseline(BaselineKind kind, std::span<const Sample> train,
                            std::span<const Sample> test, std::span<const std::string> names,
                            const BaselineOptions& options = {});

}  // namespace fuess
