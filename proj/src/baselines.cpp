#include "fuess/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "fuess/error.hpp"
#include "fuess/random.hpp"

namespace fuess {

Eigen::VectorXd solve_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                    bool* ridge_used) {
  if (ridge_used) *ridge_used = false;
  if (a.rows() >= a.cols()) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() == a.cols()) return qr.solve(b);
  }
  if (ridge_used) *ridge_used = true;
  const Eigen::MatrixXd gram =
      a.transpose() * a + 1e-8 * Eigen::MatrixXd::Identity(a.cols(), a.cols());
  return gram.ldlt().solve(a.transpose() * b);
}

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::Lr:
      return "lr";
    case BaselineKind::Knn:
      return "knn";
    case BaselineKind::Pcr:
      return "pcr";
    case BaselineKind::Mlp:
      return "mlp";
  }
  return "lr";
}

BaselineKind parse_baseline_kind(std::string_view text) {
  if (text == "lr") return BaselineKind::Lr;
  if (text == "knn") return BaselineKind::Knn;
  if (text == "pcr") return BaselineKind::Pcr;
  if (text == "mlp") return BaselineKind::Mlp;
  throw Error(Errc::InvalidArgument, "unknown baseline '" + std::string(text) + "'",
              std::string(text));
}

std::vector<std::size_t> default_grid(BaselineKind kind, std::size_t n_train,
                                      std::size_t n_features) {
  switch (kind) {
    case BaselineKind::Lr:
      return {0};
    case BaselineKind::Knn:
      return {1, 3, 5, 7, 9};
    case BaselineKind::Pcr: {
      const std::size_t top = std::max<std::size_t>(1, std::min(n_features, n_train > 0 ? n_train - 1 : 0));
      std::vector<std::size_t> grid(top);
      std::iota(grid.begin(), grid.end(), std::size_t{1});
      return grid;
    }
    case BaselineKind::Mlp:
      return {8, 16, 32};
  }
  return {0};
}

BaselineModel::BaselineModel(BaselineKind kind, std::size_t hyper, MlpSettings mlp,
                             std::uint64_t seed)
    : kind_(kind), hyper_(hyper), mlp_(mlp), seed_(seed) {}

Eigen::MatrixXd BaselineModel::normalize(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - x_mean_).array().rowwise() / x_scale_.array();
}

void BaselineModel::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() == 0 || x.rows() != y.size()) {
    throw Error(Errc::InvalidArgument, "training data must be non-empty with one label per row");
  }
  warnings_.clear();
  const auto n = static_cast<double>(x.rows());
  x_mean_ = x.colwise().mean();
  x_scale_ = ((x.rowwise() - x_mean_).array().square().colwise().sum() / n).sqrt();
  for (Eigen::Index j = 0; j < x_scale_.size(); ++j) {
    if (x_scale_(j) <= 0.0) x_scale_(j) = 1.0;
  }
  y_mean_ = y.mean();
  y_scale_ = std::sqrt((y.array() - y_mean_).square().sum() / n);
  if (y_scale_ <= 0.0) y_scale_ = 1.0;
  const Eigen::MatrixXd xz = normalize(x);
  const Eigen::VectorXd yz = (y.array() - y_mean_) / y_scale_;

  const auto fit_linear = [&](const Eigen::MatrixXd& features) {
    Eigen::MatrixXd design(features.rows(), features.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(features.cols()) = features;
    bool ridge = false;
    coef_ = solve_least_squares(design, yz, &ridge);
    if (ridge) {
      warnings_.emplace_back("rank-deficient least squares, ridge fallback (lambda 1e-8)");
      spdlog::warn("{}: rank-deficient least squares, using ridge fallback", to_string(kind_));
    }
  };

  switch (kind_) {
    case BaselineKind::Lr:
      fit_linear(xz);
      break;
    case BaselineKind::Pcr: {
      const auto max_p = std::max<Eigen::Index>(1, std::min<Eigen::Index>(xz.cols(), xz.rows() - 1));
      const auto p = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(hyper_), 1, max_p);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(xz, Eigen::ComputeThinV);
      const Eigen::MatrixXd v = svd.matrixV();
      components_ = v.leftCols(std::min<Eigen::Index>(p, v.cols()));
      fit_linear(xz * components_);
      break;
    }
    case BaselineKind::Knn:
      train_x_ = xz;
      train_y_ = y;
      break;
    case BaselineKind::Mlp: {
      const auto m = xz.cols();
      const auto h = static_cast<Eigen::Index>(std::max<std::size_t>(1, hyper_));
      Rng rng(seed_);
      w1_.resize(m, h);
      for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < h; ++j) w1_(i, j) = rng.normal() / std::sqrt(static_cast<double>(m));
      }
      b1_ = Eigen::VectorXd::Zero(h);
      w2_.resize(h);
      for (Eigen::Index j = 0; j < h; ++j) w2_(j) = rng.normal() / std::sqrt(static_cast<double>(h));
      b2_ = 0.0;
      for (std::size_t epoch = 0; epoch < mlp_.epochs; ++epoch) {
        const Eigen::MatrixXd hidden = ((xz * w1_).rowwise() + b1_.transpose()).array().tanh();
        const Eigen::VectorXd err = (hidden * w2_).array() + b2_ - yz.array();
        const Eigen::VectorXd grad_w2 = hidden.transpose() * err / n;
        const double grad_b2 = err.mean();
        const Eigen::MatrixXd d_hidden =
            ((err * w2_.transpose()).array() * (1.0 - hidden.array().square())).matrix();
        const Eigen::MatrixXd grad_w1 = xz.transpose() * d_hidden / n;
        const Eigen::VectorXd grad_b1 = d_hidden.colwise().sum().transpose() / n;
        w1_ -= mlp_.step * grad_w1;
        b1_ -= mlp_.step * grad_b1;
        w2_ -= mlp_.step * grad_w2;
        b2_ -= mlp_.step * grad_b2;
      }
      break;
    }
  }
  fitted_ = true;
}

Eigen::VectorXd BaselineModel::predict(const Eigen::MatrixXd& x) const {
  if (!fitted_) throw Error(Errc::InvalidArgument, "predict called before fit");
  if (x.cols() != x_mean_.size()) {
    throw Error(Errc::DimensionMismatch, "feature count differs from the training data");
  }
  const Eigen::MatrixXd xz = normalize(x);
  const auto linear = [&](const Eigen::MatrixXd& features) -> Eigen::VectorXd {
    Eigen::VectorXd out = (features * coef_.tail(features.cols())).array() + coef_(0);
    return out.array() * y_scale_ + y_mean_;
  };
  switch (kind_) {
    case BaselineKind::Lr:
      return linear(xz);
    case BaselineKind::Pcr:
      return linear(xz * components_);
    case BaselineKind::Knn: {
      const auto n = train_x_.rows();
      const auto k = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(hyper_), 1, n);
      Eigen::VectorXd out(xz.rows());
      std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n));
      for (Eigen::Index r = 0; r < xz.rows(); ++r) {
        for (Eigen::Index i = 0; i < n; ++i) {
          dist[static_cast<std::size_t>(i)] = {(train_x_.row(i) - xz.row(r)).norm(), i};
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        double wsum = 0.0, acc = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
          const double w = 1.0 / (1e-9 + dist[static_cast<std::size_t>(i)].first);
          wsum += w;
          acc += w * train_y_(dist[static_cast<std::size_t>(i)].second);
        }
        out(r) = acc / wsum;
      }
      return out;
    }
    case BaselineKind::Mlp: {
      const Eigen::MatrixXd hidden = ((xz * w1_).rowwise() + b1_.transpose()).array().tanh();
      Eigen::VectorXd out = (hidden * w2_).array() + b2_;
      return out.array() * y_scale_ + y_mean_;
    }
  }
  return {};
}

BaselineResult run_baseline(BaselineKind kind, const Eigen::MatrixXd& x_train,
                            std::span<const double> y_train, const Eigen::MatrixXd& x_test,
                            const BaselineOptions& options) {
  const auto n = static_cast<std::size_t>(x_train.rows());
  if (n == 0 || y_train.size() != n) {
    throw Error(Errc::InvalidArgument, "training data must be non-empty with one label per row");
  }
  if (x_test.rows() > 0 && x_test.cols() != x_train.cols()) {
    throw Error(Errc::DimensionMismatch, "test and training feature counts differ");
  }
  auto grid = options.grid.value_or(default_grid(kind, n, static_cast<std::size_t>(x_train.cols())));
  if (kind == BaselineKind::Lr) grid = {0};
  if (grid.empty()) throw Error(Errc::EmptyGrid, "empty hyperparameter grid for " + to_string(kind));
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(y_train.data(), static_cast<Eigen::Index>(n));

  BaselineResult result;
  result.hyperparameter = grid.front();
  result.cv_mae = std::numeric_limits<double>::quiet_NaN();

  if (n >= 2 && grid.size() > 1) {
    const std::size_t folds = std::min(std::max<std::size_t>(options.folds, 2), n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(options.seed);
    rng.shuffle(order);
    std::vector<std::size_t> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[order[i]] = i % folds;

    double best = std::numeric_limits<double>::infinity();
    for (const auto hyper : grid) {
      double total = 0.0;
      for (std::size_t f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> tr, te;
        for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
        BaselineModel model(kind, hyper, options.mlp, options.seed);
        model.fit(x_train(tr, Eigen::all), y(tr));
        const Eigen::VectorXd pred = model.predict(x_train(te, Eigen::all));
        total += (pred - y(te)).cwiseAbs().mean();
      }
      const double cv = total / static_cast<double>(folds);
      if (cv < best) {
        best = cv;
        result.hyperparameter = hyper;
      }
    }
    result.cv_mae = best;
  }

  BaselineModel model(kind, result.hyperparameter, options.mlp, options.seed);
  model.fit(x_train, y);
  result.warnings = model.warnings();
  if (x_test.rows() > 0) {
    const Eigen::VectorXd pred = model.predict(x_test);
    result.predictions.assign(pred.data(), pred.data() + pred.size());
  }
  return result;
}

BaselineResult run_baseline(BaselineKind kind, std::span<const Sample> train,
                            std::span<const Sample> test, std::span<const std::string> names,
                            const BaselineOptions& options) {
  const auto m = static_cast<Eigen::Index>(names.size());
  std::vector<double> mean(names.size(), 0.0);
  for (std::size_t j = 0; j < names.size(); ++j) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& s : train) {
      const auto* v = s.find(names[j]);
      if (!v) throw Error(Errc::UnknownVariable, "sample lacks variable '" + names[j] + "'", names[j]);
      if (*v) {
        sum += **v;
        ++count;
      }
    }
    if (count) mean[j] = sum / static_cast<double>(count);
  }
  const auto matrix = [&](std::span<const Sample> rows) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), m);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < names.size(); ++j) {
        const auto* v = rows[i].find(names[j]);
        if (!v) throw Error(Errc::UnknownVariable, "sample lacks variable '" + names[j] + "'", names[j]);
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *v ? **v : mean[j];
      }
    }
    return x;
  };
  std::vector<double> y;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (!train[i].label) {
      throw Error(Errc::MissingLabel, "training sample without label", {}, static_cast<std::int64_t>(i));
    }
    y.push_back(*train[i].label);
  }
  return run_baseline(kind, matrix(train), y, matrix(test), options);
}

}  // namespace fuess
