#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "kanwx/error.hpp"

namespace kanwx {

// The five regression metrics for one (model, variable, city) evaluation.
// r2 is NaN with r2_defined=false when y_true is constant.
struct MetricsReport {
  std::string model;
  std::string city;
  std::string variable;
  double mse = 0;
  double rmse = 0;
  double mae = 0;
  double r2 = 0;
  double mape = 0;  // percent
  std::size_t n = 0;
  bool r2_defined = true;
  std::string warning;
};

inline constexpr double kMapeEpsilon = 1e-8;

inline MetricsReport compute_metrics(const std::vector<double>& y_true,
                                     const std::vector<double>& y_pred) {
  if (y_true.size() != y_pred.size())
    throw ContractError("compute_metrics: length mismatch " +
                        std::to_string(y_true.size()) + " vs " +
                        std::to_string(y_pred.size()));
  if (y_true.empty()) throw ContractError("compute_metrics: empty input");

  const std::size_t n = y_true.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  double se = 0, ae = 0, ape = 0, mean_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double err = y_true[i] - y_pred[i];
    se += err * err;
    ae += std::abs(err);
    ape += std::abs(err) / std::max(std::abs(y_true[i]), kMapeEpsilon);
    mean_y += y_true[i];
  }
  mean_y *= inv_n;

  double ss_tot = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = y_true[i] - mean_y;
    ss_tot += d * d;
  }

  MetricsReport r;
  r.n = n;
  r.mse = se * inv_n;
  r.rmse = std::sqrt(r.mse);
  r.mae = ae * inv_n;
  r.mape = 100.0 * ape * inv_n;
  if (ss_tot > 0) {
    r.r2 = 1.0 - se / ss_tot;
  } else {
    r.r2 = std::numeric_limits<double>::quiet_NaN();
    r.r2_defined = false;
    r.warning = "R2 undefined: y_true is constant";
  }
  return r;
}

}  // namespace kanwx
