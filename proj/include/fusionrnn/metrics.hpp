// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"

namespace frnn {

struct MetricsReport {
  double mape = 0.0;  // fraction, not percent
  double mae = 0.0;   // seconds
  double rmse = 0.0;  // seconds
  std::size_t n = 0;

  nlohmann::ordered_json to_json() const;
};

/// Mean absolute percentage error (1/N) sum |y - y'| / y. Requires equal,
/// non-zero lengths and strictly positive y.
double mape(std::span<const double> y, std::span<const double> y_hat);
double mae(std::span<const double> y, std::span<const double> y_hat);
double rmse(std::span<const double> y, std::span<const double> y_hat);
MetricsReport compute_metrics(std::span<const double> y, std::span<const double> y_hat);

/// d MAPE / d y'_j = sign(y'_j - y_j) / (N y_j), with sign(0) = 0.
std::vector<double> mape_loss_backward(std::span<const double> y, std::span<const double> y_hat);

}  // namespace frnn
