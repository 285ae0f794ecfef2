// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/metrics.hpp"

#include <cmath>
#include <string>

#include "fusionrnn/error.hpp"

namespace frnn {
namespace {

void check(std::span<const double> y, std::span<const double> y_hat, const char* what) {
  if (y.empty()) throw DomainError(std::string(what) + ": empty input");
  if (y.size() != y_hat.size())
    throw ShapeError(std::string(what) + ": " + std::to_string(y.size()) + " targets vs " +
                     std::to_string(y_hat.size()) + " predictions");
}

void check_positive(std::span<const double> y, const char* what) {
  for (double v : y)
    if (!(v > 0.0)) throw DomainError(std::string(what) + ": ground truth must be positive, got " + std::to_string(v));
}

}  // namespace

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["mape"] = mape;
  j["mae"] = mae;
  j["rmse"] = rmse;
  j["n"] = n;
  return j;
}

double mape(std::span<const double> y, std::span<const double> y_hat) {
  check(y, y_hat, "mape");
  check_positive(y, "mape");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(y[i] - y_hat[i]) / y[i];
  return acc / static_cast<double>(y.size());
}

double mae(std::span<const double> y, std::span<const double> y_hat) {
  check(y, y_hat, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(y[i] - y_hat[i]);
  return acc / static_cast<double>(y.size());
}

double rmse(std::span<const double> y, std::span<const double> y_hat) {
  check(y, y_hat, "rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - y_hat[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(y.size()));
}

MetricsReport compute_metrics(std::span<const double> y, std::span<const double> y_hat) {
  return {mape(y, y_hat), mae(y, y_hat), rmse(y, y_hat), y.size()};
}

std::vector<double> mape_loss_backward(std::span<const double> y, std::span<const double> y_hat) {
  check(y, y_hat, "mape_loss_backward");
  check_positive(y, "mape_loss_backward");
  const double n = static_cast<double>(y.size());
  std::vector<double> g(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y_hat[i] - y[i];
    g[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / (n * y[i]);
  }
  return g;
}

}  // namespace frnn
