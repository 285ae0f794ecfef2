// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "fusionrnn/data.hpp"

namespace frnn {

/// Rule-based estimate: sum of length / speed estimate over links plus the
/// sum of intersection delays. Throws DomainError on an empty route or a
/// non-positive length or speed.
double route_eta_baseline(const TripRecord& trip);

/// Predicts the mean travel time of the records it was fitted on.
class ConstantMeanPredictor {
 public:
  explicit ConstantMeanPredictor(std::span<const TripRecord> train);
  double predict(const TripRecord&) const noexcept { return mean_; }
  double mean() const noexcept { return mean_; }

 private:
  double mean_ = 0.0;
};

}  // namespace frnn
