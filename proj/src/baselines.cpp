// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/baselines.hpp"

#include "fusionrnn/error.hpp"

namespace frnn {

double route_eta_baseline(const TripRecord& trip) {
  if (trip.links.empty()) throw DomainError("route_eta: trip '" + trip.trip_id + "' has no links");
  double seconds = 0.0;
  for (const auto& l : trip.links) {
    if (!(l.length_m > 0.0)) throw DomainError("route_eta: non-positive link length");
    if (!(l.speed_est_mps > 0.0)) throw DomainError("route_eta: non-positive speed estimate");
    seconds += l.length_m / l.speed_est_mps;
  }
  for (const auto& l : trip.links) seconds += l.delay_s;
  return seconds;
}

ConstantMeanPredictor::ConstantMeanPredictor(std::span<const TripRecord> train) {
  if (train.empty()) throw DomainError("constant-mean predictor needs at least one training record");
  double acc = 0.0;
  for (const auto& r : train) acc += r.y_seconds;
  mean_ = acc / static_cast<double>(train.size());
}

}  // namespace frnn
