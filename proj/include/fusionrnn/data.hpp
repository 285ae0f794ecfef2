// SPDX-License-Identifier: Apache-2.0
#pragma once

// Trip records, the synthetic trip generator, preprocessing filters, time
// features, week-based splits and padded batches.
//
// Dataset files are JSON lines, one trip per line, with fields in this order:
//   {"trip_id":"T0000000","driver_id":3,"depart_ts":1514793600,
//    "links":[{"link_id":17,"length_m":412.5,"speed_est_mps":9.8,"delay_s":4.2},...],
//    "y_seconds":1234.5}

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fusionrnn/rng.hpp"

namespace frnn {

struct LinkObs {
  std::int64_t link_id = 0;
  double length_m = 0.0;       // > 0
  double speed_est_mps = 0.0;  // > 0
  double delay_s = 0.0;        // >= 0, intersection delay at link exit
};

struct TripRecord {
  std::string trip_id;
  std::int64_t driver_id = 0;
  std::int64_t depart_ts = 0;  // unix seconds
  std::vector<LinkObs> links;
  double y_seconds = 0.0;

  double total_length_m() const noexcept;
};

/// Throws ValidationError describing the first violated record invariant.
void validate(const TripRecord& trip);

// ---------------------------------------------------------------------------
// Time features

inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr std::int64_t kSecondsPerWeek = 7 * kSecondsPerDay;
inline constexpr std::size_t kTimeSlices = 288;
inline constexpr std::size_t kWeekdays = 7;

/// 5-minute slice of the local day, in [0, 288). `utc_offset_s` fixes the
/// timezone.
std::size_t time_slice(std::int64_t ts, std::int64_t utc_offset_s = 0) noexcept;
/// Local weekday, Monday = 0 ... Sunday = 6.
std::size_t weekday(std::int64_t ts, std::int64_t utc_offset_s = 0) noexcept;
/// Index of the Monday-aligned local week containing `ts`.
std::int64_t week_index(std::int64_t ts, std::int64_t utc_offset_s = 0) noexcept;

// ---------------------------------------------------------------------------
// Generator

struct GeneratorConfig {
  std::int64_t num_links = 2000;
  std::int64_t num_drivers = 100;
  int weeks = 20;
  int trips_per_day = 400;
  std::uint64_t seed = 2018;
  std::int64_t start_ts = 1514764800;  // unix time of a local Monday midnight
  std::int64_t utc_offset_s = 0;
  int min_links = 5;
  int max_links = 60;
  double link_length_min_m = 50.0;
  double link_length_max_m = 800.0;
  double free_speed_median_mps = 11.0;
  double free_speed_sigma = 0.3;
  double driver_sigma = 0.1;
  double travel_noise_sigma = 0.05;
  double speed_obs_sigma = 0.1;
  // Congestion multiplier: 1 minus two Gaussian dips centred on the rush hours.
  double morning_rush_hour = 8.0;
  double evening_rush_hour = 18.0;
  double morning_rush_depth = 0.35;
  double evening_rush_depth = 0.40;
  double rush_width_hours = 1.0;
  double weekend_rush_scale = 0.5;
  // Fraction of links ending at a signalised intersection, and the cap of
  // their base delay.
  double delay_link_fraction = 0.6;
  double max_delay_s = 30.0;

  void validate() const;
};

/// Speed multiplier in (0, 1] for a departure slice and weekday.
double congestion(const GeneratorConfig& cfg, std::size_t slice, std::size_t day_of_week) noexcept;

/// Calls `sink` once per generated trip, in a deterministic order.
void generate_dataset(const GeneratorConfig& cfg, const std::function<void(TripRecord&&)>& sink);
std::vector<TripRecord> generate_dataset(const GeneratorConfig& cfg);

// ---------------------------------------------------------------------------
// Preprocessing

inline constexpr double kMinTravelSeconds = 60.0;
inline constexpr double kMaxSpeedKmh = 120.0;

struct FilterSummary {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t dropped_short = 0;  // y < 60 s
  std::size_t dropped_fast = 0;   // overall speed > 120 km/h

  nlohmann::ordered_json to_json() const;
};

/// Keeps y = 60 s and speed = 120 km/h exactly.
bool passes_filter(const TripRecord& trip) noexcept;
std::vector<TripRecord> preprocess_filter(std::vector<TripRecord> records, FilterSummary* summary = nullptr);

// ---------------------------------------------------------------------------
// Splits

enum class Split { train, val, test };
std::string_view to_string(Split s) noexcept;

/// Weeks [0,16) train, [16,18) val, [18,20) test, counted from the first
/// week present in the data; later weeks belong to no split.
std::optional<Split> split_for_week(std::int64_t relative_week) noexcept;

struct Splits {
  std::vector<TripRecord> train;
  std::vector<TripRecord> val;
  std::vector<TripRecord> test;
  std::vector<TripRecord>& get(Split s);
  const std::vector<TripRecord>& get(Split s) const;
};

/// Requires the data to reach its 20th week; throws ValidationError otherwise.
Splits split_by_weeks(std::vector<TripRecord> records, std::int64_t utc_offset_s = 0);

// ---------------------------------------------------------------------------
// Batches

/// Per-link real features: length (km), speed estimate (10 m/s units),
/// delay (minutes), length / speed estimate (minutes).
inline constexpr std::size_t kLinkFeatures = 4;
/// Per-trip real features: total length (10 km units), link count / 30.
inline constexpr std::size_t kTripFeatures = 2;

struct Batch {
  std::size_t size = 0;
  std::size_t max_len = 0;
  std::vector<std::size_t> lengths;
  std::vector<std::uint8_t> mask;        // size x max_len, 1 = valid
  std::vector<std::size_t> link_ids;     // size x max_len, 0 past the end
  std::vector<double> link_features;     // size x max_len x kLinkFeatures, 0 past the end
  std::vector<std::size_t> driver_ids;   // size
  std::vector<std::size_t> time_slices;  // size
  std::vector<std::size_t> weekdays;     // size
  std::vector<double> trip_features;     // size x kTripFeatures
  std::vector<double> targets;           // size, seconds

  double link_feature(std::size_t trip, std::size_t t, std::size_t f) const {
    return link_features[(trip * max_len + t) * kLinkFeatures + f];
  }
};

void link_features(const LinkObs& link, std::span<double, kLinkFeatures> out) noexcept;

Batch make_batch(std::span<const TripRecord> records, std::span<const std::size_t> indices,
                 std::int64_t utc_offset_s = 0);
Batch make_batch(std::span<const TripRecord> records, std::int64_t utc_offset_s = 0);

/// One epoch of batches. With `rng` the order is shuffled first; the last
/// batch may be short.
std::vector<Batch> make_batches(std::span<const TripRecord> records, std::size_t batch_size, Rng* rng,
                                std::int64_t utc_offset_s = 0);

/// Endless batch source for training: reshuffles at each epoch boundary.
class BatchStream {
 public:
  BatchStream(std::span<const TripRecord> records, std::size_t batch_size, Rng rng,
              std::int64_t utc_offset_s = 0);
  Batch next();
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  void reshuffle();

  std::span<const TripRecord> records_;
  std::size_t batch_size_;
  Rng rng_;
  std::int64_t utc_offset_s_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

// ---------------------------------------------------------------------------
// Dataset file I/O

std::string to_json_line(const TripRecord& trip);
/// `line_no` is only used in error messages.
TripRecord parse_json_line(std::string_view line, std::size_t line_no = 0);
void write_dataset(const std::filesystem::path& path, std::span<const TripRecord> records);
std::vector<TripRecord> read_dataset(const std::filesystem::path& path);

}  // namespace frnn
