// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fusionrnn/error.hpp"

namespace frnn {
namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// 1970-01-01 was a Thursday; the first Monday is four days later.
constexpr std::int64_t kFirstMonday = 4 * kSecondsPerDay;

}  // namespace

double TripRecord::total_length_m() const noexcept {
  double total = 0.0;
  for (const auto& l : links) total += l.length_m;
  return total;
}

void validate(const TripRecord& trip) {
  const std::string who = "trip '" + trip.trip_id + "'";
  if (trip.links.empty()) throw ValidationError(who + " has no links");
  if (!(trip.y_seconds > 0.0) || !std::isfinite(trip.y_seconds))
    throw ValidationError(who + " has non-positive travel time");
  if (trip.driver_id < 0) throw ValidationError(who + " has a negative driver_id");
  for (const auto& l : trip.links) {
    if (l.link_id < 0) throw ValidationError(who + " has a negative link_id");
    if (!(l.length_m > 0.0) || !std::isfinite(l.length_m)) throw ValidationError(who + " has a non-positive link length");
    if (!(l.speed_est_mps > 0.0) || !std::isfinite(l.speed_est_mps))
      throw ValidationError(who + " has a non-positive speed estimate");
    if (!(l.delay_s >= 0.0) || !std::isfinite(l.delay_s)) throw ValidationError(who + " has a negative delay");
  }
}

// ---------------------------------------------------------------------------

std::size_t time_slice(std::int64_t ts, std::int64_t utc_offset_s) noexcept {
  const std::int64_t local = ts + utc_offset_s;
  const std::int64_t sec = local - floor_div(local, kSecondsPerDay) * kSecondsPerDay;
  return static_cast<std::size_t>(sec / 300);
}

std::size_t weekday(std::int64_t ts, std::int64_t utc_offset_s) noexcept {
  const std::int64_t days = floor_div(ts + utc_offset_s - kFirstMonday, kSecondsPerDay);
  return static_cast<std::size_t>(((days % 7) + 7) % 7);
}

std::int64_t week_index(std::int64_t ts, std::int64_t utc_offset_s) noexcept {
  return floor_div(ts + utc_offset_s - kFirstMonday, kSecondsPerWeek);
}

// ---------------------------------------------------------------------------

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("generator config: " + msg); };
  if (num_links < 1) fail("num_links must be >= 1");
  if (num_drivers < 1) fail("num_drivers must be >= 1");
  if (weeks < 1) fail("weeks must be >= 1");
  if (trips_per_day < 1) fail("trips_per_day must be >= 1");
  if (min_links < 1 || max_links < min_links) fail("need 1 <= min_links <= max_links");
  if (!(link_length_min_m > 0.0) || link_length_max_m < link_length_min_m)
    fail("need 0 < link_length_min_m <= link_length_max_m");
  if (!(free_speed_median_mps > 0.0)) fail("free_speed_median_mps must be > 0");
  for (double s : {free_speed_sigma, driver_sigma, travel_noise_sigma, speed_obs_sigma})
    if (!(s >= 0.0)) fail("noise scales must be >= 0");
  for (double d : {morning_rush_depth, evening_rush_depth})
    if (!(d >= 0.0 && d < 0.95)) fail("rush depths must lie in [0, 0.95)");
  if (morning_rush_depth + evening_rush_depth >= 0.95) fail("combined rush depth must stay below 0.95");
  if (!(rush_width_hours > 0.0)) fail("rush_width_hours must be > 0");
  if (!(weekend_rush_scale >= 0.0 && weekend_rush_scale <= 1.0)) fail("weekend_rush_scale must lie in [0, 1]");
  if (!(delay_link_fraction >= 0.0 && delay_link_fraction <= 1.0)) fail("delay_link_fraction must lie in [0, 1]");
  if (!(max_delay_s >= 0.0)) fail("max_delay_s must be >= 0");
  if (time_slice(start_ts, utc_offset_s) != 0 || weekday(start_ts, utc_offset_s) != 0)
    fail("start_ts must be a local Monday midnight");
}

double congestion(const GeneratorConfig& cfg, std::size_t slice, std::size_t day_of_week) noexcept {
  const double hour = static_cast<double>(slice) * 5.0 / 60.0;
  const double scale = day_of_week >= 5 ? cfg.weekend_rush_scale : 1.0;
  auto dip = [&](double centre, double depth) {
    const double z = (hour - centre) / cfg.rush_width_hours;
    return depth * std::exp(-0.5 * z * z);
  };
  return 1.0 - scale * (dip(cfg.morning_rush_hour, cfg.morning_rush_depth) +
                        dip(cfg.evening_rush_hour, cfg.evening_rush_depth));
}

void generate_dataset(const GeneratorConfig& cfg, const std::function<void(TripRecord&&)>& sink) {
  cfg.validate();

  // Latent road network and drivers.
  Rng world = Rng(cfg.seed).fork(1);
  std::vector<double> length(static_cast<std::size_t>(cfg.num_links));
  std::vector<double> free_speed(length.size());
  std::vector<double> base_delay(length.size());
  for (std::size_t i = 0; i < length.size(); ++i) {
    length[i] = world.uniform(cfg.link_length_min_m, cfg.link_length_max_m);
    free_speed[i] = cfg.free_speed_median_mps * world.lognormal(0.0, cfg.free_speed_sigma);
    const bool signalised = world.uniform() < cfg.delay_link_fraction;
    base_delay[i] = signalised ? world.uniform(0.0, cfg.max_delay_s) : 0.0;
  }
  std::vector<double> driver_factor(static_cast<std::size_t>(cfg.num_drivers));
  for (double& f : driver_factor) f = world.lognormal(0.0, cfg.driver_sigma);

  Rng rng = Rng(cfg.seed).fork(2);
  std::size_t index = 0;
  const std::int64_t days = static_cast<std::int64_t>(cfg.weeks) * 7;
  for (std::int64_t day = 0; day < days; ++day) {
    for (int k = 0; k < cfg.trips_per_day; ++k) {
      TripRecord trip;
      char id[32];
      std::snprintf(id, sizeof id, "T%07zu", index++);
      trip.trip_id = id;

      // Mostly daytime departures, some at any hour.
      const std::int64_t tod = rng.uniform() < 0.75 ? rng.range(6 * 3600, 22 * 3600 - 1) : rng.range(0, kSecondsPerDay - 1);
      trip.depart_ts = cfg.start_ts + day * kSecondsPerDay + tod;
      trip.driver_id = rng.range(0, cfg.num_drivers - 1);

      const double cong = congestion(cfg, time_slice(trip.depart_ts, cfg.utc_offset_s),
                                     weekday(trip.depart_ts, cfg.utc_offset_s));
      const double drv = driver_factor[static_cast<std::size_t>(trip.driver_id)];
      const auto n_links = rng.range(cfg.min_links, cfg.max_links);
      double seconds = 0.0;
      trip.links.reserve(static_cast<std::size_t>(n_links));
      for (std::int64_t j = 0; j < n_links; ++j) {
        const auto link = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(cfg.num_links)));
        const double road_speed = free_speed[link] * cong;
        LinkObs obs;
        obs.link_id = static_cast<std::int64_t>(link);
        obs.length_m = length[link];
        obs.speed_est_mps = road_speed * rng.lognormal(0.0, cfg.speed_obs_sigma);
        obs.delay_s = base_delay[link] / cong;
        seconds += obs.length_m / (road_speed * drv) + obs.delay_s;
        trip.links.push_back(obs);
      }
      trip.y_seconds = seconds * rng.lognormal(0.0, cfg.travel_noise_sigma);
      sink(std::move(trip));
    }
  }
}

std::vector<TripRecord> generate_dataset(const GeneratorConfig& cfg) {
  std::vector<TripRecord> out;
  out.reserve(static_cast<std::size_t>(cfg.weeks) * 7 * static_cast<std::size_t>(cfg.trips_per_day));
  generate_dataset(cfg, [&](TripRecord&& t) { out.push_back(std::move(t)); });
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json FilterSummary::to_json() const {
  nlohmann::ordered_json j;
  j["event"] = "preprocess";
  j["input"] = input;
  j["kept"] = kept;
  j["dropped_short"] = dropped_short;
  j["dropped_fast"] = dropped_fast;
  return j;
}

bool passes_filter(const TripRecord& trip) noexcept {
  if (trip.y_seconds < kMinTravelSeconds) return false;
  // speed_kmh > 120  <=>  3.6 * L / y > 120  <=>  3 L > 100 y (exact for integer inputs)
  return !(3.0 * trip.total_length_m() > 100.0 * trip.y_seconds);
}

std::vector<TripRecord> preprocess_filter(std::vector<TripRecord> records, FilterSummary* summary) {
  FilterSummary s;
  s.input = records.size();
  std::vector<TripRecord> kept;
  kept.reserve(records.size());
  for (auto& r : records) {
    if (r.y_seconds < kMinTravelSeconds)
      ++s.dropped_short;
    else if (!passes_filter(r))
      ++s.dropped_fast;
    else
      kept.push_back(std::move(r));
  }
  s.kept = kept.size();
  if (summary) *summary = s;
  return kept;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::optional<Split> split_for_week(std::int64_t relative_week) noexcept {
  if (relative_week < 0) return std::nullopt;
  if (relative_week < 16) return Split::train;
  if (relative_week < 18) return Split::val;
  if (relative_week < 20) return Split::test;
  return std::nullopt;
}

std::vector<TripRecord>& Splits::get(Split s) {
  return s == Split::train ? train : (s == Split::val ? val : test);
}

const std::vector<TripRecord>& Splits::get(Split s) const {
  return s == Split::train ? train : (s == Split::val ? val : test);
}

Splits split_by_weeks(std::vector<TripRecord> records, std::int64_t utc_offset_s) {
  if (records.empty()) throw ValidationError("cannot split an empty dataset");
  std::int64_t first = week_index(records.front().depart_ts, utc_offset_s);
  std::int64_t last = first;
  for (const auto& r : records) {
    const std::int64_t w = week_index(r.depart_ts, utc_offset_s);
    first = std::min(first, w);
    last = std::max(last, w);
  }
  if (last - first < 19)
    throw ValidationError("dataset spans " + std::to_string(last - first + 1) +
                          " weeks; the 16/2/2 split needs 20");
  Splits out;
  for (auto& r : records)
    if (auto s = split_for_week(week_index(r.depart_ts, utc_offset_s) - first)) out.get(*s).push_back(std::move(r));
  return out;
}

// ---------------------------------------------------------------------------

void link_features(const LinkObs& link, std::span<double, kLinkFeatures> out) noexcept {
  out[0] = link.length_m / 1000.0;
  out[1] = link.speed_est_mps / 10.0;
  out[2] = link.delay_s / 60.0;
  out[3] = link.length_m / link.speed_est_mps / 60.0;
}

Batch make_batch(std::span<const TripRecord> records, std::span<const std::size_t> indices,
                 std::int64_t utc_offset_s) {
  Batch b;
  b.size = indices.size();
  for (std::size_t idx : indices) b.max_len = std::max(b.max_len, records[idx].links.size());
  b.lengths.resize(b.size);
  b.mask.assign(b.size * b.max_len, 0);
  b.link_ids.assign(b.size * b.max_len, 0);
  b.link_features.assign(b.size * b.max_len * kLinkFeatures, 0.0);
  b.driver_ids.resize(b.size);
  b.time_slices.resize(b.size);
  b.weekdays.resize(b.size);
  b.trip_features.resize(b.size * kTripFeatures);
  b.targets.resize(b.size);
  for (std::size_t i = 0; i < b.size; ++i) {
    const TripRecord& r = records[indices[i]];
    b.lengths[i] = r.links.size();
    for (std::size_t t = 0; t < r.links.size(); ++t) {
      b.mask[i * b.max_len + t] = 1;
      b.link_ids[i * b.max_len + t] = static_cast<std::size_t>(r.links[t].link_id);
      link_features(r.links[t],
                    std::span<double, kLinkFeatures>(b.link_features.data() + (i * b.max_len + t) * kLinkFeatures,
                                                     kLinkFeatures));
    }
    b.driver_ids[i] = static_cast<std::size_t>(r.driver_id);
    b.time_slices[i] = time_slice(r.depart_ts, utc_offset_s);
    b.weekdays[i] = weekday(r.depart_ts, utc_offset_s);
    b.trip_features[i * kTripFeatures + 0] = r.total_length_m() / 10000.0;
    b.trip_features[i * kTripFeatures + 1] = static_cast<double>(r.links.size()) / 30.0;
    b.targets[i] = r.y_seconds;
  }
  return b;
}

Batch make_batch(std::span<const TripRecord> records, std::int64_t utc_offset_s) {
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return make_batch(records, idx, utc_offset_s);
}

std::vector<Batch> make_batches(std::span<const TripRecord> records, std::size_t batch_size, Rng* rng,
                                std::int64_t utc_offset_s) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (rng) rng->shuffle(std::span<std::size_t>(order));
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, order.size() - start);
    out.push_back(make_batch(records, std::span<const std::size_t>(order).subspan(start, len), utc_offset_s));
  }
  return out;
}

BatchStream::BatchStream(std::span<const TripRecord> records, std::size_t batch_size, Rng rng,
                         std::int64_t utc_offset_s)
    : records_(records), batch_size_(batch_size), rng_(rng), utc_offset_s_(utc_offset_s) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (records.empty()) throw ValidationError("cannot batch an empty split");
  order_.resize(records.size());
  reshuffle();
}

void BatchStream::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  rng_.shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

Batch BatchStream::next() {
  if (cursor_ >= order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t len = std::min(batch_size_, order_.size() - cursor_);
  Batch b = make_batch(records_, std::span<const std::size_t>(order_).subspan(cursor_, len), utc_offset_s_);
  cursor_ += len;
  return b;
}

// ---------------------------------------------------------------------------

std::string to_json_line(const TripRecord& trip) {
  nlohmann::ordered_json j;
  j["trip_id"] = trip.trip_id;
  j["driver_id"] = trip.driver_id;
  j["depart_ts"] = trip.depart_ts;
  auto links = nlohmann::ordered_json::array();
  for (const auto& l : trip.links) {
    nlohmann::ordered_json lj;
    lj["link_id"] = l.link_id;
    lj["length_m"] = l.length_m;
    lj["speed_est_mps"] = l.speed_est_mps;
    lj["delay_s"] = l.delay_s;
    links.push_back(std::move(lj));
  }
  j["links"] = std::move(links);
  j["y_seconds"] = trip.y_seconds;
  return j.dump();
}

TripRecord parse_json_line(std::string_view line, std::size_t line_no) {
  const std::string where = "line " + std::to_string(line_no) + ": ";
  TripRecord t;
  try {
    const auto j = nlohmann::json::parse(line);
    static const char* kFields[] = {"trip_id", "driver_id", "depart_ts", "links", "y_seconds"};
    for (const auto& item : j.items()) {
      bool known = false;
      for (const char* f : kFields) known = known || item.key() == f;
      if (!known) throw ValidationError(where + "unknown field '" + item.key() + "'");
    }
    t.trip_id = j.at("trip_id").get<std::string>();
    t.driver_id = j.at("driver_id").get<std::int64_t>();
    t.depart_ts = j.at("depart_ts").get<std::int64_t>();
    for (const auto& lj : j.at("links")) {
      LinkObs l;
      l.link_id = lj.at("link_id").get<std::int64_t>();
      l.length_m = lj.at("length_m").get<double>();
      l.speed_est_mps = lj.at("speed_est_mps").get<double>();
      l.delay_s = lj.at("delay_s").get<double>();
      t.links.push_back(l);
    }
    t.y_seconds = j.at("y_seconds").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(where + e.what());
  }
  try {
    validate(t);
  } catch (const ValidationError& e) {
    throw ValidationError(where + e.what());
  }
  return t;
}

void write_dataset(const std::filesystem::path& path, std::span<const TripRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& r : records) out << to_json_line(r) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::vector<TripRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<TripRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    out.push_back(parse_json_line(line, line_no));
  }
  return out;
}

}  // namespace frnn
