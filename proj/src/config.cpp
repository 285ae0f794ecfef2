// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/config.hpp"

#include <charconv>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "fusionrnn/error.hpp"
#include "fusionrnn/tensor_io.hpp"

namespace frnn {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ValidationError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not " +
                        std::string(expected));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty())
    bad_value(key, value, std::is_floating_point_v<T> ? "a number" : "an integer");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "a boolean");
}

std::string format_double(double v) { return Json(v).dump(); }

struct Entry {
  std::string key;
  std::function<std::string()> get;
  std::function<void(std::string_view)> set;
};

template <typename T>
Entry number(std::string key, T& field) {
  auto k = key;
  return {std::move(key),
          [&field] {
            if constexpr (std::is_floating_point_v<T>)
              return format_double(field);
            else
              return std::to_string(field);
          },
          [&field, k](std::string_view v) { field = parse_number<T>(k, v); }};
}

Entry boolean(std::string key, bool& field) {
  auto k = key;
  return {std::move(key), [&field] { return std::string(field ? "true" : "false"); },
          [&field, k](std::string_view v) { field = parse_bool(k, v); }};
}

std::vector<Entry> registry(CliConfig& c, bool& links_set, bool& drivers_set) {
  GeneratorConfig& d = c.data;
  EtaModelConfig& m = c.model;
  TrainConfig& t = c.train;
  std::vector<Entry> e;
  e.push_back({"data.dataset", [&c] { return c.dataset; }, [&c](std::string_view v) { c.dataset = v; }});
  e.push_back(number("data.num_links", d.num_links));
  e.push_back(number("data.num_drivers", d.num_drivers));
  e.push_back(number("data.weeks", d.weeks));
  e.push_back(number("data.trips_per_day", d.trips_per_day));
  e.push_back(number("data.seed", d.seed));
  e.push_back(number("data.start_ts", d.start_ts));
  e.push_back(number("data.utc_offset_s", d.utc_offset_s));
  e.push_back(number("data.min_links", d.min_links));
  e.push_back(number("data.max_links", d.max_links));
  e.push_back(number("data.link_length_min_m", d.link_length_min_m));
  e.push_back(number("data.link_length_max_m", d.link_length_max_m));
  e.push_back(number("data.free_speed_median_mps", d.free_speed_median_mps));
  e.push_back(number("data.free_speed_sigma", d.free_speed_sigma));
  e.push_back(number("data.driver_sigma", d.driver_sigma));
  e.push_back(number("data.travel_noise_sigma", d.travel_noise_sigma));
  e.push_back(number("data.speed_obs_sigma", d.speed_obs_sigma));
  e.push_back(number("data.morning_rush_hour", d.morning_rush_hour));
  e.push_back(number("data.evening_rush_hour", d.evening_rush_hour));
  e.push_back(number("data.morning_rush_depth", d.morning_rush_depth));
  e.push_back(number("data.evening_rush_depth", d.evening_rush_depth));
  e.push_back(number("data.rush_width_hours", d.rush_width_hours));
  e.push_back(number("data.weekend_rush_scale", d.weekend_rush_scale));
  e.push_back(number("data.delay_link_fraction", d.delay_link_fraction));
  e.push_back(number("data.max_delay_s", d.max_delay_s));

  Entry links = number("model.num_links", m.num_links);
  links.set = [&m, &links_set](std::string_view v) {
    m.num_links = parse_number<std::size_t>("model.num_links", v);
    links_set = true;
  };
  e.push_back(std::move(links));
  Entry drivers = number("model.num_drivers", m.num_drivers);
  drivers.set = [&m, &drivers_set](std::string_view v) {
    m.num_drivers = parse_number<std::size_t>("model.num_drivers", v);
    drivers_set = true;
  };
  e.push_back(std::move(drivers));
  e.push_back(number("model.link_embed_dim", m.link_embed_dim));
  e.push_back(number("model.driver_embed_dim", m.driver_embed_dim));
  e.push_back(number("model.timeslice_embed_dim", m.timeslice_embed_dim));
  e.push_back(number("model.weekday_embed_dim", m.weekday_embed_dim));
  e.push_back({"model.mlp_hidden_sizes",
               [&m] {
                 std::string s;
                 for (std::size_t i = 0; i < m.mlp_hidden_sizes.size(); ++i)
                   s += (i ? ", " : "") + std::to_string(m.mlp_hidden_sizes[i]);
                 return s;
               },
               [&m](std::string_view v) {
                 std::vector<std::size_t> sizes;
                 std::size_t pos = 0;
                 while (pos <= v.size()) {
                   const auto comma = v.find(',', pos);
                   const auto item = trim(v.substr(pos, comma == std::string_view::npos ? v.npos : comma - pos));
                   sizes.push_back(parse_number<std::size_t>("model.mlp_hidden_sizes", item));
                   if (comma == std::string_view::npos) break;
                   pos = comma + 1;
                 }
                 m.mlp_hidden_sizes = std::move(sizes);
               }});
  e.push_back({"model.encoder", [&m] { return std::string(to_string(m.encoder)); },
               [&m](std::string_view v) { m.encoder = parse_encoder_kind(v); }});
  e.push_back(number("model.rnn_hidden", m.rnn_hidden));
  e.push_back(number("model.regressor_hidden", m.regressor_hidden));
  e.push_back(number("model.rounds", m.rounds));
  e.push_back(number("model.output_scale", m.output_scale));

  e.push_back(number("train.max_steps", t.max_steps));
  e.push_back(number("train.batch_size", t.batch_size));
  e.push_back(number("train.eval_every", t.eval_every));
  e.push_back(number("train.seed", t.seed));
  e.push_back(number("train.patience", t.patience));
  e.push_back(number("train.lr", t.lr));
  e.push_back(number("train.clip_norm", t.clip_norm));
  e.push_back(boolean("train.scale_output_to_data", t.scale_output_to_data));
  e.push_back(boolean("train.sequential", t.sequential));
  e.push_back(number("train.threads", t.threads));
  e.push_back(number("train.eval_batch_size", t.eval_batch_size));
  e.push_back({"train.out_dir", [&c] { return c.out_dir; }, [&c](std::string_view v) { c.out_dir = v; }});
  return e;
}

}  // namespace

void CliConfig::set(std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  for (auto& entry : registry(*this, model_links_set_, model_drivers_set_)) {
    if (entry.key == key) {
      entry.set(value);
      return;
    }
  }
  throw ValidationError("unknown config key '" + std::string(key) + "'");
}

void CliConfig::apply_text(std::string_view text, std::string_view origin) {
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ValidationError(where + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (!seen.insert(std::string(key)).second)
      throw ValidationError(where + ": duplicate key '" + std::string(key) + "'");
    try {
      set(key, line.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
}

void CliConfig::finalize() {
  data.validate();
  if (!model_links_set_) model.num_links = static_cast<std::size_t>(data.num_links);
  if (!model_drivers_set_) model.num_drivers = static_cast<std::size_t>(data.num_drivers);
  model.validate();
  train.validate();
  if (out_dir.empty()) throw ValidationError("train.out_dir must not be empty");
}

std::string CliConfig::to_text() const {
  auto& self = const_cast<CliConfig&>(*this);
  bool a = model_links_set_, b = model_drivers_set_;
  std::ostringstream os;
  for (const auto& entry : registry(self, a, b)) os << entry.key << " = " << entry.get() << '\n';
  return os.str();
}

CliConfig CliConfig::load(const std::filesystem::path& path) {
  CliConfig c;
  c.apply_text(read_text_file(path), path.string());
  return c;
}

}  // namespace frnn
