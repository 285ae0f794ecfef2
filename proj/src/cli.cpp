// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "fusionrnn/baselines.hpp"
#include "fusionrnn/config.hpp"
#include "fusionrnn/counts.hpp"
#include "fusionrnn/error.hpp"

namespace frnn::cli {
namespace {

CliConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  CliConfig c = path.empty() ? CliConfig{} : CliConfig::load(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  c.finalize();
  return c;
}

struct LoadedData {
  Splits splits;
  FilterSummary filter;
};

LoadedData load_data(const CliConfig& c) {
  std::vector<TripRecord> records = c.dataset.empty() ? generate_dataset(c.data) : read_dataset(c.dataset);
  LoadedData d;
  records = preprocess_filter(std::move(records), &d.filter);
  d.splits = split_by_weeks(std::move(records), c.data.utc_offset_s);
  return d;
}

std::vector<double> targets(std::span<const TripRecord> records) {
  std::vector<double> y;
  y.reserve(records.size());
  for (const auto& r : records) y.push_back(r.y_seconds);
  return y;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + s + "' (expected train, val or test)");
}

Json count_record(CellKind kind, std::uint64_t m, std::uint64_t n, int rounds, std::uint64_t seq_len) {
  Rng rng(0);
  const CellParams params = init_params(kind, m, n, rounds, rng);
  Json j;
  j["event"] = "count";
  j["variant"] = std::string(to_string(kind));
  j["m"] = m;
  j["n"] = n;
  j["r"] = kind == CellKind::fusion ? rounds : 0;
  j["seq_len"] = seq_len;
  j["params_closed_form"] = param_count(kind, m, n, rounds);
  j["params_enumerated"] = enumerate_parameters(params);
  j["mults_closed_form"] = mult_count(kind, m, n, rounds, seq_len);
  j["mults_instrumented"] = instrumented_step_multiplications(params) * seq_len;
  j["params_formula"] = param_polynomial(kind).to_string();
  j["mults_formula"] = mult_polynomial(kind, rounds).to_string();
  return j;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text_file(path, text);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app{"Fusion RNN travel-time toolkit"};
  app.require_subcommand(1);
  std::string config_path, out_path, in_path, dataset, checkpoint, split = "test", variant, kind;
  std::vector<std::string> overrides;
  std::uint64_t m = 0, n = 0, seq_len = 1;
  int rounds = 2;
  double tol = 1e-5;
  std::int64_t utc_offset = 0;
  std::vector<int> r_list{1, 2, 3, 4, 5};

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic trip dataset");
  gen->add_option("--config", config_path, "Config file");
  gen->add_option("--set", overrides, "key=value override")->allow_extra_args(false);
  gen->add_option("--out", out_path, "Output JSONL")->required();

  auto* pre = app.add_subcommand("preprocess", "Drop implausible trips");
  pre->add_option("--in", in_path, "Input JSONL")->required();
  pre->add_option("--out", out_path, "Output JSONL")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config_path, "Config file");
  tr->add_option("--set", overrides, "key=value override")->allow_extra_args(false);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--dataset", dataset, "JSONL dataset")->required();
  ev->add_option("--split", split, "train, val, test or all");
  ev->add_option("--utc-offset", utc_offset, "Seconds east of UTC");

  auto* cnt = app.add_subcommand("count", "Parameter and multiplication counts of one cell");
  cnt->add_option("--variant", variant, "fusion, elman, gru or lstm")->required();
  cnt->add_option("--m", m, "Input size")->required();
  cnt->add_option("--n", n, "Hidden size")->required();
  cnt->add_option("--r", rounds, "Fusion rounds");
  cnt->add_option("--seq-len", seq_len, "Time steps");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc->add_option("--variant", variant, "fusion, elman, gru, lstm, ffn or eta-<encoder>")->required();
  gc->add_option("--r", rounds, "Fusion rounds");
  gc->add_option("--tol", tol, "Maximum relative error");

  auto* sw = app.add_subcommand("sweep-r", "Train one fusion model per r");
  sw->add_option("--config", config_path, "Config file");
  sw->add_option("--set", overrides, "key=value override")->allow_extra_args(false);
  sw->add_option("--r", r_list, "Values of r")->delimiter(',');
  sw->add_option("--out", out_path, "Output table (JSONL)")->required();

  auto* bl = app.add_subcommand("baseline", "Evaluate a baseline on a dataset split");
  bl->add_option("--kind", kind, "route-eta, mean or ffn")->required();
  bl->add_option("--dataset", dataset, "JSONL dataset (defaults to data.dataset)");
  bl->add_option("--config", config_path, "Config file");
  bl->add_option("--set", overrides, "key=value override")->allow_extra_args(false);
  bl->add_option("--split", split, "train, val or test");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    throw ValidationError(e.what());
  }

  if (gen->parsed()) {
    const CliConfig c = load_config(config_path, overrides);
    std::ofstream file(out_path, std::ios::binary);
    if (!file) throw IoError("cannot open '" + out_path + "' for writing");
    std::size_t count = 0;
    generate_dataset(c.data, [&](TripRecord&& t) {
      file << to_json_line(t) << '\n';
      ++count;
    });
    file.close();
    if (!file) throw IoError("failed writing '" + out_path + "'");
    out << Json{{"event", "gen_data"}, {"trips", count}, {"path", out_path}}.dump() << '\n';
    return kExitOk;
  }

  if (pre->parsed()) {
    FilterSummary summary;
    const auto kept = preprocess_filter(read_dataset(in_path), &summary);
    write_dataset(out_path, kept);
    out << summary.to_json().dump() << '\n';
    return kExitOk;
  }

  if (tr->parsed()) {
    const CliConfig c = load_config(config_path, overrides);
    const LoadedData d = load_data(c);
    out << d.filter.to_json().dump() << '\n';
    std::filesystem::create_directories(c.out_dir);
    const auto dir = std::filesystem::path(c.out_dir);
    std::ofstream log(dir / "metrics.jsonl", std::ios::binary);
    if (!log) throw IoError("cannot open '" + (dir / "metrics.jsonl").string() + "' for writing");
    write_text_file(dir / "config.txt", c.to_text());
    const TrainResult res = train(c.model, c.train, d.splits, &log, c.data.utc_offset_s);
    log.close();
    res.model.save(dir / "checkpoint.json");
    Json report = res.report_json(c.train);
    report["data"] = {{"train", d.splits.train.size()}, {"val", d.splits.val.size()}, {"test", d.splits.test.size()}};
    write_text_file(dir / "report.json", report.dump(2) + "\n");
    out << report.dump() << '\n';
    return kExitOk;
  }

  if (ev->parsed()) {
    const EtaModel model = EtaModel::load(checkpoint);
    std::vector<TripRecord> records = read_dataset(dataset);
    if (split != "all") {
      const Split s = parse_split(split);
      if (records.empty()) throw DomainError("dataset '" + dataset + "' is empty");
      records = std::move(split_by_weeks(std::move(records), utc_offset).get(s));
    }
    Json j = evaluate(model, records, 1024, utc_offset).to_json();
    j["event"] = "eval";
    j["split"] = split;
    out << j.dump() << '\n';
    return kExitOk;
  }

  if (cnt->parsed()) {
    if (seq_len < 1) throw ValidationError("--seq-len must be >= 1");
    out << count_record(parse_cell_kind(variant), m, n, rounds, seq_len).dump() << '\n';
    return kExitOk;
  }

  if (gc->parsed()) {
    GradcheckReport report;
    if (variant == "ffn")
      report = gradcheck_model(EncoderKind::ffn, rounds, tol);
    else if (variant.rfind("eta-", 0) == 0)
      report = gradcheck_model(parse_encoder_kind(variant.substr(4)), rounds, tol);
    else
      report = gradcheck_cell(parse_cell_kind(variant), rounds, tol);
    out << report.to_json().dump() << '\n';
    return report.passed ? kExitOk : kExitCheckFailed;
  }

  if (sw->parsed()) {
    const CliConfig c = load_config(config_path, overrides);
    const LoadedData d = load_data(c);
    const auto rows = sweep_r(r_list, c.model, c.train, d.splits, c.data.utc_offset_s);
    std::vector<std::string> lines;
    for (const auto& row : rows) {
      lines.push_back(row.to_json_line());
      out << lines.back() << '\n';
    }
    write_lines(out_path, lines);
    return kExitOk;
  }

  if (bl->parsed()) {
    CliConfig c = load_config(config_path, overrides);
    if (!dataset.empty()) c.dataset = dataset;
    const Split s = parse_split(split);
    const LoadedData d = load_data(c);
    const auto& eval_set = d.splits.get(s);
    if (eval_set.empty()) throw DomainError("the " + split + " split is empty");
    std::vector<double> preds;
    if (kind == "route-eta") {
      for (const auto& t : eval_set) preds.push_back(route_eta_baseline(t));
    } else if (kind == "mean") {
      if (d.splits.train.empty()) throw DomainError("the train split is empty");
      const ConstantMeanPredictor mean(d.splits.train);
      preds.assign(eval_set.size(), mean.mean());
    } else if (kind == "ffn") {
      EtaModelConfig mc = c.model;
      mc.encoder = EncoderKind::ffn;
      const TrainResult res = train(mc, c.train, d.splits, nullptr, c.data.utc_offset_s);
      preds = predict_all(res.model, eval_set, c.train.eval_batch_size, c.data.utc_offset_s);
    } else {
      throw ValidationError("unknown baseline '" + kind + "' (expected route-eta, mean or ffn)");
    }
    Json j = compute_metrics(targets(eval_set), preds).to_json();
    j["event"] = "baseline";
    j["kind"] = kind;
    j["split"] = split;
    out << j.dump() << '\n';
    return kExitOk;
  }
  return kExitOk;
}

int exit_code(const Error& e) {
  const std::string_view k = e.kind();
  if (k == "io") return kExitIo;
  if (k == "divergence") return kExitDivergence;
  return kExitValidation;
}

void report_error(std::ostream& err, std::string_view kind, const std::string& message) {
  err << Json{{"event", "error"}, {"kind", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out);
  } catch (const Error& e) {
    report_error(err, e.kind(), e.what());
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    report_error(err, "io", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    report_error(err, "validation", e.what());
    return kExitValidation;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace frnn::cli
