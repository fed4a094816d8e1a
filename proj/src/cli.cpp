// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ral/cli.hpp"

#include "ral/binary_io.hpp"
#include "ral/errors.hpp"
#include "ral/eval.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>

namespace ral {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string out = "ral_out";
  std::string dataset;
  std::string checkpoint;
  // ablate
  std::string grid = "table2";
  // analyze
  bool mv_groups = false;
  bool uncertainty_groups = false;
  long set_size = 5;
  std::string mv_filter;
  std::string noise_sweep;
  long profile_k = 0;
  long trace_every = 0;
  bool gate_ratio = false;
};

RunConfig effective_config(const Options& o) {
  KeyValueList entries;
  if (!o.config_path.empty()) {
    if (!fs::exists(o.config_path)) throw ConfigError("config file not found: " + o.config_path);
    std::string text;
    try {
      text = io::read_file(o.config_path);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    entries = parse_key_values(text, o.config_path);
  }
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t");
      const auto e = v.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    entries.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  if (o.seed) entries.emplace_back("seed", std::to_string(*o.seed));
  return run_config_from(entries);
}

void write_echo(const fs::path& out, const RunConfig& c) {
  io::write_file(out / "config.echo", format_key_values(run_config_entries(c)));
}

fs::path prepare_out(const Options& o) {
  fs::path out(o.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

Dataset require_dataset(const Options& o) {
  if (o.dataset.empty()) throw ConfigError("--dataset is required");
  return load_dataset(o.dataset);
}

Checkpoint require_checkpoint(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  return load_checkpoint(o.checkpoint);
}

void write_full_report(const fs::path& out, const RalModel& model, const Dataset& data) {
  RetrievalReport report = rank_all(model, data.test);
  report.mv_groups = group_by_mv(report);
  report.uncertainty_groups = group_by_uncertainty(report, query_uncertainties(model, data.test));
  io::write_file(out / "report.json", report_json(report));
  io::write_file(out / "report.csv", report_csv(report));
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  const RunConfig c = effective_config(o);
  const fs::path dir = prepare_out(o);
  const Dataset d = generate(c.synth);
  save_dataset(d, dir);
  write_echo(dir, c);
  out << "dataset written to " << dir.string() << " (checksum " << io::hex64(dataset_checksum(dir))
      << ")\n";
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig c = effective_config(o);
  validate(c.train);
  const Dataset data = require_dataset(o);
  const fs::path dir = prepare_out(o);
  write_echo(dir, c);
  const TrainResult r = train(c.train, data);
  const fs::path ckpt = o.checkpoint.empty() ? dir / "checkpoint" : fs::path(o.checkpoint);
  save_checkpoint(r.best, ckpt);
  io::write_file(dir / "train_log.csv", train_log_csv(r.log));
  if (!r.uncertainty_trace.empty()) {
    io::write_file(dir / "uncertainty_trace.csv", uncertainty_trace_csv(r.uncertainty_trace));
  }
  write_full_report(dir, restore_model(r.best), data);
  out << "trained " << r.epochs_run << " epochs, best test SumR " << format_double(r.best.best_sumr)
      << " at epoch " << r.best_epoch << "; checkpoint " << ckpt.string() << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const RunConfig c = effective_config(o);
  const Dataset data = require_dataset(o);
  const Checkpoint ckpt = require_checkpoint(o);
  if (ckpt.input_dim != data.prototypes.cols()) {
    throw DataError("checkpoint input_dim does not match the dataset");
  }
  const fs::path dir = prepare_out(o);
  write_echo(dir, c);
  const RalModel model = restore_model(ckpt);
  write_full_report(dir, model, data);
  out << "SumR " << format_double(rank_all(model, data.test).overall.sumr()) << "\n";
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const RunConfig c = effective_config(o);
  validate(c.train);
  const auto grid = ablation_grid(o.grid);
  const Dataset data = require_dataset(o);
  const fs::path dir = prepare_out(o);
  write_echo(dir, c);
  const auto rows = ablate(c.train, data, grid);
  const std::string table = ablation_csv(rows);
  io::write_file(dir / "report.csv", table);
  nlohmann::json j;
  j["grid"] = o.grid;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json overrides = nlohmann::json::object();
    for (const auto& [k, v] : r.overrides) overrides[k] = v;
    j["rows"].push_back({{"name", r.name},
                         {"overrides", overrides},
                         {"best_epoch", r.best_epoch},
                         {"R@1", r.recall.r1()},
                         {"R@5", r.recall.r5()},
                         {"R@10", r.recall.r10()},
                         {"R@100", r.recall.r100()},
                         {"SumR", r.recall.sumr()}});
  }
  io::write_file(dir / "report.json", j.dump(2) + "\n");
  out << table;
  return kExitOk;
}

int cmd_analyze(const Options& o, std::ostream& out) {
  const RunConfig c = effective_config(o);
  if (!o.mv_groups && !o.uncertainty_groups && o.noise_sweep.empty() && o.profile_k == 0 &&
      o.trace_every == 0 && !o.gate_ratio) {
    throw ConfigError(
        "analyze needs one of --mv-groups, --uncertainty-groups, --noise-sweep, "
        "--similarity-profile, --uncertainty-trace, --gate-ratio");
  }
  const Dataset data = require_dataset(o);
  const fs::path dir = prepare_out(o);
  write_echo(dir, c);
  nlohmann::json summary = nlohmann::json::object();

  if (o.trace_every > 0) {
    TrainConfig t = c.train;
    t.uncertainty_every = o.trace_every;
    validate(t);
    const TrainResult r = train(t, data);
    io::write_file(dir / "uncertainty_trace.csv", uncertainty_trace_csv(r.uncertainty_trace));
    summary["uncertainty_trace_records"] = r.uncertainty_trace.size();
  }

  const bool needs_model =
      o.mv_groups || o.uncertainty_groups || !o.noise_sweep.empty() || o.profile_k > 0 || o.gate_ratio;
  if (needs_model) {
    const RalModel model = restore_model(require_checkpoint(o));
    RetrievalReport report = rank_all(model, data.test, std::max<long>(10, o.profile_k));
    summary["SumR"] = report.overall.sumr();
    if (o.mv_groups) {
      report.mv_groups = group_by_mv(report);
      RetrievalReport only = report;
      only.uncertainty_groups.clear();
      io::write_file(dir / "mv_groups.csv", report_csv(only));
    }
    if (o.uncertainty_groups) {
      std::optional<std::pair<double, double>> filter;
      if (!o.mv_filter.empty()) {
        const auto v = parse_double_list("mv-filter", o.mv_filter);
        if (v.size() != 2 || !(v[0] <= v[1])) throw ConfigError("--mv-filter expects lo,hi");
        filter = std::make_pair(v[0], v[1]);
      }
      report.uncertainty_groups = group_by_uncertainty(
          report, query_uncertainties(model, data.test), o.set_size, filter);
      RetrievalReport only = report;
      only.mv_groups.clear();
      io::write_file(dir / "uncertainty_groups.csv", report_csv(only));
    }
    if (!o.noise_sweep.empty()) {
      const auto levels = parse_double_list("noise-sweep", o.noise_sweep);
      if (levels.empty() || levels.front() != 0.0) {
        throw ConfigError("--noise-sweep levels must start at 0");
      }
      for (std::size_t i = 1; i < levels.size(); ++i) {
        if (!(levels[i] > levels[i - 1]) || levels[i] > 1.0) {
          throw ConfigError("--noise-sweep levels must increase strictly within [0, 1]");
        }
      }
      const auto sweep = noise_sweep(model, data.test, levels, c.train.seed, data.config.frame_noise_std);
      io::write_file(dir / "noise_sweep.csv", noise_sweep_csv(sweep));
      summary["noise_relative_drop"] = sweep.relative_drop();
    }
    if (o.gate_ratio) {
      const auto [ratio, queries] = function_gate_ratio(model, data.test);
      summary["function_gate_ratio"] = {{"mean", ratio}, {"queries", queries}};
    }
    if (o.profile_k > 0) {
      io::write_file(dir / "similarity_profile.csv",
                     profile_csv(report, similarity_profile(report, o.profile_k)));
    }
    io::write_file(dir / "report.json", report_json(report));
    io::write_file(dir / "report.csv", report_csv(report));
  }
  io::write_file(dir / "analysis.json", summary.dump(2) + "\n");
  out << "analysis written to " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

void apply_run_key(RunConfig& c, const std::string& key, const std::string& value) {
  const bool synth = apply_synth_key(c.synth, key, value);
  const bool train = apply_train_key(c.train, key, value);
  if (!synth && !train) throw ConfigError("unknown config key: " + key);
}

RunConfig run_config_from(const KeyValueList& entries) {
  RunConfig c;
  for (const auto& [k, v] : entries) apply_run_key(c, k, v);
  return c;
}

KeyValueList run_config_entries(const RunConfig& c) {
  KeyValueList out = synth_config_entries(c.synth);
  for (auto& [k, v] : train_config_entries(c.train)) {
    if (k != "seed") out.emplace_back(k, v);
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust alignment learning for partially relevant video retrieval", "ral_cli"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key = value config file");
    sub->add_option("--seed", o.seed, "top-level seed (overrides the config file)");
    sub->add_option("--set", o.sets, "config override key=value, repeatable");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
  };
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset into --out");
  common(gen);
  auto* tr = app.add_subcommand("train", "train on --dataset; writes checkpoint and train_log.csv");
  common(tr);
  tr->add_option("--dataset", o.dataset, "dataset directory");
  tr->add_option("--checkpoint", o.checkpoint, "checkpoint directory (default OUT/checkpoint)");
  auto* ev = app.add_subcommand("eval", "evaluate --checkpoint on the test split of --dataset");
  common(ev);
  ev->add_option("--dataset", o.dataset, "dataset directory");
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint directory");
  auto* ab = app.add_subcommand("ablate", "train every row of an ablation grid");
  common(ab);
  ab->add_option("--dataset", o.dataset, "dataset directory");
  ab->add_option("--grid", o.grid, "table2, table3, table4 or lambda")->capture_default_str();
  auto* an = app.add_subcommand("analyze", "analysis protocols on a trained checkpoint");
  common(an);
  an->add_option("--dataset", o.dataset, "dataset directory");
  an->add_option("--checkpoint", o.checkpoint, "checkpoint directory");
  an->add_flag("--mv-groups", o.mv_groups, "recall per M/V ratio bin");
  an->add_flag("--uncertainty-groups", o.uncertainty_groups, "R@1 per uncertainty-sorted query set");
  an->add_option("--set-size", o.set_size, "queries per uncertainty set")->capture_default_str();
  an->add_option("--mv-filter", o.mv_filter, "lo,hi M/V prefilter for uncertainty sets");
  an->add_option("--noise-sweep", o.noise_sweep, "comma-separated noise levels starting at 0");
  an->add_option("--similarity-profile", o.profile_k, "top-k scores per query");
  an->add_option("--uncertainty-trace", o.trace_every,
                 "train and record uncertainty every N epochs");
  an->add_flag("--gate-ratio", o.gate_ratio, "gate mass on function words relative to the uniform share");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "ral_cli: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (ab->parsed()) return cmd_ablate(o, out);
    return cmd_analyze(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace ral
