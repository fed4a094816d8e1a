// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ral/trainer.hpp"

#include "ral/binary_io.hpp"
#include "ral/errors.hpp"
#include "ral/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace ral {

namespace {

constexpr const char* kCheckpointFormat = "ral-ckpt-v1";
constexpr const char* kParamsMagic = "RALCKPT1";

std::string join(const std::vector<Index>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string parts_summary(const LossParts& p) {
  auto f = [](const diff::Var& v) { return v.defined() ? format_double(v.scalar()) : std::string("n/a"); };
  return "L_nce=" + f(p.nce) + " L_trip=" + f(p.trip) + " L_DA=" + f(p.da) + " L_PM=" + f(p.pm);
}

std::string grad_norms(const ParameterStore& store) {
  std::string s;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& g = store[i].var.grad();
    if (g.size() == 0) continue;
    s += (s.empty() ? "" : " ") + store[i].name + "=" + format_double(g.norm());
  }
  return s;
}

}  // namespace

KeyValueList train_config_entries(const TrainConfig& c) {
  auto d = [](double v) { return format_double(v); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"seed", std::to_string(c.seed)},
      {"epochs", std::to_string(c.epochs)},
      {"batch_size", std::to_string(c.batch_size)},
      {"lr", d(c.lr)},
      {"proxies", std::to_string(c.proxies)},
      {"proxy_sampling", b(c.proxy_sampling)},
      {"tau_pm", d(c.tau_pm)},
      {"lambda1", d(c.weights.nce)},
      {"lambda2", d(c.weights.trip)},
      {"lambda3", d(c.weights.da)},
      {"lambda4", d(c.weights.pm)},
      {"tau_nce", d(c.weights.tau_nce)},
      {"margin", d(c.weights.margin)},
      {"msra_on", b(c.msra_on)},
      {"csa_on", b(c.csa_on)},
      {"clip_branch_on", b(c.clip_branch_on)},
      {"support_set_on", b(c.support_set_on)},
      {"gate_norm", to_string(c.gate_norm)},
      {"joint_dim", std::to_string(c.joint_dim)},
      {"clip_scales", join(c.clip_scales)},
      {"eval_every", std::to_string(c.eval_every)},
      {"patience", std::to_string(c.patience)},
      {"uncertainty_every", std::to_string(c.uncertainty_every)},
  };
}

bool apply_train_key(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "seed") c.seed = parse_u64(key, value);
  else if (key == "epochs") c.epochs = parse_long(key, value);
  else if (key == "batch_size") c.batch_size = parse_long(key, value);
  else if (key == "lr") c.lr = parse_double(key, value);
  else if (key == "proxies") c.proxies = parse_long(key, value);
  else if (key == "proxy_sampling") c.proxy_sampling = parse_bool(key, value);
  else if (key == "tau_pm") c.tau_pm = parse_double(key, value);
  else if (key == "lambda1") c.weights.nce = parse_double(key, value);
  else if (key == "lambda2") c.weights.trip = parse_double(key, value);
  else if (key == "lambda3") c.weights.da = parse_double(key, value);
  else if (key == "lambda4") c.weights.pm = parse_double(key, value);
  else if (key == "tau_nce") c.weights.tau_nce = parse_double(key, value);
  else if (key == "margin") c.weights.margin = parse_double(key, value);
  else if (key == "msra_on") c.msra_on = parse_bool(key, value);
  else if (key == "csa_on") c.csa_on = parse_bool(key, value);
  else if (key == "clip_branch_on") c.clip_branch_on = parse_bool(key, value);
  else if (key == "support_set_on") c.support_set_on = parse_bool(key, value);
  else if (key == "gate_norm") c.gate_norm = parse_gate_norm(value);
  else if (key == "joint_dim") c.joint_dim = parse_long(key, value);
  else if (key == "clip_scales") {
    c.clip_scales.clear();
    for (long v : parse_long_list(key, value)) c.clip_scales.push_back(v);
  } else if (key == "eval_every") c.eval_every = parse_long(key, value);
  else if (key == "patience") c.patience = parse_long(key, value);
  else if (key == "uncertainty_every") c.uncertainty_every = parse_long(key, value);
  else return false;
  return true;
}

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (c.epochs < 1) fail("epochs must be at least 1");
  if (c.batch_size < 2) fail("batch_size must be at least 2 for the contrastive losses");
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) fail("lr must be finite and nonnegative");
  if (c.proxies < 1) fail("proxies (K) must be at least 1");
  if (!(c.tau_pm > 0.0)) fail("tau_pm must be positive");
  if (!(c.weights.tau_nce > 0.0)) fail("tau_nce must be positive");
  if (!(c.weights.margin > 0.0)) fail("margin must be positive");
  for (double w : {c.weights.nce, c.weights.trip, c.weights.da, c.weights.pm}) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail("loss weights must be finite and nonnegative");
  }
  if (c.joint_dim < 2) fail("joint_dim must be at least 2");
  if (c.clip_scales.empty()) fail("clip_scales must not be empty");
  for (auto s : c.clip_scales) {
    if (s < 1) fail("clip_scales entries must be positive");
  }
  if (c.eval_every < 1) fail("eval_every must be at least 1");
  if (c.patience < 1) fail("patience must be at least 1");
  if (c.uncertainty_every < 0) fail("uncertainty_every must be nonnegative");
}

std::uint64_t config_hash(const TrainConfig& c) {
  return fnv1a(format_key_values(train_config_entries(c)));
}

ModelConfig model_config(const TrainConfig& c, Index input_dim) {
  ModelConfig m;
  m.input_dim = input_dim;
  m.joint_dim = c.joint_dim;
  m.seed = c.seed;
  m.csa_on = c.csa_on;
  m.clip_branch_on = c.clip_branch_on;
  m.gate_norm = c.gate_norm;
  m.clip_scales = c.clip_scales;
  return m;
}

std::string train_log_csv(const std::vector<LogRow>& log) {
  std::ostringstream out;
  out << "epoch,L_nce,L_trip,L_DA,L_PM,total,test SumR\n";
  for (const auto& r : log) {
    out << r.epoch << "," << format_double(r.nce) << "," << format_double(r.trip) << ","
        << format_double(r.da) << "," << format_double(r.pm) << "," << format_double(r.total)
        << "," << (r.test_sumr ? format_double(*r.test_sumr) : "") << "\n";
  }
  return out.str();
}

Checkpoint capture(const RalModel& model, const Adam& adam, long epoch, double best_sumr,
                   const TrainConfig& config) {
  Checkpoint c;
  const auto& store = model.params();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter& p = store[i];
    c.names.push_back(p.name);
    c.values.push_back(p.value());
    c.first_moments.push_back(p.first_moment.size() ? p.first_moment : Tensor::Zero(p.value().rows(), p.value().cols()));
    c.second_moments.push_back(p.second_moment.size() ? p.second_moment : Tensor::Zero(p.value().rows(), p.value().cols()));
  }
  c.adam_steps = adam.steps();
  c.epoch = epoch;
  c.best_sumr = best_sumr;
  c.config = config;
  c.config_hash = config_hash(config);
  c.input_dim = model.config().input_dim;
  return c;
}

RalModel restore_model(const Checkpoint& checkpoint) {
  RalModel model(model_config(checkpoint.config, checkpoint.input_dim));
  std::map<std::string, Tensor> values;
  for (std::size_t i = 0; i < checkpoint.names.size(); ++i) {
    values.emplace(checkpoint.names[i], checkpoint.values[i]);
  }
  model.params().restore(values);
  for (std::size_t i = 0; i < checkpoint.names.size(); ++i) {
    Parameter& p = model.params().get(checkpoint.names[i]);
    p.first_moment = checkpoint.first_moments[i];
    p.second_moment = checkpoint.second_moments[i];
  }
  return model;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::Writer w;
  w.put_magic(kParamsMagic);
  w.put_u64(c.names.size());
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    w.put_u64(c.names[i].size());
    w.put_magic(c.names[i]);
    w.put_matrix(c.values[i]);
    w.put_matrix(c.first_moments[i]);
    w.put_matrix(c.second_moments[i]);
  }
  io::write_file(dir / "params.bin", w.bytes());

  KeyValueList manifest{
      {"format", kCheckpointFormat},
      {"input_dim", std::to_string(c.input_dim)},
      {"epoch", std::to_string(c.epoch)},
      {"best_sumr", format_double(c.best_sumr)},
      {"adam_steps", std::to_string(c.adam_steps)},
      {"config_hash", io::hex64(c.config_hash)},
      {"parameters", std::to_string(c.names.size())},
      {"params_file", "params.bin"},
      {"checksum", io::hex64(fnv1a(w.bytes()))},
  };
  for (auto& [k, v] : train_config_entries(c.config)) manifest.emplace_back("train." + k, v);
  io::write_file(dir / "manifest.txt", format_key_values(manifest));
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.txt")) {
    throw DataError("no checkpoint manifest in " + dir.string());
  }
  const auto manifest =
      parse_key_values(io::read_file(dir / "manifest.txt"), (dir / "manifest.txt").string());
  std::map<std::string, std::string> m;
  Checkpoint c;
  for (const auto& [k, v] : manifest) {
    if (k.rfind("train.", 0) == 0) {
      if (!apply_train_key(c.config, k.substr(6), v)) {
        throw DataError("checkpoint manifest has unknown key " + k);
      }
    } else {
      m[k] = v;
    }
  }
  auto lookup = [&](const std::string& key) {
    auto it = m.find(key);
    if (it == m.end()) throw DataError("checkpoint manifest lacks " + key);
    return it->second;
  };
  if (lookup("format") != kCheckpointFormat) throw DataError("unsupported checkpoint format");
  try {
    c.input_dim = parse_long("input_dim", lookup("input_dim"));
    c.epoch = parse_long("epoch", lookup("epoch"));
    c.best_sumr = parse_double("best_sumr", lookup("best_sumr"));
    c.adam_steps = parse_long("adam_steps", lookup("adam_steps"));
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  c.config_hash = config_hash(c.config);
  if (io::hex64(c.config_hash) != lookup("config_hash")) {
    throw DataError("corrupt checkpoint: config hash mismatch");
  }

  const std::string bytes = io::read_file(dir / "params.bin");
  if (io::hex64(fnv1a(bytes)) != lookup("checksum")) {
    throw DataError("corrupt checkpoint: checksum mismatch");
  }
  io::Reader r(bytes, "checkpoint");
  r.expect_magic(kParamsMagic);
  const auto n = r.get_count(8);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto len = r.get_count(1);
    std::string name;
    for (std::uint64_t j = 0; j < len; ++j) name.push_back(static_cast<char>(r.get_u8()));
    c.names.push_back(std::move(name));
    c.values.push_back(r.get_matrix());
    c.first_moments.push_back(r.get_matrix());
    c.second_moments.push_back(r.get_matrix());
  }
  r.expect_end();
  if (std::to_string(n) != lookup("parameters")) {
    throw DataError("corrupt checkpoint: parameter count mismatch");
  }
  return c;
}

LossParts batch_losses(const RalModel& model, const TrainConfig& config, const Split& split,
                       std::span<const std::size_t> query_indices,
                       std::span<const std::size_t> video_indices, std::mt19937_64& rng) {
  const Stacked q = stack_queries(split, query_indices);
  const Stacked v = stack_videos(split, video_indices);
  Var words = model.encode_words(q.rows);
  Var frames = model.encode_frames(v.rows);
  const BranchScores scores = model.score(words, q.offsets, frames, v.offsets);

  LossParts parts;
  parts.nce = infonce_base(scores.frame, config.weights.tau_nce);
  parts.trip = triplet_base(scores.frame, config.weights.margin);
  if (scores.clip.defined()) {
    parts.nce = parts.nce + infonce_base(scores.clip, config.weights.tau_nce);
    parts.trip = parts.trip + triplet_base(scores.clip, config.weights.margin);
  }
  if (!config.msra_on) {
    parts.da = diff::scalar_constant(0.0);
    parts.pm = diff::scalar_constant(0.0);
    return parts;
  }
  GaussianBatch zq = [&] {
    if (!config.support_set_on) return model.query_distribution(words, q.offsets);
    const Stacked s = stack_support_sets(split, video_indices);
    return model.query_distribution(model.encode_words(s.rows), s.offsets);
  }();
  GaussianBatch zv = model.video_distribution(frames, v.offsets);
  parts.da = distribution_alignment_loss(zq, zv);
  const Index k = config.proxies;
  ProxySet pq, pv;
  if (config.proxy_sampling) {
    pq = sample_proxies(zq, k, rng);
    pv = sample_proxies(zv, k, rng);
  } else {
    pq = proxies_from_noise(zq, k, Tensor::Zero(zq.size() * k, zq.dim()));
    pv = proxies_from_noise(zv, k, Tensor::Zero(zv.size() * k, zv.dim()));
  }
  parts.pm = proxy_matching_loss(pq, pv, config.tau_pm);
  return parts;
}

std::vector<std::vector<std::size_t>> epoch_batches(const Split& split, Index batch_size,
                                                    std::mt19937_64& rng) {
  std::vector<std::vector<std::size_t>> per_video;
  std::size_t rounds = 0;
  for (const auto& video : split.videos) {
    per_video.push_back(split.queries_of(video.id));
    std::shuffle(per_video.back().begin(), per_video.back().end(), rng);
    rounds = std::max(rounds, per_video.back().size());
  }
  const auto b = static_cast<std::size_t>(std::max<Index>(batch_size, 2));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t r = 0; r < rounds; ++r) {
    std::vector<std::size_t> round;
    for (const auto& qs : per_video) {
      if (r < qs.size()) round.push_back(qs[r]);
    }
    std::shuffle(round.begin(), round.end(), rng);
    const std::size_t first_batch = batches.size();
    for (std::size_t start = 0; start < round.size(); start += b) {
      const std::size_t end = std::min(round.size(), start + b);
      if (end - start < 2 && batches.size() > first_batch) {
        batches.back().insert(batches.back().end(), round.begin() + static_cast<std::ptrdiff_t>(start),
                              round.begin() + static_cast<std::ptrdiff_t>(end));
      } else if (end - start >= 2) {
        batches.emplace_back(round.begin() + static_cast<std::ptrdiff_t>(start),
                             round.begin() + static_cast<std::ptrdiff_t>(end));
      }
    }
  }
  return batches;
}

TrainResult train(const TrainConfig& config, const Dataset& dataset) {
  validate(config);
  const Split& split = dataset.train;
  if (split.videos.size() < 2) throw DataError("training split needs at least two videos");

  RalModel model(model_config(config, dataset.prototypes.cols()));
  Adam adam(AdamConfig{config.lr, 0.9, 0.999, 1e-8});
  auto shuffle_rng = make_rng(config.seed, "shuffle");
  auto proxy_rng = make_rng(config.seed, "proxy");

  std::unordered_map<int, std::size_t> video_of;
  for (std::size_t i = 0; i < split.videos.size(); ++i) video_of[split.videos[i].id] = i;

  TrainResult result;
  double best = -std::numeric_limits<double>::infinity();
  long stalled = 0;
  for (long epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = epoch_batches(split, config.batch_size, shuffle_rng);
    LogRow row;
    row.epoch = epoch;
    std::size_t b_index = 0;
    for (const auto& batch : batches) {
      ++b_index;
      std::vector<std::size_t> videos;
      videos.reserve(batch.size());
      for (auto qi : batch) videos.push_back(video_of.at(split.queries[qi].video_id));

      model.params().zero_grad();
      LossParts parts;
      const std::string where = "epoch " + std::to_string(epoch) + " batch " + std::to_string(b_index);
      try {
        parts = batch_losses(model, config, split, batch, videos, proxy_rng);
        Var total = total_loss(parts, config.weights);
        diff::backward(total);
        adam.step(model.params());
        row.total += total.scalar();
      } catch (const NumericError& e) {
        throw NumericError(where + ": " + e.what() + " [" + parts_summary(parts) + "] grad norms [" +
                           grad_norms(model.params()) + "]");
      }
      row.nce += parts.nce.scalar();
      row.trip += parts.trip.scalar();
      row.da += parts.da.scalar();
      row.pm += parts.pm.scalar();
    }
    const auto n = static_cast<double>(batches.size());
    row.nce /= n;
    row.trip /= n;
    row.da /= n;
    row.pm /= n;
    row.total /= n;

    const bool last = epoch == config.epochs;
    bool stop = false;
    if (epoch % config.eval_every == 0 || last) {
      const double sumr = rank_all(model, dataset.test).overall.sumr();
      row.test_sumr = sumr;
      if (sumr > best) {
        best = sumr;
        stalled = 0;
        result.best = capture(model, adam, epoch, best, config);
        result.best_epoch = epoch;
      } else if (++stalled >= config.patience) {
        stop = true;
      }
    }
    if (config.uncertainty_every > 0 && epoch % config.uncertainty_every == 0) {
      UncertaintyRecord rec;
      rec.epoch = epoch;
      std::tie(rec.video_uncertainty, rec.query_uncertainty) = mean_uncertainties(model, dataset.test);
      rec.sumr = row.test_sumr ? *row.test_sumr : rank_all(model, dataset.test).overall.sumr();
      result.uncertainty_trace.push_back(rec);
    }
    result.log.push_back(row);
    result.epochs_run = epoch;
    if (stop) break;
  }
  return result;
}

std::vector<std::pair<std::string, KeyValueList>> ablation_grid(const std::string& name) {
  if (name == "table2") {
    return {{"baseline", {{"msra_on", "false"}, {"csa_on", "false"}}},
            {"msra", {{"msra_on", "true"}, {"csa_on", "false"}}},
            {"csa", {{"msra_on", "false"}, {"csa_on", "true"}}},
            {"msra+csa", {{"msra_on", "true"}, {"csa_on", "true"}}}};
  }
  if (name == "table3") {
    return {{"full", {}},
            {"w/o L_DA", {{"lambda3", "0"}}},
            {"w/o L_PM", {{"lambda4", "0"}}}};
  }
  if (name == "table4") {
    return {{"w/o sampling", {{"proxies", "1"}, {"proxy_sampling", "false"}}},
            {"K=2", {{"proxies", "2"}}},
            {"K=4", {{"proxies", "4"}}},
            {"K=6", {{"proxies", "6"}}}};
  }
  if (name == "lambda") {
    return {{"l3=0.001,l4=0.004", {{"lambda3", "0.001"}, {"lambda4", "0.004"}}},
            {"l3=0.004,l4=0.001", {{"lambda3", "0.004"}, {"lambda4", "0.001"}}},
            {"l3=0.001,l4=0.00025", {{"lambda3", "0.001"}, {"lambda4", "0.00025"}}}};
  }
  throw ConfigError("unknown ablation grid '" + name + "' (table2, table3, table4, lambda)");
}

std::vector<AblationRow> ablate(const TrainConfig& base, const Dataset& dataset,
                                const std::vector<std::pair<std::string, KeyValueList>>& grid) {
  std::vector<AblationRow> rows;
  for (const auto& [name, overrides] : grid) {
    TrainConfig c = base;
    for (const auto& [k, v] : overrides) {
      if (k == "seed") throw ConfigError("ablation rows share the seed; 'seed' cannot be overridden");
      if (!apply_train_key(c, k, v)) throw ConfigError("unknown training key '" + k + "'");
    }
    const TrainResult r = train(c, dataset);
    AblationRow row;
    row.name = name;
    row.overrides = overrides;
    row.recall = rank_all(restore_model(r.best), dataset.test).overall;
    row.best_epoch = r.best_epoch;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "name,overrides,best_epoch,R@1,R@5,R@10,R@100,SumR\n";
  for (const auto& r : rows) {
    std::string ov;
    for (const auto& [k, v] : r.overrides) ov += (ov.empty() ? "" : ";") + k + "=" + v;
    out << "\"" << r.name << "\",\"" << ov << "\"," << r.best_epoch;
    for (std::size_t i = 0; i < kRecallCutoffs.size(); ++i) out << "," << format_double(r.recall.at(i));
    out << "," << format_double(r.recall.sumr()) << "\n";
  }
  return out.str();
}

}  // namespace ral
