// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include "fixtures.hpp"

#include "ral/cli.hpp"
#include "ral/csa.hpp"
#include "ral/eval.hpp"
#include "ral/msra.hpp"
#include "ral/objectives.hpp"
#include "ral/rng.hpp"
#include "ral/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace {

using namespace ral;
using ral::testing::random_matrix;
using ral::testing::scratch_dir;
using ral::testing::slurp;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Training protocol for the synthetic-experiment criteria.
TrainConfig experiment_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.lr = 3e-3;
  c.epochs = 25;
  c.patience = 100;
  return c;
}

SynthConfig experiment_data(std::uint64_t seed) {
  SynthConfig s;
  s.seed = seed;
  return s;
}

// 1. Analytic gradient of the full weighted loss against central differences.
Outcome gradient_check() {
  SynthConfig s = ral::testing::tiny_synth(11);
  const Dataset d = generate(s);
  TrainConfig c = ral::testing::tiny_train(11);
  c.joint_dim = 8;
  c.proxies = 2;
  RalModel model(model_config(c, s.input_dim));
  const std::vector<std::size_t> queries{0, 3};  // queries of videos 0 and 1
  const std::vector<std::size_t> videos{d.train.video_index(d.train.queries[0].video_id),
                                        d.train.video_index(d.train.queries[3].video_id)};
  const std::mt19937_64 frozen = make_rng(11, "proxy");
  auto loss = [&] {
    std::mt19937_64 r = frozen;  // identical eps on every evaluation
    return total_loss(batch_losses(model, c, d.train, queries, videos, r), c.weights);
  };
  const auto leaves = model.params().leaves();
  const double err = diff::grad_check(loss, leaves);
  return {err < 1e-3, "max relative error " + fmt("%.3g", err) + " over " +
                          std::to_string(leaves.size()) + " parameters"};
}

// 2. Closed-form KL against a Monte-Carlo estimate.
Outcome kl_oracle() {
  std::mt19937_64 r(202);
  std::normal_distribution<double> n01;
  std::uniform_int_distribution<int> dim(1, 4);
  const int samples = 1'000'000;
  int within = 0;
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const Index d = dim(r);
    const GaussianEmbedding p{random_matrix(d, 1, r, -1, 1), random_matrix(d, 1, r, -1, 1)};
    const GaussianEmbedding q{random_matrix(d, 1, r, -1, 1), random_matrix(d, 1, r, -1, 1)};
    const Eigen::VectorXd sp = p.sigma(), vp = p.variance(), vq = q.variance();
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < samples; ++i) {
      double lr = 0.0;
      for (Index j = 0; j < d; ++j) {
        const double x = p.mean(j) + sp(j) * n01(r);
        const double dp = x - p.mean(j), dq = x - q.mean(j);
        lr += 0.5 * (std::log(vq(j)) - std::log(vp(j))) - dp * dp / (2 * vp(j)) + dq * dq / (2 * vq(j));
      }
      sum += lr;
      sum2 += lr * lr;
    }
    const double mean = sum / samples;
    const double se = std::sqrt((sum2 / samples - mean * mean) / samples);
    const double z = std::abs(kl_diag_gaussians(p, q) - mean) / se;
    worst = std::max(worst, z);
    within += z <= 3.0;
  }
  const GaussianEmbedding shifted{Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1)};
  const double unit = kl_diag_gaussians(shifted, GaussianEmbedding::standard(1));
  const bool exact = std::abs(unit - 0.5) <= 1e-12;
  return {within == 20 && exact, std::to_string(within) + "/20 cases within 3 SE (worst " +
                                     fmt("%.2f", worst) + " SE); unit shift KL " + fmt("%.15g", unit)};
}

// 3. Moments of reparameterized proxies.
Outcome proxy_statistics() {
  const Index n = 100'000;
  Eigen::MatrixXd mu(1, 4), lv(1, 4);
  mu << 0.5, -1.0, 2.0, 0.0;
  lv << 0.0, std::log(0.25), std::log(4.0), -3.0;
  auto rng = make_rng(303, "proxy");
  const ProxySet s = sample_proxies({diff::constant(mu), diff::constant(lv)}, n, rng);
  const Eigen::MatrixXd& x = s.proxies.value();
  bool ok = x.rows() == n;
  double worst_mean = 0.0, worst_var = 0.0;
  for (Index j = 0; j < 4; ++j) {
    const double var = std::exp(lv(0, j));
    const double m = x.col(j).mean();
    const double v = (x.col(j).array() - m).square().sum() / static_cast<double>(n - 1);
    const double mean_z = std::abs(m - mu(0, j)) / (std::sqrt(var) / std::sqrt(static_cast<double>(n)));
    const double var_rel = std::abs(v - var) / var;
    worst_mean = std::max(worst_mean, mean_z);
    worst_var = std::max(worst_var, var_rel);
    ok = ok && mean_z <= 4.0 && var_rel <= 0.05;
  }
  return {ok, "worst mean deviation " + fmt("%.2f", worst_mean) + " sigma/sqrt(n); worst variance error " +
                  fmt("%.2f", 100 * worst_var) + "%"};
}

// 4. Loss values against brute-force sums on hand-built inputs.
double nce_sum(const Eigen::MatrixXd& s, double tau) {
  double t = 0.0;
  const Index b = s.rows();
  for (Index i = 0; i < b; ++i) {
    double zr = 0.0, zc = 0.0;
    for (Index j = 0; j < b; ++j) {
      zr += std::exp(s(i, j) / tau);
      zc += std::exp(s(j, i) / tau);
    }
    t += std::log(zr) + std::log(zc) - 2.0 * s(i, i) / tau;
  }
  return t / (2.0 * static_cast<double>(b));
}

double triplet_sum(const Eigen::MatrixXd& s, double m) {
  double t = 0.0;
  const Index b = s.rows();
  for (Index i = 0; i < b; ++i) {
    double hr = -HUGE_VAL, hc = -HUGE_VAL;
    for (Index j = 0; j < b; ++j) {
      if (j != i) {
        hr = std::max(hr, s(i, j));
        hc = std::max(hc, s(j, i));
      }
    }
    t += std::max(0.0, m + hr - s(i, i)) + std::max(0.0, m + hc - s(i, i));
  }
  return t / static_cast<double>(b);
}

double pm_sum(const Eigen::MatrixXd& text, const Eigen::MatrixXd& video, Index k, double tau) {
  const Index n = text.rows() / k;
  double t = 0.0;
  for (Index a = 0; a < n * k; ++a) {
    double pos = 0.0, all = 0.0;
    for (Index b = 0; b < n * k; ++b) {
      const double cos = text.row(a).dot(video.row(b)) / (text.row(a).norm() * video.row(b).norm());
      const double e = std::exp(cos / tau);
      all += e;
      if (a / k == b / k) pos += e;
    }
    t -= std::log(pos / all);
  }
  return t / static_cast<double>(n * k);
}

Outcome loss_oracles() {
  std::vector<Eigen::MatrixXd> sets;
  Eigen::MatrixXd s2(2, 2), s3(3, 3), s3b(3, 3);
  s2 << 0.8, 0.1, -0.3, 0.6;
  s3 << 0.9, 0.7, 0.2, 0.75, 0.4, 0.55, -0.1, 0.3, 0.5;
  s3b << 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3;
  sets = {s2, s3, s3b};
  double worst = 0.0;
  for (const auto& s : sets) {
    worst = std::max(worst, std::abs(infonce_base(s, 0.04) - nce_sum(s, 0.04)));
    worst = std::max(worst, std::abs(infonce_base(s, 1.0) - nce_sum(s, 1.0)));
    worst = std::max(worst, std::abs(triplet_base(s, 0.2) - triplet_sum(s, 0.2)));
  }
  // Proxy sets: (B=2, K=2) and (B=3, K=1).
  Eigen::MatrixXd t22(4, 3), v22(4, 3), t31(3, 2), v31(3, 2);
  t22 << 1, 0, 0, 0.8, 0.2, 0, 0, 1, 0.5, -0.2, 0.9, 0;
  v22 << 0.9, 0.1, 0.1, 1, -0.1, 0, 0.1, 0.8, 0.3, 0, 1, 0.6;
  t31 << 1, 0, 0, 1, -1, 1;
  v31 << 0.7, 0.2, 0.1, 0.9, -0.5, 0.6;
  auto as_set = [](const Eigen::MatrixXd& p, Index k) {
    ProxySet s;
    s.proxies = diff::constant(p);
    s.eps = Eigen::MatrixXd::Zero(p.rows(), p.cols());
    s.count = k;
    return s;
  };
  worst = std::max(worst, std::abs(proxy_matching_loss(as_set(t22, 2), as_set(v22, 2), 0.1).scalar() -
                                   pm_sum(t22, v22, 2, 0.1)));
  worst = std::max(worst, std::abs(proxy_matching_loss(as_set(t31, 1), as_set(v31, 1), 0.1).scalar() -
                                   pm_sum(t31, v31, 1, 0.1)));
  return {worst <= 1e-10, "largest deviation " + fmt("%.3g", worst)};
}

// 5. Uniform gates equal mean pooling; zero MSRA weights with uniform gates
// reproduce the baseline run.
Outcome degeneracy() {
  std::mt19937_64 r(505);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Index l = 1 + static_cast<Index>(r() % 9);
    const auto sim = word_frame_similarity(random_matrix(l, 6, r), random_matrix(1 + static_cast<Index>(r() % 12), 6, r));
    for (GateNorm g : {GateNorm::softmax, GateNorm::sigmoid}) {
      const auto gates = make_gates(Eigen::VectorXd::Constant(l, static_cast<double>(t % 7) - 3.0), g);
      worst = std::max(worst, std::abs(gated_score(sim, gates) - mean_pooled_score(sim)));
    }
  }
  const bool pooled = worst <= 1e-12;

  const Dataset d = generate(ral::testing::tiny_synth(55));
  TrainConfig base = ral::testing::tiny_train(55);
  base.epochs = 3;
  base.msra_on = false;
  base.csa_on = false;
  TrainConfig zeroed = base;
  zeroed.msra_on = true;
  zeroed.weights.da = 0.0;
  zeroed.weights.pm = 0.0;
  const TrainResult a = train(base, d);
  const TrainResult b = train(zeroed, d);
  bool same = a.log.size() == b.log.size() && a.best.values == b.best.values &&
              a.best.second_moments == b.best.second_moments;
  for (std::size_t i = 0; same && i < a.log.size(); ++i) {
    same = a.log[i].nce == b.log[i].nce && a.log[i].trip == b.log[i].trip &&
           a.log[i].total == b.log[i].total && a.log[i].test_sumr == b.log[i].test_sumr;
  }
  return {pooled && same, "uniform-gate deviation " + fmt("%.3g", worst) + "; trajectories " +
                              (same ? "bit-identical" : "differ")};
}

struct SeedModels {
  std::map<std::string, Checkpoint> best;
  std::map<std::string, double> sumr;
};

// Trains the four module configurations of every seed once; reused by 6-8.
std::vector<SeedModels> train_experiments(std::vector<Dataset>& data) {
  const std::vector<std::pair<std::string, std::pair<bool, bool>>> configs{
      {"baseline", {false, false}}, {"msra", {true, false}}, {"csa", {false, true}}, {"msra+csa", {true, true}}};
  std::vector<SeedModels> out;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    data.push_back(generate(experiment_data(seed)));
    SeedModels m;
    for (const auto& [name, flags] : configs) {
      TrainConfig c = experiment_config(seed);
      c.msra_on = flags.first;
      c.csa_on = flags.second;
      const TrainResult r = train(c, data.back());
      m.best[name] = r.best;
      m.sumr[name] = rank_all(restore_model(r.best), data.back().test).overall.sumr();
      std::printf("  seed %llu %-9s SumR %.1f (best epoch %ld)\n", static_cast<unsigned long long>(seed),
                  name.c_str(), m.sumr[name], r.best_epoch);
      std::fflush(stdout);
    }
    out.push_back(std::move(m));
  }
  return out;
}

Outcome directional_effect(const std::vector<SeedModels>& runs) {
  std::map<std::string, double> mean;
  for (const auto& r : runs)
    for (const auto& [k, v] : r.sumr) mean[k] += v / static_cast<double>(runs.size());
  const double base = mean["baseline"], full = mean["msra+csa"];
  auto placed = [&](double v) { return (v >= base && v <= full) || v > base; };
  const bool ok = full > base && placed(mean["msra"]) && placed(mean["csa"]);
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "mean SumR baseline " << base << ", msra " << mean["msra"] << ", csa " << mean["csa"]
     << ", msra+csa " << full;
  return {ok, os.str()};
}

Outcome gate_behavior(const std::vector<SeedModels>& runs, const std::vector<Dataset>& data) {
  double total = 0.0, worst = 0.0;
  int n = 0;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    for (const char* name : {"csa", "msra+csa"}) {
      const double ratio = function_gate_ratio(restore_model(runs[s].best.at(name)), data[s].test).first;
      total += ratio;
      worst = std::max(worst, ratio);
      ++n;
    }
  }
  const double mean = total / n;
  return {mean < 0.8, "function-word gate mass / uniform share: mean " + fmt("%.3f", mean) + " over " +
                          std::to_string(n) + " CSA models (largest " + fmt("%.3f", worst) + ")"};
}

Outcome noise_robustness(const std::vector<SeedModels>& runs, const std::vector<Dataset>& data) {
  double csa = 0.0, pooled = 0.0;
  for (std::size_t s = 0; s < 3; ++s) {
    const double std_dev = data[s].config.frame_noise_std;
    const std::uint64_t seed = 1000 + s;
    csa += noise_sweep(restore_model(runs[s].best.at("csa")), data[s].test, kDefaultNoiseLevels, seed, std_dev)
               .relative_drop() / 3.0;
    pooled += noise_sweep(restore_model(runs[s].best.at("baseline")), data[s].test, kDefaultNoiseLevels, seed,
                          std_dev)
                  .relative_drop() / 3.0;
  }
  return {csa < pooled, "mean relative SumR drop at p=0.5: CSA " + fmt("%.2f", 100 * csa) +
                            "%, mean pooling " + fmt("%.2f", 100 * pooled) + "%"};
}

// 9. Metric invariants over randomized reports.
Outcome metric_invariants() {
  std::mt19937_64 r(909);
  std::uniform_int_distribution<int> nq(1, 40), nv(1, 150), small(0, 20);
  std::uniform_real_distribution<double> u(-1.0, 1.0), mvd(0.01, 1.0);
  const std::vector<std::function<double(double)>> transforms{
      [](double x) { return std::ldexp(x, 5); }, [](double x) { return std::exp(x); },
      [](double x) { return x * x * x + x; }};
  int failures = 0;
  for (int t = 0; t < 1000; ++t) {
    const Index q = nq(r), v = nv(r);
    const bool ties = t % 2 == 0;
    Eigen::MatrixXd s(q, v);
    for (Index i = 0; i < q; ++i)
      for (Index j = 0; j < v; ++j) s(i, j) = ties ? small(r) : u(r);
    std::vector<int> gallery(static_cast<std::size_t>(v)), ids(static_cast<std::size_t>(q)), targets;
    std::iota(gallery.begin(), gallery.end(), 0);
    std::shuffle(gallery.begin(), gallery.end(), r);
    std::iota(ids.begin(), ids.end(), 0);
    std::vector<double> mv;
    for (Index i = 0; i < q; ++i) {
      targets.push_back(static_cast<int>(r() % static_cast<std::uint64_t>(v)));
      mv.push_back(mvd(r));
    }
    RetrievalReport rep = rank_scores(s, gallery, ids, targets, mv);
    const Recall& o = rep.overall;
    bool ok = o.r1() <= o.r5() && o.r5() <= o.r10() && o.r10() <= o.r100();
    ok = ok && o.sumr() == o.r1() + o.r5() + o.r10() + o.r100();
    for (const auto& f : transforms) {
      const Eigen::MatrixXd g = s.unaryExpr(f);
      ok = ok && rank_scores(g, gallery, ids, targets, mv).ranks() == rep.ranks();
    }
    std::vector<double> unc(static_cast<std::size_t>(q));
    for (auto& x : unc) x = mvd(r);
    for (const auto& groups : {group_by_mv(rep), group_by_uncertainty(rep, unc, 1 + static_cast<Index>(r() % 6))}) {
      std::array<Index, 4> hits{};
      Index count = 0;
      double weighted = 0.0;
      for (const auto& g : groups) {
        count += g.recall.count;
        for (std::size_t i = 0; i < 4; ++i) hits[i] += g.recall.hits[i];
        weighted += static_cast<double>(g.recall.count) * g.recall.r1();
      }
      ok = ok && count == o.count && hits == o.hits;
      ok = ok && std::abs(weighted / static_cast<double>(count) - o.r1()) <= 1e-9;
    }
    failures += !ok;
  }
  return {failures == 0, std::to_string(1000 - failures) + "/1000 reports satisfy every invariant"};
}

// 10. Byte-identical outputs from two identical CLI pipelines.
Outcome determinism() {
  const auto root = scratch_dir("acceptance_determinism");
  auto pipeline = [&](const std::string& tag) {
    const std::string d = (root / tag).string();
    std::ostringstream out, err;
    int code = run({"gen-data", "--seed", "7", "--out", d + "/data"}, out, err);
    if (code == 0)
      code = run({"train", "--seed", "7", "--dataset", d + "/data", "--out", d + "/train", "--set", "epochs=3",
                  "--set", "lr=3e-3"},
                 out, err);
    if (code == 0)
      code = run({"eval", "--dataset", d + "/data", "--checkpoint", d + "/train/checkpoint", "--out", d + "/eval"},
                 out, err);
    return code;
  };
  if (pipeline("a") != 0 || pipeline("b") != 0) return {false, "pipeline failed"};
  const std::vector<std::string> files{"data/videos.bin",   "data/queries.bin",         "data/labels.bin",
                                       "data/manifest.txt", "train/checkpoint/params.bin",
                                       "train/checkpoint/manifest.txt", "train/train_log.csv",
                                       "eval/report.json",  "eval/report.csv"};
  int same = 0;
  for (const auto& f : files) same += slurp(root / "a" / f) == slurp(root / "b" / f);
  return {same == static_cast<int>(files.size()),
          std::to_string(same) + "/" + std::to_string(files.size()) + " files byte-identical"};
}

}  // namespace

int main() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report(1, "gradient check", gradient_check);
  report(2, "KL oracle", kl_oracle);
  report(3, "proxy statistics", proxy_statistics);
  report(4, "loss oracles", loss_oracles);
  report(5, "degeneracy equivalences", degeneracy);

  std::vector<Dataset> data;
  std::vector<SeedModels> runs;
  const auto start = std::chrono::steady_clock::now();
  try {
    runs = train_experiments(data);
  } catch (const std::exception& e) {
    std::printf("  experiment training threw: %s\n", e.what());
  }
  const double train_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("  trained %zu seeds x 4 configurations in %.1f s\n", runs.size(), train_secs);
  auto need_runs = [&](const std::function<Outcome()>& fn) {
    return [&, fn] { return runs.size() == 5 ? fn() : Outcome{false, "experiment training failed"}; };
  };
  report(6, "directional effect", need_runs([&] { return directional_effect(runs); }));
  report(7, "gate behavior", need_runs([&] { return gate_behavior(runs, data); }));
  report(8, "noise robustness", need_runs([&] { return noise_robustness(runs, data); }));
  report(9, "metric invariants", metric_invariants);
  report(10, "determinism", determinism);

  std::printf("%d/10 criteria passed\n", 10 - failed);
  return failed == 0 ? 0 : 1;
}
