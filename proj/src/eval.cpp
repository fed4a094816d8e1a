// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ral/eval.hpp"

#include "ral/config.hpp"
#include "ral/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <sstream>

namespace ral {

namespace {

Recall recall_of(const RetrievalReport& report, std::span<const std::size_t> members) {
  std::vector<Index> ranks;
  ranks.reserve(members.size());
  for (auto m : members) ranks.push_back(report.queries[m].rank);
  return recall_from_ranks(ranks);
}

std::string recall_cells(const Recall& r) {
  std::string s;
  for (std::size_t i = 0; i < kRecallCutoffs.size(); ++i) s += "," + format_double(r.at(i));
  return s + "," + format_double(r.sumr());
}

nlohmann::json recall_json(const Recall& r) {
  return {{"count", r.count},     {"R@1", r.r1()},    {"R@5", r.r5()},
          {"R@10", r.r10()},      {"R@100", r.r100()}, {"SumR", r.sumr()},
          {"hits", r.hits}};
}

nlohmann::json groups_json(const std::vector<GroupReport>& groups, bool with_uncertainty) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& g : groups) {
    nlohmann::json j = {{"key", g.key}, {"lo", g.lo}, {"hi", g.hi}, {"recall", recall_json(g.recall)}};
    if (with_uncertainty) j["mean_uncertainty"] = g.mean_uncertainty;
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace

double Recall::at(std::size_t i) const {
  if (count == 0) return 0.0;
  return 100.0 * static_cast<double>(hits[i]) / static_cast<double>(count);
}

Recall recall_from_ranks(std::span<const Index> ranks) {
  Recall r;
  r.count = static_cast<Index>(ranks.size());
  for (Index rank : ranks) {
    if (rank < 1) throw ContractError("recall_from_ranks: ranks are 1-based");
    for (std::size_t i = 0; i < kRecallCutoffs.size(); ++i) {
      if (rank <= kRecallCutoffs[i]) ++r.hits[i];
    }
  }
  return r;
}

std::vector<Index> RetrievalReport::ranks() const {
  std::vector<Index> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(q.rank);
  return out;
}

RetrievalReport rank_scores(const Eigen::MatrixXd& scores, std::span<const int> gallery_ids,
                            std::span<const int> query_ids, std::span<const int> target_ids,
                            std::span<const double> mv_ratios, Index top_k) {
  const auto nq = static_cast<std::size_t>(scores.rows());
  if (gallery_ids.empty()) throw ContractError("rank_scores: empty gallery");
  if (static_cast<std::size_t>(scores.cols()) != gallery_ids.size() ||
      query_ids.size() != nq || target_ids.size() != nq || mv_ratios.size() != nq) {
    throw DimensionError("rank_scores: score matrix does not match the id lists");
  }
  if (top_k < 1) throw ContractError("rank_scores: top_k must be positive");

  std::vector<Index> target_col(nq, -1);
  std::string missing;
  for (std::size_t q = 0; q < nq; ++q) {
    auto it = std::find(gallery_ids.begin(), gallery_ids.end(), target_ids[q]);
    if (it == gallery_ids.end()) {
      missing += (missing.empty() ? "" : ",") + std::to_string(query_ids[q]);
    } else {
      target_col[q] = it - gallery_ids.begin();
    }
  }
  if (!missing.empty()) throw DataError("target video absent from gallery for queries " + missing);

  // Column order by ascending video id, so a stable sort breaks ties by id.
  std::vector<Index> by_id(gallery_ids.size());
  std::iota(by_id.begin(), by_id.end(), Index{0});
  std::stable_sort(by_id.begin(), by_id.end(),
                   [&](Index a, Index b) { return gallery_ids[a] < gallery_ids[b]; });

  RetrievalReport report;
  report.queries.resize(nq);
  std::vector<Index> order;
  for (std::size_t q = 0; q < nq; ++q) {
    const auto row = scores.row(static_cast<Index>(q));
    if (!row.allFinite()) {
      throw NumericError("rank_scores: non-finite score for query " + std::to_string(query_ids[q]));
    }
    order = by_id;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return row(a) > row(b); });
    QueryResult& r = report.queries[q];
    r.query_id = query_ids[q];
    r.video_id = target_ids[q];
    r.mv_ratio = mv_ratios[q];
    r.target_score = row(target_col[q]);
    r.rank = std::find(order.begin(), order.end(), target_col[q]) - order.begin() + 1;
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(top_k), order.size());
    for (std::size_t i = 0; i < k; ++i) {
      r.top_ids.push_back(gallery_ids[order[i]]);
      r.top_scores.push_back(row(order[i]));
    }
  }
  const auto ranks = report.ranks();
  report.overall = recall_from_ranks(ranks);
  return report;
}

RetrievalReport rank_all(const RalModel& model, const Split& queries, const Split& gallery,
                         Index top_k) {
  const Eigen::MatrixXd scores =
      model.score_matrix(stack_all_queries(queries), stack_all_videos(gallery));
  std::vector<int> gallery_ids, query_ids, target_ids;
  std::vector<double> mv;
  for (const auto& v : gallery.videos) gallery_ids.push_back(v.id);
  for (const auto& q : queries.queries) {
    query_ids.push_back(q.id);
    target_ids.push_back(q.video_id);
    mv.push_back(q.mv_ratio);
  }
  return rank_scores(scores, gallery_ids, query_ids, target_ids, mv, top_k);
}

std::vector<GroupReport> group_by_mv(const RetrievalReport& report, std::span<const double> edges) {
  if (edges.size() < 2) throw ContractError("group_by_mv: need at least two bin edges");
  std::vector<GroupReport> groups;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    if (!(edges[b] < edges[b + 1])) throw ContractError("group_by_mv: edges must increase");
    GroupReport g;
    g.lo = edges[b];
    g.hi = edges[b + 1];
    g.key = "(" + format_double(g.lo) + "," + format_double(g.hi) + "]";
    for (std::size_t i = 0; i < report.queries.size(); ++i) {
      const double mv = report.queries[i].mv_ratio;
      if (mv > g.lo && mv <= g.hi) g.members.push_back(i);
    }
    g.recall = recall_of(report, g.members);
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<GroupReport> group_by_uncertainty(const RetrievalReport& report,
                                              std::span<const double> uncertainty,
                                              Index set_size,
                                              std::optional<std::pair<double, double>> mv_filter) {
  if (uncertainty.size() != report.queries.size()) {
    throw DimensionError("group_by_uncertainty: one uncertainty per query required");
  }
  if (set_size < 1) throw ContractError("group_by_uncertainty: set size must be positive");
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < report.queries.size(); ++i) {
    const double mv = report.queries[i].mv_ratio;
    if (!mv_filter || (mv >= mv_filter->first && mv <= mv_filter->second)) pool.push_back(i);
  }
  std::stable_sort(pool.begin(), pool.end(),
                   [&](std::size_t a, std::size_t b) { return uncertainty[a] < uncertainty[b]; });
  std::vector<GroupReport> groups;
  const auto step = static_cast<std::size_t>(set_size);
  for (std::size_t start = 0; start < pool.size(); start += step) {
    GroupReport g;
    const std::size_t end = std::min(pool.size(), start + step);
    g.members.assign(pool.begin() + static_cast<std::ptrdiff_t>(start),
                     pool.begin() + static_cast<std::ptrdiff_t>(end));
    double total = 0.0;
    for (auto m : g.members) total += uncertainty[m];
    g.mean_uncertainty = total / static_cast<double>(g.members.size());
    g.lo = uncertainty[g.members.front()];
    g.hi = uncertainty[g.members.back()];
    g.key = "set" + std::to_string(groups.size() + 1);
    g.recall = recall_of(report, g.members);
    groups.push_back(std::move(g));
  }
  return groups;
}

double NoiseSweepResult::relative_drop() const {
  if (points.empty()) throw ContractError("relative_drop: empty sweep");
  const double base = points.front().report.overall.sumr();
  if (base == 0.0) return 0.0;
  return (base - points.back().report.overall.sumr()) / base;
}

NoiseSweepResult noise_sweep(const RalModel& model, const Split& test,
                             std::span<const double> levels, std::uint64_t seed,
                             double noise_std) {
  if (levels.empty() || levels.front() != 0.0) {
    throw ContractError("noise_sweep: levels must start at 0");
  }
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (!(levels[i] > levels[i - 1]) || levels[i] > 1.0) {
      throw ContractError("noise_sweep: levels must increase strictly within [0, 1]");
    }
  }
  NoiseSweepResult sweep;
  for (double p : levels) {
    NoisePoint point;
    point.p = p;
    point.report = p == 0.0 ? rank_all(model, test) : rank_all(model, inject_noise(test, p, seed, noise_std));
    point.sumr_delta = point.report.overall.sumr() -
                       (sweep.points.empty() ? point.report.overall.sumr()
                                             : sweep.points.front().report.overall.sumr());
    sweep.points.push_back(std::move(point));
  }
  return sweep;
}

std::vector<std::vector<double>> similarity_profile(const RetrievalReport& report, Index k) {
  if (k < 1) throw ContractError("similarity_profile: k must be positive");
  std::vector<std::vector<double>> out;
  out.reserve(report.queries.size());
  for (const auto& q : report.queries) {
    if (static_cast<std::size_t>(k) > q.top_scores.size()) {
      throw ContractError("similarity_profile: k exceeds the stored top-k");
    }
    out.emplace_back(q.top_scores.begin(), q.top_scores.begin() + k);
  }
  return out;
}

std::pair<double, double> mean_uncertainties(const RalModel& model, const Split& split) {
  return {model.video_uncertainty(stack_all_videos(split)).mean(),
          model.query_uncertainty(stack_all_queries(split)).mean()};
}

std::vector<double> query_uncertainties(const RalModel& model, const Split& split) {
  const Eigen::VectorXd u = model.query_uncertainty(stack_all_queries(split));
  return {u.data(), u.data() + u.size()};
}

std::pair<double, Index> function_gate_ratio(const RalModel& model, const Split& split) {
  const Stacked stacked = stack_all_queries(split);
  const Eigen::VectorXd gates = model.word_gates(stacked);
  double total = 0.0;
  Index used = 0;
  for (std::size_t q = 0; q < split.queries.size(); ++q) {
    const auto& kinds = split.queries[q].kinds;
    double mass = 0.0;
    Index function_words = 0;
    for (std::size_t w = 0; w < kinds.size(); ++w) {
      if (kinds[w] == WordKind::function) {
        mass += gates(stacked.offsets[q] + static_cast<Index>(w));
        ++function_words;
      }
    }
    if (function_words == 0) continue;
    const double uniform_share = static_cast<double>(function_words) / static_cast<double>(kinds.size());
    total += mass / uniform_share;
    ++used;
  }
  return {used == 0 ? 0.0 : total / static_cast<double>(used), used};
}

std::string report_json(const RetrievalReport& report) {
  nlohmann::json j;
  j["overall"] = recall_json(report.overall);
  j["SumR"] = report.overall.sumr();
  j["mv_groups"] = groups_json(report.mv_groups, false);
  j["uncertainty_groups"] = groups_json(report.uncertainty_groups, true);
  nlohmann::json queries = nlohmann::json::array();
  for (const auto& q : report.queries) {
    queries.push_back({{"query_id", q.query_id},
                       {"video_id", q.video_id},
                       {"rank", q.rank},
                       {"target_score", q.target_score},
                       {"mv_ratio", q.mv_ratio},
                       {"top_ids", q.top_ids},
                       {"top_scores", q.top_scores}});
  }
  j["queries"] = std::move(queries);
  return j.dump(2) + "\n";
}

std::string report_csv(const RetrievalReport& report) {
  std::ostringstream out;
  out << "group,key,lo,hi,count,R@1,R@5,R@10,R@100,SumR,mean_uncertainty\n";
  out << "all,all,,," << report.overall.count << recall_cells(report.overall) << ",\n";
  for (const auto& g : report.mv_groups) {
    out << "mv," << g.key << "," << format_double(g.lo) << "," << format_double(g.hi) << ","
        << g.recall.count << recall_cells(g.recall) << ",\n";
  }
  for (const auto& g : report.uncertainty_groups) {
    out << "uncertainty," << g.key << "," << format_double(g.lo) << "," << format_double(g.hi)
        << "," << g.recall.count << recall_cells(g.recall) << ","
        << format_double(g.mean_uncertainty) << "\n";
  }
  return out.str();
}

std::string noise_sweep_csv(const NoiseSweepResult& sweep) {
  std::ostringstream out;
  out << "p,count,R@1,R@5,R@10,R@100,SumR,SumR_delta\n";
  for (const auto& pt : sweep.points) {
    out << format_double(pt.p) << "," << pt.report.overall.count
        << recall_cells(pt.report.overall) << "," << format_double(pt.sumr_delta) << "\n";
  }
  return out.str();
}

std::string profile_csv(const RetrievalReport& report,
                        const std::vector<std::vector<double>>& profile) {
  std::ostringstream out;
  out << "query_id,position,video_id,score\n";
  for (std::size_t q = 0; q < profile.size(); ++q) {
    for (std::size_t i = 0; i < profile[q].size(); ++i) {
      out << report.queries[q].query_id << "," << i + 1 << "," << report.queries[q].top_ids[i]
          << "," << format_double(profile[q][i]) << "\n";
    }
  }
  return out.str();
}

std::string uncertainty_trace_csv(std::span<const UncertaintyRecord> trace) {
  std::ostringstream out;
  out << "epoch,video_uncertainty,query_uncertainty,SumR\n";
  for (const auto& r : trace) {
    out << r.epoch << "," << format_double(r.video_uncertainty) << ","
        << format_double(r.query_uncertainty) << "," << format_double(r.sumr) << "\n";
  }
  return out.str();
}

}  // namespace ral
