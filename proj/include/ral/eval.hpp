// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Ranking, recall metrics and the analysis protocols built on them.

#pragma once

#include "ral/model.hpp"
#include "ral/synthdata.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ral {

inline constexpr std::array<Index, 4> kRecallCutoffs{1, 5, 10, 100};

// Hit counts are kept as integers so that group recombination is exact.
struct Recall {
  std::array<Index, 4> hits{};
  Index count = 0;

  double at(std::size_t i) const;  // percent, 0 for an empty set
  double r1() const { return at(0); }
  double r5() const { return at(1); }
  double r10() const { return at(2); }
  double r100() const { return at(3); }
  double sumr() const { return r1() + r5() + r10() + r100(); }
};

Recall recall_from_ranks(std::span<const Index> ranks);

struct QueryResult {
  int query_id = 0;
  int video_id = 0;
  Index rank = 0;  // 1-based
  double target_score = 0.0;
  double mv_ratio = 1.0;
  std::vector<int> top_ids;
  std::vector<double> top_scores;
};

struct GroupReport {
  std::string key;
  double lo = 0.0;
  double hi = 0.0;
  Recall recall;
  double mean_uncertainty = 0.0;  // uncertainty groups only
  std::vector<std::size_t> members;  // indices into RetrievalReport::queries
};

struct RetrievalReport {
  std::vector<QueryResult> queries;
  Recall overall;
  std::vector<GroupReport> mv_groups;
  std::vector<GroupReport> uncertainty_groups;

  std::vector<Index> ranks() const;
};

// Ranks the gallery for each query (row of `scores`). Stable descending sort
// with ties broken by ascending video id. Throws DataError listing every
// query whose target is absent from the gallery.
RetrievalReport rank_scores(const Eigen::MatrixXd& scores, std::span<const int> gallery_ids,
                            std::span<const int> query_ids, std::span<const int> target_ids,
                            std::span<const double> mv_ratios, Index top_k = 10);

// Every query of `queries` against every video of `gallery`.
RetrievalReport rank_all(const RalModel& model, const Split& queries, const Split& gallery,
                         Index top_k = 10);
inline RetrievalReport rank_all(const RalModel& model, const Split& split, Index top_k = 10) {
  return rank_all(model, split, split, top_k);
}

inline const std::vector<double> kDefaultMvEdges{0.0, 0.2, 0.4, 1.0};

// Groups over the half-open intervals (edges[i], edges[i+1]].
std::vector<GroupReport> group_by_mv(const RetrievalReport& report,
                                     std::span<const double> edges = kDefaultMvEdges);

// Sorts the (optionally mv-filtered, closed interval) queries by uncertainty,
// ties by position, and chunks them into sets of `set_size`. The trailing set
// may be smaller.
std::vector<GroupReport> group_by_uncertainty(
    const RetrievalReport& report, std::span<const double> uncertainty, Index set_size = 5,
    std::optional<std::pair<double, double>> mv_filter = std::nullopt);

inline const std::vector<double> kDefaultNoiseLevels{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};

struct NoisePoint {
  double p = 0.0;
  RetrievalReport report;
  double sumr_delta = 0.0;  // SumR(p) - SumR(0)
};

struct NoiseSweepResult {
  std::vector<NoisePoint> points;

  double relative_drop() const;  // (SumR(0) - SumR(last)) / SumR(0)
};

// Throws ContractError unless the levels are strictly increasing from 0.
NoiseSweepResult noise_sweep(const RalModel& model, const Split& test,
                             std::span<const double> levels, std::uint64_t seed,
                             double noise_std);

// Top-k retrieved scores per query, nonincreasing. k may not exceed the
// stored top-k.
std::vector<std::vector<double>> similarity_profile(const RetrievalReport& report, Index k);

struct UncertaintyRecord {
  long epoch = 0;
  double video_uncertainty = 0.0;
  double query_uncertainty = 0.0;
  double sumr = 0.0;
};

// Mean geometric-mean uncertainty of the split's videos and single queries.
std::pair<double, double> mean_uncertainties(const RalModel& model, const Split& split);

// Per-query geometric-mean uncertainty of single test queries.
std::vector<double> query_uncertainties(const RalModel& model, const Split& split);

// Fraction of gate mass each query puts on its function words, divided by
// the uniform share (function words / L). Queries without function words are
// skipped; returns the mean ratio and the count used.
std::pair<double, Index> function_gate_ratio(const RalModel& model, const Split& split);

std::string report_json(const RetrievalReport& report);
// One row per group plus an "all" row.
std::string report_csv(const RetrievalReport& report);
std::string noise_sweep_csv(const NoiseSweepResult& sweep);
std::string profile_csv(const RetrievalReport& report,
                        const std::vector<std::vector<double>>& profile);
std::string uncertainty_trace_csv(std::span<const UncertaintyRecord> trace);

}  // namespace ral
